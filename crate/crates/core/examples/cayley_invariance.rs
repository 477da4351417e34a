//! Pointwise identities of the Cayley map and invariance of the critical
//! norm and energy under the induced pullback.
//!
//! cargo run --release --example cayley_invariance

use polybubble::cli::{invariance_profiles, random_pairs};
use polybubble::conformal::{
    check_distance_identity, check_norm_invariance, check_psi_invariance, phi, phi_inv, InvarianceOptions,
};

fn main() -> polybubble::Result<()> {
    let (n, k) = (3, 1);
    let y = [0.5, -0.3, 0.8];
    let x = phi(&y)?;
    let back = phi_inv(&x)?;
    println!("phi({y:?}) = {x:.6?}, round trip error {:.1e}", (back[0] - y[0]).abs());

    let mut worst = (0.0f64, 0.0f64);
    for (a, b) in random_pairs(n, 200, 1) {
        worst.0 = worst.0.max(check_distance_identity(&a, &b)?);
        worst.1 = worst.1.max(check_psi_invariance(&a, &b)?);
    }
    println!("200 pairs: distance identity {:.1e}, psi invariance {:.1e}", worst.0, worst.1);

    let opts = InvarianceOptions { tol: 1e-6, ..Default::default() };
    for (name, u) in invariance_profiles(n, k) {
        let (norm, energy) = check_norm_invariance(u, n, k, opts)?;
        println!(
            "{name}: norm {:.6} vs {:.6} ({:.1e}), energy {:.6} vs {:.6} ({:.1e})",
            norm.lhs, norm.rhs, norm.rel_error, energy.lhs, energy.rhs, energy.rel_error
        );
    }
    Ok(())
}
