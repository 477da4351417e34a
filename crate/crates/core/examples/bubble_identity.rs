//! Exact and floating-point checks that the standard bubble solves the
//! critical equation, plus its far-field decay rates.
//!
//! cargo run --release --example bubble_identity

use polybubble::bubbles::check_decay;
use polybubble::cli::bubble_pde_residual;
use polybubble::radialgebra::{check_bubble_identity, critical_exponent};

fn main() -> polybubble::Result<()> {
    for (n, k) in [(3u32, 1u32), (5, 2), (7, 3), (9, 4)] {
        let exact = check_bubble_identity(n, k)?;
        let worst = [0.0, 0.5, 2.0, 10.0]
            .iter()
            .map(|&r| bubble_pde_residual(n as usize, k as usize, r))
            .collect::<polybubble::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!(
            "n={n} k={k} 2#={:.4} exact={} numeric residual={worst:.2e}",
            critical_exponent(n, k),
            exact.passed
        );
    }
    let radii = [1e3, 3e3, 1e4, 3e4, 1e5];
    for l in 0..=2 {
        let d = check_decay(7, 1, l, &radii)?;
        println!("n=7 k=1 |D^{l}B| slope {:.4} (expected {})", d.slope, d.expected);
    }
    Ok(())
}
