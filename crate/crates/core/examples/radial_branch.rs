//! Follows the radial branch of `−Δu + μu = u^{2♯−1}` on the unit ball of
//! R^7 as μ approaches zero, and fits the blow-up rate.
//!
//! cargo run --release --example radial_branch

use polybubble::radialsolver::{pohozaev_scaling, ProblemParams, SolveManifest};

fn main() -> polybubble::Result<()> {
    let grid = vec![-0.5, -0.25, -0.1, -0.05, -0.02];
    let params = ProblemParams::new(7, 1, 0, grid[0])?;
    let mut manifest = SolveManifest::new(params, grid, 1e-10, vec![0.3, 0.1, 0.05]);
    let branch = manifest.run()?;
    println!("{:>8} {:>12} {:>12} {:>10}", "mu", "sup |u|", "bubble mu", "fit");
    for p in &branch.points {
        println!("{:>8.3} {:>12.4} {:>12.4e} {:>10.1e}", p.mu, p.sup_norm, p.mu_fit, p.fit_residual);
    }
    let fit = pohozaev_scaling(&branch.points)?;
    println!("log-log slope of the L2 term against the bubble scale: {:.3}", fit.slope);
    Ok(())
}
