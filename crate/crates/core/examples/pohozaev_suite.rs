//! Pohozaev identity residuals on manufactured solutions and on the
//! standard bubble restricted to the unit ball.
//!
//! cargo run --release --example pohozaev_suite

use polybubble::pohozaev::{bubble_suite, manufactured_suite, PohozaevOptions};

fn main() -> polybubble::Result<()> {
    let opts = PohozaevOptions::default();
    let mut cases = manufactured_suite(Some((5, 2)), opts)?;
    cases.extend(bubble_suite(Some((3, 1)), opts)?);
    for c in &cases {
        let r = &c.report;
        println!(
            "{:<32} lhs {:+.6e} residual {:.1e} (budget {:.1e}) {}",
            c.label,
            r.lhs,
            r.residual_rel,
            r.budget,
            if c.passed() { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
