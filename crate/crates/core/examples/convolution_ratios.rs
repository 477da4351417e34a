//! Ratio tables of the weighted convolution estimates for one bubble as it
//! concentrates; bounded ratios are the expected outcome.
//!
//! cargo run --release --example convolution_ratios

use polybubble::bubbles::BubbleSpec;
use polybubble::bubbletree::TreeConfig;
use polybubble::quad::Domain;
use polybubble::weights::{convolution_bound_verify, max_ratio, ConvolutionKind, ConvolutionParams};

fn main() -> polybubble::Result<()> {
    let (n, k) = (7, 1);
    for kind in [ConvolutionKind::OrderTwo, ConvolutionKind::Hole { m: 4.0 }] {
        for mu in [1e-1, 1e-2, 1e-3] {
            let b = BubbleSpec::interior(n, k, vec![0.0; n], mu)?;
            let cfg = TreeConfig::new(n, k, Domain::unit_ball(n), vec![b])?;
            let mut p = ConvolutionParams::new(1, vec![0, 1]);
            p.integral.x_points = 4;
            let r = convolution_bound_verify(kind, &cfg, &p)?;
            println!(
                "{:<10} mu={mu:.0e} max ratio {:.4} over {} rows",
                kind.name(),
                max_ratio(&r),
                r.len()
            );
        }
    }
    Ok(())
}
