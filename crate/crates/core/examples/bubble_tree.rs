//! Influence regions, interaction ratios and scale separation of a
//! two-bubble tower as its family parameter grows.
//!
//! cargo run --release --example bubble_tree

use polybubble::bubbletree::{classify, comparable_disjointness, epsilon, interaction_sup, TreeConfig};

fn main() -> polybubble::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/tower.json");
    let base = TreeConfig::from_json(&std::fs::read_to_string(path).map_err(|e| polybubble::Error::Io(e.to_string()))?)?;
    for alpha in [1e2, 1e3, 1e4] {
        let cfg = base.at_alpha(alpha)?;
        let data = classify(&cfg)?;
        let disjoint = comparable_disjointness(&cfg, &data).iter().all(|c| c.disjoint());
        let ratios: Vec<String> = (1..=cfg.len())
            .map(|i| interaction_sup(&cfg, &data, i, 1000).map(|r| format!("{:.3}", r.ratio)))
            .collect::<polybubble::Result<_>>()?;
        println!(
            "alpha={alpha:.0e} mu=({:.2e}, {:.2e}) eps_12={:.3} disjoint={disjoint} interaction ratios {ratios:?}",
            cfg.bubble(1).mu,
            cfg.bubble(2).mu,
            epsilon(&cfg, 1, 2)?
        );
        for e in &data.entries {
            println!("  bubble {}: A={:?} B={:?} r={:.3e}", e.i, e.a, e.b, e.r);
        }
    }
    Ok(())
}
