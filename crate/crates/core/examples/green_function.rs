//! Polyharmonic Green's functions of the ball and half-space and the
//! conformal relation between them.
//!
//! cargo run --release --example green_function

use polybubble::greenfn::{check_conformal_relation, green_ball, green_half, psi_ball};

fn main() -> polybubble::Result<()> {
    let x = [0.1, 0.2, -0.3, 0.0, 0.1];
    let y = [-0.4, 0.1, 0.2, 0.3, 0.0];
    println!("psi(x, y) = {:.6}", psi_ball(&x, &y)?);
    for k in 1..=2 {
        let g = green_ball(&x, &y, 5, k)?;
        let rel = check_conformal_relation(&x, &y, 5, k)?;
        println!("n=5 k={k} G_ball = {:.8e}, conformal relation residual {rel:.1e}", g.value);
    }
    let hx = [0.3, 0.1, 0.0];
    let hy = [1.2, -0.5, 0.4];
    println!("n=3 k=1 G_half = {:.8e}", green_half(&hx, &hy, 3, 1)?.value);
    // the Laplacian case against the image-charge formula
    let g = green_ball(&x, &y, 5, 1)?.value;
    let d = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let nx: f64 = x.iter().map(|a| a * a).sum();
    let ny: f64 = y.iter().map(|a| a * a).sum();
    let classical = (d.powf(-1.5) - (d + (1.0 - nx) * (1.0 - ny)).powf(-1.5)) / 3.0;
    println!("image-charge value {classical:.8e}, relative gap {:.1e}", (g - classical).abs() / classical);
    Ok(())
}
