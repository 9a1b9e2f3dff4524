//! Two-hot projection onto the feasibility bins and its expectation identity.
//!
//! cargo run --example two_hot -- [value ...]

use fcsrl::repr::{two_hot_project, Bins, DEFAULT_BINS};

fn main() -> fcsrl::Result<()> {
    let bins = Bins::feasibility(DEFAULT_BINS);
    let mut values: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if values.is_empty() {
        values = vec![-0.2, 0.0, 0.25, 1.0 / 3.0, 0.999, 1.4];
    }
    for v in values {
        let d = two_hot_project(v, &bins)?;
        let mass: Vec<String> = d
            .probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(j, p)| format!("bin {j} ({:.4}): {p:.4}", bins.center(j)))
            .collect();
        println!("{v:>8.4} -> {}  | E = {:.15}, clip = {:.15}", mass.join(", "), d.expectation(), bins.clip(v));
    }
    Ok(())
}
