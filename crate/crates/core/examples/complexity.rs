//! Spanning-count growth on the Heisenberg nilmanifold, against the predicted exponent.

use nilcomplex::complexity::{growth_exponent, GreedyOptions, NilSample};
use nilcomplex::nilgroup::NilSystem;

fn main() -> nilcomplex::Result<()> {
    let sample = NilSample::cube(NilSystem::heisenberg(), 50_000, 0.1, 7)?;
    let grid = [8, 16, 32, 64, 128, 256];
    let curve = growth_exponent(&sample, 0.1, &grid, GreedyOptions::default())?;
    for row in &curve.rows {
        println!("n={:4} spanning {}", row.n, row.spanning);
    }
    println!(
        "slope {:.3} +- {:.3}, predicted {:?}, saturated {}",
        curve.fit.slope, curve.fit.stderr, curve.p_predicted, curve.saturated
    );
    Ok(())
}
