//! Exponent from the adjoint map, fitted spanning growth and Bowen-ball volumes.

use nilcomplex::complexity::{growth_exponent, tube_volume_cross_check, GreedyOptions, NilSample};
use nilcomplex::liealg::{system_profile, DEFAULT_RANK_TOL};
use nilcomplex::nilgroup::NilSystem;

fn main() -> nilcomplex::Result<()> {
    let sys = NilSystem::heisenberg();
    let p = system_profile(&sys, DEFAULT_RANK_TOL)?.p;
    let sample = NilSample::cube(sys, 50_000, 0.1, 7)?;
    let grid = [8, 16, 32, 64, 128];
    let curve = growth_exponent(&sample, 0.1, &grid, GreedyOptions::default())?;
    println!("p = {p}, fitted slope {:.3}", curve.fit.slope);
    for row in tube_volume_cross_check(&sample, 0.1, &grid, 100_000, 7, GreedyOptions::default())? {
        println!(
            "n={:4} tube {:.3e}  tube*n^p {:.3e}  spanning {:5}  product {:.3}",
            row.n, row.volume, row.volume_times_np, row.spanning, row.product
        );
    }
    Ok(())
}
