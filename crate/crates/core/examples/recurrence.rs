//! Return times of a set under a golden rotation, along linear and quadratic iterates.

use nilcomplex::ergodic_checks::{parse_polys, polynomial_scan, syndetic_scan, weyl_discrepancy, RotationSystem};

fn main() -> nilcomplex::Result<()> {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let sys = RotationSystem::new(golden, &[(0.0, 0.3)])?;
    let linear = syndetic_scan(&sys, 2, 0.02, 100_000)?;
    println!(
        "n, 2n: {} hits, density {:.3}, max gap {}",
        linear.hits.len(),
        linear.density,
        linear.max_gap
    );
    let polys = parse_polys("n,n^2")?;
    let silver = RotationSystem::new(2f64.sqrt() - 1.0, &[(0.0, 0.4)])?;
    let quad = polynomial_scan(&silver, &polys, 0.05, 100_000)?;
    println!("n, n^2: density {:.3}, max gap {}", quad.density, quad.max_gap);
    for n in [1_000, 10_000, 100_000] {
        let w = weyl_discrepancy(&polys, golden, n)?;
        println!("discrepancy of (n a, n^2 a) up to {n}: {:.4}", w.discrepancy);
    }
    Ok(())
}
