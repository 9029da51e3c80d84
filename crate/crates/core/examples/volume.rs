//! Volume decay of `W_n` for Jordan blocks, with the exact planar area as a check.

use nilcomplex::unipotent_volume::{exact_volume_2d, volume_exponent_fit, Norm, UnipotentMatrix};

fn main() -> nilcomplex::Result<()> {
    let grid: Vec<usize> = (3..=9).map(|e| 1usize << e).collect();
    for r in [2, 3] {
        let a = UnipotentMatrix::jordan_block(r)?;
        let fit = volume_exponent_fit(&a, &grid, Norm::Sup, 1_000_000, 17)?;
        println!("J_{r}: slope {:.3} +- {:.3}, predicted -{}", fit.slope, fit.stderr, fit.p_predicted);
        for e in &fit.per_n {
            let exact = if r == 2 { exact_volume_2d(&a, e.n)? } else { f64::NAN };
            println!("  n={:4} volume {:.6e} +- {:.1e}  hits {:7}  exact {:.6e}", e.n, e.estimate, e.stderr, e.hits, exact);
        }
    }
    Ok(())
}
