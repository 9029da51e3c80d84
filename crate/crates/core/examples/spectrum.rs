//! Correlations of a character of the abelian factor and of a vertical character.

use nilcomplex::ergodic_checks::{correlation_sequence, spectrum_verdict, Observable};
use nilcomplex::nilgroup::{NilPoint, NilSystem};

fn main() -> nilcomplex::Result<()> {
    for (name, sys) in [("rotation", NilSystem::with_default_tau(2)?), ("heisenberg", NilSystem::heisenberg())] {
        let x0 = NilPoint::identity(sys.size())?;
        let a = correlation_sequence(&sys, Observable::Abelian, &x0, 100_000, 1000)?;
        let v = correlation_sequence(&sys, Observable::Vertical, &x0, 100_000, 1000)?;
        let r = spectrum_verdict(&a, &v)?;
        println!(
            "{name}: recurrence {:.3}, decay {:.3}, {:?}",
            r.recurrence_score, r.decay_score, r.verdict
        );
        let abs = v.abs();
        println!("  |vertical| at n = 1, 10, 100, 1000: {:.3} {:.3} {:.4} {:.4}", abs[1], abs[10], abs[100], abs[1000]);
    }
    Ok(())
}
