//! Rank profile of the adjoint map and the exponent `p` for the default systems.

use nilcomplex::liealg::{check_exponent_lower_bound, system_profile, DEFAULT_RANK_TOL};
use nilcomplex::nilgroup::NilSystem;

fn main() -> nilcomplex::Result<()> {
    for m in 2..=5 {
        let sys = NilSystem::with_default_tau(m)?;
        let profile = system_profile(&sys, DEFAULT_RANK_TOL)?;
        println!(
            "m={m} d={} s={}: ranks {:?}, p = {}, p >= s - 1: {}",
            sys.dim(),
            sys.step(),
            profile.ranks,
            profile.p,
            check_exponent_lower_bound(&profile, sys.step())
        );
    }
    Ok(())
}
