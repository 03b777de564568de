//! Eliminated-cavity hierarchy against the joint system-cavity hierarchy in
//! the bad-cavity regime.

use shem::validation::{cross_check_elimination, EliminationSetup};

fn main() -> shem::Result<()> {
    for kappa in [10.0, 20.0, 40.0] {
        let mut setup = EliminationSetup::default();
        setup.qubit.kappa = kappa;
        let r = cross_check_elimination(&setup)?;
        println!(
            "kappa {kappa:>4}: epsilon {:.3}, max trace distance {:.2e}, {} Fock levels, top-level population {:.1e}",
            r.epsilon, r.max_trace_distance, r.fock_levels, r.top_level_population
        );
    }
    Ok(())
}
