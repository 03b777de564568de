//! Hierarchy against the exact pure-dephasing coherence of a qubit.

use shem::bath::BathSpec;
use shem::validation::{pure_dephasing_check, pure_dephasing_coherence};

fn main() -> shem::Result<()> {
    let spec = BathSpec { lambda: 0.2, gamma: 1.0, beta: 1.0, l: 4 };
    for t in [0.0, 1.0, 2.0, 5.0] {
        let c = pure_dephasing_coherence(&spec, 1.0, t)?;
        println!("t = {t}: exact |rho_01| = {:.6e}", c.norm() / 2.0);
    }
    for k in [2, 4, 8] {
        let check = pure_dephasing_check(&spec, 1.0, k, 2e-3)?;
        println!(
            "K = {k}: max relative error {:.3e} ({})",
            check.value,
            if check.passed { "ok" } else { "above 1e-3" }
        );
    }
    Ok(())
}
