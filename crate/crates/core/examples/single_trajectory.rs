//! One conditioned trajectory of the Rabi-driven qubit: the state diffuses
//! under measurement back-action while the current carries its signature.

use shem::algebra::pauli;
use shem::bath::BathSpec;
use shem::hierarchy::HierarchyOptions;
use shem::measurement::{run_deterministic, run_trajectory, RunSpec};
use shem::spectroscopy::RabiQubit;

fn main() -> shem::Result<()> {
    let model = RabiQubit::default().model(Some(BathSpec { lambda: 0.05, gamma: 10.0, beta: 0.05, l: 0 }))?;
    let sys = model.shem(3, &HierarchyOptions::default())?;
    let x0 = sys.initial_state(&pauli::ground())?.data;
    let run = RunSpec { dt: 2e-3, t_end: 4.0, stride: 50, ..RunSpec::default() };
    let obs = [pauli::sigma_z()];

    let mean = run_deterministic(&sys, &x0, &obs, &run)?;
    let traj = run_trajectory(&sys, &x0, &obs, &run, 42, 0)?;
    println!("{:>6} {:>10} {:>10} {:>10}", "t", "<sz> traj", "<sz> mean", "current");
    for k in (0..traj.len()).step_by(4) {
        println!(
            "{:>6.2} {:>10.4} {:>10.4} {:>10.2}",
            traj.times[k], traj.observables[0][k], mean.observables[0][k], traj.current[k]
        );
    }
    println!("max purity {:.6}, max |Tr - 1| {:.1e}", traj.max_purity, traj.max_trace_error);
    Ok(())
}
