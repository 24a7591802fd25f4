//! Runs the alternating optimization on the default scenario and prints
//! the convergence trace.
//!
//!     cargo run --release --example default_run -- [seed]

use isac_uav::orchestrate::{evaluate, feasibility_residual, run};
use isac_uav::scenario::default_scenario;

fn main() -> isac_uav::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = default_scenario().with_seed(seed);
    let (state, record) = run(&cfg)?;

    println!("initial R_sum {:.4} bps/Hz", record.initial_r_sum);
    println!("iter  r_sum     delta      d_tx      d_traj    d_rx     ms(tx/traj/rx)");
    for it in &record.iterations {
        println!(
            "{:>4}  {:.5}  {:+.2e}  {:+.2e}  {:+.2e}  {:+.1e}  {:.0}/{:.0}/{:.0}",
            it.iteration,
            it.r_sum,
            it.delta,
            it.delta_txbf,
            it.delta_traj,
            it.delta_rxbf,
            it.ms_txbf,
            it.ms_traj,
            it.ms_rxbf
        );
    }
    let m = evaluate(&cfg, &state)?;
    println!("status {:?}, final R_sum {:.4}", record.status, m.r_sum);
    println!("feasibility residual {:.2e}", feasibility_residual(&cfg, &state)?);
    println!(
        "min distance to target {:.2} m, mean distance to device {:.2} m",
        state.trajectory.min_distance_to(&cfg.ut),
        state.trajectory.mean_distance_to(&cfg.iot)
    );
    Ok(())
}
