//! Secrecy against the sensing requirement: a stricter echo SNR pulls the
//! trajectory toward the target and leaves less room for secrecy.
//!
//!     cargo run --release --example sensing_tradeoff -- [out_dir]
//!
//! With `out_dir`, writes one trajectory.csv per rate for plotting.

use isac_uav::orchestrate::run;
use isac_uav::scenario::default_scenario;

fn main() -> isac_uav::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    println!("gamma  R_sum    min_d_UT  mean_d_IoT  status");
    for gamma in [5.0, 10.0, 15.0] {
        let cfg = default_scenario().with_sense_rate(gamma);
        let (st, rec) = run(&cfg)?;
        println!(
            "{gamma:5.1}  {:.4}  {:8.2}  {:10.2}  {:?}",
            rec.final_r_sum,
            st.trajectory.min_distance_to(&cfg.ut),
            st.trajectory.mean_distance_to(&cfg.iot),
            rec.status
        );
        if let Some(dir) = &out {
            isac_uav::cli::write_artifacts(&dir.join(format!("gamma-{gamma}")), &cfg, &st, &rec, false)?;
        }
    }
    Ok(())
}
