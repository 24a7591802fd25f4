//! Average secrecy of the full design versus transmit power.
//!
//!     cargo run --release --example power_sweep -- [p1,p2,...]

use isac_uav::orchestrate::run;
use isac_uav::scenario::default_scenario;

fn main() -> isac_uav::Result<()> {
    let powers: Vec<f64> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![30.0, 31.5, 33.0]);
    println!("P_dBm  R_sum    iters  status");
    let mut base = None;
    for p in powers {
        let (_, rec) = run(&default_scenario().with_tx_power_dbm(p))?;
        let gain = base.map_or(String::new(), |b: f64| {
            format!("  ({:+.1}%)", 100.0 * (rec.final_r_sum / b - 1.0))
        });
        base.get_or_insert(rec.final_r_sum);
        println!(
            "{p:5.1}  {:.4}  {:>5}  {:?}{gain}",
            rec.final_r_sum,
            rec.iterations.len(),
            rec.status
        );
    }
    Ok(())
}
