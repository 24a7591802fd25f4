//! The three schemes against the number of slots, seed-matched.
//!
//!     cargo run --release --example baselines -- [seed]

use isac_uav::orchestrate::{run_baseline, Scheme};
use isac_uav::scenario::default_scenario;

fn main() -> isac_uav::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    print!("{:>3}", "S");
    for k in Scheme::ALL {
        print!("  {:>18}", k.label());
    }
    println!();
    for s in [5, 10, 20, 50] {
        let cfg = default_scenario().with_slots(s).with_seed(seed);
        print!("{s:>3}");
        for k in Scheme::ALL {
            let (_, rec) = run_baseline(&cfg, k)?;
            print!("  {:>18.4}", rec.final_r_sum);
        }
        println!();
    }
    Ok(())
}
