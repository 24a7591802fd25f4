//! Monte-Carlo check of the Rician channel model at one UAV position.
//!
//!     cargo run --release --example channel_stats -- [draws]

use isac_uav::channel::{realize_slot, FadingDraw};
use isac_uav::scenario::{default_scenario, linear_to_db, Position3};

fn main() -> isac_uav::Result<()> {
    let draws: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let cfg = default_scenario();
    let p = Position3::new(20.0, 10.0, cfg.altitude());
    let draw = FadingDraw::generate(cfg.rng_seed, draws, cfg.n_tx);
    let (mut ud, mut ut) = (0.0, 0.0);
    let mut first = None;
    for s in 1..=draws {
        let ch = realize_slot(&cfg, &p, s, &draw)?;
        ud += ch.h_ud.norm_squared();
        ut += ch.h_ut.norm_squared();
        first.get_or_insert(ch);
    }
    let ch = first.expect("at least one draw");
    println!("position ({}, {}, {})", p.x, p.y, p.z);
    println!(
        "E|h_ud|^2 = {:.3}  E|h_ut|^2 = {:.3}  (N_t = {})",
        ud / draws as f64,
        ut / draws as f64,
        cfg.n_tx
    );
    println!(
        "path gain: device {:.1} dB, target {:.1} dB, round trip {:.1} dB",
        linear_to_db(ch.l_ud * ch.l_ud),
        linear_to_db(ch.l_ut * ch.l_ut),
        linear_to_db(ch.l_rt.powi(4))
    );
    Ok(())
}
