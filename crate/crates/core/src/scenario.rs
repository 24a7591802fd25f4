//! Scenario configuration, unit conversions and the slotted mission timeline.
//!
//! A scenario is loaded from a flat `key = value` text file (`#` starts a
//! comment). Every key is optional; absent keys take the defaults of
//! [`default_scenario`]. Positions are written as three comma-separated
//! numbers, e.g. `iot = 10, 20, 0`.
//!
//! dB-valued entries are kept as given and converted once into
//! [`LinearParams`]; everything downstream works on linear quantities.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIME_TOL: f64 = 1e-9;

/// A point in the scenario frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Ground node at `(x, y, 0)`.
    pub const fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn planar(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn planar_distance(&self, other: &Position3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Position3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Echo-SNR threshold for a sensing rate in bps/Hz: `2^rate - 1`.
pub fn sense_rate_to_snr(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

/// Linear-scale view of the dB-valued parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearParams {
    pub noise_dev_w: f64,
    pub noise_eve_w: f64,
    pub noise_echo_w: f64,
    pub rician_ud: f64,
    pub rician_ut: f64,
    pub pathloss_ref: f64,
    pub tx_power_w: f64,
    /// Minimum echo SNR (linear) derived from `sense_rate_min`.
    pub sense_snr_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub horizon: f64,
    pub slots: usize,
    pub slot_len: f64,
    pub noise_dev_dbm: f64,
    pub noise_eve_dbm: f64,
    pub noise_echo_dbm: f64,
    pub rician_ud_db: f64,
    pub rician_ut_db: f64,
    pub pathloss_ref_db: f64,
    pub pathloss_exp_comm: f64,
    pub pathloss_exp_sense: f64,
    pub max_speed: f64,
    pub max_step: f64,
    pub tx_power_dbm: f64,
    pub sense_rate_min: f64,
    pub conv_tol: f64,
    pub max_outer_iters: usize,
    pub rng_seed: u64,
    /// Per-subproblem cap on how far any waypoint may move, meters.
    pub trust_region: f64,
    pub iot: Position3,
    pub ut: Position3,
    pub uav_start: Position3,
    pub uav_end: Position3,
    pub linear: LinearParams,
}

/// The reference scenario: 16x8 array, 50 slots of 0.6 s, 30 dBm.
pub fn default_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        n_tx: 16,
        n_rx: 8,
        horizon: 30.0,
        slots: 50,
        slot_len: 0.6,
        noise_dev_dbm: -80.0,
        noise_eve_dbm: -100.0,
        noise_echo_dbm: -110.0,
        rician_ud_db: 15.0,
        rician_ut_db: 5.0,
        pathloss_ref_db: -30.0,
        pathloss_exp_comm: 3.1,
        pathloss_exp_sense: 1.5,
        max_speed: 50.0,
        max_step: 30.0,
        tx_power_dbm: 30.0,
        sense_rate_min: 10.0,
        conv_tol: 1e-3,
        max_outer_iters: 30,
        rng_seed: 0,
        trust_region: 60.0,
        iot: Position3::ground(10.0, 20.0),
        ut: Position3::ground(30.0, 30.0),
        uav_start: Position3::new(0.0, 0.0, 15.0),
        uav_end: Position3::new(60.0, 30.0, 15.0),
        linear: zero_linear(),
    };
    cfg.refresh_linear();
    cfg
}

fn zero_linear() -> LinearParams {
    LinearParams {
        noise_dev_w: 0.0,
        noise_eve_w: 0.0,
        noise_echo_w: 0.0,
        rician_ud: 0.0,
        rician_ut: 0.0,
        pathloss_ref: 0.0,
        tx_power_w: 0.0,
        sense_snr_min: 0.0,
    }
}

impl ScenarioConfig {
    /// Recomputes the linear-scale parameters from the dB fields.
    pub fn refresh_linear(&mut self) {
        self.linear = LinearParams {
            noise_dev_w: dbm_to_watts(self.noise_dev_dbm),
            noise_eve_w: dbm_to_watts(self.noise_eve_dbm),
            noise_echo_w: dbm_to_watts(self.noise_echo_dbm),
            rician_ud: db_to_linear(self.rician_ud_db),
            rician_ut: db_to_linear(self.rician_ut_db),
            pathloss_ref: db_to_linear(self.pathloss_ref_db),
            tx_power_w: dbm_to_watts(self.tx_power_dbm),
            sense_snr_min: sense_rate_to_snr(self.sense_rate_min),
        };
    }

    /// Fixed flight altitude.
    pub fn altitude(&self) -> f64 {
        self.uav_start.z
    }

    pub fn timeline(&self) -> Timeline {
        Timeline {
            slots: self.slots,
            slot_len: self.slot_len,
        }
    }

    /// Changes the slot count keeping the slot length, so `horizon` and
    /// `max_step` stay consistent.
    pub fn with_slots(mut self, slots: usize) -> Self {
        self.slots = slots;
        self.horizon = slots as f64 * self.slot_len;
        self
    }

    pub fn with_tx_power_dbm(mut self, p: f64) -> Self {
        self.tx_power_dbm = p;
        self.refresh_linear();
        self
    }

    pub fn with_sense_rate(mut self, rate: f64) -> Self {
        self.sense_rate_min = rate;
        self.refresh_linear();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.slots < 2 {
            return bad(format!("slots must be >= 2, got {}", self.slots));
        }
        if self.n_tx < 1 || self.n_rx < 1 {
            return bad(format!(
                "antenna counts must be >= 1, got n_tx={} n_rx={}",
                self.n_tx, self.n_rx
            ));
        }
        let scalars = [
            ("horizon", self.horizon),
            ("slot_len", self.slot_len),
            ("noise_dev_dbm", self.noise_dev_dbm),
            ("noise_eve_dbm", self.noise_eve_dbm),
            ("noise_echo_dbm", self.noise_echo_dbm),
            ("rician_ud_db", self.rician_ud_db),
            ("rician_ut_db", self.rician_ut_db),
            ("pathloss_ref_db", self.pathloss_ref_db),
            ("pathloss_exp_comm", self.pathloss_exp_comm),
            ("pathloss_exp_sense", self.pathloss_exp_sense),
            ("max_speed", self.max_speed),
            ("max_step", self.max_step),
            ("tx_power_dbm", self.tx_power_dbm),
            ("sense_rate_min", self.sense_rate_min),
            ("trust_region", self.trust_region),
        ];
        if let Some((k, v)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{k} must be finite, got {v}"));
        }
        for (k, v) in [
            ("slot_len", self.slot_len),
            ("max_speed", self.max_speed),
            ("pathloss_exp_comm", self.pathloss_exp_comm),
            ("pathloss_exp_sense", self.pathloss_exp_sense),
            ("trust_region", self.trust_region),
        ] {
            if v <= 0.0 {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        if self.sense_rate_min < 0.0 {
            return bad(format!("sense_rate_min must be >= 0, got {}", self.sense_rate_min));
        }
        if !(self.conv_tol >= 0.0) {
            return bad(format!("conv_tol must be >= 0, got {}", self.conv_tol));
        }
        let expected_t = self.slots as f64 * self.slot_len;
        if (self.horizon - expected_t).abs() > TIME_TOL {
            return bad(format!("horizon {} != slots * slot_len = {}", self.horizon, expected_t));
        }
        let expected_d = self.max_speed * self.slot_len;
        if (self.max_step - expected_d).abs() > TIME_TOL {
            return bad(format!(
                "max_step {} != max_speed * slot_len = {}",
                self.max_step, expected_d
            ));
        }
        for (k, p) in [
            ("iot", self.iot),
            ("ut", self.ut),
            ("uav_start", self.uav_start),
            ("uav_end", self.uav_end),
        ] {
            if !p.is_finite() {
                return bad(format!("{k} must be finite, got {p}"));
            }
        }
        if self.iot.z != 0.0 || self.ut.z != 0.0 {
            return bad("ground nodes must have z = 0".into());
        }
        if self.uav_start.z <= 0.0 || self.uav_start.z != self.uav_end.z {
            return bad(format!(
                "UAV altitude must be positive and fixed, got start z={} end z={}",
                self.uav_start.z, self.uav_end.z
            ));
        }
        let span = self.uav_start.planar_distance(&self.uav_end);
        let reach = self.slots as f64 * self.max_step;
        if span > reach {
            return bad(format!(
                "start-to-end distance {span} exceeds slots * max_step = {reach}"
            ));
        }
        Ok(())
    }
}

/// Slot grid `1..=S`, one-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeline {
    pub slots: usize,
    pub slot_len: f64,
}

impl Timeline {
    pub fn slot_indices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.slots
    }

    /// Start time of slot `s` in seconds.
    pub fn slot_start(&self, s: usize) -> f64 {
        (s - 1) as f64 * self.slot_len
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Parses `key = value` text into a validated config.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Schema {
                key: line.to_string(),
                message: format!("line {}: expected `key = value`", lineno + 1),
            });
        };
        let key = k.trim().to_string();
        if entries.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Schema {
                key,
                message: "duplicate key".into(),
            });
        }
    }

    let mut cfg = default_scenario();
    let horizon_given = entries.contains_key("horizon");
    let step_given = entries.contains_key("max_step");
    let trust_given = entries.contains_key("trust_region");

    for (key, value) in &entries {
        match key.as_str() {
            "n_tx" => cfg.n_tx = parse_num(key, value)?,
            "n_rx" => cfg.n_rx = parse_num(key, value)?,
            "horizon" => cfg.horizon = parse_num(key, value)?,
            "slots" => cfg.slots = parse_num(key, value)?,
            "slot_len" => cfg.slot_len = parse_num(key, value)?,
            "noise_dev_dbm" => cfg.noise_dev_dbm = parse_num(key, value)?,
            "noise_eve_dbm" => cfg.noise_eve_dbm = parse_num(key, value)?,
            "noise_echo_dbm" => cfg.noise_echo_dbm = parse_num(key, value)?,
            "rician_ud_db" => cfg.rician_ud_db = parse_num(key, value)?,
            "rician_ut_db" => cfg.rician_ut_db = parse_num(key, value)?,
            "pathloss_ref_db" => cfg.pathloss_ref_db = parse_num(key, value)?,
            "pathloss_exp_comm" => cfg.pathloss_exp_comm = parse_num(key, value)?,
            "pathloss_exp_sense" => cfg.pathloss_exp_sense = parse_num(key, value)?,
            "max_speed" => cfg.max_speed = parse_num(key, value)?,
            "max_step" => cfg.max_step = parse_num(key, value)?,
            "tx_power_dbm" => cfg.tx_power_dbm = parse_num(key, value)?,
            "sense_rate_min" => cfg.sense_rate_min = parse_num(key, value)?,
            "conv_tol" => cfg.conv_tol = parse_num(key, value)?,
            "max_outer_iters" => cfg.max_outer_iters = parse_num(key, value)?,
            "rng_seed" => cfg.rng_seed = parse_num(key, value)?,
            "trust_region" => cfg.trust_region = parse_num(key, value)?,
            "iot" => cfg.iot = parse_position(key, value)?,
            "ut" => cfg.ut = parse_position(key, value)?,
            "uav_start" => cfg.uav_start = parse_position(key, value)?,
            "uav_end" => cfg.uav_end = parse_position(key, value)?,
            _ => {
                return Err(Error::Schema {
                    key: key.clone(),
                    message: "unknown key".into(),
                })
            }
        }
    }

    // Derived quantities follow the slot grid unless pinned explicitly.
    if !horizon_given {
        cfg.horizon = cfg.slots as f64 * cfg.slot_len;
    }
    if !step_given {
        cfg.max_step = cfg.max_speed * cfg.slot_len;
    }
    if !trust_given {
        cfg.trust_region = 2.0 * cfg.max_step;
    }
    cfg.refresh_linear();
    cfg.validate()?;
    Ok(cfg)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Schema {
        key: key.to_string(),
        message: format!("cannot parse `{value}`: {e}"),
    })
}

fn parse_position(key: &str, value: &str) -> Result<Position3> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Schema {
            key: key.to_string(),
            message: format!("expected `x, y, z`, got `{value}`"),
        });
    }
    Ok(Position3::new(
        parse_num(key, parts[0])?,
        parse_num(key, parts[1])?,
        parse_num(key, parts[2])?,
    ))
}

/// Writes a config back out in the `key = value` format.
pub fn render_config(cfg: &ScenarioConfig) -> String {
    let pos = |p: &Position3| format!("{}, {}, {}", p.x, p.y, p.z);
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("n_tx", cfg.n_tx.to_string());
    kv("n_rx", cfg.n_rx.to_string());
    kv("horizon", cfg.horizon.to_string());
    kv("slots", cfg.slots.to_string());
    kv("slot_len", cfg.slot_len.to_string());
    kv("noise_dev_dbm", cfg.noise_dev_dbm.to_string());
    kv("noise_eve_dbm", cfg.noise_eve_dbm.to_string());
    kv("noise_echo_dbm", cfg.noise_echo_dbm.to_string());
    kv("rician_ud_db", cfg.rician_ud_db.to_string());
    kv("rician_ut_db", cfg.rician_ut_db.to_string());
    kv("pathloss_ref_db", cfg.pathloss_ref_db.to_string());
    kv("pathloss_exp_comm", cfg.pathloss_exp_comm.to_string());
    kv("pathloss_exp_sense", cfg.pathloss_exp_sense.to_string());
    kv("max_speed", cfg.max_speed.to_string());
    kv("max_step", cfg.max_step.to_string());
    kv("tx_power_dbm", cfg.tx_power_dbm.to_string());
    kv("sense_rate_min", cfg.sense_rate_min.to_string());
    kv("conv_tol", cfg.conv_tol.to_string());
    kv("max_outer_iters", cfg.max_outer_iters.to_string());
    kv("rng_seed", cfg.rng_seed.to_string());
    kv("trust_region", cfg.trust_region.to_string());
    kv("iot", pos(&cfg.iot));
    kv("ut", pos(&cfg.ut));
    kv("uav_start", pos(&cfg.uav_start));
    kv("uav_end", pos(&cfg.uav_end));
    out
}
