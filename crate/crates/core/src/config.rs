//! Run configuration: flat `key = value` text with a fixed key set.
//!
//! Every key has a default; unknown keys are hard errors so typos cannot
//! silently fall back to defaults. `echo()` renders the fully resolved
//! configuration for the `config.echo` output.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::allocation::GaParams;
use crate::channel::ChannelConfig;
use crate::downlink::FrameConfig;
use crate::geometry::GeometryConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("malformed line {line}: expected `key = value`")]
    MalformedLine { line: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    CfJpahm,
    BestChannel,
    MaxServTime,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::CfJpahm, Mode::BestChannel, Mode::MaxServTime];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::CfJpahm => "cf_jpahm",
            Mode::BestChannel => "best_channel",
            Mode::MaxServTime => "max_serv_time",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "cf_jpahm" => Some(Mode::CfJpahm),
            "best_channel" => Some(Mode::BestChannel),
            "max_serv_time" => Some(Mode::MaxServTime),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    // geometry
    pub altitude_km: f64,
    pub area_km: f64,
    pub num_saps: usize,
    pub num_uts: usize,
    pub sap_spacing_km: f64,
    pub ground_speed_kms: f64,
    pub max_boresight_deg: f64,
    pub next_cluster_offset_km: f64,
    // channel
    pub carrier_ghz: f64,
    pub eta: f64,
    pub shadow_std_db: f64,
    pub rician_k_db: f64,
    pub sat_gain_db: f64,
    pub ut_gain_db: f64,
    // training
    pub tau_c: usize,
    pub tau_up: usize,
    pub pilot_power_dbw: f64,
    // downlink
    pub tau_dd: usize,
    pub bandwidth_mhz: f64,
    pub noise_figure_db: f64,
    pub nsd_dbm_hz: f64,
    // allocation
    pub alpha: f64,
    pub r_min_bps_hz: f64,
    pub p_max_dbw: f64,
    pub ga_population: usize,
    pub ga_generations: usize,
    pub ga_crossover: f64,
    pub ga_mutation: f64,
    pub ga_elitism: usize,
    pub ga_penalty_weight: f64,
    // handover
    pub handover_confirm_slots: u32,
    pub slot_duration_s: f64,
    // runner
    pub horizon_slots: usize,
    pub num_runs: usize,
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            altitude_km: 550.0,
            area_km: 1000.0,
            num_saps: 8,
            num_uts: 32,
            sap_spacing_km: 250.0,
            ground_speed_kms: 7.0,
            max_boresight_deg: 60.0,
            next_cluster_offset_km: 1200.0,
            carrier_ghz: 30.0,
            eta: 20.0,
            shadow_std_db: 5.0,
            rician_k_db: 10.0,
            sat_gain_db: 30.0,
            ut_gain_db: 5.0,
            tau_c: 300,
            tau_up: 30,
            pilot_power_dbw: 5.0,
            tau_dd: 270,
            bandwidth_mhz: 20.0,
            noise_figure_db: 7.0,
            nsd_dbm_hz: -174.0,
            alpha: 0.5,
            r_min_bps_hz: 0.02,
            p_max_dbw: 15.0,
            ga_population: 60,
            ga_generations: 150,
            ga_crossover: 0.9,
            ga_mutation: 0.1,
            ga_elitism: 2,
            ga_penalty_weight: 0.0,
            handover_confirm_slots: 2,
            slot_duration_s: 1.0,
            horizon_slots: 120,
            num_runs: 10,
            mode: Mode::CfJpahm,
            seed: 1,
            output_dir: "out".into(),
        }
    }
}

macro_rules! apply_keys {
    ($cfg:ident, $key:ident, $value:ident, { $($name:literal => $field:ident : $kind:tt),+ $(,)? }) => {
        match $key {
            $($name => apply_keys!(@set $cfg, $name, $value, $field, $kind),)+
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
    };
    (@set $cfg:ident, $name:literal, $value:ident, $field:ident, parse) => {
        $cfg.$field = $value.parse().map_err(|e| ConfigError::InvalidValue {
            key: $name.to_string(),
            message: format!("{e}"),
        })?
    };
    (@set $cfg:ident, $name:literal, $value:ident, $field:ident, string) => {
        $cfg.$field = $value.to_string()
    };
    (@set $cfg:ident, $name:literal, $value:ident, $field:ident, mode) => {
        $cfg.$field = Mode::parse($value).ok_or_else(|| ConfigError::InvalidValue {
            key: $name.to_string(),
            message: format!("unknown mode `{0}` (expected cf_jpahm, best_channel or max_serv_time)", $value),
        })?
    };
}

impl SimConfig {
    /// Parses flat `key = value` text over the defaults. `#` starts a
    /// comment; unknown keys are errors.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine { line: i + 1 });
            };
            let key = key.trim();
            let value = value.trim();
            apply_keys!(cfg, key, value, {
                "altitude_km" => altitude_km: parse,
                "area_km" => area_km: parse,
                "num_saps" => num_saps: parse,
                "num_uts" => num_uts: parse,
                "sap_spacing_km" => sap_spacing_km: parse,
                "ground_speed_kms" => ground_speed_kms: parse,
                "max_boresight_deg" => max_boresight_deg: parse,
                "next_cluster_offset_km" => next_cluster_offset_km: parse,
                "carrier_ghz" => carrier_ghz: parse,
                "eta" => eta: parse,
                "shadow_std_db" => shadow_std_db: parse,
                "rician_k_db" => rician_k_db: parse,
                "sat_gain_db" => sat_gain_db: parse,
                "ut_gain_db" => ut_gain_db: parse,
                "tau_c" => tau_c: parse,
                "tau_up" => tau_up: parse,
                "pilot_power_dbw" => pilot_power_dbw: parse,
                "tau_dd" => tau_dd: parse,
                "bandwidth_mhz" => bandwidth_mhz: parse,
                "noise_figure_db" => noise_figure_db: parse,
                "nsd_dbm_hz" => nsd_dbm_hz: parse,
                "alpha" => alpha: parse,
                "r_min_bps_hz" => r_min_bps_hz: parse,
                "p_max_dbw" => p_max_dbw: parse,
                "ga_population" => ga_population: parse,
                "ga_generations" => ga_generations: parse,
                "ga_crossover" => ga_crossover: parse,
                "ga_mutation" => ga_mutation: parse,
                "ga_elitism" => ga_elitism: parse,
                "ga_penalty_weight" => ga_penalty_weight: parse,
                "handover_confirm_slots" => handover_confirm_slots: parse,
                "slot_duration_s" => slot_duration_s: parse,
                "horizon_slots" => horizon_slots: parse,
                "num_runs" => num_runs: parse,
                "mode" => mode: mode,
                "seed" => seed: parse,
                "output_dir" => output_dir: string,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |key: &str, message: String| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                message,
            })
        };
        if self.horizon_slots < 1 {
            return err("horizon_slots", "must be at least 1".into());
        }
        if self.num_runs < 1 {
            return err("num_runs", "must be at least 1".into());
        }
        if self.num_saps < 1 {
            return err("num_saps", "must be at least 1".into());
        }
        if self.num_uts < 1 {
            return err("num_uts", "must be at least 1".into());
        }
        if self.tau_up < 1 {
            return err("tau_up", "must be at least 1".into());
        }
        if self.tau_up + self.tau_dd > self.tau_c {
            return err(
                "tau_dd",
                format!(
                    "tau_up + tau_dd = {} exceeds tau_c = {}",
                    self.tau_up + self.tau_dd,
                    self.tau_c
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return err("alpha", format!("{} outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.ga_crossover) {
            return err("ga_crossover", format!("{} outside [0, 1]", self.ga_crossover));
        }
        if !(0.0..=1.0).contains(&self.ga_mutation) {
            return err("ga_mutation", format!("{} outside [0, 1]", self.ga_mutation));
        }
        if self.ga_population < 2 {
            return err("ga_population", "must be at least 2".into());
        }
        if !(self.max_boresight_deg > 0.0 && self.max_boresight_deg < 90.0) {
            return err(
                "max_boresight_deg",
                format!("{} outside (0, 90)", self.max_boresight_deg),
            );
        }
        if !(self.slot_duration_s > 0.0) {
            return err("slot_duration_s", "must be positive".into());
        }
        if !(self.eta > 0.0) {
            return err("eta", "must be positive".into());
        }
        if !(self.bandwidth_mhz > 0.0) {
            return err("bandwidth_mhz", "must be positive".into());
        }
        if self.r_min_bps_hz < 0.0 {
            return err("r_min_bps_hz", "must be non-negative".into());
        }
        Ok(())
    }

    pub fn geometry(&self) -> GeometryConfig {
        GeometryConfig {
            altitude_km: self.altitude_km,
            area_km: self.area_km,
            num_saps: self.num_saps,
            sap_spacing_km: self.sap_spacing_km,
            num_uts: self.num_uts,
            ground_speed_kms: self.ground_speed_kms,
            max_boresight_rad: self.max_boresight_deg.to_radians(),
            next_cluster_offset_km: self.next_cluster_offset_km,
        }
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            carrier_ghz: self.carrier_ghz,
            eta: self.eta,
            shadow_std_db: self.shadow_std_db,
            rician_k_db: self.rician_k_db,
            sat_gain_db: self.sat_gain_db,
            ut_gain_db: self.ut_gain_db,
        }
    }

    pub fn frame(&self) -> FrameConfig {
        FrameConfig {
            tau_c: self.tau_c,
            tau_up: self.tau_up,
            tau_ud: self.tau_c - self.tau_up - self.tau_dd,
            tau_dd: self.tau_dd,
        }
    }

    /// Receiver noise power in W: NSD + bandwidth + noise figure.
    pub fn noise_var_w(&self) -> f64 {
        let noise_dbm = self.nsd_dbm_hz + 10.0 * (self.bandwidth_mhz * 1e6).log10()
            + self.noise_figure_db;
        10f64.powf((noise_dbm - 30.0) / 10.0)
    }

    pub fn pilot_power_w(&self) -> f64 {
        10f64.powf(self.pilot_power_dbw / 10.0)
    }

    pub fn p_max_w(&self) -> f64 {
        10f64.powf(self.p_max_dbw / 10.0)
    }

    pub fn ga_params(&self, seed: u64) -> GaParams {
        GaParams {
            population: self.ga_population,
            generations: self.ga_generations,
            crossover_rate: self.ga_crossover,
            mutation_rate: self.ga_mutation,
            elitism: self.ga_elitism,
            penalty_weight: self.ga_penalty_weight,
            seed,
        }
    }

    /// Fully-resolved configuration, one `key = value` line per key.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("altitude_km", self.altitude_km.to_string());
        put("alpha", self.alpha.to_string());
        put("area_km", self.area_km.to_string());
        put("bandwidth_mhz", self.bandwidth_mhz.to_string());
        put("carrier_ghz", self.carrier_ghz.to_string());
        put("eta", self.eta.to_string());
        put("ga_crossover", self.ga_crossover.to_string());
        put("ga_elitism", self.ga_elitism.to_string());
        put("ga_generations", self.ga_generations.to_string());
        put("ga_mutation", self.ga_mutation.to_string());
        put("ga_penalty_weight", self.ga_penalty_weight.to_string());
        put("ga_population", self.ga_population.to_string());
        put("ground_speed_kms", self.ground_speed_kms.to_string());
        put("handover_confirm_slots", self.handover_confirm_slots.to_string());
        put("horizon_slots", self.horizon_slots.to_string());
        put("max_boresight_deg", self.max_boresight_deg.to_string());
        put("mode", self.mode.as_str().to_string());
        put("next_cluster_offset_km", self.next_cluster_offset_km.to_string());
        put("noise_figure_db", self.noise_figure_db.to_string());
        put("nsd_dbm_hz", self.nsd_dbm_hz.to_string());
        put("num_runs", self.num_runs.to_string());
        put("num_saps", self.num_saps.to_string());
        put("num_uts", self.num_uts.to_string());
        put("output_dir", self.output_dir.clone());
        put("p_max_dbw", self.p_max_dbw.to_string());
        put("pilot_power_dbw", self.pilot_power_dbw.to_string());
        put("r_min_bps_hz", self.r_min_bps_hz.to_string());
        put("rician_k_db", self.rician_k_db.to_string());
        put("sap_spacing_km", self.sap_spacing_km.to_string());
        put("sat_gain_db", self.sat_gain_db.to_string());
        put("seed", self.seed.to_string());
        put("shadow_std_db", self.shadow_std_db.to_string());
        put("slot_duration_s", self.slot_duration_s.to_string());
        put("tau_c", self.tau_c.to_string());
        put("tau_dd", self.tau_dd.to_string());
        put("tau_up", self.tau_up.to_string());
        put("ut_gain_db", self.ut_gain_db.to_string());
        out
    }
}
