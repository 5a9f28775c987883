//! Flat `key=value` configuration dialect, built-in presets and override
//! resolution.
//!
//! One dialect serves single runs, sweeps and the bath oracle. Angle keys
//! (`theta`, `phi`, `phi1..phi3`) accept either radians or a `_pi`-suffixed
//! form in units of pi (`theta_pi=0.5`); giving both forms of the same angle
//! is rejected as ambiguous. Lines starting with `#` are comments.

use crate::analysis::{ClassifierConfig, SignalSelector};
use crate::dynamics::{CircuitState, SimPlan};
use crate::model::{
    preset_matrix, CircuitConfig, CircuitPreset, CoherentCoupling, CouplingMatrix, EnvCoupling,
    ModelError,
};
use crate::sweep::{Axis, OutputFlags, SweepParam, SweepSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("angle `{0}` given both in radians and in pi units")]
    AmbiguousAngle(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown preset `{0}` (try: {1})")]
    UnknownPreset(String, String),
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub circuit: CircuitConfig,
    pub env: EnvCoupling,
    pub coh: CoherentCoupling,
    pub preset: CircuitPreset,
    pub plan: SimPlan,
    pub classifier: ClassifierConfig,
    /// Swept axes (none for a single run, 1 for a scan, 2 for a diagram).
    pub axes: Vec<Axis>,
    pub outputs: OutputFlags,
    /// Wall-clock budget per sweep point, seconds.
    pub point_budget_secs: f64,
    /// Signals written by the `spectrum` subcommand.
    pub signals: SignalSelector,
    pub bath: BathSection,
}

/// Bath-oracle parameters (the `bath_*` keys).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSection {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub band: f64,
    pub n_modes: usize,
    /// Carrier / delay scale; 0 selects the suggested default `band / 5`.
    pub carrier: f64,
    /// Comparison horizon; 0 selects `5 / gamma_eff`.
    pub horizon: f64,
    /// Full-model step; 0 selects `0.05 / band`.
    pub dt: f64,
}

impl Default for BathSection {
    fn default() -> Self {
        Self {
            j1: 0.0,
            j2: 0.0,
            j3: 0.0,
            band: 10.0,
            n_modes: 4001,
            carrier: 0.0,
            horizon: 0.0,
            dt: 0.0,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            circuit: CircuitConfig::default(),
            env: EnvCoupling::ZERO,
            coh: CoherentCoupling::ZERO,
            preset: CircuitPreset::General,
            plan: SimPlan::default(),
            classifier: ClassifierConfig::default(),
            axes: Vec::new(),
            outputs: OutputFlags::default(),
            point_budget_secs: 120.0,
            signals: SignalSelector::All,
            bath: BathSection::default(),
        }
    }
}

impl Config {
    /// Coupling matrix for the configured preset.
    pub fn coupling_matrix(&self) -> CouplingMatrix {
        preset_matrix(self.preset, &self.env, &self.coh)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.circuit.validate()?;
        self.env.validate()?;
        self.coh.validate()?;
        self.plan.validate().map_err(|e| ConfigError::BadValue {
            key: "plan".to_string(),
            reason: e.to_string(),
        })?;
        Ok(())
    }

    /// Sweep spec for the configured axes.
    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            circuit: self.circuit,
            env: self.env,
            coh: self.coh,
            preset: self.preset,
            axes: self.axes.clone(),
            plan: self.plan,
            outputs: self.outputs,
            classifier: self.classifier,
            point_budget_secs: self.point_budget_secs,
        }
    }

    /// Parse file text over the defaults, then apply `key=value` overrides
    /// (overrides win).
    pub fn resolve(file_text: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut map = KvMap::default();
        if let Some(text) = file_text {
            map.parse_text(text)?;
        }
        for (n, ov) in overrides.iter().enumerate() {
            let (k, v) = ov.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: n + 1,
                text: ov.clone(),
            })?;
            map.set_override(k.trim(), v.trim())?;
        }
        Config::from_map(map)
    }

    fn from_map(map: KvMap) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut m = map;

        cfg.circuit.delta = m.f64("delta", cfg.circuit.delta)?;
        cfg.circuit.delta_m = m.f64("Delta", cfg.circuit.delta_m)?;
        cfg.circuit.g0 = m.f64("G", cfg.circuit.g0)?;
        cfg.circuit.epsilon = m.f64("epsilon", cfg.circuit.epsilon)?;
        cfg.circuit.gamma = m.f64("gamma", cfg.circuit.gamma)?;
        cfg.circuit.gamma_m = m.f64("Gamma", cfg.circuit.gamma_m)?;

        cfg.env.j = m.f64("J", cfg.env.j)?;
        cfg.env.theta = m.angle("theta", cfg.env.theta)?;
        cfg.env.phi = m.angle("phi", cfg.env.phi)?;

        for (i, (gk, pk)) in [("g1", "phi1"), ("g2", "phi2"), ("g3", "phi3")]
            .iter()
            .enumerate()
        {
            cfg.coh.g[i] = m.f64(gk, cfg.coh.g[i])?;
            cfg.coh.phase[i] = m.angle(pk, cfg.coh.phase[i])?;
        }

        if let Some(p) = m.take("preset") {
            cfg.preset = CircuitPreset::parse(&p)?;
        }

        cfg.plan.t_total = m.f64("t_total", cfg.plan.t_total)?;
        cfg.plan.dt = m.f64("dt", cfg.plan.dt)?;
        cfg.plan.sample_stride = m.usize("sample_stride", cfg.plan.sample_stride)?;
        cfg.plan.discard_fraction = m.f64("discard_fraction", cfg.plan.discard_fraction)?;
        cfg.plan.adaptive = m.bool("adaptive", cfg.plan.adaptive)?;
        cfg.plan.rel_tol = m.f64("rel_tol", cfg.plan.rel_tol)?;
        cfg.plan.abs_tol = m.f64("abs_tol", cfg.plan.abs_tol)?;
        if let Some(seed) = m.take("perturb_seed") {
            let v: u64 = seed.parse().map_err(|_| ConfigError::BadValue {
                key: "perturb_seed".to_string(),
                reason: format!("not an unsigned integer: `{seed}`"),
            })?;
            cfg.plan.perturb_seed = Some(v);
        }
        cfg.plan.initial = CircuitState::ZERO;

        cfg.classifier.sync_tol_bins = m.f64("sync_tol_bins", cfg.classifier.sync_tol_bins)?;
        cfg.classifier.secondary_prominence =
            m.f64("secondary_prominence", cfg.classifier.secondary_prominence)?;
        cfg.classifier.noise_floor = m.f64("noise_floor", cfg.classifier.noise_floor)?;
        cfg.classifier.death_rel_std = m.f64("death_rel_std", cfg.classifier.death_rel_std)?;
        cfg.classifier.subharmonic_max =
            m.usize("subharmonic_max", cfg.classifier.subharmonic_max as usize)? as u32;
        cfg.classifier.periodicity_min =
            m.f64("periodicity_min", cfg.classifier.periodicity_min)?;

        for key in ["axis1", "axis2"] {
            if let Some(text) = m.take(key) {
                cfg.axes.push(parse_axis(key, &text)?);
            }
        }
        cfg.outputs.spectrogram = m.bool("out_spectra", cfg.outputs.spectrogram)?;
        cfg.outputs.classification = m.bool("out_classification", cfg.outputs.classification)?;
        cfg.outputs.peaks = m.bool("out_peaks", cfg.outputs.peaks)?;
        cfg.point_budget_secs = m.f64("point_budget_s", cfg.point_budget_secs)?;

        if let Some(s) = m.take("signals") {
            cfg.signals = match s.as_str() {
                "i" | "intensities" => SignalSelector::Intensities,
                "q" | "displacements" => SignalSelector::Displacements,
                "all" => SignalSelector::All,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "signals".to_string(),
                        reason: format!("expected i|q|all, got `{other}`"),
                    })
                }
            };
        }

        cfg.bath.j1 = m.f64("bath_j1", cfg.bath.j1)?;
        cfg.bath.j2 = m.f64("bath_j2", cfg.bath.j2)?;
        cfg.bath.j3 = m.f64("bath_j3", cfg.bath.j3)?;
        cfg.bath.band = m.f64("bath_band", cfg.bath.band)?;
        cfg.bath.n_modes = m.usize("bath_n_modes", cfg.bath.n_modes)?;
        cfg.bath.carrier = m.f64("bath_carrier", cfg.bath.carrier)?;
        cfg.bath.horizon = m.f64("bath_horizon", cfg.bath.horizon)?;
        cfg.bath.dt = m.f64("bath_dt", cfg.bath.dt)?;

        if let Some(k) = m.first_remaining() {
            return Err(ConfigError::UnknownKey(k));
        }

        cfg.env = EnvCoupling::new(cfg.env.j, cfg.env.theta, cfg.env.phi)?;
        cfg.coh = CoherentCoupling::new(cfg.coh.g, cfg.coh.phase)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize to the flat dialect. Angles are written in radians with
    /// full precision so `parse(write(cfg))` reproduces the parameter set
    /// exactly.
    pub fn write_dialect(&self) -> String {
        let mut out = String::from("# circuit\n");
        let kv = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        let f = |v: f64| format!("{v:.17e}");
        kv(&mut out, "delta", f(self.circuit.delta));
        kv(&mut out, "Delta", f(self.circuit.delta_m));
        kv(&mut out, "G", f(self.circuit.g0));
        kv(&mut out, "epsilon", f(self.circuit.epsilon));
        kv(&mut out, "gamma", f(self.circuit.gamma));
        kv(&mut out, "Gamma", f(self.circuit.gamma_m));
        kv(&mut out, "preset", self.preset.as_key().to_string());
        out.push_str("# couplings\n");
        kv(&mut out, "J", f(self.env.j));
        kv(&mut out, "theta", f(self.env.theta));
        kv(&mut out, "phi", f(self.env.phi));
        for (i, (gk, pk)) in [("g1", "phi1"), ("g2", "phi2"), ("g3", "phi3")]
            .iter()
            .enumerate()
        {
            kv(&mut out, gk, f(self.coh.g[i]));
            kv(&mut out, pk, f(self.coh.phase[i]));
        }
        out.push_str("# integration\n");
        kv(&mut out, "t_total", f(self.plan.t_total));
        kv(&mut out, "dt", f(self.plan.dt));
        kv(&mut out, "sample_stride", self.plan.sample_stride.to_string());
        kv(&mut out, "discard_fraction", f(self.plan.discard_fraction));
        kv(&mut out, "adaptive", self.plan.adaptive.to_string());
        kv(&mut out, "rel_tol", f(self.plan.rel_tol));
        kv(&mut out, "abs_tol", f(self.plan.abs_tol));
        if let Some(seed) = self.plan.perturb_seed {
            kv(&mut out, "perturb_seed", seed.to_string());
        }
        out.push_str("# classifier\n");
        kv(&mut out, "sync_tol_bins", f(self.classifier.sync_tol_bins));
        kv(
            &mut out,
            "secondary_prominence",
            f(self.classifier.secondary_prominence),
        );
        kv(&mut out, "noise_floor", f(self.classifier.noise_floor));
        kv(&mut out, "death_rel_std", f(self.classifier.death_rel_std));
        kv(
            &mut out,
            "subharmonic_max",
            self.classifier.subharmonic_max.to_string(),
        );
        kv(&mut out, "periodicity_min", f(self.classifier.periodicity_min));
        if !self.axes.is_empty() {
            out.push_str("# sweep\n");
            for (i, ax) in self.axes.iter().enumerate() {
                kv(
                    &mut out,
                    if i == 0 { "axis1" } else { "axis2" },
                    format!("{}:{}:{}:{}", ax.param.as_key(), ax.start, ax.stop, ax.count),
                );
            }
            kv(&mut out, "out_spectra", self.outputs.spectrogram.to_string());
            kv(&mut out, "point_budget_s", f(self.point_budget_secs));
        }
        out
    }
}

fn parse_axis(key: &str, text: &str) -> Result<Axis, ConfigError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = |reason: String| ConfigError::BadValue {
        key: key.to_string(),
        reason,
    };
    if parts.len() != 4 {
        return Err(bad(format!(
            "expected `param:start:stop:count`, got `{text}`"
        )));
    }
    let param = SweepParam::parse(parts[0])
        .ok_or_else(|| bad(format!("unknown sweep parameter `{}`", parts[0])))?;
    let start: f64 = parts[1]
        .parse()
        .map_err(|_| bad(format!("bad start `{}`", parts[1])))?;
    let stop: f64 = parts[2]
        .parse()
        .map_err(|_| bad(format!("bad stop `{}`", parts[2])))?;
    let count: usize = parts[3]
        .parse()
        .map_err(|_| bad(format!("bad count `{}`", parts[3])))?;
    if count < 2 {
        return Err(bad("count must be >= 2".to_string()));
    }
    Ok(Axis {
        param,
        start,
        stop,
        count,
    })
}

/// Ordered key-value store with parse tracking.
#[derive(Debug, Default)]
struct KvMap {
    values: BTreeMap<String, String>,
}

const ANGLE_KEYS: [&str; 5] = ["theta", "phi", "phi1", "phi2", "phi3"];

impl KvMap {
    fn parse_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: n + 1,
                text: line.to_string(),
            })?;
            let k = k.trim().to_string();
            if self.values.contains_key(&k) {
                return Err(ConfigError::DuplicateKey(k));
            }
            self.values.insert(k, v.trim().to_string());
        }
        Ok(())
    }

    fn set_override(&mut self, k: &str, v: &str) -> Result<(), ConfigError> {
        // An override replaces the file value; for angles it also replaces
        // the other form to keep precedence unambiguous.
        if let Some(base) = k.strip_suffix("_pi") {
            if ANGLE_KEYS.contains(&base) {
                self.values.remove(base);
            }
        } else if ANGLE_KEYS.contains(&k) {
            self.values.remove(&format!("{k}_pi"));
        }
        self.values.insert(k.to_string(), v.to_string());
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("not a number: `{v}`"),
            }),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("not an unsigned integer: `{v}`"),
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(ConfigError::BadValue {
                    key: key.to_string(),
                    reason: format!("not a boolean: `{other}`"),
                }),
            },
        }
    }

    /// Angle in radians, accepting `key` (radians) or `key_pi` (pi units).
    fn angle(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let pi_key = format!("{key}_pi");
        let rad = self.take(key);
        let pi_units = self.take(&pi_key);
        match (rad, pi_units) {
            (Some(_), Some(_)) => Err(ConfigError::AmbiguousAngle(key.to_string())),
            (Some(v), None) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("not a number: `{v}`"),
            }),
            (None, Some(v)) => {
                let units: f64 = v.parse().map_err(|_| ConfigError::BadValue {
                    key: pi_key.clone(),
                    reason: format!("not a number: `{v}`"),
                })?;
                Ok(units * PI)
            }
            (None, None) => Ok(default),
        }
    }

    fn first_remaining(&self) -> Option<String> {
        self.values.keys().next().cloned()
    }
}

/// Built-in parameter sets transcribed from the reference operating points.
pub const PRESET_NAMES: [&str; 9] = [
    "fig2a",
    "fig2b",
    "fig2c",
    "fig3a",
    "fig3c_pointC",
    "fig5a",
    "fig6a",
    "fig7a",
    "fig8a",
];

/// Text of a named built-in configuration.
pub fn preset_text(name: &str) -> Result<String, ConfigError> {
    let base = "# baseline circuit\n\
                delta=0.05\n\
                Delta=5e-3\n\
                G=4e-5\n\
                epsilon=800\n\
                gamma=0.1\n\
                Gamma=8e-5\n";
    let body = match name {
        "fig2a" => "preset=general\nJ=0\ntheta_pi=0\nphi_pi=0\n".to_string(),
        "fig2b" => "preset=general\nJ=0.11\ntheta_pi=0.5\nphi_pi=0.5\n".to_string(),
        "fig2c" => "preset=general\nJ=0.11\ntheta_pi=0.6\nphi_pi=0.8\n".to_string(),
        "fig3a" => {
            // Spectrogram scan over J; the single-point value is point A.
            "preset=general\nJ=0.1\ntheta_pi=0.2\nphi_pi=-0.8\naxis1=J:0:0.11:12\n".to_string()
        }
        "fig3c_pointC" => "preset=general\nJ=0.11\ntheta_pi=0\nphi_pi=0.2\n".to_string(),
        "fig5a" => "preset=general\nJ=0.1\ntheta_pi=0.5\nphi_pi=0.9\n\
                    g1=0.15\ng2=0.15\ng3=0.15\nphi1_pi=0.8\nphi2_pi=0.8\nphi3_pi=0.8\n\
                    axis1=J:0:0.2:21\n"
            .to_string(),
        "fig6a" => "preset=fig4b\nJ=0.1\ntheta_pi=0.5\nphi_pi=-0.8\ng1=0.18\nphi1_pi=0.7\n\
                    axis1=J:0:0.2:21\n"
            .to_string(),
        "fig7a" => "preset=fig4c\nJ=0.1\ntheta_pi=0.2\nphi_pi=-0.7\ng3=0.2\nphi3_pi=0.7\n\
                    axis1=J:0:0.2:21\n"
            .to_string(),
        "fig8a" => "preset=fig4d\nJ=0.2\ntheta_pi=0.9\nphi_pi=1\naxis1=J:0:0.6:25\n".to_string(),
        other => {
            return Err(ConfigError::UnknownPreset(
                other.to_string(),
                PRESET_NAMES.join(", "),
            ))
        }
    };
    Ok(format!("{base}{body}"))
}

/// Resolved run manifest written next to every output for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub config: Config,
    pub overrides: Vec<String>,
}

impl Manifest {
    pub fn new(config: &Config, overrides: &[String]) -> Self {
        Self {
            schema_version: 1,
            tool: "omsync".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            overrides: overrides.to_vec(),
        }
    }
}
