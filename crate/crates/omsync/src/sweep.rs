//! Embarrassingly parallel parameter sweeps with resumable persistence.
//!
//! A sweep integrates and classifies every grid point independently; records
//! are keyed by grid index so the result is bit-identical regardless of the
//! worker count or interleaving. Each finished point is appended to
//! `checkpoint.log` (one JSON record per line); resuming skips completed
//! indices and refuses to run against a directory whose manifest hash does
//! not match the spec.

use crate::analysis::{
    classify, power_spectrum, ClassifierConfig, SignalSelector, SyncClassification, SyncState,
};
use crate::dynamics::{integrate_interruptible, steady_window, DynamicsError, SimPlan};
use crate::model::{CircuitConfig, CircuitPreset, CoherentCoupling, EnvCoupling};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("result directory holds a different sweep (spec hash {found} != {expected})")]
    SpecMismatch { expected: String, found: String },
    #[error("phase diagram requires a 2-D sweep, got {0} axis(es)")]
    NotTwoDimensional(usize),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt result store: {0}")]
    Corrupt(String),
}

/// Parameter that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    J,
    Theta,
    Phi,
    G1,
    G2,
    G3,
    Phi1,
    Phi2,
    Phi3,
    Delta,
    DeltaM,
    Epsilon,
    Gamma,
}

impl SweepParam {
    pub fn as_key(self) -> &'static str {
        match self {
            SweepParam::J => "J",
            SweepParam::Theta => "theta",
            SweepParam::Phi => "phi",
            SweepParam::G1 => "g1",
            SweepParam::G2 => "g2",
            SweepParam::G3 => "g3",
            SweepParam::Phi1 => "phi1",
            SweepParam::Phi2 => "phi2",
            SweepParam::Phi3 => "phi3",
            SweepParam::Delta => "delta",
            SweepParam::DeltaM => "Delta",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "J" => SweepParam::J,
            "theta" => SweepParam::Theta,
            "phi" => SweepParam::Phi,
            "g1" => SweepParam::G1,
            "g2" => SweepParam::G2,
            "g3" => SweepParam::G3,
            "phi1" => SweepParam::Phi1,
            "phi2" => SweepParam::Phi2,
            "phi3" => SweepParam::Phi3,
            "delta" => SweepParam::Delta,
            "Delta" => SweepParam::DeltaM,
            "epsilon" => SweepParam::Epsilon,
            "gamma" => SweepParam::Gamma,
            _ => return None,
        })
    }

    fn apply(
        self,
        circuit: &mut CircuitConfig,
        env: &mut EnvCoupling,
        coh: &mut CoherentCoupling,
        value: f64,
    ) {
        match self {
            SweepParam::J => env.j = value,
            SweepParam::Theta => env.theta = value,
            SweepParam::Phi => env.phi = value,
            SweepParam::G1 => coh.g[0] = value,
            SweepParam::G2 => coh.g[1] = value,
            SweepParam::G3 => coh.g[2] = value,
            SweepParam::Phi1 => coh.phase[0] = value,
            SweepParam::Phi2 => coh.phase[1] = value,
            SweepParam::Phi3 => coh.phase[2] = value,
            SweepParam::Delta => circuit.delta = value,
            SweepParam::DeltaM => circuit.delta_m = value,
            SweepParam::Epsilon => circuit.epsilon = value,
            SweepParam::Gamma => circuit.gamma = value,
        }
    }
}

/// One swept axis: `count` points linearly spaced over `[start, stop]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: SweepParam,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFlags {
    /// Keep a down-sampled intensity spectrum per point.
    pub spectrogram: bool,
    /// Classification is always computed (phase diagrams need it).
    pub classification: bool,
    /// Store the per-signal dominant peak table.
    pub peaks: bool,
}

impl Default for OutputFlags {
    fn default() -> Self {
        Self {
            spectrogram: false,
            classification: true,
            peaks: true,
        }
    }
}

/// Complete sweep description; hashing this is what makes results resumable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub circuit: CircuitConfig,
    pub env: EnvCoupling,
    pub coh: CoherentCoupling,
    pub preset: CircuitPreset,
    pub axes: Vec<Axis>,
    pub plan: SimPlan,
    pub outputs: OutputFlags,
    pub classifier: ClassifierConfig,
    pub point_budget_secs: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(SweepError::InvalidSpec(format!(
                "need 1 or 2 axes, got {}",
                self.axes.len()
            )));
        }
        for ax in &self.axes {
            if ax.count < 2 {
                return Err(SweepError::InvalidSpec(
                    "axis count must be >= 2".to_string(),
                ));
            }
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return Err(SweepError::InvalidSpec(
                "swept parameters must be distinct".to_string(),
            ));
        }
        self.plan
            .validate()
            .map_err(|e| SweepError::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    /// Content hash of the spec (canonical JSON, SHA-256 hex).
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let n1 = self.axes[0].count;
        let n2 = self.axes.get(1).map(|a| a.count).unwrap_or(1);
        (n1, n2)
    }

    pub fn n_points(&self) -> usize {
        let (n1, n2) = self.grid_shape();
        n1 * n2
    }

    /// Axis coordinate values of a row-major grid index.
    pub fn coords(&self, index: usize) -> Vec<f64> {
        let (_, n2) = self.grid_shape();
        let v1 = self.axes[0].values();
        match self.axes.get(1) {
            None => vec![v1[index]],
            Some(ax2) => {
                let v2 = ax2.values();
                vec![v1[index / n2], v2[index % n2]]
            }
        }
    }
}

/// Per-signal dominant peak summary `(frequency, power)`.
pub type TopPeak = Option<(f64, f64)>;

/// Down-sampled intensity spectrum stored with a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumColumn {
    pub f_over_f0: Vec<f64>,
    pub power: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointOutcome {
    Classified {
        state: SyncState,
        sync_frequency: Option<f64>,
        members: Vec<usize>,
        subharmonic_order: Option<u32>,
        top_peaks: Vec<TopPeak>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        spectrum: Option<SpectrumColumn>,
    },
    Diverged {
        tau: f64,
    },
    TimedOut,
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub coords: Vec<f64>,
    #[serde(flatten)]
    pub outcome: PointOutcome,
}

/// Completed sweep: exactly one record per grid point, row-major order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec_hash: String,
    pub axes: Vec<Axis>,
    pub shape: (usize, usize),
    pub records: Vec<PointRecord>,
    /// Points computed in this invocation (0 for a no-op resume).
    pub fresh_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepManifest {
    schema_version: u32,
    tool: String,
    version: String,
    spec_hash: String,
    axes: Vec<Axis>,
    shape: (usize, usize),
    spec: SweepSpec,
}

/// Integrate and classify a single grid point. Pure up to the wall-clock
/// budget check.
pub fn run_point(spec: &SweepSpec, index: usize, deadline: Option<Instant>) -> PointRecord {
    let coords = spec.coords(index);
    let outcome = run_point_inner(spec, &coords, deadline);
    PointRecord {
        index,
        coords,
        outcome,
    }
}

fn run_point_inner(spec: &SweepSpec, coords: &[f64], deadline: Option<Instant>) -> PointOutcome {
    let mut circuit = spec.circuit;
    let mut env = spec.env;
    let mut coh = spec.coh;
    for (ax, &v) in spec.axes.iter().zip(coords) {
        ax.param.apply(&mut circuit, &mut env, &mut coh, v);
    }
    if let Err(e) = circuit
        .validate()
        .and_then(|_| env.validate())
        .and_then(|_| coh.validate())
    {
        return PointOutcome::Failed {
            message: e.to_string(),
        };
    }
    let k = crate::model::preset_matrix(spec.preset, &env, &coh);

    let interrupted = || deadline.map(|d| Instant::now() > d).unwrap_or(false);
    let traj = match integrate_interruptible(&spec.plan, &circuit, &k, &interrupted) {
        Ok(t) => t,
        Err(DynamicsError::Diverged { tau, .. }) => return PointOutcome::Diverged { tau },
        Err(DynamicsError::Interrupted { .. }) => return PointOutcome::TimedOut,
        Err(e) => {
            return PointOutcome::Failed {
                message: e.to_string(),
            }
        }
    };
    let window = match steady_window(&traj, spec.plan.discard_fraction) {
        Ok(w) => w,
        Err(e) => {
            return PointOutcome::Failed {
                message: e.to_string(),
            }
        }
    };
    let spectra = match power_spectrum(&window, SignalSelector::Intensities) {
        Ok(s) => s,
        Err(e) => {
            return PointOutcome::Failed {
                message: e.to_string(),
            }
        }
    };
    let cls: SyncClassification = classify(&spectra, &window, &k, &spec.classifier);

    let top_peaks: Vec<TopPeak> = if spec.outputs.peaks {
        cls.peaks
            .iter()
            .map(|pl| pl.dominant().map(|p| (p.f_over_f0, p.power)))
            .collect()
    } else {
        Vec::new()
    };

    let spectrum = spec.outputs.spectrogram.then(|| downsample(&spectra));

    PointOutcome::Classified {
        state: cls.state,
        sync_frequency: cls.sync_frequency,
        members: cls.members,
        subharmonic_order: cls.subharmonic_order,
        top_peaks,
        spectrum,
    }
}

/// Restrict to f/f0 in [0, 2.5] and max-pool down to at most 4096 bins
/// (max-pooling keeps narrow lines visible).
fn downsample(spec: &crate::analysis::Spectrum) -> SpectrumColumn {
    const F_MAX: f64 = 2.5;
    const MAX_BINS: usize = 4096;
    let cut = spec
        .f_over_f0
        .iter()
        .position(|f| *f > F_MAX)
        .unwrap_or(spec.f_over_f0.len());
    let cut = cut.max(2);
    let group = cut.div_ceil(MAX_BINS);
    let n_out = cut.div_ceil(group);
    let mut f = Vec::with_capacity(n_out);
    let mut power: [Vec<f64>; 3] = [
        Vec::with_capacity(n_out),
        Vec::with_capacity(n_out),
        Vec::with_capacity(n_out),
    ];
    for g in 0..n_out {
        let lo = g * group;
        let hi = (lo + group).min(cut);
        f.push(spec.f_over_f0[lo]);
        for (s, col) in power.iter_mut().enumerate() {
            col.push(spec.power[s][lo..hi].iter().cloned().fold(0.0, f64::max));
        }
    }
    SpectrumColumn { f_over_f0: f, power }
}

/// Run (or resume) a sweep into `dir` with the given worker count.
///
/// Results are independent of `workers`; an interrupted run resumes without
/// recomputing finished points.
pub fn run_sweep(spec: &SweepSpec, workers: usize, dir: &Path) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let hash = spec.content_hash();
    fs::create_dir_all(dir)?;

    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path)?;
        let found: SweepManifest = serde_json::from_str(&text)
            .map_err(|e| SweepError::Corrupt(format!("manifest.json: {e}")))?;
        if found.spec_hash != hash {
            return Err(SweepError::SpecMismatch {
                expected: hash,
                found: found.spec_hash,
            });
        }
    } else {
        let manifest = SweepManifest {
            schema_version: 1,
            tool: "omsync".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec_hash: hash.clone(),
            axes: spec.axes.clone(),
            shape: spec.grid_shape(),
            spec: spec.clone(),
        };
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())?;
    }

    // Load completed points. A kill can leave a torn final line; that tail
    // is truncated away (the point is simply recomputed). Malformed lines
    // anywhere else mean real corruption.
    let ckpt_path = dir.join("checkpoint.log");
    let mut done: Vec<Option<PointRecord>> = vec![None; spec.n_points()];
    if ckpt_path.exists() {
        let text = fs::read_to_string(&ckpt_path)?;
        let mut valid_bytes = 0usize;
        let segments: Vec<&str> = text.split_inclusive('\n').collect();
        for (i, seg) in segments.iter().enumerate() {
            match serde_json::from_str::<PointRecord>(seg.trim_end()) {
                Ok(rec) => {
                    let idx = rec.index;
                    if idx < done.len() {
                        done[idx] = Some(rec);
                    }
                    valid_bytes += seg.len();
                }
                Err(_) if i + 1 == segments.len() => {
                    let file = fs::OpenOptions::new().write(true).open(&ckpt_path)?;
                    file.set_len(valid_bytes as u64)?;
                }
                Err(e) => {
                    return Err(SweepError::Corrupt(format!(
                        "checkpoint.log line {}: {e}",
                        i + 1
                    )));
                }
            }
        }
    }
    let todo: Vec<usize> = (0..spec.n_points()).filter(|i| done[*i].is_none()).collect();
    let fresh_count = todo.len();

    if !todo.is_empty() {
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ckpt_path)?;
        let writer = Mutex::new(BufWriter::new(file));
        let budget = Duration::from_secs_f64(spec.point_budget_secs.max(0.0));

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?;
        let fresh: Result<Vec<PointRecord>, SweepError> = pool.install(|| {
            todo.par_iter()
                .map(|&index| {
                    let deadline = (spec.point_budget_secs > 0.0).then(|| Instant::now() + budget);
                    let rec = run_point(spec, index, deadline);
                    let line = serde_json::to_string(&rec).expect("record serializes");
                    {
                        let mut w = writer.lock().expect("checkpoint writer poisoned");
                        writeln!(w, "{line}")?;
                        w.flush()?;
                    }
                    Ok(rec)
                })
                .collect()
        });
        for rec in fresh? {
            let idx = rec.index;
            done[idx] = Some(rec);
        }
    }

    let records: Vec<PointRecord> = done
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| SweepError::Corrupt(format!("missing record {i}"))))
        .collect::<Result<_, _>>()?;

    let result = SweepResult {
        spec_hash: hash,
        axes: spec.axes.clone(),
        shape: spec.grid_shape(),
        records,
        fresh_count,
    };
    fs::write(dir.join("points.csv"), points_csv(&result))?;
    if spec.outputs.spectrogram {
        fs::write(dir.join("spectra.csv"), spectra_csv(&result))?;
    }
    Ok(result)
}

/// `points.csv` body: grid coordinates plus the classification summary.
pub fn points_csv(result: &SweepResult) -> String {
    let mut out = String::from("index");
    for ax in &result.axes {
        out.push(',');
        out.push_str(ax.param.as_key());
    }
    out.push_str(
        ",status,state,sync_frequency,members,subharmonic_order,\
         peak_f_I1,peak_p_I1,peak_f_I2,peak_p_I2,peak_f_I3,peak_p_I3\n",
    );
    for rec in &result.records {
        out.push_str(&rec.index.to_string());
        for c in &rec.coords {
            out.push_str(&format!(",{c:.16e}"));
        }
        match &rec.outcome {
            PointOutcome::Classified {
                state,
                sync_frequency,
                members,
                subharmonic_order,
                top_peaks,
                ..
            } => {
                out.push_str(&format!(",classified,{state}"));
                match sync_frequency {
                    Some(f) => out.push_str(&format!(",{f:.16e}")),
                    None => out.push(','),
                }
                out.push(',');
                out.push_str(
                    &members
                        .iter()
                        .map(|m| m.to_string())
                        .collect::<Vec<_>>()
                        .join("+"),
                );
                match subharmonic_order {
                    Some(n) => out.push_str(&format!(",{n}")),
                    None => out.push(','),
                }
                for p in top_peaks {
                    match p {
                        Some((f, pw)) => out.push_str(&format!(",{f:.16e},{pw:.16e}")),
                        None => out.push_str(",,"),
                    }
                }
            }
            PointOutcome::Diverged { tau } => {
                out.push_str(&format!(",diverged,,,,{tau:.6e},,,,,,"));
            }
            PointOutcome::TimedOut => out.push_str(",timed_out,,,,,,,,,,"),
            PointOutcome::Failed { message } => {
                out.push_str(&format!(",failed,{},,,,,,,,,", message.replace(',', ";")));
            }
        }
        out.push('\n');
    }
    out
}

/// Long-format `spectra.csv`: `index,f_over_f0,S_I1,S_I2,S_I3`.
pub fn spectra_csv(result: &SweepResult) -> String {
    let mut out = String::from("index,f_over_f0,S_I1,S_I2,S_I3\n");
    for rec in &result.records {
        if let PointOutcome::Classified {
            spectrum: Some(col),
            ..
        } = &rec.outcome
        {
            for (i, f) in col.f_over_f0.iter().enumerate() {
                out.push_str(&format!(
                    "{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                    rec.index, f, col.power[0][i], col.power[1][i], col.power[2][i]
                ));
            }
        }
    }
    out
}

/// Two-region phase diagram cell (plus diagnostic categories).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseCell {
    Sync,
    Unsync,
    Death,
    Diverged,
}

impl std::fmt::Display for PhaseCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PhaseCell::Sync => "sync",
            PhaseCell::Unsync => "unsync",
            PhaseCell::Death => "death",
            PhaseCell::Diverged => "diverged",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct PhaseDiagram {
    pub shape: (usize, usize),
    pub axes: Vec<Axis>,
    /// Row-major over (axis1, axis2).
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, i1: usize, i2: usize) -> PhaseCell {
        self.cells[i1 * self.shape.1 + i2]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},{},phase\n",
            self.axes[0].param.as_key(),
            self.axes[1].param.as_key()
        );
        let v1 = self.axes[0].values();
        let v2 = self.axes[1].values();
        for (idx, cell) in self.cells.iter().enumerate() {
            let (i1, i2) = (idx / self.shape.1, idx % self.shape.1);
            out.push_str(&format!("{:.16e},{:.16e},{cell}\n", v1[i1], v2[i2]));
        }
        out
    }
}

/// Collapse per-point classifications to the two-region convention: only
/// full synchronization counts as `sync`; independent, unsynchronized and
/// partial states all fold into `unsync`. Death and failures are kept as
/// diagnostics.
pub fn phase_diagram(result: &SweepResult) -> Result<PhaseDiagram, SweepError> {
    if result.axes.len() != 2 {
        return Err(SweepError::NotTwoDimensional(result.axes.len()));
    }
    let cells = result
        .records
        .iter()
        .map(|rec| match &rec.outcome {
            PointOutcome::Classified { state, .. } => match state {
                SyncState::Synchronized => PhaseCell::Sync,
                SyncState::OscillationDeath => PhaseCell::Death,
                _ => PhaseCell::Unsync,
            },
            _ => PhaseCell::Diverged,
        })
        .collect();
    Ok(PhaseDiagram {
        shape: result.shape,
        axes: result.axes.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    /// A plan small enough to keep grid tests fast: 8000 samples, no
    /// discard, trivial classification content.
    fn tiny_plan() -> SimPlan {
        SimPlan {
            t_total: 8.0,
            dt: 1e-3,
            sample_stride: 1,
            discard_fraction: 0.0,
            ..SimPlan::default()
        }
    }

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            circuit: CircuitConfig::default(),
            env: EnvCoupling::ZERO,
            coh: CoherentCoupling::ZERO,
            preset: CircuitPreset::General,
            axes: vec![
                Axis {
                    param: SweepParam::J,
                    start: 0.0,
                    stop: 0.1,
                    count: 2,
                },
                Axis {
                    param: SweepParam::Theta,
                    start: 0.0,
                    stop: 1.0,
                    count: 2,
                },
            ],
            plan: tiny_plan(),
            outputs: OutputFlags::default(),
            classifier: ClassifierConfig::default(),
            point_budget_secs: 120.0,
        }
    }

    #[test]
    fn axis_values_are_inclusive_linspace() {
        let ax = Axis {
            param: SweepParam::J,
            start: 0.0,
            stop: 0.11,
            count: 12,
        };
        let v = ax.values();
        assert_eq!(v.len(), 12);
        assert_eq!(v[0], 0.0);
        assert!((v[11] - 0.11).abs() < 1e-15);
    }

    #[test]
    fn grid_is_row_major() {
        let spec = tiny_spec();
        assert_eq!(spec.n_points(), 4);
        assert_eq!(spec.coords(0), vec![0.0, 0.0]);
        assert_eq!(spec.coords(1), vec![0.0, 1.0]);
        assert_eq!(spec.coords(2), vec![0.1, 0.0]);
        assert_eq!(spec.coords(3), vec![0.1, 1.0]);
    }

    #[test]
    fn four_point_grid_runs_and_persists() {
        let spec = tiny_spec();
        let dir = tempdir().unwrap();
        let result = run_sweep(&spec, 2, dir.path()).unwrap();
        assert_eq!(result.records.len(), 4);
        for (i, rec) in result.records.iter().enumerate() {
            assert_eq!(rec.index, i);
        }
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("points.csv").exists());
        let csv = fs::read_to_string(dir.path().join("points.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("index,J,theta,status,state"));
    }

    #[test]
    fn worker_count_invariance() {
        let spec = tiny_spec();
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let r1 = run_sweep(&spec, 1, d1.path()).unwrap();
        let r2 = run_sweep(&spec, 4, d2.path()).unwrap();
        for (a, b) in r1.records.iter().zip(&r2.records) {
            assert_eq!(
                serde_json::to_string(a).unwrap(),
                serde_json::to_string(b).unwrap()
            );
        }
        // points.csv is byte-identical.
        let c1 = fs::read_to_string(d1.path().join("points.csv")).unwrap();
        let c2 = fs::read_to_string(d2.path().join("points.csv")).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn resume_after_partial_run_matches_uninterrupted() {
        let spec = tiny_spec();
        let full_dir = tempdir().unwrap();
        let full = run_sweep(&spec, 2, full_dir.path()).unwrap();

        // Simulate a killed run: a directory holding the manifest and only
        // the first completed point (plus a torn trailing line).
        let part_dir = tempdir().unwrap();
        let manifest = fs::read_to_string(full_dir.path().join("manifest.json")).unwrap();
        fs::write(part_dir.path().join("manifest.json"), manifest).unwrap();
        let ckpt = fs::read_to_string(full_dir.path().join("checkpoint.log")).unwrap();
        let first_line = ckpt.lines().next().unwrap();
        fs::write(
            part_dir.path().join("checkpoint.log"),
            format!("{first_line}\n{{\"index\":99,\"coo"),
        )
        .unwrap();

        let resumed = run_sweep(&spec, 2, part_dir.path()).unwrap();
        for (a, b) in full.records.iter().zip(&resumed.records) {
            assert_eq!(
                serde_json::to_string(a).unwrap(),
                serde_json::to_string(b).unwrap()
            );
        }
        // Checkpoint only grew.
        let ckpt2 = fs::read_to_string(part_dir.path().join("checkpoint.log")).unwrap();
        assert!(ckpt2.lines().count() >= 4);

        // A second run over a complete directory recomputes nothing and
        // returns the same records.
        let again = run_sweep(&spec, 2, part_dir.path()).unwrap();
        assert_eq!(again.records.len(), 4);
    }

    #[test]
    fn resume_refuses_mismatched_spec() {
        let spec = tiny_spec();
        let dir = tempdir().unwrap();
        run_sweep(&spec, 1, dir.path()).unwrap();
        let mut other = spec.clone();
        other.env.theta = 0.123;
        assert!(matches!(
            run_sweep(&other, 1, dir.path()),
            Err(SweepError::SpecMismatch { .. })
        ));
    }

    #[test]
    fn phase_diagram_collapse_and_errors() {
        let spec = tiny_spec();
        let dir = tempdir().unwrap();
        let result = run_sweep(&spec, 2, dir.path()).unwrap();
        let pd = phase_diagram(&result).unwrap();
        assert_eq!(pd.cells.len(), 4);
        let csv = pd.to_csv();
        assert!(csv.starts_with("J,theta,phase\n"));

        let mut one_d = result;
        one_d.axes.truncate(1);
        assert!(matches!(
            phase_diagram(&one_d),
            Err(SweepError::NotTwoDimensional(1))
        ));
    }

    #[test]
    fn diverged_points_are_recorded_not_fatal() {
        // gamma tiny and strong dissipative coupling: linear gain escapes.
        let mut spec = tiny_spec();
        spec.circuit.gamma = 1e-6;
        spec.circuit.g0 = 0.0;
        spec.circuit.epsilon = 0.0;
        // Seed the growing eigenmodes directly.
        spec.plan.initial.a = [
            num_complex::Complex64::new(1.0, 0.0),
            num_complex::Complex64::new(-0.5, 0.2),
            num_complex::Complex64::new(0.3, -0.1),
        ];
        spec.axes = vec![Axis {
            param: SweepParam::J,
            start: 3.0,
            stop: 5.0,
            count: 2,
        }];
        let dir = tempdir().unwrap();
        let result = run_sweep(&spec, 1, dir.path()).unwrap();
        assert!(result
            .records
            .iter()
            .all(|r| matches!(r.outcome, PointOutcome::Diverged { .. })));
    }

    #[test]
    fn exhausted_budget_marks_points_timed_out() {
        let mut spec = tiny_spec();
        spec.point_budget_secs = 1e-9;
        let dir = tempdir().unwrap();
        let result = run_sweep(&spec, 2, dir.path()).unwrap();
        assert!(result
            .records
            .iter()
            .all(|r| matches!(r.outcome, PointOutcome::TimedOut)));
        // The diagnostic cell category for the phase diagram.
        let pd = phase_diagram(&result).unwrap();
        assert!(pd.cells.iter().all(|c| *c == PhaseCell::Diverged));
    }

    #[test]
    fn spec_validation() {
        let mut spec = tiny_spec();
        spec.axes.clear();
        assert!(spec.validate().is_err());

        let mut spec = tiny_spec();
        spec.axes[1].param = SweepParam::J;
        assert!(spec.validate().is_err());

        let mut spec = tiny_spec();
        spec.axes.push(Axis {
            param: SweepParam::Phi,
            start: 0.0,
            stop: 1.0,
            count: 2,
        });
        assert!(spec.validate().is_err());
    }
}
