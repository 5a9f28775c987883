//! Spectral analysis and oscillation-state classification.
//!
//! Frequency axis convention: `f/f0` equals the dimensionless *angular*
//! frequency of the signal in `tau`, so a pure `cos(tau)` tone lands at
//! `f/f0 = 1` and the fundamental mechanical lines sit near 1.0.

use crate::dynamics::{SignalKind, Trajectory, MIN_WINDOW_SAMPLES};
use crate::model::CouplingMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("trajectory sampling is not uniform (defect {0:.3e})")]
    NonUniformSampling(f64),
    #[error("too few samples: {got}, need >= {min}")]
    TooFewSamples { got: usize, min: usize },
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("signal column {0} out of range")]
    BadSignalColumn(usize),
}

/// Classifier thresholds. The defaults are locked so phase diagrams are
/// deterministic; all of them can be overridden from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Dominant peaks agree when within this many frequency bins.
    pub sync_tol_bins: f64,
    /// Secondary peaks must stay below this prominence for a clean lock.
    pub secondary_prominence: f64,
    /// Peaks below `noise_floor * max` are ignored outright.
    pub noise_floor: f64,
    /// A resonator is dead when rel. std of its intensity drops below this.
    pub death_rel_std: f64,
    /// Largest subharmonic order searched.
    pub subharmonic_max: u32,
    /// A locked rhythm must have intensity autocorrelation at one period of
    /// at least this value (quasi-periodic beating shows a harmonic-looking
    /// comb but fails to repeat in the time domain).
    pub periodicity_min: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            sync_tol_bins: 2.0,
            secondary_prominence: 0.2,
            noise_floor: 1e-6,
            death_rel_std: 1e-4,
            subharmonic_max: 16,
            periodicity_min: 0.8,
        }
    }
}

/// Minimum peak prominence (fraction of the signal's global maximum) for a
/// local maximum to be reported at all.
pub const PEAK_PROMINENCE_MIN: f64 = 0.05;

/// One-sided power spectrum of one or more derived signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Frequency axis in f/f0 units, starting at 0 (DC bin present).
    pub f_over_f0: Vec<f64>,
    /// One power column per signal, same length as `f_over_f0`.
    pub power: Vec<Vec<f64>>,
    pub signals: Vec<SignalKind>,
}

impl Spectrum {
    /// Frequency bin width in f/f0 units.
    pub fn bin_width(&self) -> f64 {
        if self.f_over_f0.len() < 2 {
            0.0
        } else {
            self.f_over_f0[1] - self.f_over_f0[0]
        }
    }

    pub fn column(&self, kind: SignalKind) -> Option<&[f64]> {
        self.signals
            .iter()
            .position(|s| *s == kind)
            .map(|i| self.power[i].as_slice())
    }

    /// Spectrum CSV: `f_over_f0,S_I1,...` with one column per signal.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "f_over_f0")?;
        for s in &self.signals {
            write!(w, ",S_{}", s.label())?;
        }
        writeln!(w)?;
        for (i, f) in self.f_over_f0.iter().enumerate() {
            write!(w, "{f:.16e}")?;
            for col in &self.power {
                write!(w, ",{:.16e}", col[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Which derived signals to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalSelector {
    #[default]
    Intensities,
    Displacements,
    All,
}

impl SignalSelector {
    pub fn kinds(&self) -> Vec<SignalKind> {
        let intens = (1..=3).map(SignalKind::Intensity);
        let disp = (1..=3).map(SignalKind::Displacement);
        match self {
            SignalSelector::Intensities => intens.collect(),
            SignalSelector::Displacements => disp.collect(),
            SignalSelector::All => intens.chain(disp).collect(),
        }
    }
}

/// Mean-subtracted, Hann-windowed, one-sided power spectrum of raw signals.
///
/// Normalization: the sum of all one-sided power bins equals the mean square
/// of the windowed signal (exactly, by Parseval).
pub fn spectrum_of_signals(
    signals: Vec<(SignalKind, Vec<f64>)>,
    dtau: f64,
) -> Result<Spectrum, AnalysisError> {
    let n = signals
        .first()
        .map(|(_, v)| v.len())
        .ok_or(AnalysisError::EmptySpectrum)?;
    if n < MIN_WINDOW_SAMPLES {
        return Err(AnalysisError::TooFewSamples {
            got: n,
            min: MIN_WINDOW_SAMPLES,
        });
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);

    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect();

    let n_bins = n / 2 + 1;
    let mut kinds = Vec::with_capacity(signals.len());
    let mut power = Vec::with_capacity(signals.len());
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];

    for (kind, series) in signals {
        assert_eq!(series.len(), n, "all signal columns must share a length");
        let mean = series.iter().sum::<f64>() / n as f64;
        for (i, (s, w)) in series.iter().zip(&window).enumerate() {
            buf[i] = Complex64::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        let norm = (n as f64) * (n as f64);
        let col: Vec<f64> = (0..n_bins)
            .map(|k| {
                let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                one_sided * buf[k].norm_sqr() / norm
            })
            .collect();
        kinds.push(kind);
        power.push(col);
    }

    let df = 2.0 * PI / (n as f64 * dtau);
    Ok(Spectrum {
        f_over_f0: (0..n_bins).map(|k| k as f64 * df).collect(),
        power,
        signals: kinds,
    })
}

/// Power spectrum of trajectory-derived signals. The trajectory should be a
/// steady window (transients already discarded).
pub fn power_spectrum(traj: &Trajectory, selector: SignalSelector) -> Result<Spectrum, AnalysisError> {
    let defect = traj.spacing_defect();
    if defect > 1e-9 {
        return Err(AnalysisError::NonUniformSampling(defect));
    }
    let signals = selector
        .kinds()
        .into_iter()
        .map(|kind| (kind, traj.signal(kind)))
        .collect();
    spectrum_of_signals(signals, traj.dtau())
}

/// A detected spectral peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Interpolated frequency in f/f0 units.
    pub f_over_f0: f64,
    /// Power at the peak bin.
    pub power: f64,
    /// Fraction of the signal's global maximum power.
    pub prominence: f64,
}

/// Peaks of one signal, sorted by descending power.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakList(pub Vec<Peak>);

impl PeakList {
    pub fn dominant(&self) -> Option<&Peak> {
        self.0.first()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Default noise floor as a fraction of the column's global maximum.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-6;

/// Local maxima of one spectrum column above the noise floor and the 5%
/// prominence cut, DC excluded, frequency refined by 3-point parabolic
/// interpolation on log power.
pub fn dominant_peaks(spec: &Spectrum, column: usize) -> Result<PeakList, AnalysisError> {
    dominant_peaks_with(spec, column, DEFAULT_NOISE_FLOOR)
}

/// [`dominant_peaks`] with an explicit noise floor (fraction of max power).
pub fn dominant_peaks_with(
    spec: &Spectrum,
    column: usize,
    noise_floor: f64,
) -> Result<PeakList, AnalysisError> {
    let p = spec
        .power
        .get(column)
        .ok_or(AnalysisError::BadSignalColumn(column))?;
    if p.len() < 3 {
        return Err(AnalysisError::EmptySpectrum);
    }
    let global_max = p.iter().cloned().fold(0.0, f64::max);
    if global_max <= 0.0 {
        return Ok(PeakList::default());
    }
    let floor = noise_floor * global_max;
    let bin = spec.bin_width();

    let mut peaks = Vec::new();
    for k in 1..p.len() - 1 {
        if p[k] >= p[k - 1] && p[k] > p[k + 1] && p[k] > floor {
            let prominence = p[k] / global_max;
            if prominence < PEAK_PROMINENCE_MIN {
                continue;
            }
            // Parabolic refinement on log power; falls back to the bin
            // center when a neighbor is identically zero.
            let f = if p[k - 1] > 0.0 && p[k + 1] > 0.0 {
                let l = p[k - 1].ln();
                let c = p[k].ln();
                let r = p[k + 1].ln();
                let denom = l - 2.0 * c + r;
                let shift = if denom.abs() > 1e-300 {
                    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                (k as f64 + shift) * bin
            } else {
                k as f64 * bin
            };
            peaks.push(Peak {
                f_over_f0: f,
                power: p[k],
                prominence,
            });
        }
    }
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    Ok(PeakList(peaks))
}

/// Detected oscillation state of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyncState {
    Independent,
    Unsynchronized,
    Synchronized,
    PartialSync,
    OscillationDeath,
}

impl std::fmt::Display for SyncState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SyncState::Independent => "independent",
            SyncState::Unsynchronized => "unsynchronized",
            SyncState::Synchronized => "synchronized",
            SyncState::PartialSync => "partial_sync",
            SyncState::OscillationDeath => "oscillation_death",
        };
        write!(f, "{s}")
    }
}

/// Classification result with the evidence it was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncClassification {
    pub schema_version: u32,
    pub state: SyncState,
    /// Common frequency for `Synchronized` / `PartialSync`.
    pub sync_frequency: Option<f64>,
    /// Synchronized members (1-based), populated for `PartialSync`.
    pub members: Vec<usize>,
    /// `N` when the member set oscillates at `f_ref / N` of another live
    /// resonator.
    pub subharmonic_order: Option<u32>,
    /// Per-resonator intensity peak lists.
    pub peaks: Vec<PeakList>,
    pub thresholds: ClassifierConfig,
}

impl SyncClassification {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classification serializes")
    }
}

/// Fundamental frequency of one spectrum column: the dominant peak,
/// subdivided by two as long as a genuine spectral line (above
/// `noise_floor` of the column maximum) sits at half the frequency. A deep
/// limit cycle often radiates hardest at its second harmonic, and
/// period-doubled members can bury their subharmonic below the peak-list
/// prominence cut while it is still far above the numerical floor.
pub fn fundamental_frequency(
    spec: &Spectrum,
    column: usize,
    noise_floor: f64,
    tol: f64,
) -> Option<f64> {
    let p = spec.power.get(column)?;
    let peaks = dominant_peaks_with(spec, column, noise_floor).ok()?;
    let mut f = peaks.dominant()?.f_over_f0;
    let global_max = p.iter().cloned().fold(0.0, f64::max);
    if global_max <= 0.0 {
        return None;
    }
    let floor = noise_floor * global_max;
    let bin = spec.bin_width();
    for _ in 0..3 {
        let half = f / 2.0;
        // Stay clear of the DC skirt.
        if half < 4.0 * bin {
            break;
        }
        let halfwidth = tol.max(2.0 * bin);
        let lo = ((half - halfwidth) / bin).floor().max(1.0) as usize;
        let hi = (((half + halfwidth) / bin).ceil() as usize).min(p.len() - 2);
        let Some(k) = (lo..=hi).max_by(|a, b| p[*a].total_cmp(&p[*b])) else {
            break;
        };
        if p[k] < floor || p[k] <= p[lo - 1] || p[k] <= p[hi + 1] {
            break;
        }
        // Refine the line position like the peak detector does.
        f = if p[k - 1] > 0.0 && p[k + 1] > 0.0 {
            let (l, c, r) = (p[k - 1].ln(), p[k].ln(), p[k + 1].ln());
            let denom = l - 2.0 * c + r;
            let shift = if denom.abs() > 1e-300 {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            (k as f64 + shift) * bin
        } else {
            k as f64 * bin
        };
    }
    Some(f)
}

/// Normalized autocorrelation of a series at a (fractional) lag of one
/// period `2 pi / f_over_f0`. Near 1 for a signal periodic at that
/// frequency; small or negative otherwise. Returns 0 when the series is too
/// short to hold two periods or has no variance.
pub fn periodicity(series: &[f64], dtau: f64, f_over_f0: f64) -> f64 {
    let n = series.len();
    if n < 4 || f_over_f0 <= 0.0 || dtau <= 0.0 {
        return 0.0;
    }
    let lag = 2.0 * PI / f_over_f0 / dtau;
    if !(1.0..=(n - 2) as f64).contains(&lag) {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.0;
    }
    let base = lag.floor() as usize;
    let w = lag - base as f64;
    let m = n - base - 1;
    let mut acc = 0.0;
    for i in 0..m {
        let shifted = series[i + base] + w * (series[i + base + 1] - series[i + base]);
        acc += (series[i] - mean) * (shifted - mean);
    }
    acc / (m as f64 * var)
}

fn rel_std(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if mean.abs() > 0.0 {
        std / mean.abs()
    } else if std > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Classify the oscillation state from the intensity spectra and the steady
/// trajectory window they were computed from. `k` is consulted only for its
/// zero-ness (uncoupled circuits report `Independent` rather than
/// `Unsynchronized`).
pub fn classify(
    spectra: &Spectrum,
    traj: &Trajectory,
    k: &CouplingMatrix,
    cfg: &ClassifierConfig,
) -> SyncClassification {
    let columns: Vec<usize> = (0..3)
        .map(|j| {
            spectra
                .signals
                .iter()
                .position(|s| *s == SignalKind::Intensity(j + 1))
                .expect("classification needs the three intensity spectra")
        })
        .collect();
    let peaks: Vec<PeakList> = columns
        .iter()
        .map(|&col| dominant_peaks_with(spectra, col, cfg.noise_floor).unwrap_or_default())
        .collect();
    let tol = cfg.sync_tol_bins * spectra.bin_width();
    let funds: Vec<Option<f64>> = columns
        .iter()
        .map(|&col| fundamental_frequency(spectra, col, cfg.noise_floor, tol))
        .collect();

    let mut base = SyncClassification {
        schema_version: 1,
        state: SyncState::Unsynchronized,
        sync_frequency: None,
        members: Vec::new(),
        subharmonic_order: None,
        peaks: peaks.clone(),
        thresholds: *cfg,
    };

    // Step 1: oscillation death per resonator.
    let dead: Vec<bool> = (1..=3)
        .map(|j| rel_std(&traj.signal(SignalKind::Intensity(j))) < cfg.death_rel_std)
        .collect();
    if dead.iter().all(|d| *d) {
        base.state = SyncState::OscillationDeath;
        return base;
    }
    let live: Vec<usize> = (0..3).filter(|j| !dead[*j]).collect();

    // A lock requires three things per member: the fundamentals agree,
    // every strong secondary peak is a low-order harmonic of the
    // fundamental (one anharmonic rhythm, not a competing one), and the
    // intensity actually repeats after one period (a quasi-periodic beat
    // comb can mimic a harmonic family in the spectrum but fails this
    // time-domain check).
    let clean = |j: usize| -> bool {
        let Some(f0) = funds[j] else {
            return false;
        };
        peaks[j].0.iter().all(|p| {
            p.prominence < cfg.secondary_prominence
                || (1..=8)
                    .any(|n| (p.f_over_f0 - n as f64 * f0).abs() <= tol * n as f64)
        })
    };
    let periodic = |j: usize, f: f64| -> bool {
        let series = traj.signal(SignalKind::Intensity(j + 1));
        periodicity(&series, traj.dtau(), f) >= cfg.periodicity_min
    };
    let agree = |set: &[usize]| -> Option<f64> {
        let freqs: Option<Vec<f64>> = set.iter().map(|&j| funds[j]).collect();
        let freqs = freqs?;
        let lo = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = freqs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > tol || !set.iter().all(|&j| clean(j)) {
            return None;
        }
        let f = freqs.iter().sum::<f64>() / freqs.len() as f64;
        set.iter().all(|&j| periodic(j, f)).then_some(f)
    };

    // Step 2: all live resonators lock together.
    if let Some(f) = agree(&live) {
        base.sync_frequency = Some(f);
        if live.len() == 3 {
            base.state = SyncState::Synchronized;
        } else {
            base.state = SyncState::PartialSync;
            base.members = live.iter().map(|j| j + 1).collect();
            base.subharmonic_order = subharmonic_order(&live, f, &funds, &dead, tol, cfg);
        }
        return base;
    }

    // Step 3: a strict subset of the live resonators locks.
    if live.len() == 3 {
        for subset in [[0usize, 1], [1, 2], [0, 2]] {
            if let Some(f) = agree(&subset) {
                base.state = SyncState::PartialSync;
                base.sync_frequency = Some(f);
                base.members = subset.iter().map(|j| j + 1).collect();
                base.subharmonic_order = subharmonic_order(&subset, f, &funds, &dead, tol, cfg);
                return base;
            }
        }
    }

    // Step 4: nothing locks.
    base.state = if k.is_zero() {
        SyncState::Independent
    } else {
        SyncState::Unsynchronized
    };
    base
}

/// Smallest `N <= subharmonic_max` such that the member frequency equals a
/// live non-member's fundamental divided by `N`, within tolerance.
fn subharmonic_order(
    members: &[usize],
    f_members: f64,
    funds: &[Option<f64>],
    dead: &[bool],
    tol: f64,
    cfg: &ClassifierConfig,
) -> Option<u32> {
    for j in 0..3 {
        if dead[j] || members.contains(&j) {
            continue;
        }
        let Some(f_ref) = funds[j] else { continue };
        for n in 1..=cfg.subharmonic_max {
            if (f_members - f_ref / n as f64).abs() <= tol {
                return Some(n);
            }
        }
    }
    None
}

/// Median spacing of consecutive peaks when they are uniformly spaced within
/// 10%; `None` otherwise or with fewer than 3 peaks.
pub fn sideband_spacing(peaks: &PeakList) -> Option<f64> {
    if peaks.len() < 3 {
        return None;
    }
    let mut freqs: Vec<f64> = peaks.0.iter().map(|p| p.f_over_f0).collect();
    freqs.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = freqs.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    if median <= 0.0 {
        return None;
    }
    if gaps.iter().all(|g| (g - median).abs() <= 0.1 * median) {
        Some(median)
    } else {
        None
    }
}

/// Ordered (x, y) samples of two derived signals, for phase-portrait export.
pub fn lissajous(traj: &Trajectory, pair: (SignalKind, SignalKind)) -> Vec<(f64, f64)> {
    traj.states()
        .iter()
        .map(|s| (pair.0.eval(s), pair.1.eval(s)))
        .collect()
}

/// Stroboscopic closure metric of a Lissajous curve.
///
/// Samples the curve once per period `T = 2 pi / f` (linear interpolation)
/// and returns the largest move between consecutive stroboscopic points,
/// normalized by the curve's extent. Near zero for a closed periodic orbit;
/// order one for drifting quasi-periodic motion.
pub fn closure_gap(traj: &Trajectory, pair: (SignalKind, SignalKind), f_over_f0: f64) -> f64 {
    let pts = lissajous(traj, pair);
    let dtau = traj.dtau();
    if pts.len() < 3 || f_over_f0 <= 0.0 || dtau <= 0.0 {
        return f64::NAN;
    }
    let period = 2.0 * PI / f_over_f0;
    let stride = period / dtau;
    if stride < 1.0 || stride > (pts.len() - 2) as f64 {
        return f64::NAN;
    }

    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        xmin = xmin.min(*x);
        xmax = xmax.max(*x);
        ymin = ymin.min(*y);
        ymax = ymax.max(*y);
    }
    let range = (xmax - xmin).hypot(ymax - ymin);
    if range == 0.0 {
        return 0.0;
    }

    let interp = |pos: f64| -> (f64, f64) {
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[i + 1];
        (x0 + w * (x1 - x0), y0 + w * (y1 - y0))
    };

    let mut max_gap = 0.0f64;
    let mut pos = 0.0;
    let mut prev = interp(0.0);
    loop {
        pos += stride;
        if pos >= (pts.len() - 2) as f64 {
            break;
        }
        let cur = interp(pos);
        let gap = (cur.0 - prev.0).hypot(cur.1 - prev.1);
        max_gap = max_gap.max(gap);
        prev = cur;
    }
    max_gap / range
}
