//! Numerical validation of the common-environment elimination.
//!
//! The microwave modes are coupled to a discretized two-direction
//! transmission line: `n_modes` left movers and `n_modes` right movers with
//! detunings on a uniform grid `[-B, B]` around the carrier. Eliminating the
//! line is supposed to leave on-site damping `2 pi J_j^2 w0` plus dissipative
//! cross couplings `-i 2 pi J_j J_k w0 e^{i |p_j - p_k|}`; this module
//! integrates the *full* linear system (G = 0, drive off, bath in vacuum) and
//! measures how far the reduced description drifts from it.
//!
//! The mode couplings keep the full propagation phase
//! `exp(-i (w0 + nu) x_j / v)` of the interaction Hamiltonian, i.e. both the
//! static position phase `p_j` and the detuning-dependent part
//! `nu * p_j / carrier`. The latter is what carries the directional
//! (retarded) structure of the line; dropping it would symmetrize the cross
//! coupling to `cos` of the phase difference and lose the coherent part
//! entirely. Delays `p_j / carrier` are kept small against `1/gamma_eff`, so
//! the retardation itself stays negligible.

use crate::dynamics::{rhs as circuit_rhs, CircuitState};
use crate::model::{CircuitConfig, CouplingMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BathError {
    #[error("invalid bath parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },
    #[error("dt too coarse for the band: dt * B = {0:.3} > 0.1")]
    StepTooCoarse(f64),
    #[error("parameter mismatch between bath spec and circuit config: {0}")]
    ParameterMismatch(String),
    #[error("full model diverged at tau = {0:.6e}")]
    Diverged(f64),
}

/// Discretized two-direction bath specification.
///
/// `positions` are the accumulated propagation phases `w0 x_j / v` of the
/// three resonators (canonically `(0, theta, theta + phi)`). `carrier` is the
/// carrier frequency `w0` in the simulation's frequency unit; it sets both
/// the coupling normalization `J_j sqrt(carrier * dnu)` and the propagation
/// delays `positions / carrier`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub j_site: [f64; 3],
    pub positions: [f64; 3],
    pub band_halfwidth: f64,
    pub n_modes: usize,
    pub carrier: f64,
}

impl BathSpec {
    /// Default delay scale: a fifth of the band halfwidth. Separations of
    /// order `pi/2` then sit at `B * delay ~ 8`, deep enough into the
    /// retarded regime while keeping `gamma_eff * delay` small.
    pub fn suggested_carrier(band_halfwidth: f64) -> f64 {
        band_halfwidth / 5.0
    }

    pub fn new(
        j_site: [f64; 3],
        positions: [f64; 3],
        band_halfwidth: f64,
        n_modes: usize,
    ) -> Result<Self, BathError> {
        let spec = Self {
            j_site,
            positions,
            band_halfwidth,
            n_modes,
            carrier: Self::suggested_carrier(band_halfwidth),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BathError> {
        let bad = |key, reason: &str| BathError::InvalidParameter {
            key,
            reason: reason.to_string(),
        };
        if self.n_modes < 3 || self.n_modes.is_multiple_of(2) {
            return Err(bad("n_modes", "must be odd and >= 3"));
        }
        if self.band_halfwidth <= 0.0 || self.band_halfwidth.is_nan() {
            return Err(bad("band", "must be > 0"));
        }
        if self.carrier <= 0.0 || self.carrier.is_nan() {
            return Err(bad("carrier", "must be > 0"));
        }
        for j in self.j_site {
            if !(j >= 0.0 && j.is_finite()) {
                return Err(bad("j_site", "entries must be >= 0"));
            }
        }
        for p in self.positions {
            if !p.is_finite() {
                return Err(bad("positions", "entries must be finite"));
            }
        }
        Ok(())
    }

    /// On-site decay rate `2 pi J_j^2 carrier` induced by the line.
    pub fn on_site_rate(&self, j: usize) -> f64 {
        2.0 * PI * self.j_site[j - 1] * self.j_site[j - 1] * self.carrier
    }

    /// Largest on-site rate among coupled resonators.
    pub fn gamma_eff(&self) -> f64 {
        (1..=3).map(|j| self.on_site_rate(j)).fold(0.0, f64::max)
    }

    /// Dissipative-only coupling matrix predicted by the elimination:
    /// `K_jk = -i 2 pi J_j J_k carrier e^{i |p_j - p_k|}`.
    pub fn effective_coupling(&self) -> CouplingMatrix {
        let mut entries = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
            let strength = 2.0 * PI * self.j_site[a] * self.j_site[b] * self.carrier;
            let phase = (self.positions[a] - self.positions[b]).abs();
            let v = -Complex64::i() * strength * Complex64::cis(phase);
            entries[a][b] = v;
            entries[b][a] = v;
        }
        CouplingMatrix::from_entries(entries)
    }
}

/// Per-mode frequencies and complex coupling vectors of the discretized bath.
#[derive(Debug, Clone)]
pub struct DiscreteBath {
    /// Detunings from the carrier, uniform over `[-B, B]`, zero on-grid.
    pub detunings: Vec<f64>,
    pub dnu: f64,
    /// Left-mover coupling of each mode to the three resonators.
    pub coupling_l: Vec<[Complex64; 3]>,
    /// Right-mover couplings (conjugate position phases).
    pub coupling_r: Vec<[Complex64; 3]>,
}

/// Discretize the bath: mode `m` sits at detuning `nu_m` and couples to
/// resonator `j` with amplitude `J_j sqrt(carrier * dnu)` and propagation
/// phase `exp(-i (1 + nu_m / carrier) p_j)` (left movers; right movers take
/// the conjugate phase).
pub fn discretize_bath(spec: &BathSpec) -> DiscreteBath {
    let n = spec.n_modes;
    let b = spec.band_halfwidth;
    let dnu = 2.0 * b / (n - 1) as f64;
    let mut detunings = Vec::with_capacity(n);
    let mut coupling_l = Vec::with_capacity(n);
    let mut coupling_r = Vec::with_capacity(n);
    for m in 0..n {
        let nu = -b + m as f64 * dnu;
        let amp = |j: usize| spec.j_site[j] * (spec.carrier * dnu).sqrt();
        let mut gl = [Complex64::new(0.0, 0.0); 3];
        let mut gr = [Complex64::new(0.0, 0.0); 3];
        for j in 0..3 {
            let phase = (1.0 + nu / spec.carrier) * spec.positions[j];
            gl[j] = amp(j) * Complex64::cis(-phase);
            gr[j] = amp(j) * Complex64::cis(phase);
        }
        detunings.push(nu);
        coupling_l.push(gl);
        coupling_r.push(gr);
    }
    DiscreteBath {
        detunings,
        dnu,
        coupling_l,
        coupling_r,
    }
}

/// Golden-rule on-site rates implied by the discretization: per direction
/// `pi |g(0)|^2 / dnu`, summed over both directions. Should reproduce
/// [`BathSpec::on_site_rate`].
pub fn golden_rule_rates(bath: &DiscreteBath) -> [f64; 3] {
    let m0 = bath.detunings.len() / 2;
    let mut out = [0.0; 3];
    for (j, rate) in out.iter_mut().enumerate() {
        *rate = PI / bath.dnu
            * (bath.coupling_l[m0][j].norm_sqr() + bath.coupling_r[m0][j].norm_sqr());
    }
    out
}

/// Sampled system amplitudes of the full system-plus-bath integration.
#[derive(Debug, Clone)]
pub struct FullTrace {
    pub tau: Vec<f64>,
    pub amps: Vec<[Complex64; 3]>,
    /// Total norm `sum |a|^2 + sum |c|^2` per sample (conserved: the full
    /// model is closed and Hermitian).
    pub norm: Vec<f64>,
}

struct FullSystem {
    bath: DiscreteBath,
    detunings_sys: [f64; 3],
    n: usize,
}

impl FullSystem {
    fn rhs(&self, s: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let i = Complex64::i();
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for m in 0..n {
            let cl = s[3 + m];
            let cr = s[3 + n + m];
            let gl = &self.bath.coupling_l[m];
            let gr = &self.bath.coupling_r[m];
            let nu = self.bath.detunings[m];
            let mut dl = Complex64::new(nu * cl.im, -nu * cl.re); // -i nu cl
            let mut dr = Complex64::new(nu * cr.im, -nu * cr.re);
            for j in 0..3 {
                acc[j] += gl[j] * cl + gr[j] * cr;
                dl -= i * gl[j].conj() * s[j];
                dr -= i * gr[j].conj() * s[j];
            }
            out[3 + m] = dl;
            out[3 + n + m] = dr;
        }
        for j in 0..3 {
            out[j] = i * self.detunings_sys[j] * s[j] - i * acc[j];
        }
    }
}

/// Integrate the full linear model (three system modes plus `2 n_modes` bath
/// amplitudes) with fixed-step RK4 from an empty bath. Returns the system
/// amplitudes sampled every `record_stride` steps.
pub fn simulate_full(
    spec: &BathSpec,
    detunings_sys: [f64; 3],
    horizon: f64,
    dt: f64,
    initial: [Complex64; 3],
    record_stride: usize,
) -> Result<FullTrace, BathError> {
    spec.validate()?;
    if dt * spec.band_halfwidth > 0.1 {
        return Err(BathError::StepTooCoarse(dt * spec.band_halfwidth));
    }
    let sys = FullSystem {
        bath: discretize_bath(spec),
        detunings_sys,
        n: spec.n_modes,
    };
    let dim = 3 + 2 * spec.n_modes;
    let mut y = vec![Complex64::new(0.0, 0.0); dim];
    y[..3].copy_from_slice(&initial);

    let n_steps = (horizon / dt).round() as usize;
    let stride = record_stride.max(1);
    let mut k1 = vec![Complex64::new(0.0, 0.0); dim];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();

    let mut trace = FullTrace {
        tau: Vec::with_capacity(n_steps / stride + 1),
        amps: Vec::with_capacity(n_steps / stride + 1),
        norm: Vec::with_capacity(n_steps / stride + 1),
    };
    let record = |trace: &mut FullTrace, t: f64, y: &[Complex64]| {
        trace.tau.push(t);
        trace.amps.push([y[0], y[1], y[2]]);
        trace.norm.push(y.iter().map(|z| z.norm_sqr()).sum());
    };
    record(&mut trace, 0.0, &y);

    for step in 1..=n_steps {
        sys.rhs(&y, &mut k1);
        for (t, (yv, kv)) in tmp.iter_mut().zip(y.iter().zip(&k1)) {
            *t = yv + 0.5 * dt * kv;
        }
        sys.rhs(&tmp, &mut k2);
        for (t, (yv, kv)) in tmp.iter_mut().zip(y.iter().zip(&k2)) {
            *t = yv + 0.5 * dt * kv;
        }
        sys.rhs(&tmp, &mut k3);
        for (t, (yv, kv)) in tmp.iter_mut().zip(y.iter().zip(&k3)) {
            *t = yv + dt * kv;
        }
        sys.rhs(&tmp, &mut k4);
        let w = dt / 6.0;
        for (idx, yv) in y.iter_mut().enumerate() {
            *yv += w * (k1[idx] + 2.0 * (k2[idx] + k3[idx]) + k4[idx]);
        }
        if step % stride == 0 {
            let t = step as f64 * dt;
            if !y[..3].iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(BathError::Diverged(t));
            }
            record(&mut trace, t, &y);
        }
    }
    Ok(trace)
}

/// How a [`compare_models`] run is carried out.
#[derive(Debug, Clone, Copy)]
pub struct OraclePlan {
    pub horizon: f64,
    pub dt: f64,
    pub initial: [Complex64; 3],
}

impl OraclePlan {
    /// Horizon `5 / gamma_eff`, step `0.05 / B`, excitation on resonator 1.
    pub fn for_spec(spec: &BathSpec) -> Self {
        let gamma_eff = spec.gamma_eff().max(1e-12);
        Self {
            horizon: 5.0 / gamma_eff,
            dt: 0.05 / spec.band_halfwidth,
            initial: [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenRuleCheck {
    pub target: [f64; 3],
    pub measured: [f64; 3],
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSignCheck {
    /// Extracted cross coupling at the base positions (re, im).
    pub base: [f64; 2],
    /// Extracted cross coupling with `theta -> theta + pi`.
    pub flipped: [f64; 2],
    /// `|base + flipped| / |base|`; small when the sign flips cleanly.
    pub residual: f64,
    pub passed: bool,
}

/// Full-vs-effective comparison report, serializable as the oracle JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub n_modes: usize,
    #[serde(rename = "B")]
    pub band_halfwidth: f64,
    pub carrier: f64,
    pub horizon: f64,
    /// Max over the horizon of `max_j |a_j^full - a_j^eff| / max_j |a_j(0)|`.
    pub max_error: f64,
    pub golden_rule_check: GoldenRuleCheck,
    pub phase_sign_check: Option<PhaseSignCheck>,
    pub per_tau_error_csv_path: Option<String>,
    #[serde(skip)]
    pub error_curve: Vec<(f64, f64)>,
}

/// Integrate the full discretized model and the effective reduced model from
/// the same initial amplitudes and report the normalized trajectory
/// discrepancy over the horizon.
///
/// The circuit config must describe exactly the reduced model implied by the
/// bath spec: `gamma` equal to the common on-site rate, no optomechanics, no
/// drive.
pub fn compare_models(
    spec: &BathSpec,
    config: &CircuitConfig,
    plan: &OraclePlan,
) -> Result<OracleReport, BathError> {
    spec.validate()?;
    let mismatch = |msg: String| Err(BathError::ParameterMismatch(msg));
    if config.g0 != 0.0 {
        return mismatch(format!("G must be 0 in the oracle, got {}", config.g0));
    }
    if config.epsilon != 0.0 {
        return mismatch(format!(
            "epsilon must be 0 in the oracle, got {}",
            config.epsilon
        ));
    }
    let active: Vec<usize> = (1..=3).filter(|&j| spec.j_site[j - 1] > 0.0).collect();
    if active.is_empty() {
        return mismatch("no resonator is coupled to the bath".to_string());
    }
    for &j in &active {
        let rate = spec.on_site_rate(j);
        if (rate - config.gamma).abs() > 1e-9 * config.gamma.max(rate) {
            return mismatch(format!(
                "config gamma = {} but bath induces {} on resonator {}",
                config.gamma, rate, j
            ));
        }
    }

    let detunings_sys = [config.delta, 0.0, -config.delta];
    let full = simulate_full(spec, detunings_sys, plan.horizon, plan.dt, plan.initial, 1)?;

    // Effective model on the identical time grid, same RK4 step.
    let k_eff = spec.effective_coupling();
    let mut y = CircuitState::ZERO;
    y.a = plan.initial;
    let n_steps = (plan.horizon / plan.dt).round() as usize;
    let scale = plan
        .initial
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1e-300);

    let mut error_curve = Vec::with_capacity(n_steps + 1);
    let mut max_error = 0.0f64;
    let mut push_err = |t: f64, y: &CircuitState, full_amp: &[Complex64; 3]| {
        let e = (0..3)
            .map(|j| (full_amp[j] - y.a[j]).norm())
            .fold(0.0, f64::max)
            / scale;
        max_error = max_error.max(e);
        error_curve.push((t, e));
    };
    push_err(0.0, &y, &full.amps[0]);
    for step in 1..=n_steps {
        y = rk4_state(&y, plan.dt, config, &k_eff);
        push_err(step as f64 * plan.dt, &y, &full.amps[step]);
    }

    let bath = discretize_bath(spec);
    let measured = golden_rule_rates(&bath);
    let mut target = [0.0; 3];
    let mut max_rel = 0.0f64;
    for j in 0..3 {
        target[j] = spec.on_site_rate(j + 1);
        if target[j] > 0.0 {
            max_rel = max_rel.max((measured[j] - target[j]).abs() / target[j]);
        }
    }

    Ok(OracleReport {
        schema_version: 1,
        n_modes: spec.n_modes,
        band_halfwidth: spec.band_halfwidth,
        carrier: spec.carrier,
        horizon: plan.horizon,
        max_error,
        golden_rule_check: GoldenRuleCheck {
            target,
            measured,
            max_rel_err: max_rel,
        },
        phase_sign_check: None,
        per_tau_error_csv_path: None,
        error_curve,
    })
}

fn rk4_state(
    y: &CircuitState,
    dt: f64,
    config: &CircuitConfig,
    k: &CouplingMatrix,
) -> CircuitState {
    let add = |y: &CircuitState, h: f64, d: &CircuitState| {
        let mut out = *y;
        for j in 0..3 {
            out.a[j] += h * d.a[j];
            out.b[j] += h * d.b[j];
        }
        out
    };
    let k1 = circuit_rhs(y, config, k);
    let k2 = circuit_rhs(&add(y, 0.5 * dt, &k1), config, k);
    let k3 = circuit_rhs(&add(y, 0.5 * dt, &k2), config, k);
    let k4 = circuit_rhs(&add(y, dt, &k3), config, k);
    let mut out = *y;
    let w = dt / 6.0;
    for j in 0..3 {
        out.a[j] += w * (k1.a[j] + 2.0 * (k2.a[j] + k3.a[j]) + k4.a[j]);
        out.b[j] += w * (k1.b[j] + 2.0 * (k2.b[j] + k3.b[j]) + k4.b[j]);
    }
    out
}

/// Extract the effective cross coupling `L_21` (the coefficient of `-a_1` in
/// `da_2/dtau`, on-site and detuning parts removed) from a short full-model
/// run with resonator 1 excited. The fit averages over
/// `[fit_at, fit_at + fit_width]`, which must lie beyond the propagation
/// delay `|p_2 - p_1| / carrier` plus the bath correlation time `~1/B`.
pub fn extract_cross_coupling(
    spec: &BathSpec,
    detunings_sys: [f64; 3],
    fit_at: f64,
    fit_width: f64,
) -> Result<Complex64, BathError> {
    let dt = 0.05 / spec.band_halfwidth;
    let horizon = fit_at + fit_width + 2.0 * dt;
    let initial = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
    ];
    let trace = simulate_full(spec, detunings_sys, horizon, dt, initial, 1)?;

    let gamma2 = spec.on_site_rate(2);
    let own = Complex64::new(-gamma2, detunings_sys[1]);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for i in 1..trace.tau.len() - 1 {
        let t = trace.tau[i];
        if t < fit_at || t > fit_at + fit_width {
            continue;
        }
        let da2 = (trace.amps[i + 1][1] - trace.amps[i - 1][1]) / (2.0 * dt);
        let a1 = trace.amps[i][0];
        if a1.norm() < 1e-12 {
            continue;
        }
        acc += -(da2 - own * trace.amps[i][1]) / a1;
        count += 1;
    }
    if count == 0 {
        return Err(BathError::ParameterMismatch(
            "empty fit window in extract_cross_coupling".to_string(),
        ));
    }
    Ok(acc / count as f64)
}

/// Run the `theta -> theta + pi` sign-flip check on the 1-2 cross coupling.
pub fn phase_sign_check(spec: &BathSpec, detunings_sys: [f64; 3]) -> Result<PhaseSignCheck, BathError> {
    let delay = ((spec.positions[1] - spec.positions[0]) / spec.carrier).abs();
    let settle = 20.0 / spec.band_halfwidth;
    let fit_at = delay + settle;
    let fit_width = 10.0 / spec.band_halfwidth;

    let base = extract_cross_coupling(spec, detunings_sys, fit_at, fit_width)?;

    let mut flipped_spec = *spec;
    flipped_spec.positions[1] += PI;
    flipped_spec.positions[2] += PI;
    let delay_f = ((flipped_spec.positions[1] - flipped_spec.positions[0]) / spec.carrier).abs();
    let flipped =
        extract_cross_coupling(&flipped_spec, detunings_sys, delay_f + settle, fit_width)?;

    let residual = (base + flipped).norm() / base.norm().max(1e-300);
    Ok(PhaseSignCheck {
        base: [base.re, base.im],
        flipped: [flipped.re, flipped.im],
        residual,
        passed: residual < 0.25 && base.norm() > 0.0,
    })
}
