//! Mean-field equations of motion and their time integration.
//!
//! State: three microwave amplitudes `a_j` (drive rotating frame) and three
//! mechanical amplitudes `b_j` (lab frame), all complex. In dimensionless
//! time `tau`:
//!
//! ```text
//! da_j/dtau = [ i d_j - gamma + i G (b_j + b_j*) ] a_j + epsilon - i sum_k K_jk a_k
//! db_j/dtau = [ -i (1 + s_j Delta) - Gamma ] b_j + i G |a_j|^2
//! ```
//!
//! with `d = (+delta, 0, -delta)` and `s = (-1, 0, +1)`. The default solver
//! is classical fixed-step RK4 for reproducibility; an embedded
//! Dormand-Prince 4(5) stepper is available behind [`SimPlan::adaptive`].

use crate::model::{CircuitConfig, CouplingMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Minimum number of recorded samples left after transient discard; anything
/// shorter has too little spectral resolution to analyze.
pub const MIN_WINDOW_SAMPLES: usize = 4096;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid plan `{key}`: {reason}")]
    InvalidPlan { key: &'static str, reason: String },
    #[error("state diverged at tau = {tau:.6e} (max |a| = {max_abs:.3e}, bound {bound:.3e})")]
    Diverged { tau: f64, max_abs: f64, bound: f64 },
    #[error("adaptive step size underflow at tau = {tau:.6e}")]
    StepUnderflow { tau: f64 },
    #[error("steady window too short: {kept} samples left, need >= {min}")]
    WindowTooShort { kept: usize, min: usize },
    #[error("integration interrupted at tau = {tau:.6e}")]
    Interrupted { tau: f64 },
}

/// Instantaneous amplitudes of the six modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitState {
    pub a: [Complex64; 3],
    pub b: [Complex64; 3],
}

impl CircuitState {
    pub const ZERO: CircuitState = CircuitState {
        a: [Complex64::new(0.0, 0.0); 3],
        b: [Complex64::new(0.0, 0.0); 3],
    };

    pub fn is_finite(&self) -> bool {
        self.a
            .iter()
            .chain(self.b.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Microwave intensity |a_j|^2, 1-based index.
    pub fn intensity(&self, j: usize) -> f64 {
        self.a[j - 1].norm_sqr()
    }

    /// Mechanical displacement q_j = Re(b_j), 1-based index.
    pub fn displacement(&self, j: usize) -> f64 {
        self.b[j - 1].re
    }

    fn max_amplitude(&self) -> f64 {
        self.a
            .iter()
            .chain(self.b.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// A real-valued signal derived from the trajectory, 1-based resonator index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalKind {
    /// |a_j|^2
    Intensity(usize),
    /// q_j = Re(b_j)
    Displacement(usize),
}

impl SignalKind {
    pub fn label(&self) -> String {
        match self {
            SignalKind::Intensity(j) => format!("I{j}"),
            SignalKind::Displacement(j) => format!("q{j}"),
        }
    }

    pub fn eval(&self, s: &CircuitState) -> f64 {
        match self {
            SignalKind::Intensity(j) => s.intensity(*j),
            SignalKind::Displacement(j) => s.displacement(*j),
        }
    }
}

/// Integration plan: horizon, step, sampling and transient handling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    /// Total integration time in tau units.
    pub t_total: f64,
    /// Fixed step (or initial step in adaptive mode).
    pub dt: f64,
    /// Record every `sample_stride`-th step.
    pub sample_stride: usize,
    /// Fraction of samples dropped as transient by downstream analysis.
    pub discard_fraction: f64,
    /// Use the embedded Dormand-Prince 4(5) stepper instead of fixed RK4.
    pub adaptive: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial state (defaults to all zeros; the drive bootstraps the cycle).
    pub initial: CircuitState,
    /// Seed for an optional small random kick of magnitude `1e-6 epsilon/gamma`
    /// on the initial state, for basin exploration.
    pub perturb_seed: Option<u64>,
}

impl Default for SimPlan {
    fn default() -> Self {
        Self {
            t_total: 2.0e4,
            dt: 1.0e-3,
            sample_stride: 50,
            discard_fraction: 0.5,
            adaptive: false,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            initial: CircuitState::ZERO,
            perturb_seed: None,
        }
    }
}

impl SimPlan {
    /// Number of integration steps.
    pub fn n_steps(&self) -> usize {
        (self.t_total / self.dt).round() as usize
    }

    /// Number of recorded samples, including the one at tau = 0.
    pub fn n_samples(&self) -> usize {
        self.n_steps() / self.sample_stride + 1
    }

    /// Sample spacing in tau.
    pub fn sample_dtau(&self) -> f64 {
        self.dt * self.sample_stride as f64
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |key, reason: &str| DynamicsError::InvalidPlan {
            key,
            reason: reason.to_string(),
        };
        if !(self.t_total > 0.0 && self.t_total.is_finite()) {
            return Err(bad("t_total", "must be > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", "must be > 0"));
        }
        if self.sample_stride == 0 {
            return Err(bad("sample_stride", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.discard_fraction) {
            return Err(bad("discard_fraction", "must be in [0, 1)"));
        }
        if self.adaptive && !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(bad("rel_tol", "adaptive tolerances must be > 0"));
        }
        let n = self.n_samples();
        let kept = n - (n as f64 * self.discard_fraction).floor() as usize;
        if kept < MIN_WINDOW_SAMPLES {
            return Err(bad(
                "t_total",
                &format!(
                    "only {kept} samples would survive the transient discard, \
                     need >= {MIN_WINDOW_SAMPLES}"
                ),
            ));
        }
        if !self.initial.is_finite() {
            return Err(bad("initial", "must be finite"));
        }
        Ok(())
    }

    fn initial_state(&self, config: &CircuitConfig) -> CircuitState {
        let mut s = self.initial;
        if let Some(seed) = self.perturb_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mag = 1e-6 * config.epsilon / config.gamma;
            let mut kick = || {
                Complex64::new(
                    mag * rng.gen_range(-1.0..1.0),
                    mag * rng.gen_range(-1.0..1.0),
                )
            };
            for z in s.a.iter_mut().chain(s.b.iter_mut()) {
                *z += kick();
            }
        }
        s
    }
}

/// Right-hand side of the equations of motion.
#[inline]
pub fn rhs(s: &CircuitState, config: &CircuitConfig, k: &CouplingMatrix) -> CircuitState {
    let i = Complex64::i();
    let eps = Complex64::new(config.epsilon, 0.0);
    let mut out = CircuitState::ZERO;
    for j in 0..3 {
        let spring = 2.0 * config.g0 * s.b[j].re; // G (b + b*) is real
        let diag = Complex64::new(-config.gamma, config.mw_detuning(j + 1) + spring);
        let mut coupling = Complex64::new(0.0, 0.0);
        for m in 0..3 {
            if m != j {
                coupling += k.entry(j + 1, m + 1) * s.a[m];
            }
        }
        out.a[j] = diag * s.a[j] + eps - i * coupling;
        out.b[j] = Complex64::new(-config.gamma_m, -config.mech_frequency(j + 1)) * s.b[j]
            + i * config.g0 * s.a[j].norm_sqr();
    }
    out
}

#[inline]
fn axpy(y: &CircuitState, h: f64, d: &CircuitState) -> CircuitState {
    let mut out = *y;
    for j in 0..3 {
        out.a[j] += h * d.a[j];
        out.b[j] += h * d.b[j];
    }
    out
}

#[inline]
fn rk4_step(
    y: &CircuitState,
    dt: f64,
    config: &CircuitConfig,
    k: &CouplingMatrix,
) -> CircuitState {
    let k1 = rhs(y, config, k);
    let k2 = rhs(&axpy(y, 0.5 * dt, &k1), config, k);
    let k3 = rhs(&axpy(y, 0.5 * dt, &k2), config, k);
    let k4 = rhs(&axpy(y, dt, &k3), config, k);
    let mut out = *y;
    let w = dt / 6.0;
    for j in 0..3 {
        out.a[j] += w * (k1.a[j] + 2.0 * (k2.a[j] + k3.a[j]) + k4.a[j]);
        out.b[j] += w * (k1.b[j] + 2.0 * (k2.b[j] + k3.b[j]) + k4.b[j]);
    }
    out
}

/// Uniformly sampled time series of the six mode amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    tau: Vec<f64>,
    states: Vec<CircuitState>,
}

impl Trajectory {
    pub fn new(tau: Vec<f64>, states: Vec<CircuitState>) -> Self {
        assert_eq!(tau.len(), states.len());
        Self { tau, states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn states(&self) -> &[CircuitState] {
        &self.states
    }

    /// Sample spacing.
    pub fn dtau(&self) -> f64 {
        if self.tau.len() < 2 {
            0.0
        } else {
            (self.tau[self.tau.len() - 1] - self.tau[0]) / (self.tau.len() - 1) as f64
        }
    }

    /// Largest relative deviation from uniform spacing.
    pub fn spacing_defect(&self) -> f64 {
        let d = self.dtau();
        if d == 0.0 {
            return 0.0;
        }
        self.tau
            .windows(2)
            .map(|w| ((w[1] - w[0]) - d).abs() / d)
            .fold(0.0, f64::max)
    }

    pub fn signal(&self, kind: SignalKind) -> Vec<f64> {
        self.states.iter().map(|s| kind.eval(s)).collect()
    }

    /// Trajectory CSV: one row per sample, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "tau,re_a1,im_a1,re_a2,im_a2,re_a3,im_a3,\
             re_b1,im_b1,re_b2,im_b2,re_b3,im_b3,I1,I2,I3,q1,q2,q3"
        )?;
        for (t, s) in self.tau.iter().zip(&self.states) {
            write!(w, "{t:.16e}")?;
            for z in s.a.iter().chain(s.b.iter()) {
                write!(w, ",{:.16e},{:.16e}", z.re, z.im)?;
            }
            for j in 1..=3 {
                write!(w, ",{:.16e}", s.intensity(j))?;
            }
            for j in 1..=3 {
                write!(w, ",{:.16e}", s.displacement(j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Trailing steady-state window after dropping `discard_fraction` of the
/// samples as transient. Spacing is preserved.
pub fn steady_window(traj: &Trajectory, discard_fraction: f64) -> Result<Trajectory, DynamicsError> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(DynamicsError::InvalidPlan {
            key: "discard_fraction",
            reason: "must be in [0, 1)".to_string(),
        });
    }
    let n = traj.len();
    let drop = (n as f64 * discard_fraction).floor() as usize;
    let kept = n - drop;
    if kept < MIN_WINDOW_SAMPLES {
        return Err(DynamicsError::WindowTooShort {
            kept,
            min: MIN_WINDOW_SAMPLES,
        });
    }
    Ok(Trajectory::new(
        traj.tau[drop..].to_vec(),
        traj.states[drop..].to_vec(),
    ))
}

/// Integrate the equations of motion. Deterministic: identical inputs produce
/// bit-identical trajectories.
pub fn integrate(
    plan: &SimPlan,
    config: &CircuitConfig,
    k: &CouplingMatrix,
) -> Result<Trajectory, DynamicsError> {
    integrate_interruptible(plan, config, k, &|| false)
}

/// Like [`integrate`] but polls `interrupt` at every sample point; a `true`
/// return aborts with [`DynamicsError::Interrupted`]. Used by sweep drivers
/// to enforce per-point wall-clock budgets.
pub fn integrate_interruptible(
    plan: &SimPlan,
    config: &CircuitConfig,
    k: &CouplingMatrix,
    interrupt: &dyn Fn() -> bool,
) -> Result<Trajectory, DynamicsError> {
    plan.validate()?;
    let y0 = plan.initial_state(config);
    let bound = divergence_bound(config, &y0);

    if plan.adaptive {
        integrate_adaptive(plan, config, k, y0, bound, interrupt)
    } else {
        integrate_fixed(plan, config, k, y0, bound, interrupt)
    }
}

fn divergence_bound(config: &CircuitConfig, y0: &CircuitState) -> f64 {
    1e6 * (config.epsilon / config.gamma)
        .max(y0.max_amplitude())
        .max(1.0)
}

fn check_sample(
    y: &CircuitState,
    tau: f64,
    bound: f64,
    interrupt: &dyn Fn() -> bool,
) -> Result<(), DynamicsError> {
    if !y.is_finite() || y.max_amplitude() > bound {
        return Err(DynamicsError::Diverged {
            tau,
            max_abs: y.max_amplitude(),
            bound,
        });
    }
    if interrupt() {
        return Err(DynamicsError::Interrupted { tau });
    }
    Ok(())
}

fn integrate_fixed(
    plan: &SimPlan,
    config: &CircuitConfig,
    k: &CouplingMatrix,
    y0: CircuitState,
    bound: f64,
    interrupt: &dyn Fn() -> bool,
) -> Result<Trajectory, DynamicsError> {
    let n_steps = plan.n_steps();
    let stride = plan.sample_stride;
    let dt = plan.dt;
    let n_samples = plan.n_samples();

    let mut tau = Vec::with_capacity(n_samples);
    let mut states = Vec::with_capacity(n_samples);
    let mut y = y0;
    tau.push(0.0);
    states.push(y);

    for step in 1..=n_steps {
        y = rk4_step(&y, dt, config, k);
        if step % stride == 0 {
            let t = step as f64 * dt;
            check_sample(&y, t, bound, interrupt)?;
            tau.push(t);
            states.push(y);
        }
    }
    Ok(Trajectory::new(tau, states))
}

// Dormand-Prince 4(5) Butcher tableau (stage times are irrelevant: the
// system is autonomous).
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dp45_step(
    y: &CircuitState,
    h: f64,
    config: &CircuitConfig,
    k: &CouplingMatrix,
    rel: f64,
    abs: f64,
) -> (CircuitState, f64) {
    let mut ks = [CircuitState::ZERO; 7];
    ks[0] = rhs(y, config, k);
    for stage in 0..6 {
        let mut yi = *y;
        for (m, coeff) in DP_A[stage].iter().enumerate().take(stage + 1) {
            if *coeff != 0.0 {
                yi = axpy(&yi, h * coeff, &ks[m]);
            }
        }
        ks[stage + 1] = rhs(&yi, config, k);
    }
    let mut y5 = *y;
    let mut y4 = *y;
    for (m, kst) in ks.iter().enumerate() {
        if DP_B5[m] != 0.0 {
            y5 = axpy(&y5, h * DP_B5[m], kst);
        }
        if DP_B4[m] != 0.0 {
            y4 = axpy(&y4, h * DP_B4[m], kst);
        }
    }
    // Weighted RMS error over all 12 real components.
    let mut err = 0.0f64;
    let mut n = 0usize;
    for j in 0..3 {
        for (v5, v4, v0) in [
            (y5.a[j], y4.a[j], y.a[j]),
            (y5.b[j], y4.b[j], y.b[j]),
        ] {
            for (e, y0c, y5c) in [
                (v5.re - v4.re, v0.re, v5.re),
                (v5.im - v4.im, v0.im, v5.im),
            ] {
                let scale = abs + rel * y0c.abs().max(y5c.abs());
                err += (e / scale).powi(2);
                n += 1;
            }
        }
    }
    (y5, (err / n as f64).sqrt())
}

fn integrate_adaptive(
    plan: &SimPlan,
    config: &CircuitConfig,
    k: &CouplingMatrix,
    y0: CircuitState,
    bound: f64,
    interrupt: &dyn Fn() -> bool,
) -> Result<Trajectory, DynamicsError> {
    let spacing = plan.sample_dtau();
    let n_samples = plan.n_samples();
    let h_min = 1e-14 * plan.t_total;

    let mut tau = Vec::with_capacity(n_samples);
    let mut states = Vec::with_capacity(n_samples);
    let mut y = y0;
    tau.push(0.0);
    states.push(y);

    let mut h = plan.dt.min(spacing);
    for sample in 1..n_samples {
        let t_target = sample as f64 * spacing;
        let mut t = tau[sample - 1];
        while t < t_target - 1e-12 * spacing {
            let step = h.min(t_target - t);
            let (y_new, err) = dp45_step(&y, step, config, k, plan.rel_tol, plan.abs_tol);
            if err <= 1.0 {
                y = y_new;
                t += step;
                if !y.is_finite() {
                    return Err(DynamicsError::Diverged {
                        tau: t,
                        max_abs: f64::INFINITY,
                        bound,
                    });
                }
            }
            let factor = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (step * factor).max(h_min);
            if h <= h_min && err > 1.0 {
                return Err(DynamicsError::StepUnderflow { tau: t });
            }
        }
        check_sample(&y, t_target, bound, interrupt)?;
        tau.push(t_target);
        states.push(y);
    }
    Ok(Trajectory::new(tau, states))
}
