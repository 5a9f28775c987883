//! Circuit parameters and the effective 3x3 inter-resonator coupling matrix.
//!
//! Three microwave optomechanical resonators talk to each other through two
//! channels: coherent couplers of strength `g_i e^{i phi_i}` and a shared
//! transmission-line environment that, once eliminated, contributes
//! dissipative terms `-i J e^{i theta}`. Both land in one complex matrix `K`
//! whose row index is the receiving mode. Everything here is dimensionless:
//! rates in units of the reference mechanical frequency, time in `tau`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },
    #[error("invalid mode pair ({0}, {1}); expected (1,2), (2,3) or (3,1)")]
    InvalidPair(usize, usize),
}

fn require(ok: bool, key: &'static str, reason: &str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            key,
            reason: reason.to_string(),
        })
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Dimensionless physical parameters of the three-resonator circuit.
///
/// Resonator microwave detunings are `(-delta, 0, +delta)` in the drive
/// rotating frame; mechanical frequencies are `(1 - delta_m, 1, 1 + delta_m)`.
/// `gamma` is the *total* microwave amplitude damping (intrinsic plus the
/// on-site part induced by the common environment, already summed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    /// Microwave detuning delta.
    pub delta: f64,
    /// Mechanical detuning Delta.
    #[serde(rename = "Delta")]
    pub delta_m: f64,
    /// Single-photon optomechanical coupling G (common to all resonators).
    #[serde(rename = "G")]
    pub g0: f64,
    /// Drive amplitude epsilon (same real drive on all three microwave modes).
    pub epsilon: f64,
    /// Total microwave damping gamma.
    pub gamma: f64,
    /// Mechanical damping Gamma.
    #[serde(rename = "Gamma")]
    pub gamma_m: f64,
}

impl CircuitConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        require(self.gamma > 0.0, "gamma", "must be > 0")?;
        require(self.gamma_m > 0.0, "Gamma", "must be > 0")?;
        require(self.g0 >= 0.0, "G", "must be >= 0")?;
        require(self.epsilon >= 0.0, "epsilon", "must be >= 0")?;
        require(
            self.delta_m < 1.0,
            "Delta",
            "must be < 1 (mechanical frequencies stay positive)",
        )?;
        for (key, v) in [
            ("delta", self.delta),
            ("Delta", self.delta_m),
            ("G", self.g0),
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("Gamma", self.gamma_m),
        ] {
            require(v.is_finite(), key, "must be finite")?;
        }
        Ok(())
    }

    /// Microwave detuning of resonator `j` (1-based): `(+delta, 0, -delta)`.
    pub fn mw_detuning(&self, j: usize) -> f64 {
        match j {
            1 => self.delta,
            2 => 0.0,
            3 => -self.delta,
            _ => panic!("resonator index out of range: {j}"),
        }
    }

    /// Mechanical frequency of resonator `j` (1-based): `1 + s_j * delta_m`.
    pub fn mech_frequency(&self, j: usize) -> f64 {
        match j {
            1 => 1.0 - self.delta_m,
            2 => 1.0,
            3 => 1.0 + self.delta_m,
            _ => panic!("resonator index out of range: {j}"),
        }
    }
}

impl Default for CircuitConfig {
    /// The baseline parameter set used throughout the study.
    fn default() -> Self {
        Self {
            delta: 0.05,
            delta_m: 5e-3,
            g0: 4e-5,
            epsilon: 800.0,
            gamma: 0.1,
            gamma_m: 8e-5,
        }
    }
}

/// Common-environment coupling: pair strength `J` and propagation phases.
///
/// `theta` is the accumulated phase between resonators 1 and 2, `phi` between
/// 2 and 3. Angles are stored wrapped into `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvCoupling {
    #[serde(rename = "J")]
    pub j: f64,
    pub theta: f64,
    pub phi: f64,
}

impl EnvCoupling {
    pub fn new(j: f64, theta: f64, phi: f64) -> Result<Self, ModelError> {
        let env = Self {
            j,
            theta: wrap_angle(theta),
            phi: wrap_angle(phi),
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        require(self.j >= 0.0, "J", "must be >= 0")?;
        require(self.j.is_finite(), "J", "must be finite")?;
        require(self.theta.is_finite(), "theta", "must be finite")?;
        require(self.phi.is_finite(), "phi", "must be finite")
    }

    pub const ZERO: EnvCoupling = EnvCoupling {
        j: 0.0,
        theta: 0.0,
        phi: 0.0,
    };
}

/// Coherent coupler strengths `g_1, g_2, g_3` and phases `phi_1, phi_2, phi_3`.
///
/// `g_1` links modes 1-2, `g_2` links 2-3, `g_3` links 3-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentCoupling {
    pub g: [f64; 3],
    pub phase: [f64; 3],
}

impl CoherentCoupling {
    pub fn new(g: [f64; 3], phase: [f64; 3]) -> Result<Self, ModelError> {
        let coh = Self {
            g,
            phase: [
                wrap_angle(phase[0]),
                wrap_angle(phase[1]),
                wrap_angle(phase[2]),
            ],
        };
        coh.validate()?;
        Ok(coh)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, key) in [(0, "g1"), (1, "g2"), (2, "g3")] {
            require(self.g[i] >= 0.0 && self.g[i].is_finite(), key, "must be >= 0")?;
        }
        for (i, key) in [(0, "phi1"), (1, "phi2"), (2, "phi3")] {
            require(self.phase[i].is_finite(), key, "must be finite")?;
        }
        Ok(())
    }

    pub const ZERO: CoherentCoupling = CoherentCoupling {
        g: [0.0; 3],
        phase: [0.0; 3],
    };
}

/// 3x3 complex microwave coupling matrix.
///
/// Row index = receiving mode, column index = source mode; the diagonal is
/// identically zero (on-site damping lives in [`CircuitConfig::gamma`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    entries: [[Complex64; 3]; 3],
}

impl CouplingMatrix {
    pub const ZERO: CouplingMatrix = CouplingMatrix {
        entries: [[Complex64::new(0.0, 0.0); 3]; 3],
    };

    /// Build from raw entries; the diagonal is forced to zero.
    pub fn from_entries(mut entries: [[Complex64; 3]; 3]) -> Self {
        for (r, row) in entries.iter_mut().enumerate() {
            row[r] = Complex64::new(0.0, 0.0);
        }
        Self { entries }
    }

    /// Entry `K_rc` with 1-based resonator indices.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        assert!((1..=3).contains(&row) && (1..=3).contains(&col));
        self.entries[row - 1][col - 1]
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() < 1e-15
    }

    /// Max entrywise |K - K^dagger|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                d = d.max((self.entries[r][c] - self.entries[c][r].conj()).norm());
            }
        }
        d
    }

    /// Max entrywise |K - K^T|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                d = d.max((self.entries[r][c] - self.entries[c][r]).norm());
            }
        }
        d
    }

    /// Max entrywise difference to another matrix.
    pub fn max_diff(&self, other: &CouplingMatrix) -> f64 {
        let mut d = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                d = d.max((self.entries[r][c] - other.entries[r][c]).norm());
            }
        }
        d
    }
}

/// Effective coupling matrix combining coherent couplers with the
/// environment-induced dissipative terms.
///
/// `K_12 = g1 e^{i phi1} - i J e^{i theta}`, `K_21 = g1 e^{-i phi1} - i J e^{i theta}`,
/// and cyclically for the 2-3 (phase `phi`) and 3-1 (phase `theta + phi`) pairs.
pub fn build_coupling_matrix(env: &EnvCoupling, coh: &CoherentCoupling) -> CouplingMatrix {
    let i = Complex64::i();
    let d12 = i * env.j * Complex64::cis(env.theta);
    let d23 = i * env.j * Complex64::cis(env.phi);
    let d31 = i * env.j * Complex64::cis(env.theta + env.phi);
    let c1 = coh.g[0] * Complex64::cis(coh.phase[0]);
    let c2 = coh.g[1] * Complex64::cis(coh.phase[1]);
    let c3 = coh.g[2] * Complex64::cis(coh.phase[2]);

    let zero = Complex64::new(0.0, 0.0);
    CouplingMatrix::from_entries([
        [zero, c1 - d12, c3.conj() - d31],
        [c1.conj() - d12, zero, c2 - d23],
        [c3 - d31, c2.conj() - d23, zero],
    ])
}

/// Circuit where resonator 3 drives the others but receives no back-action.
///
/// Substitutes `phi3 = phi + theta + pi/2, g3 = J, phi2 = -phi - pi/2, g2 = J`,
/// leaving `K_31 = K_32 = 0`, `K_13 = -2iJ cos(theta + phi)`, `K_23 = -2iJ cos phi`.
pub fn output_port_circuit(env: &EnvCoupling, g1: f64, phi1: f64) -> CouplingMatrix {
    let coh = CoherentCoupling {
        g: [g1, env.j, env.j],
        phase: [phi1, -env.phi - 0.5 * PI, env.phi + env.theta + 0.5 * PI],
    };
    build_coupling_matrix(env, &coh)
}

/// Circuit where resonator 2 is driven by the others but feeds nothing back.
///
/// Substitutes `phi1 = theta + pi/2, g1 = J, phi2 = -phi - pi/2, g2 = J`,
/// leaving `K_12 = K_32 = 0`, `K_21 = -2iJ cos theta`, `K_23 = -2iJ cos phi`.
pub fn input_port_circuit(env: &EnvCoupling, g3: f64, phi3: f64) -> CouplingMatrix {
    let coh = CoherentCoupling {
        g: [env.j, env.j, g3],
        phase: [env.theta + 0.5 * PI, -env.phi - 0.5 * PI, phi3],
    };
    build_coupling_matrix(env, &coh)
}

/// Fully unidirectional ring: only `K_13`, `K_21`, `K_23` survive.
pub fn unidirectional_circuit(env: &EnvCoupling) -> CouplingMatrix {
    let coh = CoherentCoupling {
        g: [env.j, env.j, env.j],
        phase: [
            env.theta + 0.5 * PI,
            -env.phi - 0.5 * PI,
            env.phi + env.theta + 0.5 * PI,
        ],
    };
    build_coupling_matrix(env, &coh)
}

/// Named circuit topologies selectable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CircuitPreset {
    /// Free choice of all couplings.
    #[default]
    General,
    /// Generic nonreciprocal circuit; alias of `general` (the constraints are
    /// inequalities, not a construction).
    Fig4a,
    /// Output-port circuit (resonator 3 unaffected by the others).
    Fig4b,
    /// Input-port circuit (resonator 2 affects nothing).
    Fig4c,
    /// Fully unidirectional circuit.
    Fig4d,
}

impl CircuitPreset {
    pub fn as_key(self) -> &'static str {
        match self {
            CircuitPreset::General => "general",
            CircuitPreset::Fig4a => "fig4a",
            CircuitPreset::Fig4b => "fig4b",
            CircuitPreset::Fig4c => "fig4c",
            CircuitPreset::Fig4d => "fig4d",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "general" => Ok(CircuitPreset::General),
            "fig4a" => Ok(CircuitPreset::Fig4a),
            "fig4b" => Ok(CircuitPreset::Fig4b),
            "fig4c" => Ok(CircuitPreset::Fig4c),
            "fig4d" => Ok(CircuitPreset::Fig4d),
            other => Err(ModelError::InvalidParameter {
                key: "preset",
                reason: format!("unknown preset `{other}`"),
            }),
        }
    }
}

/// Build the coupling matrix for a preset. `Fig4b` takes its free coupler
/// from `(g1, phi1)`, `Fig4c` from `(g3, phi3)`; `Fig4d` ignores `coh`.
pub fn preset_matrix(
    preset: CircuitPreset,
    env: &EnvCoupling,
    coh: &CoherentCoupling,
) -> CouplingMatrix {
    match preset {
        CircuitPreset::General | CircuitPreset::Fig4a => build_coupling_matrix(env, coh),
        CircuitPreset::Fig4b => output_port_circuit(env, coh.g[0], coh.phase[0]),
        CircuitPreset::Fig4c => input_port_circuit(env, coh.g[2], coh.phase[2]),
        CircuitPreset::Fig4d => unidirectional_circuit(env),
    }
}

/// Directionality classification of one coupling pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReciprocityKind {
    Reciprocal,
    Nonreciprocal,
    Unidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonreciprocity {
    /// |K| for the forward direction of the pair (first -> second receiver).
    pub forward: f64,
    /// |K| for the reverse direction.
    pub backward: f64,
    pub kind: ReciprocityKind,
}

const UNIDIRECTIONAL_EPS: f64 = 1e-12;

/// Forward/backward coupling magnitudes for an ordered pair.
///
/// For pair `(j, k)` the forward magnitude is `|K_jk|` (the coefficient of
/// the `a_j^dag a_k` term) and the backward one is `|K_kj|`. Valid pairs:
/// (1,2), (2,3), (3,1).
pub fn nonreciprocity(
    k: &CouplingMatrix,
    pair: (usize, usize),
) -> Result<Nonreciprocity, ModelError> {
    match pair {
        (1, 2) | (2, 3) | (3, 1) => {}
        (a, b) => return Err(ModelError::InvalidPair(a, b)),
    }
    let forward = k.entry(pair.0, pair.1).norm();
    let backward = k.entry(pair.1, pair.0).norm();
    let f0 = forward < UNIDIRECTIONAL_EPS;
    let b0 = backward < UNIDIRECTIONAL_EPS;
    let kind = if f0 ^ b0 {
        ReciprocityKind::Unidirectional
    } else if (forward - backward).abs() > UNIDIRECTIONAL_EPS {
        ReciprocityKind::Nonreciprocal
    } else {
        ReciprocityKind::Reciprocal
    };
    Ok(Nonreciprocity {
        forward,
        backward,
        kind,
    })
}

/// Eigenvalues of the linearized, undriven microwave subsystem
/// `M_jk = (i delta_j - gamma) [j=k] - i K_jk` with detunings `(+delta, 0, -delta)`.
///
/// Any eigenvalue with a positive real part flags a linear-gain regime; the
/// optomechanical nonlinearity usually saturates it, so this is advisory only.
pub fn linear_stability(config: &CircuitConfig, k: &CouplingMatrix) -> [Complex64; 3] {
    let i = Complex64::i();
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = -i * k.entry(r + 1, c + 1);
        }
        row[r] += i * config.mw_detuning(r + 1) - config.gamma;
    }
    eigenvalues_3x3(&m)
}

/// Closed-form (Cardano) eigenvalues of a complex 3x3 matrix, each polished
/// with one Newton step on the characteristic polynomial.
fn eigenvalues_3x3(m: &[[Complex64; 3]; 3]) -> [Complex64; 3] {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0]
        + m[0][0] * m[2][2]
        - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);

    // p(x) = x^3 + c2 x^2 + c1 x + c0
    let c2 = -trace;
    let c1 = minors;
    let c0 = -det;

    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;

    let scale = p.norm().sqrt().max(q.norm().cbrt());
    let mut roots = if scale < 1e-300 {
        [Complex64::new(0.0, 0.0); 3]
    } else {
        let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        // Pick the branch with the larger magnitude to avoid cancellation.
        let u3a = -q / 2.0 + disc;
        let u3b = -q / 2.0 - disc;
        let u3 = if u3a.norm() >= u3b.norm() { u3a } else { u3b };
        let u = u3.cbrt();
        let omega = Complex64::cis(2.0 * PI / 3.0);
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (kk, slot) in out.iter_mut().enumerate() {
            let uk = u * omega.powu(kk as u32);
            let t = if uk.norm() > 1e-300 {
                uk - p / (3.0 * uk)
            } else {
                uk
            };
            *slot = t;
        }
        out
    };

    for r in roots.iter_mut() {
        let mut x = *r - c2 / 3.0;
        // One Newton polish on the undepressed polynomial.
        let f = ((x + c2) * x + c1) * x + c0;
        let df = (3.0 * x + 2.0 * c2) * x + c1;
        if df.norm() > 1e-300 {
            x -= f / df;
        }
        *r = x;
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(0.3), 0.3, epsilon = 1e-15);
        assert!(wrap_angle(7.0 * PI) <= PI && wrap_angle(7.0 * PI) > -PI);
    }

    #[test]
    fn hermitian_limit_without_environment() {
        // J = 0, g1 = 0.15, phi1 = 0: K_12 = K_21 = 0.15, rest 0.
        let env = EnvCoupling::new(0.0, 0.0, 0.0).unwrap();
        let coh = CoherentCoupling::new([0.15, 0.0, 0.0], [0.0; 3]).unwrap();
        let k = build_coupling_matrix(&env, &coh);
        assert_abs_diff_eq!(k.entry(1, 2).re, 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(k.entry(2, 1).re, 0.15, epsilon = 1e-15);
        assert_eq!(k.entry(1, 2).im, 0.0);
        assert!(k.entry(1, 3).norm() == 0.0 && k.entry(2, 3).norm() == 0.0);
        assert!(k.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn dissipative_limit_quarter_phases() {
        // J = 0.11, theta = phi = pi/2: K_12 = 0.11, K_13 = 0.11 i.
        let env = EnvCoupling::new(0.11, 0.5 * PI, 0.5 * PI).unwrap();
        let k = build_coupling_matrix(&env, &CoherentCoupling::ZERO);
        assert_abs_diff_eq!(k.entry(1, 2).re, 0.11, epsilon = 1e-15);
        assert_abs_diff_eq!(k.entry(1, 2).im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.entry(2, 1).re, 0.11, epsilon = 1e-15);
        assert_abs_diff_eq!(k.entry(1, 3).im, 0.11, epsilon = 2e-16);
        assert_abs_diff_eq!(k.entry(1, 3).re, 0.0, epsilon = 2e-16);
        assert!(k.symmetry_defect() < 1e-15);
    }

    #[test]
    fn unidirectional_pair_condition() {
        // g1 = J, phi1 - theta = pi/2 kills K_12 and leaves |K_21| = 2J|cos theta|.
        let j = 0.15;
        let theta = 0.2 * PI;
        let env = EnvCoupling::new(j, theta, 0.0).unwrap();
        let coh = CoherentCoupling::new([j, 0.0, 0.0], [theta + 0.5 * PI, 0.0, 0.0]).unwrap();
        let k = build_coupling_matrix(&env, &coh);
        assert!(k.entry(1, 2).norm() < 1e-15);
        assert_abs_diff_eq!(k.entry(2, 1).norm(), 2.0 * j * theta.cos(), epsilon = 1e-15);

        let rec = nonreciprocity(&k, (1, 2)).unwrap();
        // The pair returns (|K_12|, |K_21|) = (0, 2J|cos theta|).
        assert_eq!(rec.kind, ReciprocityKind::Unidirectional);
        assert!(rec.forward < 1e-15);
        assert_abs_diff_eq!(rec.backward, 2.0 * j * theta.cos(), epsilon = 1e-15);
    }

    #[test]
    fn output_port_structure() {
        // Zero rows forced by construction.
        let env = EnvCoupling::new(0.18, 0.5 * PI, -0.8 * PI).unwrap();
        let k = output_port_circuit(&env, 0.18, 0.7 * PI);
        assert!(k.entry(3, 1).norm() < 1e-12);
        assert!(k.entry(3, 2).norm() < 1e-12);

        // theta = phi = 0: K_13 = K_23 = -0.4i.
        let env = EnvCoupling::new(0.2, 0.0, 0.0).unwrap();
        let k = output_port_circuit(&env, 0.0, 0.0);
        assert_abs_diff_eq!((k.entry(1, 3) - c(0.0, -0.4)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((k.entry(2, 3) - c(0.0, -0.4)).norm(), 0.0, epsilon = 1e-12);

        // theta = 0, phi = pi/2: both closed-form couplings vanish.
        let env = EnvCoupling::new(0.17, 0.0, 0.5 * PI).unwrap();
        let k = output_port_circuit(&env, 0.1, 0.3);
        assert!(k.entry(2, 3).norm() < 1e-12);
        assert!(k.entry(1, 3).norm() < 1e-12);
    }

    #[test]
    fn input_port_structure() {
        let env = EnvCoupling::new(0.16, 0.2 * PI, 0.2 * PI).unwrap();
        let k = input_port_circuit(&env, 0.16, 0.2 * PI);
        assert!(k.entry(1, 2).norm() < 1e-12);
        assert!(k.entry(3, 2).norm() < 1e-12);

        // theta = pi/2 additionally kills K_21.
        let env = EnvCoupling::new(0.16, 0.5 * PI, 0.1).unwrap();
        let k = input_port_circuit(&env, 0.0, 0.0);
        assert!(k.entry(2, 1).norm() < 1e-12);

        // Closed forms evaluated independently: K_21 = -2iJ cos theta,
        // K_23 = -2iJ cos phi, frozen from direct arithmetic.
        let env = EnvCoupling::new(0.2, 0.2 * PI, -0.7 * PI).unwrap();
        let k = input_port_circuit(&env, 0.05, 0.4);
        let k21 = c(0.0, -0.32360679774997896);
        let k23 = c(0.0, 0.23511410091698925);
        assert!((k.entry(2, 1) - k21).norm() < 1e-12);
        assert!((k.entry(2, 3) - k23).norm() < 1e-12);
    }

    #[test]
    fn unidirectional_circuit_structure() {
        // Strong-coupling operating point of the fig8a preset: only
        // K_13, K_21, K_23 survive.
        let env = EnvCoupling::new(0.56, 0.9 * PI, PI).unwrap();
        let k = unidirectional_circuit(&env);
        let nonzero = [(1usize, 3usize), (2, 1), (2, 3)];
        for r in 1..=3 {
            for col in 1..=3 {
                if r == col {
                    continue;
                }
                if nonzero.contains(&(r, col)) {
                    assert!(k.entry(r, col).norm() > 1e-3, "K_{r}{col} unexpectedly zero");
                } else {
                    assert!(k.entry(r, col).norm() < 1e-12, "K_{r}{col} should vanish");
                }
            }
        }

        // cos(theta + phi) = 0 opens the 1-3 link.
        let env = EnvCoupling::new(0.3, 0.1, 0.5 * PI - 0.1).unwrap();
        let k = unidirectional_circuit(&env);
        assert!(k.entry(1, 3).norm() < 1e-12);

        // theta = phi = 0: all three equal -2iJ.
        let env = EnvCoupling::new(1.0, 0.0, 0.0).unwrap();
        let k = unidirectional_circuit(&env);
        for (r, col) in nonzero {
            assert!((k.entry(r, col) - c(0.0, -2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn nonreciprocity_reciprocal_and_general() {
        // Hermitian limit: reciprocal.
        let env = EnvCoupling::ZERO;
        let coh = CoherentCoupling::new([0.1, 0.0, 0.0], [0.3 * PI, 0.0, 0.0]).unwrap();
        let k = build_coupling_matrix(&env, &coh);
        let rec = nonreciprocity(&k, (1, 2)).unwrap();
        assert_eq!(rec.kind, ReciprocityKind::Reciprocal);
        assert_abs_diff_eq!(rec.forward, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(rec.backward, 0.1, epsilon = 1e-15);

        // |K_12|^2 - |K_21|^2 = -4 g J sin(phi1) cos(theta): pick a genuinely
        // nonreciprocal point and check both magnitudes by direct arithmetic.
        let (g, j, phi1, theta) = (0.15, 0.15, 0.8 * PI, 0.2 * PI);
        let env = EnvCoupling::new(j, theta, 0.0).unwrap();
        let coh = CoherentCoupling::new([g, 0.0, 0.0], [phi1, 0.0, 0.0]).unwrap();
        let k = build_coupling_matrix(&env, &coh);
        let fwd = (g * Complex64::cis(phi1) - Complex64::i() * j * Complex64::cis(theta)).norm();
        let bwd = (g * Complex64::cis(-phi1) - Complex64::i() * j * Complex64::cis(theta)).norm();
        let rec = nonreciprocity(&k, (1, 2)).unwrap();
        assert_abs_diff_eq!(rec.forward, fwd, epsilon = 1e-15);
        assert_abs_diff_eq!(rec.backward, bwd, epsilon = 1e-15);
        assert!((fwd - bwd).abs() > 1e-3);
        assert_eq!(rec.kind, ReciprocityKind::Nonreciprocal);

        // Degenerate case theta = pi/2: the dissipative term becomes real and
        // the two directions tie in magnitude for any phi1.
        let env = EnvCoupling::new(j, 0.5 * PI, 0.0).unwrap();
        let k = build_coupling_matrix(&env, &coh);
        let rec = nonreciprocity(&k, (1, 2)).unwrap();
        assert_abs_diff_eq!(rec.forward, rec.backward, epsilon = 1e-15);
        assert_eq!(rec.kind, ReciprocityKind::Reciprocal);

        assert!(nonreciprocity(&k, (2, 1)).is_err());
        assert!(nonreciprocity(&k, (1, 3)).is_err());
    }

    #[test]
    fn stability_of_uncoupled_circuit_is_diagonal() {
        let config = CircuitConfig {
            delta: 0.05,
            gamma: 0.1,
            ..CircuitConfig::default()
        };
        let eig = linear_stability(&config, &CouplingMatrix::ZERO);
        let mut expected = vec![c(-0.1, 0.05), c(-0.1, 0.0), c(-0.1, -0.05)];
        for e in eig {
            let pos = expected
                .iter()
                .position(|x| (x - e).norm() < 1e-12)
                .expect("eigenvalue not found");
            expected.remove(pos);
        }
        assert!(expected.is_empty());
    }

    #[test]
    fn hermitian_coupling_shifts_only_imaginary_parts() {
        let config = CircuitConfig::default();
        let coh = CoherentCoupling::new([0.15, 0.15, 0.15], [0.2, -0.4, 1.1]).unwrap();
        let k = build_coupling_matrix(&EnvCoupling::ZERO, &coh);
        for e in linear_stability(&config, &k) {
            assert_abs_diff_eq!(e.re, -config.gamma, epsilon = 1e-12);
        }
    }

    /// Durand-Kerner iteration on the characteristic polynomial, used as an
    /// independent oracle for the closed-form eigensolver.
    fn durand_kerner(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
        let poly = |x: Complex64| ((x + c2) * x + c1) * x + c0;
        let mut r = [
            c(0.4, 0.9),
            c(0.4, 0.9) * c(0.4, 0.9),
            c(0.4, 0.9) * c(0.4, 0.9) * c(0.4, 0.9),
        ];
        for _ in 0..200 {
            let prev = r;
            for i in 0..3 {
                let mut denom = c(1.0, 0.0);
                for j in 0..3 {
                    if i != j {
                        denom *= prev[i] - prev[j];
                    }
                }
                r[i] = prev[i] - poly(prev[i]) / denom;
            }
        }
        r
    }

    #[test]
    fn eigenvalues_match_root_finder_oracle() {
        let config = CircuitConfig::default();
        let env = EnvCoupling::new(0.2, 0.0, 0.0).unwrap();
        let k = build_coupling_matrix(&env, &CoherentCoupling::ZERO);
        let eig = linear_stability(&config, &k);

        // Rebuild the characteristic polynomial coefficients independently.
        let i = Complex64::i();
        let mut m = [[c(0.0, 0.0); 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (col, entry) in row.iter_mut().enumerate() {
                *entry = -i * k.entry(r + 1, col + 1);
            }
        }
        m[0][0] += i * config.delta - config.gamma;
        m[1][1] += -Complex64::from(config.gamma);
        m[2][2] += -i * config.delta - config.gamma;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2]
            - m[0][2] * m[2][0]
            + m[1][1] * m[2][2]
            - m[1][2] * m[2][1];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut oracle = durand_kerner(-tr, minors, -det).to_vec();

        for e in eig {
            let pos = oracle
                .iter()
                .position(|x| (x - e).norm() < 1e-9)
                .unwrap_or_else(|| panic!("eigenvalue {e} missing from oracle {oracle:?}"));
            oracle.remove(pos);
        }
        assert!(oracle.is_empty());
    }

    #[test]
    fn config_validation_names_offending_key() {
        let bad = CircuitConfig {
            gamma: 0.0,
            ..CircuitConfig::default()
        };
        let err = bad.validate().unwrap_err();
        assert!(err.to_string().contains("gamma"));

        let bad = CircuitConfig {
            delta_m: 1.5,
            ..CircuitConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("Delta"));

        assert!(EnvCoupling::new(-0.1, 0.0, 0.0).is_err());
        assert!(CoherentCoupling::new([0.1, -0.2, 0.0], [0.0; 3]).is_err());
    }
}
