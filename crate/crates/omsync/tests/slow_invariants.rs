//! Slower integration checks: the 1-D coupling scan phenomenology and the
//! bath-discretization convergence study.

use num_complex::Complex64;
use omsync::analysis::{
    dominant_peaks, power_spectrum, sideband_spacing, ClassifierConfig, PeakList, SignalSelector,
};
use omsync::bath::{compare_models, BathSpec, OraclePlan};
use omsync::dynamics::SimPlan;
use omsync::model::{
    build_coupling_matrix, CircuitConfig, CircuitPreset, CoherentCoupling, EnvCoupling,
};
use omsync::sweep::{run_sweep, Axis, OutputFlags, PointOutcome, SweepParam, SweepSpec};
use omsync::SyncState;
use std::f64::consts::PI;

/// Scanning J from 0 to 0.11 at theta = 0.2 pi, phi = -0.8 pi walks the
/// circuit from independent oscillations through the sideband regime into
/// synchronization, and the mid-scan sidebands around the carrier are
/// spaced by the mechanical detuning.
#[test]
fn coupling_scan_walks_into_synchronization() {
    let spec = SweepSpec {
        circuit: CircuitConfig::default(),
        env: EnvCoupling::new(0.0, 0.2 * PI, -0.8 * PI).unwrap(),
        coh: CoherentCoupling::ZERO,
        preset: CircuitPreset::General,
        axes: vec![Axis {
            param: SweepParam::J,
            start: 0.0,
            stop: 0.11,
            count: 12,
        }],
        plan: SimPlan::default(),
        outputs: OutputFlags::default(),
        classifier: ClassifierConfig::default(),
        point_budget_secs: 120.0,
    };
    let dir = tempfile::tempdir().unwrap();
    let result = run_sweep(&spec, 2, dir.path()).unwrap();

    let states: Vec<SyncState> = result
        .records
        .iter()
        .map(|r| match &r.outcome {
            PointOutcome::Classified { state, .. } => *state,
            other => panic!("point {} did not classify: {other:?}", r.index),
        })
        .collect();
    assert_eq!(states[0], SyncState::Independent);
    assert!(
        states.contains(&SyncState::Unsynchronized),
        "no sideband regime found in {states:?}"
    );
    assert_eq!(*states.last().unwrap(), SyncState::Synchronized);

    // Mid-scan sideband spacing: first-order sideband cluster around the
    // carrier, spacing within 10% of the mechanical detuning.
    let env = EnvCoupling::new(0.05, 0.2 * PI, -0.8 * PI).unwrap();
    let k = build_coupling_matrix(&env, &CoherentCoupling::ZERO);
    let traj = omsync::integrate(&SimPlan::default(), &CircuitConfig::default(), &k).unwrap();
    let window = omsync::steady_window(&traj, 0.5).unwrap();
    let spectra = power_spectrum(&window, SignalSelector::Intensities).unwrap();
    let peaks = dominant_peaks(&spectra, 0).unwrap();
    let band = PeakList(
        peaks
            .0
            .into_iter()
            .filter(|p| (0.98..=1.01).contains(&p.f_over_f0))
            .collect(),
    );
    assert!(band.len() >= 3, "too few carrier-band sidebands");
    let spacing = sideband_spacing(&band).expect("uniform sideband comb");
    let delta_m = CircuitConfig::default().delta_m;
    assert!(
        (spacing - delta_m).abs() <= 0.1 * delta_m,
        "sideband spacing {spacing} vs mechanical detuning {delta_m}"
    );
}

/// Doubling the bath mode count at fixed band must not degrade the
/// full-vs-effective agreement (within a 10% jitter allowance).
#[test]
fn bath_discretization_error_is_monotone_in_mode_count() {
    let gamma_eff = 0.05;
    let band = 200.0 * gamma_eff;
    let carrier = BathSpec::suggested_carrier(band);
    let j_site = (gamma_eff / (2.0 * PI * carrier)).sqrt();
    let config = CircuitConfig {
        g0: 0.0,
        epsilon: 0.0,
        gamma: gamma_eff,
        ..CircuitConfig::default()
    };

    let mut errors = Vec::new();
    for n_modes in [501usize, 1001, 2001, 4001] {
        let spec = BathSpec {
            j_site: [j_site, j_site, 0.0],
            positions: [0.0, 0.5 * PI, PI],
            band_halfwidth: band,
            n_modes,
            carrier,
        };
        let plan = OraclePlan {
            initial: [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
            ..OraclePlan::for_spec(&spec)
        };
        let report = compare_models(&spec, &config, &plan).unwrap();
        errors.push(report.max_error);
    }
    for pair in errors.windows(2) {
        assert!(
            pair[1] <= pair[0] * 1.1,
            "error grew on mode doubling: {errors:?}"
        );
    }
    assert!(errors.last().unwrap() < &0.05);
}
