//! Property-based invariants of the coupling algebra, classifier plumbing
//! and integrator.

use num_complex::Complex64;
use omsync::analysis::{dominant_peaks, sideband_spacing, spectrum_of_signals, Peak, PeakList};
use omsync::dynamics::{rhs, CircuitState, SignalKind};
use omsync::model::{
    build_coupling_matrix, input_port_circuit, linear_stability, nonreciprocity,
    output_port_circuit, unidirectional_circuit, wrap_angle, CircuitConfig, CoherentCoupling,
    CouplingMatrix, EnvCoupling,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn strength() -> impl Strategy<Value = f64> {
    0.0..0.6f64
}

proptest! {
    #[test]
    fn wrap_angle_is_canonical(x in -50.0..50.0f64) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        // Same point on the circle.
        prop_assert!((Complex64::cis(w) - Complex64::cis(x)).norm() < 1e-9);
    }

    #[test]
    fn coupling_is_hermitian_without_environment(
        g in [strength(), strength(), strength()],
        ph in [angle(), angle(), angle()],
    ) {
        let coh = CoherentCoupling::new(g, ph).unwrap();
        let k = build_coupling_matrix(&EnvCoupling::ZERO, &coh);
        prop_assert!(k.hermiticity_defect() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn coupling_is_complex_symmetric_without_couplers(
        j in strength(), theta in angle(), phi in angle(),
    ) {
        let env = EnvCoupling::new(j, theta, phi).unwrap();
        let k = build_coupling_matrix(&env, &CoherentCoupling::ZERO);
        prop_assert!(k.symmetry_defect() <= 4.0 * f64::EPSILON);
        // Every entry has the dissipative form -iJ e^{i phase}.
        for (r, c, phase) in [
            (1usize, 2usize, theta),
            (2, 3, phi),
            (1, 3, theta + phi),
        ] {
            let want = -Complex64::i() * j * Complex64::cis(phase);
            prop_assert!((k.entry(r, c) - want).norm() <= 1e-15 + 1e-15 * j);
        }
    }

    #[test]
    fn special_circuits_match_closed_forms(
        j in strength(), theta in angle(), phi in angle(),
        g in strength(), ph in angle(),
    ) {
        let env = EnvCoupling::new(j, theta, phi).unwrap();
        let i = Complex64::i();
        let tol = 1e-12;

        // Output port: row 3 empty, columns feed -2iJcos forms.
        let out = output_port_circuit(&env, g, ph);
        prop_assert!(out.entry(3, 1).norm() <= tol);
        prop_assert!(out.entry(3, 2).norm() <= tol);
        prop_assert!((out.entry(1, 3) - (-2.0 * i * j * (theta + phi).cos())).norm() <= tol);
        prop_assert!((out.entry(2, 3) - (-2.0 * i * j * phi.cos())).norm() <= tol);
        prop_assert!(
            (out.entry(1, 2) - (g * Complex64::cis(ph) - i * j * Complex64::cis(theta))).norm()
                <= tol
        );
        prop_assert!(
            (out.entry(2, 1) - (g * Complex64::cis(-ph) - i * j * Complex64::cis(theta))).norm()
                <= tol
        );

        // Input port: column 2 feeds nothing back.
        let inp = input_port_circuit(&env, g, ph);
        prop_assert!(inp.entry(1, 2).norm() <= tol);
        prop_assert!(inp.entry(3, 2).norm() <= tol);
        prop_assert!((inp.entry(2, 1) - (-2.0 * i * j * theta.cos())).norm() <= tol);
        prop_assert!((inp.entry(2, 3) - (-2.0 * i * j * phi.cos())).norm() <= tol);
        prop_assert!(
            (inp.entry(3, 1) - (g * Complex64::cis(ph) - i * j * Complex64::cis(theta + phi)))
                .norm()
                <= tol
        );
        prop_assert!(
            (inp.entry(1, 3) - (g * Complex64::cis(-ph) - i * j * Complex64::cis(theta + phi)))
                .norm()
                <= tol
        );

        // Unidirectional: exactly three surviving entries.
        let uni = unidirectional_circuit(&env);
        for (r, c) in [(1usize, 2usize), (3, 1), (3, 2)] {
            prop_assert!(uni.entry(r, c).norm() <= tol);
        }
        prop_assert!((uni.entry(1, 3) - (-2.0 * i * j * (theta + phi).cos())).norm() <= tol);
        prop_assert!((uni.entry(2, 1) - (-2.0 * i * j * theta.cos())).norm() <= tol);
        prop_assert!((uni.entry(2, 3) - (-2.0 * i * j * phi.cos())).norm() <= tol);
    }

    #[test]
    fn nonreciprocity_invariant_under_full_turns(
        j in strength(), theta in angle(), phi in angle(),
        g in [strength(), strength(), strength()],
        ph in [angle(), angle(), angle()],
        turn in 0usize..5,
    ) {
        let coh = CoherentCoupling::new(g, ph).unwrap();
        let base = build_coupling_matrix(&EnvCoupling::new(j, theta, phi).unwrap(), &coh);

        // Add 2 pi to one angle (constructor-normalized or raw, both count).
        let mut env2 = EnvCoupling { j, theta, phi };
        let mut coh2 = coh;
        match turn {
            0 => env2.theta += 2.0 * PI,
            1 => env2.phi -= 2.0 * PI,
            2 => coh2.phase[0] += 2.0 * PI,
            3 => coh2.phase[1] += 2.0 * PI,
            _ => coh2.phase[2] -= 2.0 * PI,
        }
        let shifted = build_coupling_matrix(&env2, &coh2);
        for pair in [(1usize, 2usize), (2, 3), (3, 1)] {
            let a = nonreciprocity(&base, pair).unwrap();
            let b = nonreciprocity(&shifted, pair).unwrap();
            prop_assert!((a.forward - b.forward).abs() <= 1e-12);
            prop_assert!((a.backward - b.backward).abs() <= 1e-12);
        }
    }

    #[test]
    fn stability_spectrum_invariant_under_relabeling(
        j in strength(), theta in angle(), phi in angle(),
        g in [strength(), strength(), strength()],
        ph in [angle(), angle(), angle()],
        delta in -0.2..0.2f64,
    ) {
        let config = CircuitConfig { delta, ..CircuitConfig::default() };
        let coh = CoherentCoupling::new(g, ph).unwrap();
        let k = build_coupling_matrix(&EnvCoupling::new(j, theta, phi).unwrap(), &coh);
        let eig = linear_stability(&config, &k);

        // Relabel resonators 1 <-> 3 together with delta -> -delta.
        let swap = |r: usize| match r { 1 => 3, 3 => 1, other => other };
        let mut entries = [[Complex64::new(0.0, 0.0); 3]; 3];
        for r in 1..=3 {
            for c in 1..=3 {
                if r != c {
                    entries[r - 1][c - 1] = k.entry(swap(r), swap(c));
                }
            }
        }
        let k2 = CouplingMatrix::from_entries(entries);
        let config2 = CircuitConfig { delta: -delta, ..config };
        let mut eig2 = linear_stability(&config2, &k2).to_vec();

        for e in eig {
            let pos = eig2.iter().position(|x| (x - e).norm() < 1e-9);
            prop_assert!(pos.is_some(), "eigenvalue {e} unmatched in {eig2:?}");
            eig2.remove(pos.unwrap());
        }
    }

    #[test]
    fn microwave_subsystem_is_linear_without_drive_and_optomechanics(
        j in strength(), theta in angle(), phi in angle(),
        re in proptest::array::uniform6(-5.0..5.0f64),
        im in proptest::array::uniform6(-5.0..5.0f64),
        alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
    ) {
        let cfg = CircuitConfig {
            g0: 0.0,
            epsilon: 0.0,
            ..CircuitConfig::default()
        };
        let k = build_coupling_matrix(
            &EnvCoupling::new(j, theta, phi).unwrap(),
            &CoherentCoupling::ZERO,
        );
        let mut s1 = CircuitState::ZERO;
        let mut s2 = CircuitState::ZERO;
        for m in 0..3 {
            s1.a[m] = Complex64::new(re[m], im[m]);
            s2.a[m] = Complex64::new(re[m + 3], im[m + 3]);
        }
        let mut combo = CircuitState::ZERO;
        for m in 0..3 {
            combo.a[m] = alpha * s1.a[m] + beta * s2.a[m];
        }
        let d1 = rhs(&s1, &cfg, &k);
        let d2 = rhs(&s2, &cfg, &k);
        let dc = rhs(&combo, &cfg, &k);
        for m in 0..3 {
            let want = alpha * d1.a[m] + beta * d2.a[m];
            prop_assert!((dc.a[m] - want).norm() <= 1e-12 * want.norm().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn peak_interpolation_within_a_tenth_of_a_bin(
        bins_from_dc in 10.0..2000.0f64,
        frac in 0.02..0.98f64,
    ) {
        let n = 16384usize;
        let dtau = 0.05;
        let bin = 2.0 * PI / (n as f64 * dtau);
        let f = (bins_from_dc + frac) * bin;
        let series: Vec<f64> = (0..n).map(|i| (f * i as f64 * dtau).cos()).collect();
        let spec = spectrum_of_signals(vec![(SignalKind::Intensity(1), series)], dtau).unwrap();
        let got = dominant_peaks(&spec, 0).unwrap().dominant().unwrap().f_over_f0;
        prop_assert!(
            (got - f).abs() <= 0.1 * bin,
            "tone {f} recovered as {got} ({} bins off)",
            (got - f).abs() / bin
        );
    }

    #[test]
    fn sideband_spacing_detects_uniform_combs(
        base in 0.5..1.5f64,
        spacing in 0.003..0.02f64,
        count in 3usize..9,
    ) {
        let peaks = PeakList(
            (0..count)
                .map(|i| Peak {
                    f_over_f0: base + i as f64 * spacing,
                    power: 1.0 / (i + 1) as f64,
                    prominence: 1.0 / (i + 1) as f64,
                })
                .collect(),
        );
        let got = sideband_spacing(&peaks);
        prop_assert!(got.is_some());
        prop_assert!((got.unwrap() - spacing).abs() <= 1e-12);

        // Breaking uniformity by 25% on one gap kills the detection.
        let mut jittered: Vec<Peak> = peaks.0.clone();
        jittered[count - 1].f_over_f0 += 0.25 * spacing;
        prop_assert!(sideband_spacing(&PeakList(jittered)).is_none());
    }
}
