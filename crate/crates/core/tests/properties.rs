//! Property tests for the algebraic invariants: waveform symmetry, herald
//! branch bookkeeping, fidelity bounds and configuration round-trips.

#![allow(clippy::needless_range_loop)]

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use dualrail_core::gate::{herald_combine, herald_stats, HeraldResult, RailAmplitudes};
use dualrail_core::model::Rail;
use dualrail_core::*;

fn coeff() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -150.0..150.0f64]
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(coeff(), 1..10)
}

fn amp4() -> impl Strategy<Value = [C64; 4]> {
    prop::array::uniform4((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| {
        // scaled into the closed unit disc to satisfy amplitude invariants
        let z = C64::new(re, im);
        if z.norm() > 1.0 {
            z / z.norm()
        } else {
            z
        }
    }))
}

proptest! {
    #[test]
    fn waveforms_are_even_and_periodic(c in coeffs(), t in -2.0..2.0f64) {
        let w = FourierWaveform::new(c, 0.25).unwrap();
        let scale = w.eval(t).abs().max(1.0);
        prop_assert!((w.eval(t) - w.eval(-t)).abs() <= 1e-12 * scale);
        prop_assert!((w.eval(t) - w.eval(t + 0.25)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn pt_partner_is_an_involution(rabi in coeffs(), det in coeffs()) {
        let p = PulsePair::new(
            FourierWaveform::new(rabi, 0.25).unwrap(),
            FourierWaveform::new(det, 0.25).unwrap(),
        )
        .unwrap();
        let q = pt_partner(&p);
        prop_assert_eq!(q.rabi.clone(), p.rabi.clone());
        prop_assert_eq!(pt_partner(&q), p);
    }

    #[test]
    fn herald_branches_conserve_rail_weight(m0 in amp4(), m1 in amp4(), eta in -3.2..3.2f64) {
        let r0 = RailAmplitudes::new(Rail::Zero, m0).unwrap();
        let r1 = RailAmplitudes::new(Rail::One, m1).unwrap();
        let h = herald_combine(&r0, &r1, eta);
        for q in 0..4 {
            let lhs = h.mh.diag()[q].norm_sqr() + h.eh.diag()[q].norm_sqr();
            let rhs = (m0[q].norm_sqr() + m1[q].norm_sqr()) / 2.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn fidelity_is_bounded_and_phase_invariant(m in amp4(), phi in -3.2..3.2f64) {
        let g = GateMatrix::from_diag(m);
        let f = avg_gate_fidelity(&g, &GateMatrix::cz());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        let rot = C64::from_polar(1.0, phi);
        let rotated = GateMatrix::from_diag([rot * m[0], rot * m[1], rot * m[2], rot * m[3]]);
        let f2 = avg_gate_fidelity(&rotated, &GateMatrix::cz());
        prop_assert!((f - f2).abs() <= 1e-12);
    }

    #[test]
    fn phase_rotated_target_reaches_unit_fidelity(phi in -3.2..3.2f64) {
        let rot = C64::from_polar(1.0, phi);
        let cz = GateMatrix::cz();
        let m = GateMatrix::from_diag([
            rot * cz.diag()[0],
            rot * cz.diag()[1],
            rot * cz.diag()[2],
            rot * cz.diag()[3],
        ]);
        prop_assert!((avg_gate_fidelity(&m, &cz) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn raw_fidelity_never_exceeds_the_herald_probability(m0 in amp4(), m1 in amp4(), eta in -3.2..3.2f64) {
        let h = herald_combine(
            &RailAmplitudes::new(Rail::Zero, m0).unwrap(),
            &RailAmplitudes::new(Rail::One, m1).unwrap(),
            eta,
        );
        match herald_stats(&h) {
            Ok(stats) => prop_assert!(stats.f_raw <= stats.p_herald + 1e-12),
            Err(Error::HeraldStarved { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        }
    }

    #[test]
    fn eta_auto_recovers_imposed_global_phases(m in amp4(), alpha in -3.0..3.0f64) {
        let total: f64 = m.iter().map(|z| z.norm_sqr()).sum();
        prop_assume!(total > 1e-3);
        let rot = C64::from_polar(1.0, alpha);
        let m0 = RailAmplitudes::new(Rail::Zero, m).unwrap();
        let m1 =
            RailAmplitudes::new(Rail::One, [rot * m[0], rot * m[1], rot * m[2], rot * m[3]])
                .unwrap();
        let eta = eta_auto(&m0, &m1).unwrap();
        prop_assert!((eta - alpha).abs() <= 1e-9, "eta {} vs {}", eta, alpha);
    }

    #[test]
    fn zero_perturbations_fix_every_configuration_field(
        eps_zero in Just(0.0f64),
        rabi in coeffs(),
        det in coeffs(),
    ) {
        use dualrail_core::model::test_support::pulse;
        let mut cfg = dualrail_core::model::test_support::chain_config();
        cfg.buffer_pulse = pulse(&rabi, &det, 0.25);
        for pert in [
            Perturbation::RabiScale { epsilon: eps_zero, target: Target::Both },
            Perturbation::DetuningOffset { delta: eps_zero, target: Target::Buffer },
            Perturbation::DetuningOffset { delta: eps_zero, target: Target::Qubits },
        ] {
            prop_assert_eq!(apply_perturbation(&cfg, &pert).unwrap(), cfg.clone());
        }
    }

    #[test]
    fn written_configs_parse_back_equal(
        omega1 in coeffs(),
        delta1 in coeffs(),
        omega2 in coeffs(),
        b in 1.0..500.0f64,
        ramp in 0.0..0.12f64,
    ) {
        use dualrail_core::model::test_support::pulse;
        let mut system = dualrail_core::model::test_support::chain_config();
        system.buffer_pulse = pulse(&omega1, &delta1, 0.25);
        system.qubit_pulse = pulse(&omega2, &[], 0.25);
        system.blockade = [Blockade::from_two_pi_mhz(b).unwrap(); 2];
        system.envelope_ramp = ramp;
        let text = write_config(
            &system,
            &Default::default(),
            EtaMode::Fixed(0.25),
            &Default::default(),
        );
        let rc = parse_config(&text).unwrap();
        prop_assert_eq!(rc.system, system);
        prop_assert_eq!(rc.eta, EtaMode::Fixed(0.25));
    }
}

#[test]
fn herald_result_identity_is_exact_for_conjugate_pairs() {
    // conjugate rails make the success branch real: E carries Im, M carries Re
    let m: [C64; 4] = [
        C64::new(0.9, 0.1),
        C64::new(0.8, -0.3),
        C64::new(-0.7, 0.2),
        C64::new(-0.6, -0.4),
    ];
    let conj: [C64; 4] = std::array::from_fn(|i| m[i].conj());
    let h: HeraldResult = herald_combine(
        &RailAmplitudes::new(Rail::Zero, m).unwrap(),
        &RailAmplitudes::new(Rail::One, conj).unwrap(),
        0.0,
    );
    for q in 0..4 {
        assert!((h.mh.diag()[q] - C64::new(m[q].re, 0.0)).norm() < 1e-15);
        assert!((h.eh.diag()[q] - C64::new(-m[q].im, 0.0)).norm() < 1e-15);
    }
    assert_eq!(h.conjugacy_residual, 0.0);
}
