mod common;

use bragg_core::reconstruction::{design_settings, solve_symmetrized, witness_from_records, DEFAULT_CONDITION_CAP};
use bragg_core::records::simulate_records;
use bragg_core::scattering::{
    coupling_coefficients, direct_intensity_oracle, intensity_components, pulse_response, square_pulse_response,
    LaserCavitySettings, PulseProfile, Rotation,
};
use bragg_core::spin::{
    build_dicke, build_product, build_random_pure, build_random_separable, PauliAxis, Sites, SpinExpectation,
    SpinState,
};
use bragg_core::structure_factor::{
    c_alpha, structure_factor, witness_dicke, witness_general, ChainGeometry, PairCorrelations, WaveVector,
    WitnessSpec,
};
use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;

const AXES: [PauliAxis; 3] = PauliAxis::XYZ;

fn settings(rabi_0: f64, rabi_1: f64, phase: f64) -> LaserCavitySettings {
    LaserCavitySettings {
        rabi_0,
        rabi_1,
        phase,
        vacuum_rabi: 1.0,
        detuning: 100.0,
        cavity_detuning: 0.0,
        cavity_linewidth: 1.0,
        atomic_linewidth: 0.0,
    }
}

fn q_for(n: usize, phase: f64) -> (ChainGeometry, WaveVector) {
    let g = ChainGeometry::along_x(n);
    let q = WaveVector::along_chain(&g, phase);
    (g, q)
}

fn random_unitary(a: f64, b: f64, c: f64, d: f64) -> Matrix2<C64> {
    let e = |x: f64| C64::from_polar(1.0, x);
    let (ca, sa) = (a.cos(), a.sin());
    Matrix2::new(e(b) * ca, e(c) * sa, -e(-c + d) * sa, e(-b + d) * ca)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builders_and_unitaries_preserve_norm(n in 2usize..=8, seed in any::<u64>(), a in 0.0..PI, b in -PI..PI, c in -PI..PI, d in -PI..PI) {
        let s = build_random_pure(n, seed).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        let u = random_unitary(a, b, c, d);
        let r = s.apply_single_qubit_unitary(&u, &Sites::All).unwrap();
        prop_assert!((r.norm() - 1.0).abs() < 1e-12);
        let k = (seed as usize) % (n + 1);
        prop_assert!((build_dicke(n, k).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_axis_products_are_real(n in 2usize..=6, seed in any::<u64>(), k in 0usize..6, l in 0usize..6) {
        prop_assume!(k < n && l < n && k != l);
        let s = build_random_pure(n, seed).unwrap();
        for a in AXES {
            prop_assert!(s.expect_two_site(k, a, l, a).unwrap().im.abs() < 1e-12);
        }
    }

    #[test]
    fn conjugation_swaps_operands(n in 2usize..=6, seed in any::<u64>(), k in 0usize..6, l in 0usize..6) {
        prop_assume!(k < n && l < n && k != l);
        let s = build_random_pure(n, seed).unwrap();
        let xy = s.expect_two_site(k, PauliAxis::X, l, PauliAxis::Y).unwrap();
        let yx = s.expect_two_site(l, PauliAxis::Y, k, PauliAxis::X).unwrap();
        prop_assert!((xy.conj() - yx).norm() < 1e-12);
    }

    #[test]
    fn dicke_pairs_are_permutation_invariant(n in 2usize..=8, k in 0usize..=8) {
        prop_assume!(k <= n);
        let s = build_dicke(n, k).unwrap();
        for a in AXES {
            for b in AXES {
                let first = s.expect_two_site(0, a, 1, b).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            prop_assert!((s.expect_two_site(i, a, j, b).unwrap() - first).norm() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn structure_factor_matches_dense_operator(n in 2usize..=6, seed in any::<u64>(), phase in -PI..PI) {
        let s = build_random_pure(n, seed).unwrap();
        let rho = common::density_pure(&s);
        let (g, q) = q_for(n, phase);
        let sf = structure_factor(&s, &g, &q).unwrap();
        for (i, a) in AXES.into_iter().enumerate() {
            for (j, b) in AXES.into_iter().enumerate() {
                let want = common::structure_factor(&rho, i, j, phase);
                prop_assert!((sf.get(a, b) - want).norm() < 1e-10, "{a:?}{b:?}");
            }
        }
    }

    #[test]
    fn c_alpha_is_even_and_a_cosine_sum(n in 2usize..=6, seed in any::<u64>(), phase in -PI..PI) {
        let s = build_random_pure(n, seed).unwrap();
        let (g, q) = q_for(n, phase);
        for a in AXES {
            let plus = c_alpha(&s, &g, a, &q).unwrap();
            let minus = c_alpha(&s, &g, a, &q.neg()).unwrap();
            prop_assert_eq!(plus, minus);
            let mut cos_sum = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    cos_sum += (phase * (i as f64 - j as f64)).cos() * s.expect_two_site(i, a, j, a).unwrap().re;
                }
            }
            let nf = n as f64;
            prop_assert!((plus - 2.0 / (nf * (nf - 1.0)) * cos_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrized_relations(n in 2usize..=6, seed in any::<u64>(), phase in -PI..PI) {
        let s = build_random_pure(n, seed).unwrap();
        let t = PairCorrelations::compute(&s);
        let tp = t.symmetrized(phase);
        let tm = t.symmetrized(-phase);
        let sp = t.structure_factor(phase);
        let sm = t.structure_factor(-phase);
        for a in 0..3 {
            for b in 0..3 {
                prop_assert!((tp[a][b] - (sm[a][b] + sp[b][a])).norm() < 1e-12);
                prop_assert!((tm[a][b] - tp[b][a]).norm() < 1e-12);
                prop_assert!((tm[a][b] - tp[a][b].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_states_never_violate(n in 2usize..=5, comps in 1usize..=8, seed in any::<u64>()) {
        let m = build_random_separable(n, comps, seed).unwrap();
        let w = witness_dicke(&m, &ChainGeometry::along_x(n)).unwrap();
        prop_assert!(w >= -1e-10, "{w}");
        prop_assert!((w - common::witness_dicke(&common::density(&m))).abs() < 1e-10);
    }

    #[test]
    fn intensity_decomposition_matches_dense_source(
        n in 2usize..=5, seed in any::<u64>(), r0 in 0.0..3.0f64, r1 in 0.0..3.0f64, phi in -PI..PI, phase in -PI..PI,
    ) {
        let s = build_random_pure(n, seed).unwrap();
        let base = settings(r0, r1, phi);
        let (g, q) = q_for(n, phase);
        let coeffs = coupling_coefficients(&base).unwrap();
        let parts = intensity_components(&s, &g, &coeffs, &q).unwrap();
        let dense = common::intensity(&common::density_pure(&s), base.alpha_0(), base.alpha_1(), phi, phase);
        let direct = direct_intensity_oracle(&s, &g, &base.drive().unwrap(), &q).unwrap();
        let scale = dense.abs().max(1e-300);
        prop_assert!((parts.normalized() - dense).abs() <= 1e-10 * scale.max(1e-12));
        prop_assert!((direct - dense).abs() <= 1e-10 * scale.max(1e-12));
        prop_assert!(parts.normalized() >= -1e-10);
    }

    #[test]
    fn mode2_is_mode1_at_the_other_wave_vector(n in 2usize..=5, seed in any::<u64>(), kp in -3.0..3.0f64, kc in -3.0..3.0f64) {
        use bragg_core::scattering::{output_intensity, ProbeGeometry, ScatteringChannel};
        let s = build_random_pure(n, seed).unwrap();
        let g = ChainGeometry::along_x(n);
        let base = settings(1.0, 0.5, 0.3);
        let profile = PulseProfile::square(5.0).unwrap();
        let probe = ProbeGeometry { pump: WaveVector([kp, 0.0, 0.0]), cavity: WaveVector([kc, 0.0, 0.0]) };
        let m2 = output_intensity(&s, &g, &base, &profile, &probe, ScatteringChannel::Mode2, 5.0, false).unwrap();
        let swapped = ProbeGeometry { pump: probe.transferred(ScatteringChannel::Mode2), cavity: WaveVector::ZERO };
        let m1 = output_intensity(&s, &g, &base, &profile, &swapped, ScatteringChannel::Mode1, 5.0, false).unwrap();
        prop_assert!((m1.normalized - m2.normalized).abs() < 1e-12 * m1.normalized.abs().max(1.0));
    }

    #[test]
    fn pulse_response_is_bounded(t in 0.0..30.0f64, dur in 0.1..10.0f64, kappa in 0.2..5.0f64, delta in -3.0..3.0f64, gaussian in any::<bool>()) {
        let mut base = settings(1.0, 1.0, 0.0);
        base.cavity_linewidth = kappa;
        base.cavity_detuning = delta - base.vacuum_rabi.powi(2) / base.detuning;
        let profile = if gaussian {
            PulseProfile::GaussianTruncated { duration: dur }
        } else {
            PulseProfile::Square { duration: dur }
        };
        let f = pulse_response(&profile, &base, t).unwrap();
        prop_assert!(f.norm() <= (1.0 - (-kappa * t).exp()) / kappa + 1e-10);
    }

    #[test]
    fn hadamard_access_maps_z_to_x(n in 2usize..=6, seed in any::<u64>(), k in 0usize..6, l in 0usize..6) {
        prop_assume!(k < n && l < n && k != l);
        let s = build_random_pure(n, seed).unwrap();
        let rx = Rotation::XAccess.apply(&s).unwrap();
        let ry = Rotation::YAccess.apply(&s).unwrap();
        let zz = s.expect_two_site(k, PauliAxis::Z, l, PauliAxis::Z).unwrap();
        prop_assert!((rx.expect_two_site(k, PauliAxis::X, l, PauliAxis::X).unwrap() - zz).norm() < 1e-12);
        prop_assert!((ry.expect_two_site(k, PauliAxis::Y, l, PauliAxis::Y).unwrap() - zz).norm() < 1e-12);
        let dense = common::rotate(&common::density_pure(&s), &common::hadamard_x());
        prop_assert!((common::pair(&dense, k, 0, l, 0) - zz).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rotated_frames_agree_with_direct_rotation(n in 2usize..=4, seed in any::<u64>(), phase in -PI..PI) {
        let s = build_random_pure(n, seed).unwrap();
        let g = ChainGeometry::along_x(n);
        let base = settings(2.0, 2.0, 0.0);
        let design = design_settings(&base, n, phase, true, DEFAULT_CONDITION_CAP).unwrap();
        let recs = simulate_records(&s, &g, &base, &PulseProfile::square(10.0).unwrap(), &design.settings, 10.0).unwrap();
        let sol = solve_symmetrized(&recs, phase, DEFAULT_CONDITION_CAP).unwrap();
        let tzz = sol.correlators.get(PauliAxis::Z, PauliAxis::Z).unwrap();
        let direct = PairCorrelations::compute(&Rotation::XAccess.apply(&s).unwrap()).symmetrized(phase)[0][0];
        prop_assert!((tzz - direct).norm() < 1e-10);
        for a in AXES {
            for b in AXES {
                let ab = sol.correlators.get(a, b).unwrap();
                let ba = sol.correlators.get(b, a).unwrap();
                prop_assert!((ab.conj() - ba).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn witness_from_records_matches_direct_on_random_states() {
    let base = settings(2.0, 2.0, 0.0);
    let profile = PulseProfile::square(10.0).unwrap();
    for seed in 0..50u64 {
        let n = 2 + (seed as usize % 4);
        let g = ChainGeometry::along_x(n);
        let s = build_random_pure(n, 1000 + seed).unwrap();
        let p = 0.2 + 0.05 * seed as f64;
        let spec = WitnessSpec::new(
            [0.7, -0.4, 0.9],
            [WaveVector::ZERO, WaveVector::along_chain(&g, p), WaveVector::along_chain(&g, PI)],
        )
        .unwrap();
        let mut settings = Vec::new();
        for ph in [0.0, p, PI] {
            settings.extend(design_settings(&base, n, ph, true, DEFAULT_CONDITION_CAP).unwrap().settings);
        }
        let recs = simulate_records(&s, &g, &base, &profile, &settings, 10.0).unwrap();
        let w = witness_from_records(&recs, &g, &spec, DEFAULT_CONDITION_CAP).unwrap();
        let direct = witness_general(&s, &g, &spec).unwrap();
        assert!((w.value - direct).abs() < 1e-8, "seed {seed}: {} vs {direct}", w.value);
    }
}

#[test]
fn dicke_six_three_witness_pinned_by_dense_oracle() {
    let s = build_dicke(6, 3).unwrap();
    let dense = common::witness_dicke(&common::density_pure(&s));
    assert!((dense - -0.4).abs() < 1e-12, "{dense}");
    let w = witness_dicke(&s, &ChainGeometry::along_x(6)).unwrap();
    assert!((w - -0.4).abs() < 1e-12);
}

#[test]
fn dicke_zz_correlation_closed_form() {
    for n in 2..=8usize {
        for k in 0..=n {
            let s = build_dicke(n, k).unwrap();
            let nf = n as f64;
            let want = ((nf - 2.0 * k as f64).powi(2) - nf) / (nf * (nf - 1.0));
            let got = s.expect_two_site(0, PauliAxis::Z, n - 1, PauliAxis::Z).unwrap().re;
            assert!((got - want).abs() < 1e-12, "D({n},{k})");
        }
    }
}

#[test]
fn expect_two_site_examples_against_dense() {
    let d = build_dicke(2, 1).unwrap();
    let rho = common::density_pure(&d);
    assert!((common::pair(&rho, 0, 0, 1, 0).re - 1.0).abs() < 1e-12);
    assert!((common::pair(&rho, 0, 2, 1, 2).re + 1.0).abs() < 1e-12);
    assert!((d.expect_two_site(0, PauliAxis::X, 1, PauliAxis::X).unwrap().re - 1.0).abs() < 1e-12);
    assert!((d.expect_two_site(0, PauliAxis::Z, 1, PauliAxis::Z).unwrap().re + 1.0).abs() < 1e-12);
    let up = SpinState::basis(2, 0).unwrap();
    assert!((up.expect_two_site(0, PauliAxis::Z, 1, PauliAxis::Z).unwrap().re - 1.0).abs() < 1e-12);
}

#[test]
fn x_product_state_general_witness() {
    let s = build_product(&[(PI / 2.0, 0.0), (PI / 2.0, 0.0)]).unwrap();
    let spec = WitnessSpec::new([1.0, 0.0, 0.0], [WaveVector::ZERO; 3]).unwrap();
    let w = witness_general(&s, &ChainGeometry::along_x(2), &spec).unwrap();
    assert!(w.abs() < 1e-12);
}

#[test]
fn dicke_pair_output_intensity_pinned() {
    use bragg_core::scattering::{output_intensity, ProbeGeometry, ScatteringChannel};
    let s = build_dicke(2, 1).unwrap();
    let g = ChainGeometry::along_x(2);
    let mut base = settings(1.0, 1.0, 0.0);
    // δ_c′ = 0
    base.cavity_detuning = -base.vacuum_rabi.powi(2) / base.detuning;
    let alpha = base.alpha_0();
    let probe = ProbeGeometry { pump: WaveVector::ZERO, cavity: WaveVector::ZERO };
    for dt in [0.5, 2.0, 8.0] {
        let profile = PulseProfile::square(dt).unwrap();
        let r = output_intensity(&s, &g, &base, &profile, &probe, ScatteringChannel::Mode1, dt, true).unwrap();
        let ideal = 8.0 * alpha * alpha * (1.0 - (-dt).exp()).powi(2);
        let dense = common::intensity(&common::density_pure(&s), alpha, alpha, 0.0, 0.0);
        assert!((dense - 4.0 * alpha * alpha).abs() < 1e-14);
        assert!((r.i_out - ideal).abs() < 1e-9 * ideal, "{} vs {ideal}", r.i_out);
    }
}

#[test]
fn quadrature_matches_simpson_for_gaussian_pulse() {
    let mut base = settings(1.0, 1.0, 0.0);
    base.cavity_linewidth = 0.7;
    let profile = PulseProfile::GaussianTruncated { duration: 4.0 };
    let env = |t: f64| profile.envelope(t);
    for t in [0.5, 1.7, 3.9, 4.0] {
        let f = pulse_response(&profile, &base, t).unwrap();
        let s = common::pulse_response_simpson(env, 0.7, base.shifted_cavity_detuning(), t, 20_000);
        assert!((f - s).norm() < 1e-9, "t={t}");
    }
    let sq = PulseProfile::square(3.0).unwrap();
    let f = pulse_response(&sq, &base, 2.0).unwrap();
    assert!((f - square_pulse_response(&base, 3.0, 2.0)).norm() < 1e-10);
}
