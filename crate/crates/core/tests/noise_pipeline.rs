use bragg_core::noise::{noisy_witness_pipeline, DetectionModel, NoiseOptions};
use bragg_core::scattering::LaserCavitySettings;
use bragg_core::spin::{build_dicke, build_random_product};
use bragg_core::structure_factor::{ChainGeometry, WaveVector, WitnessSpec};

fn base() -> LaserCavitySettings {
    LaserCavitySettings {
        rabi_0: 2.0,
        rabi_1: 2.0,
        phase: 0.0,
        vacuum_rabi: 1.0,
        detuning: 100.0,
        cavity_detuning: 0.0,
        cavity_linewidth: 1.0,
        atomic_linewidth: 0.0,
    }
}

fn detector(shots: u64, seed: u64) -> DetectionModel {
    DetectionModel { efficiency: 0.8, window: 2.0, shots, seed }
}

#[test]
fn zero_spec_is_exact() {
    let s = build_dicke(3, 1).unwrap();
    let spec = WitnessSpec::new([0.0; 3], [WaveVector::ZERO; 3]).unwrap();
    let r = noisy_witness_pipeline(&s, &ChainGeometry::along_x(3), &base(), &detector(10, 0), &NoiseOptions::default(), &spec)
        .unwrap();
    assert_eq!(r.witness.value, 1.0);
    assert_eq!(r.witness.std_error, Some(0.0));
}

#[test]
fn single_shot_has_no_error_bar() {
    let s = build_dicke(4, 2).unwrap();
    let r = noisy_witness_pipeline(&s, &ChainGeometry::along_x(4), &base(), &detector(1, 3), &NoiseOptions::default(), &WitnessSpec::dicke())
        .unwrap();
    assert!(r.witness.std_error.is_none());
}

#[test]
fn bright_limit_matches_noiseless() {
    let s = build_dicke(4, 2).unwrap();
    let opts = NoiseOptions { mean_photons_per_shot: 1e6, ..NoiseOptions::default() };
    let r = noisy_witness_pipeline(&s, &ChainGeometry::along_x(4), &base(), &detector(50, 9), &opts, &WitnessSpec::dicke())
        .unwrap();
    let se = r.witness.std_error.unwrap();
    assert!((r.witness.value - r.noiseless_witness).abs() < 3.0 * se, "{:?} vs {}", r.witness, r.noiseless_witness);
    assert!(se < 1e-2);
}

#[test]
fn repeated_runs_are_unbiased() {
    let g = ChainGeometry::along_x(4);
    let states = [build_dicke(4, 2).unwrap(), build_random_product(4, 17).unwrap()];
    for s in &states {
        let reps = 200;
        let mut vals = Vec::new();
        let mut ses = Vec::new();
        let mut truth = 0.0;
        for seed in 0..reps {
            let r = noisy_witness_pipeline(s, &g, &base(), &detector(100, seed), &NoiseOptions::default(), &WitnessSpec::dicke())
                .unwrap();
            truth = r.noiseless_witness;
            vals.push(r.witness.value);
            ses.push(r.witness.std_error.unwrap());
        }
        let n = reps as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let spread = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mean_se = ses.iter().sum::<f64>() / n;
        assert!((mean - truth).abs() < 3.0 * spread / n.sqrt(), "mean {mean} truth {truth} spread {spread}");
        assert!((mean_se / spread - 1.0).abs() < 0.25, "propagated {mean_se} vs empirical {spread}");
    }
}

#[test]
fn bootstrap_agrees_with_linear_propagation() {
    let s = build_dicke(4, 2).unwrap();
    let opts = NoiseOptions { bootstrap_resamples: Some(200), ..NoiseOptions::default() };
    let r = noisy_witness_pipeline(&s, &ChainGeometry::along_x(4), &base(), &detector(400, 21), &opts, &WitnessSpec::dicke())
        .unwrap();
    let lin = r.witness.std_error.unwrap();
    let boot = r.bootstrap_std_error.unwrap();
    assert!((boot / lin - 1.0).abs() < 0.3, "{lin} vs {boot}");
}

#[test]
fn report_serialization_is_deterministic() {
    let s = build_dicke(4, 2).unwrap();
    let g = ChainGeometry::along_x(4);
    let opts = NoiseOptions { bootstrap_resamples: Some(20), ..NoiseOptions::default() };
    let a = noisy_witness_pipeline(&s, &g, &base(), &detector(200, 5), &opts, &WitnessSpec::dicke()).unwrap();
    let b = noisy_witness_pipeline(&s, &g, &base(), &detector(200, 5), &opts, &WitnessSpec::dicke()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = noisy_witness_pipeline(&s, &g, &base(), &detector(200, 6), &opts, &WitnessSpec::dicke()).unwrap();
    assert_ne!(a.witness.value, c.witness.value);
}
