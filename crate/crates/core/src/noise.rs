//! Photon shot noise and error propagation for witness estimates.
//!
//! Each setting is detected for `shots` independent runs. A run yields a
//! Poisson count with mean `λ = η · rate · T_det`, where `rate` is the photon
//! flux per unit normalized intensity times ĩ. The flux scale stands in for
//! the 2κ|f|² calibration and is chosen so that the average λ over the design
//! equals `mean_photons_per_shot`.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; setting `i` draws from
//! stream `i`, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{design, domain, Result};
use crate::reconstruction::{
    design_settings, fitted_intensities, fold_phase, solve_symmetrized, witness_from_records, MeasurementSetting,
    Unknown, PHASE_TOL,
};
use crate::records::{simulate_records, CountSummary, RecordSet};
use crate::scattering::{LaserCavitySettings, PulseProfile, Rotation, ScatteringChannel};
use crate::spin::PauliAxis;
use crate::structure_factor::{witness_general, ChainGeometry, WitnessSpec};

pub const NOISE_REPORT_VERSION: u32 = 1;
/// Per-shot mean above which sampling is refused.
pub const LAMBDA_GUARD: f64 = 1e9;
pub const DEFAULT_MEAN_PHOTONS: f64 = 10.0;
pub const DEFAULT_BOOTSTRAP: usize = 200;

// Bootstrap resampling uses a seed distinct from the count sampling.
const BOOTSTRAP_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    /// η ∈ (0, 1].
    pub efficiency: f64,
    /// T_det > 0.
    pub window: f64,
    /// M ≥ 1 shots per setting.
    pub shots: u64,
    pub seed: u64,
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return domain(format!("detection efficiency {} outside (0, 1]", self.efficiency));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return domain(format!("integration window {} must be positive", self.window));
        }
        if self.shots == 0 {
            return domain("shots per setting must be at least 1");
        }
        Ok(())
    }

    fn rate_to_lambda(&self) -> f64 {
        self.efficiency * self.window
    }
}

/// An estimate with its standard error. `std_error` is `None` when it cannot
/// be estimated, e.g. from a single shot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyEstimate {
    pub value: f64,
    pub std_error: Option<f64>,
    pub n_shots: u64,
}

/// M Poisson counts with mean η · rate · T_det on stream 0.
pub fn sample_counts(mean_rate: f64, model: &DetectionModel) -> Result<Vec<u64>> {
    sample_counts_stream(mean_rate, model, 0)
}

/// As [`sample_counts`] on an explicit stream of the model's seed.
pub fn sample_counts_stream(mean_rate: f64, model: &DetectionModel, stream: u64) -> Result<Vec<u64>> {
    model.validate()?;
    if !(mean_rate >= 0.0 && mean_rate.is_finite()) {
        return domain(format!("mean rate must be finite and non-negative, got {mean_rate}"));
    }
    let lambda = model.rate_to_lambda() * mean_rate;
    if lambda > LAMBDA_GUARD {
        return domain(format!("per-shot mean {lambda:.3e} exceeds guard {LAMBDA_GUARD:.0e}"));
    }
    let n = model.shots as usize;
    if lambda == 0.0 {
        return Ok(vec![0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(stream);
    let dist = Poisson::new(lambda).map_err(|e| crate::Error::Domain(format!("Poisson({lambda}): {e}")))?;
    Ok((0..n).map(|_| dist.sample(&mut rng) as u64).collect())
}

fn mean_and_std(counts: &[u64]) -> (f64, Option<f64>) {
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    if counts.len() < 2 {
        return (mean, None);
    }
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Rate estimate mean(counts)/(η T_det) with standard error s/√M/(η T_det).
pub fn estimate_intensity(counts: &[u64], model: &DetectionModel) -> Result<NoisyEstimate> {
    model.validate()?;
    if counts.is_empty() {
        return domain("cannot estimate an intensity from zero shots");
    }
    let k = model.rate_to_lambda();
    let (mean, std) = mean_and_std(counts);
    let m = counts.len() as f64;
    Ok(NoisyEstimate {
        value: mean / k,
        std_error: std.map(|s| s / m.sqrt() / k),
        n_shots: counts.len() as u64,
    })
}

/// Knobs of the noisy pipeline beyond the detector itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseOptions {
    /// Average λ per shot over all settings of the design.
    pub mean_photons_per_shot: f64,
    /// Bootstrap resamples over shots; `None` disables the cross-check.
    pub bootstrap_resamples: Option<usize>,
    pub condition_cap: f64,
    pub profile: PulseProfile,
    pub time: f64,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        NoiseOptions {
            mean_photons_per_shot: DEFAULT_MEAN_PHOTONS,
            bootstrap_resamples: None,
            condition_cap: crate::reconstruction::DEFAULT_CONDITION_CAP,
            profile: PulseProfile::Square { duration: 10.0 },
            time: 10.0,
        }
    }
}

/// Per-setting sampling summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingNoise {
    pub index: usize,
    pub channel: ScatteringChannel,
    pub rotation: Rotation,
    pub rabi_0: f64,
    pub rabi_1: f64,
    pub phase: f64,
    pub phase_per_site: f64,
    pub lambda: f64,
    pub mean_count: f64,
    pub count_std: Option<f64>,
    pub true_intensity: f64,
    pub estimated_intensity: f64,
    /// Sample standard error of `estimated_intensity`.
    pub std_error: Option<f64>,
    /// Standard error used to weight the solve.
    pub weight_std_error: Option<f64>,
}

/// Weighted solve at one phase, with the covariance of its unknowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCovariance {
    pub phase_per_site: f64,
    pub columns: Vec<Unknown>,
    pub values: Vec<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub condition_number: f64,
    pub reduced_chi2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub format_version: u32,
    pub seed: u64,
    pub model: DetectionModel,
    pub mean_photons_per_shot: f64,
    /// Photon flux per unit normalized intensity.
    pub rate_scale: f64,
    pub settings: Vec<SettingNoise>,
    pub solves: Vec<PhaseCovariance>,
    pub witness: NoisyEstimate,
    pub bootstrap_std_error: Option<f64>,
    pub bootstrap_resamples: Option<usize>,
    /// Exact witness of the simulated state.
    pub noiseless_witness: f64,
}

/// Distinct folded phases needed by a witness, each with whether z is involved.
fn witness_phases(geometry: &ChainGeometry, spec: &WitnessSpec) -> Vec<(f64, bool)> {
    let mut out: Vec<(f64, bool)> = Vec::new();
    for (axis, _, p) in spec.terms(geometry) {
        let (fp, _) = fold_phase(p);
        let z = axis == PauliAxis::Z;
        match out.iter_mut().find(|(q, _)| (q - fp).abs() < PHASE_TOL) {
            Some(e) => e.1 |= z,
            None => out.push((fp, z)),
        }
    }
    out
}

/// Default designs covering every phase a witness needs.
pub fn witness_design(
    base: &LaserCavitySettings,
    geometry: &ChainGeometry,
    spec: &WitnessSpec,
    condition_cap: f64,
) -> Result<Vec<MeasurementSetting>> {
    let mut settings = Vec::new();
    for (p, needs_z) in witness_phases(geometry, spec) {
        settings.extend(design_settings(base, geometry.n_sites(), p, needs_z, condition_cap)?.settings);
    }
    Ok(settings)
}

/// Records carrying the count estimates. When M ≥ 2 the solver weights use
/// the Poisson variance of an unweighted fit instead of the per-setting sample
/// variance, which is correlated with the sample mean and would bias the fit.
fn noisy_records(
    truth: &RecordSet,
    samples: &[(f64, Vec<u64>)],
    model: &DetectionModel,
    rate_scale: f64,
    calibration: f64,
    phases: &[f64],
    condition_cap: f64,
) -> Result<RecordSet> {
    let mut set = truth.clone();
    let k = model.rate_to_lambda();
    let m = model.shots as f64;
    for (rec, (_, counts)) in set.records.iter_mut().zip(samples) {
        let est = estimate_intensity(counts, model)?;
        rec.normalized_intensity = est.value / rate_scale;
        rec.output_intensity = calibration * rec.normalized_intensity;
        rec.counts = Some(CountSummary { n_shots: est.n_shots, mean_count: est.value * k, std_error: None });
    }
    if model.shots < 2 {
        return Ok(set);
    }
    let mut fitted = vec![None; set.records.len()];
    for &p in phases {
        for (slot, f) in fitted.iter_mut().zip(fitted_intensities(&set, p, condition_cap)?) {
            if f.is_some() {
                *slot = f;
            }
        }
    }
    for (rec, fit) in set.records.iter_mut().zip(fitted) {
        let Some(fit) = fit else { continue };
        // One count in M shots bounds the resolution of a dark setting.
        let lambda = (fit * rate_scale * k).max(1.0 / m);
        if let Some(c) = rec.counts.as_mut() {
            c.std_error = Some((lambda / m).sqrt() / (k * rate_scale));
        }
    }
    Ok(set)
}

fn flux_scale(truth: &RecordSet, model: &DetectionModel, mean_photons_per_shot: f64) -> Result<f64> {
    if !(mean_photons_per_shot > 0.0 && mean_photons_per_shot.is_finite()) {
        return domain("mean photons per shot must be positive");
    }
    if truth.records.is_empty() {
        return design("no settings to sample");
    }
    let mean_i = truth.records.iter().map(|r| r.normalized_intensity).sum::<f64>() / truth.records.len() as f64;
    if !(mean_i > 0.0) {
        return design("design produces no scattered light; cannot calibrate count rates");
    }
    Ok(mean_photons_per_shot / (model.rate_to_lambda() * mean_i))
}

/// (λ, counts) per record; record `i` samples on stream `i`.
fn draw_counts(truth: &RecordSet, model: &DetectionModel, rate_scale: f64) -> Result<Vec<(f64, Vec<u64>)>> {
    let k = model.rate_to_lambda();
    truth
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let rate = rate_scale * r.normalized_intensity.max(0.0);
            Ok((rate * k, sample_counts_stream(rate, model, i as u64)?))
        })
        .collect()
}

/// Replaces the noiseless intensities of `truth` by shot-noise estimates,
/// with λ averaging `mean_photons_per_shot` over the set. Intensities stay in
/// normalized units; `counts` holds the per-setting summary.
pub fn sample_records(
    truth: &RecordSet,
    model: &DetectionModel,
    mean_photons_per_shot: f64,
    profile: &PulseProfile,
    condition_cap: f64,
) -> Result<RecordSet> {
    model.validate()?;
    let time = truth.records.first().map(|r| r.time).unwrap_or(0.0);
    let rate_scale = flux_scale(truth, model, mean_photons_per_shot)?;
    let calibration = crate::records::pulse_calibration(&truth.base, profile, time)?;
    let samples = draw_counts(truth, model, rate_scale)?;
    let phases = crate::reconstruction::record_phases(truth);
    noisy_records(truth, &samples, model, rate_scale, calibration, &phases, condition_cap)
}

/// Forward model → Poisson sampling per setting → weighted least squares →
/// witness, with the standard error propagated linearly through the solver.
pub fn noisy_witness_pipeline<S>(
    state: &S,
    geometry: &ChainGeometry,
    base: &LaserCavitySettings,
    model: &DetectionModel,
    options: &NoiseOptions,
    spec: &WitnessSpec,
) -> Result<NoiseReport>
where
    S: crate::scattering::Ensemble + crate::spin::SpinExpectation + ?Sized,
{
    model.validate()?;
    let noiseless_witness = witness_general(state, geometry, spec)?;
    let mut report = NoiseReport {
        format_version: NOISE_REPORT_VERSION,
        seed: model.seed,
        model: model.clone(),
        mean_photons_per_shot: options.mean_photons_per_shot,
        rate_scale: 0.0,
        settings: Vec::new(),
        solves: Vec::new(),
        witness: NoisyEstimate { value: 1.0, std_error: Some(0.0), n_shots: model.shots },
        bootstrap_std_error: None,
        bootstrap_resamples: options.bootstrap_resamples,
        noiseless_witness,
    };
    if spec.terms(geometry).is_empty() {
        report.bootstrap_std_error = options.bootstrap_resamples.map(|_| 0.0);
        return Ok(report);
    }

    let settings = witness_design(base, geometry, spec, options.condition_cap)?;
    let truth = simulate_records(state, geometry, base, &options.profile, &settings, options.time)?;
    let rate_scale = flux_scale(&truth, model, options.mean_photons_per_shot)?;
    let calibration = crate::records::pulse_calibration(base, &options.profile, options.time)?;
    let samples = draw_counts(&truth, model, rate_scale)?;
    let phases: Vec<f64> = witness_phases(geometry, spec).into_iter().map(|(p, _)| p).collect();
    let noisy = noisy_records(&truth, &samples, model, rate_scale, calibration, &phases, options.condition_cap)?;

    report.rate_scale = rate_scale;
    report.settings = truth
        .records
        .iter()
        .zip(&noisy.records)
        .zip(&samples)
        .enumerate()
        .map(|(index, ((t, n), (lambda, counts)))| {
            let s = &t.setting;
            Ok(SettingNoise {
                index,
                channel: s.channel,
                rotation: s.rotation,
                rabi_0: s.rabi_0,
                rabi_1: s.rabi_1,
                phase: s.phase,
                phase_per_site: s.phase_per_site,
                lambda: *lambda,
                mean_count: n.counts.map(|c| c.mean_count).unwrap_or(0.0),
                count_std: mean_and_std(counts).1,
                true_intensity: t.normalized_intensity,
                estimated_intensity: n.normalized_intensity,
                std_error: estimate_intensity(counts, model)?.std_error.map(|e| e / rate_scale),
                weight_std_error: n.std_error(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for &p in &phases {
        let sol = solve_symmetrized(&noisy, p, options.condition_cap)?;
        report.solves.push(PhaseCovariance {
            phase_per_site: p,
            columns: sol.columns,
            values: sol.values,
            covariance: sol.covariance,
            condition_number: sol.condition_number,
            reduced_chi2: sol.reduced_chi2,
        });
    }
    let w = witness_from_records(&noisy, geometry, spec, options.condition_cap)?;
    report.witness = NoisyEstimate { value: w.value, std_error: w.std_error, n_shots: model.shots };

    if let Some(b) = options.bootstrap_resamples {
        report.bootstrap_std_error =
            bootstrap_witness(&truth, &samples, model, rate_scale, calibration, &phases, geometry, spec, options, b)?;
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn bootstrap_witness(
    truth: &RecordSet,
    samples: &[(f64, Vec<u64>)],
    model: &DetectionModel,
    rate_scale: f64,
    calibration: f64,
    phases: &[f64],
    geometry: &ChainGeometry,
    spec: &WitnessSpec,
    options: &NoiseOptions,
    resamples: usize,
) -> Result<Option<f64>> {
    if resamples < 2 {
        return Ok(None);
    }
    let n_rec = samples.len() as u64;
    let values = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let resampled: Vec<(f64, Vec<u64>)> = samples
                .iter()
                .enumerate()
                .map(|(r, (lambda, counts))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ BOOTSTRAP_SEED_MIX);
                    rng.set_stream(b as u64 * n_rec + r as u64);
                    let draw = (0..counts.len()).map(|_| counts[rng.random_range(0..counts.len())]).collect();
                    (*lambda, draw)
                })
                .collect();
            let set = noisy_records(truth, &resampled, model, rate_scale, calibration, phases, options.condition_cap)?;
            Ok(witness_from_records(&set, geometry, spec, options.condition_cap)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Some(var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(shots: u64, seed: u64) -> DetectionModel {
        DetectionModel { efficiency: 1.0, window: 1.0, shots, seed }
    }

    #[test]
    fn zero_rate_gives_zero_counts() {
        assert!(sample_counts(0.0, &model(50, 1)).unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn poisson_mean_within_five_sigma() {
        let counts = sample_counts(100.0, &model(10_000, 3)).unwrap();
        let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        assert!((mean - 100.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn seeded_sampling_is_repeatable() {
        let a = sample_counts(7.5, &model(200, 11)).unwrap();
        assert_eq!(a, sample_counts(7.5, &model(200, 11)).unwrap());
        assert_ne!(a, sample_counts(7.5, &model(200, 12)).unwrap());
        assert_ne!(a, sample_counts_stream(7.5, &model(200, 11), 1).unwrap());
    }

    #[test]
    fn guard_and_validation() {
        assert!(sample_counts(2e9, &model(1, 0)).is_err());
        assert!(sample_counts(-1.0, &model(1, 0)).is_err());
        let bad = DetectionModel { efficiency: 1.5, ..model(1, 0) };
        assert!(sample_counts(1.0, &bad).is_err());
        assert!(sample_counts(1.0, &model(0, 0)).is_err());
    }

    #[test]
    fn constant_counts_have_zero_error() {
        let m = DetectionModel { efficiency: 0.5, window: 2.0, shots: 4, seed: 0 };
        let e = estimate_intensity(&[3, 3, 3, 3], &m).unwrap();
        assert_eq!(e.value, 3.0);
        assert_eq!(e.std_error, Some(0.0));
    }

    #[test]
    fn poisson_standard_error() {
        let m = model(10_000, 5);
        let e = estimate_intensity(&sample_counts(100.0, &m).unwrap(), &m).unwrap();
        let se = e.std_error.unwrap();
        assert!((se - 0.1).abs() < 0.02, "{se}");
    }

    #[test]
    fn single_shot_error_undefined() {
        let e = estimate_intensity(&[5], &model(1, 0)).unwrap();
        assert_eq!(e.std_error, None);
        assert!(estimate_intensity(&[], &model(1, 0)).is_err());
    }
}
