//! Forward model of the pump–probe Bragg measurement.
//!
//! After adiabatic elimination of the excited states, the cavity field picks up
//! `−f(t) B` with
//!
//! ```text
//! B = Σ_j (α₀ e^{iφ} S_j + α₁ e^{−iφ} S_j†) e^{i q·r_j}
//!   = Σ_j (α_x σ_j^x + α_y σ_j^y) e^{i q·r_j},
//! ```
//!
//! where `S_j = |0⟩⟨1|`. With vacuum initial cavity modes the normally ordered
//! output intensity is `I_out = 2κ |f(t)|² ⟨B†B⟩`, and `⟨B†B⟩ = I₀ + I_int`
//! splits into a single-site part and an interference part.
//!
//! Frequencies are in arbitrary but consistent units (the CLI defaults to κ).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::spin::{MixedState, PauliAxis, Sites, SpinExpectation, SpinState};
use crate::structure_factor::{real_part, ChainGeometry, PairCorrelations, WaveVector};

/// Residual imaginary part tolerated on the interference intensity.
pub const INTENSITY_IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserCavitySettings {
    /// Ω₀, pump Rabi frequency on |1⟩ → |e₀⟩.
    pub rabi_0: f64,
    /// Ω₁, pump Rabi frequency on |0⟩ → |e₁⟩.
    pub rabi_1: f64,
    /// φ, relative pump phase in radians.
    pub phase: f64,
    /// g, single-photon vacuum Rabi frequency.
    pub vacuum_rabi: f64,
    /// Δ = ω_L − ω₀.
    pub detuning: f64,
    /// δ_c = ω_L − ω_c.
    pub cavity_detuning: f64,
    /// κ, cavity field decay rate.
    pub cavity_linewidth: f64,
    /// γ, excited-state decay rate.
    pub atomic_linewidth: f64,
}

impl LaserCavitySettings {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rabi_0", self.rabi_0),
            ("rabi_1", self.rabi_1),
            ("phase", self.phase),
            ("vacuum_rabi", self.vacuum_rabi),
            ("detuning", self.detuning),
            ("cavity_detuning", self.cavity_detuning),
            ("cavity_linewidth", self.cavity_linewidth),
            ("atomic_linewidth", self.atomic_linewidth),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return domain(format!("{name} must be finite"));
        }
        if self.rabi_0 < 0.0 || self.rabi_1 < 0.0 {
            return domain("Rabi frequencies must be non-negative");
        }
        if self.detuning == 0.0 {
            return domain("detuning Δ must be nonzero");
        }
        if self.cavity_linewidth <= 0.0 {
            return domain("cavity linewidth κ must be positive");
        }
        if self.atomic_linewidth < 0.0 {
            return domain("atomic linewidth γ must be non-negative");
        }
        Ok(())
    }

    /// Copy with a different pump configuration.
    pub fn with_drive(&self, rabi_0: f64, rabi_1: f64, phase: f64) -> Self {
        LaserCavitySettings { rabi_0, rabi_1, phase, ..self.clone() }
    }

    /// α₀ = gΩ₀/Δ.
    pub fn alpha_0(&self) -> f64 {
        self.vacuum_rabi * self.rabi_0 / self.detuning
    }

    /// α₁ = gΩ₁/Δ.
    pub fn alpha_1(&self) -> f64 {
        self.vacuum_rabi * self.rabi_1 / self.detuning
    }

    /// δ_c′ = δ_c + g²/Δ, including the dynamical Stark shift.
    pub fn shifted_cavity_detuning(&self) -> f64 {
        self.cavity_detuning + self.vacuum_rabi * self.vacuum_rabi / self.detuning
    }

    pub fn drive(&self) -> Result<Drive> {
        self.validate()?;
        Ok(Drive { alpha_0: self.alpha_0(), alpha_1: self.alpha_1(), phase: self.phase })
    }
}

/// Effective Raman amplitudes (α₀, α₁, φ) entering the source operator B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub alpha_0: f64,
    pub alpha_1: f64,
    pub phase: f64,
}

/// α_x, α_y such that the per-site source is α_x σ^x + α_y σ^y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingCoefficients {
    pub alpha_x: C64,
    pub alpha_y: C64,
}

impl CouplingCoefficients {
    /// With `a = α₀e^{iφ}` and `b = α₁e^{−iφ}`: α_x = (a + b)/2, α_y = i(a − b)/2.
    ///
    /// This is the quoted display form of the coefficients with φ → −φ; the
    /// sign of φ is fixed here by the source term itself.
    pub fn from_drive(d: Drive) -> Self {
        let a = C64::from_polar(d.alpha_0, d.phase);
        let b = C64::from_polar(d.alpha_1, -d.phase);
        CouplingCoefficients {
            alpha_x: (a + b) / 2.0,
            alpha_y: C64::i() * (a - b) / 2.0,
        }
    }

    /// |α_x|² + |α_y|².
    pub fn total_weight(&self) -> f64 {
        self.alpha_x.norm_sqr() + self.alpha_y.norm_sqr()
    }

    /// Im{α_x α_y*}, the weight of the σᶻ term in I₀.
    pub fn chirality(&self) -> f64 {
        (self.alpha_x * self.alpha_y.conj()).im
    }
}

pub fn coupling_coefficients(settings: &LaserCavitySettings) -> Result<CouplingCoefficients> {
    Ok(CouplingCoefficients::from_drive(settings.drive()?))
}

/// The two intensity contributions in units where 2κ|f|² = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityComponents {
    /// Sum of single-atom intensities.
    pub i0: f64,
    /// Interference between different sites.
    pub i_int: f64,
}

impl IntensityComponents {
    /// ĩ = I₀ + I_int = ⟨B†B⟩.
    pub fn normalized(&self) -> f64 {
        self.i0 + self.i_int
    }
}

/// I₀ and I_int from a correlation table at the given phase per site.
pub fn intensity_from_table(
    table: &PairCorrelations,
    coeffs: &CouplingCoefficients,
    phase: f64,
) -> Result<IntensityComponents> {
    let n = table.n_sites() as f64;
    let z_sum = table.single_sums()[2];
    let i0 = n * coeffs.total_weight() + 2.0 * coeffs.chirality() * z_sum;
    let t = table.symmetrized(phase);
    let (ax, ay) = (coeffs.alpha_x, coeffs.alpha_y);
    let i_int = ax.norm_sqr() * t[0][0]
        + ay.norm_sqr() * t[1][1]
        + ax.conj() * ay * t[0][1]
        + ax * ay.conj() * t[1][0];
    let scale = n * n * coeffs.total_weight();
    let i_int = real_part(i_int / scale.max(f64::MIN_POSITIVE), INTENSITY_IMAG_TOL, "I_int")? * scale;
    Ok(IntensityComponents { i0, i_int })
}

pub fn intensity_components<S: SpinExpectation + ?Sized>(
    state: &S,
    geometry: &ChainGeometry,
    coeffs: &CouplingCoefficients,
    q: &WaveVector,
) -> Result<IntensityComponents> {
    geometry.check_compatible(state.n_sites())?;
    let table = PairCorrelations::compute(state);
    intensity_from_table(&table, coeffs, geometry.phase_per_site(q))
}

fn source_norm_sqr(state: &SpinState, drive: &Drive, phase: f64) -> f64 {
    let n = state.n_sites();
    let a = C64::from_polar(drive.alpha_0, drive.phase);
    let b = C64::from_polar(drive.alpha_1, -drive.phase);
    let site_phase: Vec<C64> = (0..n).map(|j| C64::from_polar(1.0, phase * j as f64)).collect();
    let mut out = vec![C64::new(0.0, 0.0); state.dim()];
    for (i, amp) in state.amplitudes().iter().enumerate() {
        if amp.re == 0.0 && amp.im == 0.0 {
            continue;
        }
        for (j, w) in site_phase.iter().enumerate() {
            let mask = 1usize << j;
            if i & mask != 0 {
                // S_j = |0⟩⟨1|
                out[i ^ mask] += a * w * amp;
            } else {
                // S_j† = |1⟩⟨0|
                out[i | mask] += b * w * amp;
            }
        }
    }
    out.iter().map(|z| z.norm_sqr()).sum()
}

/// Pure-state ensembles the direct oracle can act on.
pub trait Ensemble {
    fn members(&self) -> Vec<(f64, &SpinState)>;
}

impl Ensemble for SpinState {
    fn members(&self) -> Vec<(f64, &SpinState)> {
        vec![(1.0, self)]
    }
}

impl Ensemble for MixedState {
    fn members(&self) -> Vec<(f64, &SpinState)> {
        self.components().iter().map(|(w, s)| (*w, s)).collect()
    }
}

/// ⟨B†B⟩ computed as ‖Bψ‖² by applying the raising/lowering source operator
/// directly to the amplitudes. Independent of the Pauli decomposition used by
/// [`intensity_components`].
pub fn direct_intensity_oracle<E: Ensemble + ?Sized>(
    state: &E,
    geometry: &ChainGeometry,
    drive: &Drive,
    q: &WaveVector,
) -> Result<f64> {
    let members = state.members();
    for (_, s) in &members {
        geometry.check_compatible(s.n_sites())?;
    }
    let phase = geometry.phase_per_site(q);
    Ok(members.iter().map(|(w, s)| w * source_norm_sqr(s, drive, phase)).sum())
}

/// Temporal envelope ϱ(t) of the pump pulses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PulseProfile {
    /// ϱ = 1 on [0, Δt].
    Square { duration: f64 },
    /// Gaussian centred at Δt/2 with σ = Δt/6, cut to [0, Δt].
    GaussianTruncated { duration: f64 },
    /// Piecewise-linear through (t, ϱ) samples, zero outside the sampled span.
    CustomSampled { samples: Vec<(f64, f64)> },
}

const ENVELOPE_MAX_TOL: f64 = 1e-12;

impl PulseProfile {
    pub fn square(duration: f64) -> Result<Self> {
        let p = PulseProfile::Square { duration };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PulseProfile::Square { duration } | PulseProfile::GaussianTruncated { duration } => {
                if !(*duration > 0.0 && duration.is_finite()) {
                    return domain(format!("pulse duration must be positive, got {duration}"));
                }
            }
            PulseProfile::CustomSampled { samples } => {
                if samples.len() < 2 {
                    return domain("custom pulse needs at least two samples");
                }
                if samples.iter().any(|(t, r)| !t.is_finite() || !r.is_finite()) {
                    return domain("custom pulse samples must be finite");
                }
                if samples[0].0 < 0.0 {
                    return domain("custom pulse must vanish before t = 0");
                }
                if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return domain("custom pulse sample times must increase strictly");
                }
                let max = samples.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max);
                if (max - 1.0).abs() > ENVELOPE_MAX_TOL {
                    return domain(format!("custom pulse must have max |ϱ| = 1, found {max}"));
                }
            }
        }
        Ok(())
    }

    /// Δt, the characteristic duration.
    pub fn duration(&self) -> f64 {
        match self {
            PulseProfile::Square { duration } | PulseProfile::GaussianTruncated { duration } => {
                *duration
            }
            PulseProfile::CustomSampled { samples } => samples[samples.len() - 1].0 - samples[0].0,
        }
    }

    /// Time after which ϱ is identically zero.
    pub fn end(&self) -> f64 {
        match self {
            PulseProfile::CustomSampled { samples } => samples[samples.len() - 1].0,
            _ => self.duration(),
        }
    }

    pub fn envelope(&self, t: f64) -> f64 {
        match self {
            PulseProfile::Square { duration } => {
                if (0.0..=*duration).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            PulseProfile::GaussianTruncated { duration } => {
                if (0.0..=*duration).contains(&t) {
                    let sigma = duration / 6.0;
                    let x = (t - duration / 2.0) / sigma;
                    (-0.5 * x * x).exp()
                } else {
                    0.0
                }
            }
            PulseProfile::CustomSampled { samples } => {
                let first = samples[0].0;
                let last = samples[samples.len() - 1].0;
                if t < first || t > last {
                    return 0.0;
                }
                let idx = samples.partition_point(|(s, _)| *s <= t).clamp(1, samples.len() - 1);
                let (t0, r0) = samples[idx - 1];
                let (t1, r1) = samples[idx];
                r0 + (r1 - r0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Points where the envelope or its derivative is discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            PulseProfile::Square { duration } | PulseProfile::GaussianTruncated { duration } => {
                vec![0.0, *duration]
            }
            PulseProfile::CustomSampled { samples } => samples.iter().map(|(t, _)| *t).collect(),
        }
    }
}

// Gauss–Kronrod 7/15 nodes and weights on [−1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = C64::new(0.0, 0.0);
    let mut gauss = C64::new(0.0, 0.0);
    for (i, (&x, &wk)) in GK_NODES.iter().zip(&K15_WEIGHTS).enumerate() {
        let vals = if x == 0.0 {
            let v = f(c);
            kron += wk * v;
            gauss += G7_WEIGHTS[3] * v;
            continue;
        } else {
            f(c - h * x) + f(c + h * x)
        };
        kron += wk * vals;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * vals;
        }
    }
    let diff = (kron - gauss) * h;
    (kron * h, diff.re.abs(), diff.im.abs())
}

const QUAD_ABS_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 4000;

/// Adaptive Gauss–Kronrod integration of a complex function, reaching an
/// absolute error estimate below `tol` on each of the real and imaginary parts.
pub fn integrate_complex<F: Fn(f64) -> C64>(f: F, points: &[f64], tol: f64) -> Result<C64> {
    // (a, b, value, err_re, err_im)
    let mut active: Vec<(f64, f64, C64, f64, f64)> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, er, ei) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, er, ei)
        })
        .collect();
    let mut evaluations = active.len();
    loop {
        let (err_re, err_im) = active.iter().fold((0.0, 0.0), |(r, i), s| (r + s.3, i + s.4));
        if err_re <= tol && err_im <= tol {
            return Ok(active.iter().map(|s| s.2).sum());
        }
        if active.len() >= QUAD_MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature did not reach {tol:.1e} after {evaluations} panels \
                 (error estimate re {err_re:.3e}, im {err_im:.3e})"
            )));
        }
        let (worst, _) = active
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.3.max(s.4)))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let (a, b, ..) = active.swap_remove(worst);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Err(Error::Numerical(format!(
                "quadrature panel [{a}, {b}] cannot be bisected further"
            )));
        }
        for (lo, hi) in [(a, m), (m, b)] {
            let (v, er, ei) = gk15(&f, lo, hi);
            active.push((lo, hi, v, er, ei));
        }
        evaluations += 2;
    }
}

/// f(t) = i ∫₀ᵗ e^{−(κ − iδ_c′)(t − τ)} ϱ(τ) dτ by adaptive quadrature.
pub fn pulse_response(profile: &PulseProfile, settings: &LaserCavitySettings, t: f64) -> Result<C64> {
    profile.validate()?;
    settings.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("pulse response needs t ≥ 0, got {t}"));
    }
    let rate = C64::new(settings.cavity_linewidth, -settings.shifted_cavity_detuning());
    let upper = t.min(profile.end());
    let mut points = vec![0.0];
    points.extend(profile.breakpoints().into_iter().filter(|&p| p > 0.0 && p < upper));
    points.push(upper);
    if upper <= 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let integrand = |tau: f64| (-rate * (t - tau)).exp() * profile.envelope(tau);
    let integral = integrate_complex(integrand, &points, QUAD_ABS_TOL)?;
    Ok(C64::i() * integral)
}

/// Closed form of f(t) for a square pulse of length `duration`:
/// i(1 − e^{−λt})/λ while the pulse is on, then ring-down as e^{−λ(t − Δt)}.
pub fn square_pulse_response(settings: &LaserCavitySettings, duration: f64, t: f64) -> C64 {
    let rate = C64::new(settings.cavity_linewidth, -settings.shifted_cavity_detuning());
    if t <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let on = t.min(duration);
    let plateau = C64::i() * (C64::new(1.0, 0.0) - (-rate * on).exp()) / rate;
    if t <= duration {
        plateau
    } else {
        plateau * (-rate * (t - duration)).exp()
    }
}

/// Which cavity mode is detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScatteringChannel {
    /// Mode at wave vector k; transferred wave vector q₁ = k_L − k.
    Mode1,
    /// Degenerate counter-propagating mode at −k; q₂ = k_L + k.
    Mode2,
}

impl ScatteringChannel {
    pub fn label(self) -> &'static str {
        match self {
            ScatteringChannel::Mode1 => "mode1",
            ScatteringChannel::Mode2 => "mode2",
        }
    }
}

/// Pump and cavity wave vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGeometry {
    pub pump: WaveVector,
    pub cavity: WaveVector,
}

impl ProbeGeometry {
    pub fn transferred(&self, channel: ScatteringChannel) -> WaveVector {
        match channel {
            ScatteringChannel::Mode1 => self.pump.sub(self.cavity),
            ScatteringChannel::Mode2 => self.pump.add(self.cavity),
        }
    }
}

/// Full simulated detector signal at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityResult {
    pub i0: f64,
    pub i_int: f64,
    /// ĩ = I₀ + I_int.
    pub normalized: f64,
    pub pulse_response: C64,
    /// I_out = 2κ|f(t)|² ĩ.
    pub i_out: f64,
    pub time: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn output_intensity<S: SpinExpectation + ?Sized>(
    state: &S,
    geometry: &ChainGeometry,
    settings: &LaserCavitySettings,
    profile: &PulseProfile,
    probe: &ProbeGeometry,
    channel: ScatteringChannel,
    t: f64,
    allow_regime_violation: bool,
) -> Result<IntensityResult> {
    let report = check_regime(settings, profile, DEFAULT_REGIME_THRESHOLD);
    if !report.passed() && !allow_regime_violation {
        return Err(Error::Regime(report.failure_messages()));
    }
    let coeffs = coupling_coefficients(settings)?;
    let parts = intensity_components(state, geometry, &coeffs, &probe.transferred(channel))?;
    let f = pulse_response(profile, settings, t)?;
    Ok(IntensityResult {
        i0: parts.i0,
        i_int: parts.i_int,
        normalized: parts.normalized(),
        pulse_response: f,
        i_out: calibration_factor(settings, f) * parts.normalized(),
        time: t,
    })
}

/// 2κ|f(t)|², the factor converting ĩ into output photon flux.
pub fn calibration_factor(settings: &LaserCavitySettings, f: C64) -> f64 {
    2.0 * settings.cavity_linewidth * f.norm_sqr()
}

/// Global basis rotation applied before the scattering pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    None,
    /// (σˣ + σᶻ)/√2: exchanges x and z, reads Σσˣ through the I₀ term.
    XAccess,
    /// (σʸ + σᶻ)/√2: exchanges y and z, reads Σσʸ through the I₀ term.
    YAccess,
}

impl Rotation {
    pub const ALL: [Rotation; 3] = [Rotation::None, Rotation::XAccess, Rotation::YAccess];

    pub fn label(self) -> &'static str {
        match self {
            Rotation::None => "none",
            Rotation::XAccess => "x_access",
            Rotation::YAccess => "y_access",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Rotation::ALL.into_iter().find(|r| r.label() == s)
    }

    /// ρ′ = U ρ U on every site.
    pub fn apply(self, state: &SpinState) -> Result<SpinState> {
        match self {
            Rotation::None => Ok(state.clone()),
            r => state.apply_single_qubit_unitary(&hadamard_rotation(r), &Sites::All),
        }
    }
}

/// The single-qubit factor of the global Hadamard-type rotation.
pub fn hadamard_rotation(rotation: Rotation) -> Matrix2<C64> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    match rotation {
        Rotation::None => Matrix2::identity(),
        Rotation::XAccess => (PauliAxis::X.matrix() + PauliAxis::Z.matrix()) * s,
        Rotation::YAccess => (PauliAxis::Y.matrix() + PauliAxis::Z.matrix()) * s,
    }
}

pub const DEFAULT_REGIME_THRESHOLD: f64 = 10.0;

/// One "lhs ≫ rhs" condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub condition: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub threshold: f64,
    pub checks: Vec<RegimeCheck>,
}

impl RegimeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failure_messages(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                format!(
                    "{}: {:.6} / {:.6} = {:.3} < {}",
                    c.condition, c.lhs, c.rhs, c.ratio, self.threshold
                )
            })
            .collect()
    }
}

/// Tests the far-detuned, bad-cavity and adiabatic-pulse inequalities,
/// reading "≫" as `lhs / rhs ≥ threshold`.
pub fn check_regime(
    settings: &LaserCavitySettings,
    profile: &PulseProfile,
    threshold: f64,
) -> RegimeReport {
    let delta = settings.detuning.abs();
    let kappa = settings.cavity_linewidth;
    let pairs = [
        ("|Δ| ≫ g", delta, settings.vacuum_rabi.abs()),
        ("|Δ| ≫ Ω₀", delta, settings.rabi_0.abs()),
        ("|Δ| ≫ Ω₁", delta, settings.rabi_1.abs()),
        ("|Δ| ≫ |δ_c|", delta, settings.cavity_detuning.abs()),
        ("|Δ| ≫ κ", delta, kappa),
        ("|Δ| ≫ γ", delta, settings.atomic_linewidth.abs()),
        ("κ ≫ |α₀|", kappa, settings.alpha_0().abs()),
        ("κ ≫ |α₁|", kappa, settings.alpha_1().abs()),
        ("Δt ≫ 1/|Δ|", profile.duration(), 1.0 / delta),
    ];
    let checks = pairs
        .into_iter()
        .map(|(condition, lhs, rhs)| {
            let ratio = if rhs == 0.0 { f64::INFINITY } else { lhs / rhs };
            RegimeCheck {
                condition: condition.to_string(),
                lhs,
                rhs,
                ratio,
                pass: ratio >= threshold,
            }
        })
        .collect();
    RegimeReport { threshold, checks }
}

/// True when d·(axis·k) is within `tolerance` of a multiple of 2π, so that
/// the cavity wave vector contributes no phase between neighbouring sites.
pub fn check_commensurability(geometry: &ChainGeometry, k: &WaveVector, tolerance: f64) -> Result<bool> {
    if !(tolerance > 0.0) {
        return domain("commensurability tolerance must be positive");
    }
    let phase = geometry.phase_per_site(k);
    let r = phase.rem_euclid(2.0 * PI);
    Ok(r.min(2.0 * PI - r) <= tolerance)
}
