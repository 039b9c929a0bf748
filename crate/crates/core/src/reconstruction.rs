//! Linear inversion from normalized intensities to spin correlations.
//!
//! For a record in rotation frame F with coefficients (α_x, α_y), measured at
//! phase per site p,
//!
//! ```text
//! ĩ − N(|α_x|² + |α_y|²) = |α_x|² T′ˣˣ + |α_y|² T′ʸʸ + 2 Re{α_x* α_y T′ˣʸ} + 2 Im{α_x α_y*} Σ_k⟨σ′ᶻ_k⟩
//! ```
//!
//! where primes denote correlators of the rotated state. Every primed quantity
//! is one of twelve real unknowns of the unrotated state:
//! T^{xx}, T^{yy}, T^{zz}, Re/Im of T^{xy}, T^{xz}, T^{yz}, and Σσ^{x,y,z}.
//!
//! Within one frame Im T′ˣʸ(p) and Σσ′ᶻ always enter with the same weight, so a
//! single phase cannot separate them. Since T^{αβ}(−p) = T^{αβ}(p)*, records at
//! −p (the second cavity mode when the pump is orthogonal to the chain) flip the
//! sign of the Im part and resolve the pair. At p ≡ −p (0 or π) the Im parts
//! vanish identically and are dropped.
//!
//! The chain is uniform, so the scattered light only resolves correlations
//! summed over pairs at equal separation. Individual pair correlators are not
//! recoverable; [`scan_to_separations`] returns the separation aggregates
//! G^{αβ}(m) and [`two_body_rdm`] the pair-averaged reduced state.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{design, domain, Error, Result};
use crate::records::{MeasurementRecord, RecordSet};
use crate::scattering::{CouplingCoefficients, LaserCavitySettings, Rotation, ScatteringChannel};
use crate::spin::PauliAxis;
use crate::structure_factor::{ChainGeometry, WitnessSpec};

/// Two phases closer than this (mod 2π) are treated as equal.
pub const PHASE_TOL: f64 = 1e-9;
pub const DEFAULT_CONDITION_CAP: f64 = 1e6;

/// Real unknowns of the per-phase inversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unknown {
    Txx,
    Tyy,
    Tzz,
    ReTxy,
    ImTxy,
    ReTxz,
    ImTxz,
    ReTyz,
    ImTyz,
    SumX,
    SumY,
    SumZ,
}

impl Unknown {
    pub const ALL: [Unknown; 12] = [
        Unknown::Txx,
        Unknown::Tyy,
        Unknown::Tzz,
        Unknown::ReTxy,
        Unknown::ImTxy,
        Unknown::ReTxz,
        Unknown::ImTxz,
        Unknown::ReTyz,
        Unknown::ImTyz,
        Unknown::SumX,
        Unknown::SumY,
        Unknown::SumZ,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Unknown::Txx => "T^xx",
            Unknown::Tyy => "T^yy",
            Unknown::Tzz => "T^zz",
            Unknown::ReTxy => "Re T^xy",
            Unknown::ImTxy => "Im T^xy",
            Unknown::ReTxz => "Re T^xz",
            Unknown::ImTxz => "Im T^xz",
            Unknown::ReTyz => "Re T^yz",
            Unknown::ImTyz => "Im T^yz",
            Unknown::SumX => "Σσ^x",
            Unknown::SumY => "Σσ^y",
            Unknown::SumZ => "Σσ^z",
        }
    }

    fn col(self) -> usize {
        self as usize
    }

    fn is_imaginary(self) -> bool {
        matches!(self, Unknown::ImTxy | Unknown::ImTxz | Unknown::ImTyz)
    }
}

/// How a rotation frame's readout maps onto unknowns of the unrotated state.
struct FrameMap {
    xx: Unknown,
    yy: Unknown,
    re_xy: Unknown,
    im_xy: Unknown,
    /// T′ˣʸ = sign · T (or sign · T* when `conj`).
    sign: f64,
    conj: bool,
    sum: Unknown,
}

fn frame_map(rotation: Rotation) -> FrameMap {
    match rotation {
        Rotation::None => FrameMap {
            xx: Unknown::Txx,
            yy: Unknown::Tyy,
            re_xy: Unknown::ReTxy,
            im_xy: Unknown::ImTxy,
            sign: 1.0,
            conj: false,
            sum: Unknown::SumZ,
        },
        // U σˣ U = σᶻ, U σʸ U = −σʸ, U σᶻ U = σˣ ⇒ T′ˣʸ = −T^{zy} = −(T^{yz})*
        Rotation::XAccess => FrameMap {
            xx: Unknown::Tzz,
            yy: Unknown::Tyy,
            re_xy: Unknown::ReTyz,
            im_xy: Unknown::ImTyz,
            sign: -1.0,
            conj: true,
            sum: Unknown::SumX,
        },
        // U σˣ U = −σˣ, U σʸ U = σᶻ, U σᶻ U = σʸ ⇒ T′ˣʸ = −T^{xz}
        Rotation::YAccess => FrameMap {
            xx: Unknown::Txx,
            yy: Unknown::Tzz,
            re_xy: Unknown::ReTxz,
            im_xy: Unknown::ImTxz,
            sign: -1.0,
            conj: false,
            sum: Unknown::SumY,
        },
    }
}

/// One configuration of pumps, basis rotation and detected mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub rabi_0: f64,
    pub rabi_1: f64,
    pub phase: f64,
    pub rotation: Rotation,
    pub channel: ScatteringChannel,
    pub phase_per_site: f64,
}

impl MeasurementSetting {
    pub fn coefficients(&self, base: &LaserCavitySettings) -> Result<CouplingCoefficients> {
        crate::scattering::coupling_coefficients(&base.with_drive(self.rabi_0, self.rabi_1, self.phase))
    }
}

/// Wraps to (−π, π].
pub fn wrap_phase(p: f64) -> f64 {
    let r = (p + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

fn same_phase(a: f64, b: f64) -> bool {
    wrap_phase(a - b).abs() < PHASE_TOL
}

/// Folds a phase into [0, π]; the flag is true when the phase was negated.
pub fn fold_phase(p: f64) -> (f64, bool) {
    let w = wrap_phase(p);
    if w < 0.0 {
        (-w, true)
    } else {
        (w, false)
    }
}

/// True when p and −p coincide mod 2π, so T^{αβ}(p) is real.
pub fn self_conjugate(p: f64) -> bool {
    same_phase(p, -p)
}

/// Relation of a record's phase to the solve's target phase.
fn phase_relation(record_phase: f64, target: f64) -> Option<bool> {
    if same_phase(record_phase, target) {
        Some(false)
    } else if same_phase(record_phase, -target) {
        Some(true)
    } else {
        None
    }
}

/// Design-matrix row for one record, and the known offset N(|α_x|² + |α_y|²).
fn design_row(
    coeffs: &CouplingCoefficients,
    rotation: Rotation,
    negated: bool,
    n_sites: usize,
) -> ([f64; 12], f64) {
    let f = frame_map(rotation);
    let mut row = [0.0; 12];
    let w = coeffs.alpha_x.conj() * coeffs.alpha_y;
    row[f.xx.col()] += coeffs.alpha_x.norm_sqr();
    row[f.yy.col()] += coeffs.alpha_y.norm_sqr();
    row[f.re_xy.col()] += 2.0 * f.sign * w.re;
    let conj = f.conj ^ negated;
    row[f.im_xy.col()] += if conj { 2.0 } else { -2.0 } * f.sign * w.im;
    row[f.sum.col()] += 2.0 * coeffs.chirality();
    (row, n_sites as f64 * coeffs.total_weight())
}

/// Design for one target phase: the settings and their design matrix over the
/// identifiable unknowns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Design {
    pub phase_per_site: f64,
    pub settings: Vec<MeasurementSetting>,
    pub columns: Vec<Unknown>,
    /// Row-major, `settings.len() × columns.len()`.
    pub matrix: Vec<Vec<f64>>,
    pub condition_number: f64,
}

/// Default pump patterns: equal amplitudes at φ ∈ {0, π/4, π/2, 3π/4}, then
/// each pump alone.
pub fn default_pump_patterns(rabi: f64) -> Vec<(f64, f64, f64)> {
    vec![
        (rabi, rabi, 0.0),
        (rabi, rabi, FRAC_PI_4),
        (rabi, rabi, FRAC_PI_2),
        (rabi, rabi, 3.0 * FRAC_PI_4),
        (rabi, 0.0, 0.0),
        (0.0, rabi, 0.0),
    ]
}

/// Builds the default design at mode-1 phase `phase`, with mode 2 read out
/// at −phase (pump orthogonal to the chain). Uses `base.rabi_0` as the pump
/// amplitude.
pub fn design_settings(
    base: &LaserCavitySettings,
    n_sites: usize,
    phase: f64,
    include_rotations: bool,
    condition_cap: f64,
) -> Result<Design> {
    base.validate()?;
    if base.rabi_0 <= 0.0 {
        return domain("design needs a positive pump Rabi frequency (rabi_0)");
    }
    let rotations: &[Rotation] =
        if include_rotations { &Rotation::ALL } else { &[Rotation::None] };
    let mut settings = Vec::new();
    for &rotation in rotations {
        for (channel, p) in [(ScatteringChannel::Mode1, phase), (ScatteringChannel::Mode2, -phase)] {
            for (r0, r1, ph) in default_pump_patterns(base.rabi_0) {
                settings.push(MeasurementSetting {
                    rabi_0: r0,
                    rabi_1: r1,
                    phase: ph,
                    rotation,
                    channel,
                    phase_per_site: p,
                });
            }
        }
    }
    let system = assemble(
        base,
        n_sites,
        phase,
        settings.iter().map(|s| (s, None)),
    )?;
    let ls = system.analyze(condition_cap)?;
    Ok(Design {
        phase_per_site: phase,
        settings,
        columns: system.columns.clone(),
        matrix: (0..system.a.nrows())
            .map(|i| system.a.row(i).iter().copied().collect())
            .collect(),
        condition_number: ls.condition_number,
    })
}

/// Assembled linear system over the identifiable columns.
struct LinearSystem {
    columns: Vec<Unknown>,
    a: DMatrix<f64>,
    y: DVector<f64>,
    sigma: Option<DVector<f64>>,
}

struct Analysis {
    condition_number: f64,
}

fn assemble<'a>(
    base: &LaserCavitySettings,
    n_sites: usize,
    target: f64,
    rows: impl Iterator<Item = (&'a MeasurementSetting, Option<(f64, Option<f64>)>)>,
) -> Result<LinearSystem> {
    let drop_imag = self_conjugate(target);
    let mut full: Vec<[f64; 12]> = Vec::new();
    let mut y = Vec::new();
    let mut sig: Vec<Option<f64>> = Vec::new();
    for (setting, obs) in rows {
        let Some(negated) = phase_relation(setting.phase_per_site, target) else {
            continue;
        };
        let coeffs = setting.coefficients(base)?;
        let (row, offset) = design_row(&coeffs, setting.rotation, negated, n_sites);
        full.push(row);
        if let Some((value, se)) = obs {
            y.push(value - offset);
            sig.push(se);
        }
    }
    if full.is_empty() {
        return design(format!("no records at phase ±{target:.6}"));
    }
    let scale = full.iter().flat_map(|r| r.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let columns: Vec<Unknown> = Unknown::ALL
        .into_iter()
        .filter(|u| !(drop_imag && u.is_imaginary()))
        .filter(|u| full.iter().any(|r| r[u.col()].abs() > 1e-14 * scale))
        .collect();
    let a = DMatrix::from_fn(full.len(), columns.len(), |i, j| full[i][columns[j].col()]);
    let sigma = if !y.is_empty() && sig.iter().all(Option::is_some) {
        Some(DVector::from_iterator(sig.len(), sig.into_iter().map(|s| s.unwrap())))
    } else {
        None
    };
    Ok(LinearSystem { columns, a, y: DVector::from_vec(y), sigma })
}

impl LinearSystem {
    fn weighted(&self) -> (DMatrix<f64>, DVector<f64>) {
        match &self.sigma {
            Some(s) => {
                let mut a = self.a.clone();
                let mut y = self.y.clone();
                for i in 0..a.nrows() {
                    let w = 1.0 / s[i];
                    a.row_mut(i).scale_mut(w);
                    y[i] *= w;
                }
                (a, y)
            }
            None => (self.a.clone(), self.y.clone()),
        }
    }

    fn analyze(&self, cap: f64) -> Result<Analysis> {
        if self.columns.is_empty() {
            return design("records carry no information on any unknown");
        }
        if self.a.nrows() < self.columns.len() {
            return design(format!(
                "{} records for {} unknowns ({})",
                self.a.nrows(),
                self.columns.len(),
                labels(&self.columns)
            ));
        }
        let (a, _) = self.weighted();
        let svd = a.svd(false, true);
        let sv = &svd.singular_values;
        let smax = sv.max();
        let (imin, smin) = sv.argmin();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(cond <= cap) {
            let v_t = svd.v_t.expect("requested");
            let null = v_t.row(imin);
            let tangled: Vec<Unknown> = self
                .columns
                .iter()
                .zip(null.iter())
                .filter(|(_, v)| v.abs() > 0.1)
                .map(|(u, _)| *u)
                .collect();
            let mut msg = format!(
                "design is rank deficient (condition number {cond:.3e} > cap {cap:.1e}); \
                 unknowns not separable: {}",
                labels(&tangled)
            );
            if tangled.iter().any(|u| u.is_imaginary()) {
                msg.push_str(
                    "; Im T and the single-spin sums need records at both +q and −q \
                     (mode1 and mode2 channels)",
                );
            }
            return design(msg);
        }
        Ok(Analysis { condition_number: cond })
    }
}

fn labels(us: &[Unknown]) -> String {
    us.iter().map(|u| u.label()).collect::<Vec<_>>().join(", ")
}

/// T^{αβ}(q) = Σ_{k≠l} e^{−iq·(r_k − r_l)} ⟨σ_k^α σ_l^β⟩, with `None` for
/// entries the records could not determine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizedCorrelators {
    pub phase_per_site: f64,
    pub entries: [[Option<C64>; 3]; 3],
}

impl SymmetrizedCorrelators {
    pub fn get(&self, a: PauliAxis, b: PauliAxis) -> Option<C64> {
        self.entries[a.index()?][b.index()?]
    }

    /// The same correlators viewed at −phase.
    pub fn negated(&self) -> Self {
        let mut e = self.entries;
        for row in e.iter_mut() {
            for v in row.iter_mut() {
                *v = v.map(|z| z.conj());
            }
        }
        SymmetrizedCorrelators { phase_per_site: -self.phase_per_site, entries: e }
    }
}

/// Result of one per-phase least-squares inversion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetrizedSolution {
    pub correlators: SymmetrizedCorrelators,
    /// Σ_k⟨σ_k^α⟩ for α = x, y, z where determined.
    pub single_sums: [Option<f64>; 3],
    pub columns: Vec<Unknown>,
    pub values: Vec<f64>,
    /// Covariance of `values`, when records carry standard errors.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub condition_number: f64,
    pub n_records: usize,
    pub residual_norm: f64,
    /// χ² per degree of freedom for weighted solves.
    pub reduced_chi2: Option<f64>,
    /// True when the residual exceeds what the noise model (or round-off) allows.
    pub residual_flag: bool,
}

impl SymmetrizedSolution {
    pub fn value(&self, u: Unknown) -> Option<f64> {
        self.columns.iter().position(|c| *c == u).map(|i| self.values[i])
    }

    fn column_index(&self, u: Unknown) -> Option<usize> {
        self.columns.iter().position(|c| *c == u)
    }

    /// Variance of Σ_u g_u · value_u.
    pub fn linear_variance(&self, gradient: &[(Unknown, f64)]) -> Option<f64> {
        let cov = self.covariance.as_ref()?;
        let idx: Vec<(usize, f64)> = gradient
            .iter()
            .filter_map(|(u, g)| self.column_index(*u).map(|i| (i, *g)))
            .collect();
        let mut v = 0.0;
        for &(i, gi) in &idx {
            for &(j, gj) in &idx {
                v += gi * gj * cov[i][j];
            }
        }
        Some(v.max(0.0))
    }
}

/// Least-squares solve for all T^{αβ} and single-spin sums at `phase`, using
/// every record at ±phase. Weighted when all used records carry standard errors.
pub fn solve_symmetrized(records: &RecordSet, phase: f64, condition_cap: f64) -> Result<SymmetrizedSolution> {
    let used: Vec<&MeasurementRecord> = records
        .records
        .iter()
        .filter(|r| phase_relation(r.setting.phase_per_site, phase).is_some())
        .collect();
    let system = assemble(
        &records.base,
        records.n_sites,
        phase,
        used.iter().map(|r| (&r.setting, Some((r.normalized_intensity, r.std_error())))),
    )?;
    let analysis = system.analyze(condition_cap)?;
    let (aw, yw) = system.weighted();
    let svd = aw.clone().svd(true, true);
    let x = svd
        .solve(&yw, 0.0)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let resid = &aw * &x - &yw;
    let residual_norm = resid.norm();
    let dof = aw.nrows().saturating_sub(aw.ncols());
    let (reduced_chi2, residual_flag) = if system.sigma.is_some() {
        let chi2 = residual_norm * residual_norm;
        if dof > 0 {
            let r = chi2 / dof as f64;
            // χ² beyond 5 standard deviations of its sampling distribution.
            let bound = dof as f64 + 5.0 * (2.0 * dof as f64).sqrt();
            (Some(r), chi2 > bound)
        } else {
            (None, false)
        }
    } else {
        (None, residual_norm > 1e-8 * yw.norm().max(1e-300) && residual_norm > 1e-12)
    };
    let covariance = system.sigma.as_ref().map(|_| {
        let v = svd.v_t.as_ref().expect("requested").transpose();
        let s = &svd.singular_values;
        let n = v.nrows();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..s.len()).map(|k| v[(i, k)] * v[(j, k)] / (s[k] * s[k])).sum())
                    .collect()
            })
            .collect()
    });

    let values: Vec<f64> = x.iter().copied().collect();
    let get = |u: Unknown| system.columns.iter().position(|c| *c == u).map(|i| values[i]);
    let drop_imag = self_conjugate(phase);
    let complex = |re: Unknown, im: Unknown| -> Option<C64> {
        let r = get(re)?;
        let i = if drop_imag { 0.0 } else { get(im)? };
        Some(C64::new(r, i))
    };
    let real = |u: Unknown| get(u).map(|v| C64::new(v, 0.0));
    let xy = complex(Unknown::ReTxy, Unknown::ImTxy);
    let xz = complex(Unknown::ReTxz, Unknown::ImTxz);
    let yz = complex(Unknown::ReTyz, Unknown::ImTyz);
    let entries = [
        [real(Unknown::Txx), xy, xz],
        [xy.map(|z| z.conj()), real(Unknown::Tyy), yz],
        [xz.map(|z| z.conj()), yz.map(|z| z.conj()), real(Unknown::Tzz)],
    ];
    Ok(SymmetrizedSolution {
        correlators: SymmetrizedCorrelators { phase_per_site: phase, entries },
        single_sums: [get(Unknown::SumX), get(Unknown::SumY), get(Unknown::SumZ)],
        columns: system.columns,
        values,
        covariance,
        condition_number: analysis.condition_number,
        n_records: used.len(),
        residual_norm,
        reduced_chi2,
        residual_flag,
    })
}

/// Unweighted least-squares prediction of ĩ for every record at ±`phase`;
/// `None` for records at other phases.
pub fn fitted_intensities(records: &RecordSet, phase: f64, condition_cap: f64) -> Result<Vec<Option<f64>>> {
    let system = assemble(
        &records.base,
        records.n_sites,
        phase,
        records.records.iter().filter(|r| phase_relation(r.setting.phase_per_site, phase).is_some())
            .map(|r| (&r.setting, Some((r.normalized_intensity, None)))),
    )?;
    system.analyze(condition_cap)?;
    let x = system
        .a
        .clone()
        .svd(true, true)
        .solve(&system.y, 0.0)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let mut out = Vec::with_capacity(records.records.len());
    for r in &records.records {
        out.push(match phase_relation(r.setting.phase_per_site, phase) {
            Some(negated) => {
                let coeffs = r.setting.coefficients(&records.base)?;
                let (row, offset) = design_row(&coeffs, r.setting.rotation, negated, records.n_sites);
                Some(offset + system.columns.iter().zip(x.iter()).map(|(u, v)| row[u.col()] * v).sum::<f64>())
            }
            None => None,
        });
    }
    Ok(out)
}

/// Distinct folded phases (in [0, π]) present in a record set, ascending.
pub fn record_phases(records: &RecordSet) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for r in &records.records {
        let (p, _) = fold_phase(r.setting.phase_per_site);
        if !out.iter().any(|q| same_phase(*q, p)) {
            out.push(p);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Site-summed single-spin averages with optional standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleSpinSums {
    pub values: [f64; 3],
    pub std_errors: [Option<f64>; 3],
}

/// Σ_k⟨σ^α_k⟩ for α = x, y, z, pooled over every phase group in the record set.
pub fn single_spin_averages(records: &RecordSet, condition_cap: f64) -> Result<SingleSpinSums> {
    let needed = [
        (Rotation::XAccess, Unknown::SumX),
        (Rotation::YAccess, Unknown::SumY),
        (Rotation::None, Unknown::SumZ),
    ];
    for (rotation, _) in needed {
        let mut sensitive = false;
        for r in records.records.iter().filter(|r| r.setting.rotation == rotation) {
            if r.setting.coefficients(&records.base)?.chirality().abs() > 1e-14 {
                sensitive = true;
                break;
            }
        }
        if !sensitive {
            return design(format!(
                "no record in rotation frame `{}` has Im{{α_x α_y*}} ≠ 0; \
                 its single-spin sum is not measured",
                rotation.label()
            ));
        }
    }
    let mut estimates: [Vec<(f64, Option<f64>)>; 3] = Default::default();
    let mut first_err = None;
    for p in record_phases(records) {
        match solve_symmetrized(records, p, condition_cap) {
            Ok(sol) => {
                for (a, (_, u)) in needed.iter().enumerate() {
                    if let Some(v) = sol.value(*u) {
                        let var = sol.linear_variance(&[(*u, 1.0)]);
                        estimates[a].push((v, var));
                    }
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut values = [0.0; 3];
    let mut std_errors = [None; 3];
    for a in 0..3 {
        let est = &estimates[a];
        if est.is_empty() {
            return Err(first_err.unwrap_or_else(|| {
                Error::Design(format!("single-spin sum {} not determined", needed[a].1.label()))
            }));
        }
        if est.iter().all(|(_, v)| matches!(v, Some(v) if *v > 0.0)) {
            let wsum: f64 = est.iter().map(|(_, v)| 1.0 / v.unwrap()).sum();
            values[a] = est.iter().map(|(x, v)| x / v.unwrap()).sum::<f64>() / wsum;
            std_errors[a] = Some((1.0 / wsum).sqrt());
        } else {
            values[a] = est.iter().map(|(x, _)| x).sum::<f64>() / est.len() as f64;
        }
    }
    Ok(SingleSpinSums { values, std_errors })
}

/// G^{αβ}(m) = Σ_k ⟨σ_k^α σ_{k+m}^β⟩ for m = 1..N−1; `entries[m − 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCorrelators {
    pub n_sites: usize,
    pub entries: Vec<[[Option<f64>; 3]; 3]>,
    /// Largest condition number among the transform blocks that were solved.
    pub condition_number: f64,
}

impl SeparationCorrelators {
    pub fn get(&self, m: usize, a: PauliAxis, b: PauliAxis) -> Option<f64> {
        self.entries.get(m.checked_sub(1)?)?[a.index()?][b.index()?]
    }
}

fn lstsq(a: DMatrix<f64>, y: DVector<f64>, cap: f64) -> Option<(DVector<f64>, f64)> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= cap) {
        return None;
    }
    svd.solve(&y, 0.0).ok().map(|x| (x, cond))
}

/// Inverts the cosine/sine transform
/// T^{αβ}(p) = Σ_m [e^{ipm} G^{αβ}(m) + e^{−ipm} G^{βα}(m)] over a phase scan.
///
/// Diagonal blocks need N−1 distinct phases in [0, π]; off-diagonal blocks also
/// need N−1 distinct phases strictly inside (0, π), where the sine part is
/// nonzero. Off-diagonal blocks that cannot be resolved are left as `None`.
pub fn scan_to_separations(
    n_sites: usize,
    scan: &[SymmetrizedCorrelators],
    condition_cap: f64,
) -> Result<SeparationCorrelators> {
    let n_sep = n_sites.checked_sub(1).filter(|&m| m >= 1).ok_or_else(|| {
        Error::Domain(format!("separation scan needs at least two sites, got {n_sites}"))
    })?;
    // Fold to [0, π], dropping duplicates.
    let mut folded: Vec<SymmetrizedCorrelators> = Vec::new();
    for t in scan {
        let (p, neg) = fold_phase(t.phase_per_site);
        if folded.iter().any(|f| same_phase(f.phase_per_site, p)) {
            continue;
        }
        let mut t = if neg { t.negated() } else { t.clone() };
        t.phase_per_site = p;
        folded.push(t);
    }
    let mut entries = vec![[[None; 3]; 3]; n_sep];
    let mut worst = 1.0f64;
    for a in 0..3 {
        let rows: Vec<(f64, f64)> = folded
            .iter()
            .filter_map(|t| t.entries[a][a].map(|v| (t.phase_per_site, v.re)))
            .collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < n_sep {
            return design(format!(
                "G^{ax}{ax}(m) has {n_sep} unknowns but the scan has only {n} distinct phases in [0, π]",
                ax = PauliAxis::XYZ[a].label(),
                n = rows.len(),
            ));
        }
        let mat = DMatrix::from_fn(rows.len(), n_sep, |i, m| 2.0 * (rows[i].0 * (m + 1) as f64).cos());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let Some((g, cond)) = lstsq(mat, y, condition_cap) else {
            return design(format!(
                "phase scan does not resolve G^{0}{0}(m): cosine transform is rank deficient",
                PauliAxis::XYZ[a].label()
            ));
        };
        worst = worst.max(cond);
        for m in 0..n_sep {
            entries[m][a][a] = Some(g[m]);
        }
    }
    for a in 0..3 {
        for b in a + 1..3 {
            let rows: Vec<(f64, C64)> = folded
                .iter()
                .filter_map(|t| t.entries[a][b].map(|v| (t.phase_per_site, v)))
                .collect();
            let interior = rows.iter().filter(|(p, _)| !self_conjugate(*p)).count();
            if interior < n_sep {
                continue;
            }
            // unknowns: u_m = G^{ab}(m), v_m = G^{ba}(m)
            let mut mat = DMatrix::zeros(2 * rows.len(), 2 * n_sep);
            let mut y = DVector::zeros(2 * rows.len());
            for (i, (p, t)) in rows.iter().enumerate() {
                for m in 0..n_sep {
                    let (s, c) = (p * (m + 1) as f64).sin_cos();
                    mat[(2 * i, m)] = c;
                    mat[(2 * i, n_sep + m)] = c;
                    mat[(2 * i + 1, m)] = s;
                    mat[(2 * i + 1, n_sep + m)] = -s;
                }
                y[2 * i] = t.re;
                y[2 * i + 1] = t.im;
            }
            if let Some((g, cond)) = lstsq(mat, y, condition_cap) {
                worst = worst.max(cond);
                for m in 0..n_sep {
                    entries[m][a][b] = Some(g[m]);
                    entries[m][b][a] = Some(g[n_sep + m]);
                }
            }
        }
    }
    Ok(SeparationCorrelators { n_sites, entries, condition_number: worst })
}

/// Pair-averaged two-qubit reduced state at separation m. Tensor order: the
/// left factor is the lower-index site, basis |b_k b_{k+m}⟩ with b_k the more
/// significant bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoBodyRdm {
    pub separation: usize,
    /// Row-major 4×4 entries.
    pub matrix: [[C64; 4]; 4],
    pub trace: f64,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    /// False when an eigenvalue is below −tolerance; the matrix is left as is.
    pub physical: bool,
}

impl TwoBodyRdm {
    pub fn to_matrix(&self) -> Matrix4<C64> {
        Matrix4::from_fn(|i, j| self.matrix[i][j])
    }
}

pub const RDM_TOL: f64 = 1e-10;

fn kron2(a: &nalgebra::Matrix2<C64>, b: &nalgebra::Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

/// ρ₂(m) = ¼ Σ_{μν} c_{μν} σ^μ ⊗ σ^ν with c_{αβ} = G^{αβ}(m)/(N − m) and
/// c_{α0} = c_{0α} = Σ_k⟨σ_k^α⟩/N.
pub fn two_body_rdm(separations: &SeparationCorrelators, singles: &[f64; 3], m: usize) -> Result<TwoBodyRdm> {
    let n = separations.n_sites;
    if m == 0 || m >= n {
        return domain(format!("separation {m} out of range 1..{}", n.saturating_sub(1)));
    }
    let mut missing = Vec::new();
    for a in PauliAxis::XYZ {
        for b in PauliAxis::XYZ {
            if separations.get(m, a, b).is_none() {
                missing.push(format!("G^{}{}({m})", a.label(), b.label()));
            }
        }
    }
    if !missing.is_empty() {
        return domain(format!("two-body state needs {}", missing.join(", ")));
    }
    let pairs = (n - m) as f64;
    let ident = PauliAxis::I.matrix();
    let mut rho = kron2(&ident, &ident);
    for (i, a) in PauliAxis::XYZ.into_iter().enumerate() {
        let s = C64::new(singles[i] / n as f64, 0.0);
        rho += kron2(&a.matrix(), &ident) * s + kron2(&ident, &a.matrix()) * s;
        for b in PauliAxis::XYZ {
            let c = separations.get(m, a, b).unwrap() / pairs;
            rho += kron2(&a.matrix(), &b.matrix()) * C64::new(c, 0.0);
        }
    }
    rho /= C64::new(4.0, 0.0);
    let eig = SymmetricEigen::new(rho);
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let min_eigenvalue = eigenvalues[0];
    let trace = rho.trace().re;
    Ok(TwoBodyRdm {
        separation: m,
        matrix: std::array::from_fn(|i| std::array::from_fn(|j| rho[(i, j)])),
        trace,
        eigenvalues,
        min_eigenvalue,
        physical: min_eigenvalue >= -RDM_TOL,
    })
}

/// ½ Σ|λ_i(ρ − σ)|.
pub fn trace_distance(a: &Matrix4<C64>, b: &Matrix4<C64>) -> f64 {
    let d = a - b;
    let h = (d + d.adjoint()) * C64::new(0.5, 0.0);
    0.5 * SymmetricEigen::new(h).eigenvalues.iter().map(|v| v.abs()).sum::<f64>()
}

/// Witness value with a propagated standard error when the records carry noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessEstimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// Ŵ evaluated purely from intensity records.
pub fn witness_from_records(
    records: &RecordSet,
    geometry: &ChainGeometry,
    spec: &WitnessSpec,
    condition_cap: f64,
) -> Result<WitnessEstimate> {
    geometry.check_compatible(records.n_sites)?;
    let terms = spec.terms(geometry);
    if terms.is_empty() {
        return Ok(WitnessEstimate { value: 1.0, std_error: Some(0.0) });
    }
    let n = records.n_sites as f64;
    let norm = n * (n - 1.0);
    // group terms that share a folded phase
    let mut groups: Vec<(f64, Vec<(PauliAxis, f64)>)> = Vec::new();
    for (axis, c, p) in terms {
        let (fp, _) = fold_phase(p);
        match groups.iter_mut().find(|(q, _)| same_phase(*q, fp)) {
            Some((_, v)) => v.push((axis, c)),
            None => groups.push((fp, vec![(axis, c)])),
        }
    }
    let mut value = 1.0;
    let mut variance = Some(0.0);
    for (phase, terms) in groups {
        let sol = solve_symmetrized(records, phase, condition_cap)?;
        let mut gradient = Vec::new();
        for (axis, c) in terms {
            let u = [Unknown::Txx, Unknown::Tyy, Unknown::Tzz][axis.index().unwrap()];
            let Some(t) = sol.value(u) else {
                let hint = if axis == PauliAxis::Z { " (needs x_access or y_access records)" } else { "" };
                return design(format!(
                    "records at phase ±{phase:.6} do not determine {}{hint}",
                    u.label()
                ));
            };
            value -= c * t / norm;
            gradient.push((u, -c / norm));
        }
        variance = match (variance, sol.linear_variance(&gradient)) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
    Ok(WitnessEstimate { value, std_error: variance.map(f64::sqrt) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> LaserCavitySettings {
        LaserCavitySettings {
            rabi_0: 1.0,
            rabi_1: 1.0,
            phase: 0.0,
            vacuum_rabi: 1.0,
            detuning: 100.0,
            cavity_detuning: 0.0,
            cavity_linewidth: 1.0,
            atomic_linewidth: 0.0,
        }
    }

    #[test]
    fn x_only_row_has_no_y_weight() {
        let d = design_settings(&base(), 4, 0.3, false, DEFAULT_CONDITION_CAP).unwrap();
        let row = &d.matrix[0];
        assert_eq!(d.settings[0].phase, 0.0);
        for (c, u) in d.columns.iter().enumerate() {
            if matches!(u, Unknown::Tyy | Unknown::ReTxy | Unknown::ImTxy) {
                assert!(row[c].abs() < 1e-18, "{u:?} = {}", row[c]);
            }
        }
        assert!(!d.columns.iter().any(|u| matches!(u, Unknown::Tzz | Unknown::SumX | Unknown::SumY)));
    }

    #[test]
    fn default_design_is_well_conditioned() {
        for p in [0.0, 0.3, PI / 2.0, PI] {
            for rot in [false, true] {
                let d = design_settings(&base(), 4, p, rot, DEFAULT_CONDITION_CAP).unwrap();
                assert!(d.condition_number.is_finite() && d.condition_number < 100.0, "{p} {rot}: {}", d.condition_number);
                assert!(d.settings.len() >= 6 * if rot { 3 } else { 1 });
            }
        }
    }

    #[test]
    fn wrap_and_fold() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-0.5) + 0.5).abs() < 1e-15);
        assert_eq!(fold_phase(-0.5), (0.5, true));
        assert!(self_conjugate(PI));
        assert!(self_conjugate(0.0));
        assert!(!self_conjugate(0.1));
    }

    #[test]
    fn underdetermined_scan_rejected() {
        let t = SymmetrizedCorrelators {
            phase_per_site: PI / 2.0,
            entries: [[Some(C64::new(0.0, 0.0)); 3]; 3],
        };
        assert!(matches!(scan_to_separations(3, &[t], DEFAULT_CONDITION_CAP), Err(Error::Design(_))));
    }

    #[test]
    fn two_site_scan_single_unknown() {
        let p: f64 = 0.4;
        let mut e = [[None; 3]; 3];
        e[0][0] = Some(C64::new(2.0 * p.cos() * 0.75, 0.0));
        let t = SymmetrizedCorrelators { phase_per_site: p, entries: e };
        let g = scan_to_separations(2, &[t], DEFAULT_CONDITION_CAP).unwrap();
        assert!((g.get(1, PauliAxis::X, PauliAxis::X).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(g.get(1, PauliAxis::X, PauliAxis::Y), None);
    }

    #[test]
    fn maximally_mixed_rdm() {
        let sep = SeparationCorrelators {
            n_sites: 3,
            entries: vec![[[Some(0.0); 3]; 3]; 2],
            condition_number: 1.0,
        };
        let r = two_body_rdm(&sep, &[0.0; 3], 2).unwrap();
        let expected = Matrix4::<C64>::identity() * C64::new(0.25, 0.0);
        assert!(trace_distance(&r.to_matrix(), &expected) < 1e-15);
        assert!((r.trace - 1.0).abs() < 1e-15);
        assert!(r.physical);
    }

    #[test]
    fn rdm_missing_components_listed() {
        let mut entries = vec![[[Some(0.0); 3]; 3]; 1];
        entries[0][0][2] = None;
        let sep = SeparationCorrelators { n_sites: 2, entries, condition_number: 1.0 };
        let err = two_body_rdm(&sep, &[0.0; 3], 1).unwrap_err().to_string();
        assert!(err.contains("G^xz(1)"), "{err}");
    }

    #[test]
    fn unphysical_rdm_is_flagged_not_projected() {
        let mut entries = vec![[[Some(0.0); 3]; 3]; 1];
        entries[0][2][2] = Some(1.5);
        let sep = SeparationCorrelators { n_sites: 2, entries, condition_number: 1.0 };
        let r = two_body_rdm(&sep, &[0.0; 3], 1).unwrap();
        assert!(!r.physical);
        assert!(r.min_eigenvalue < -0.1);
    }
}
