//! Full reconstruction from a record set: T at every
//! recorded phase, separation correlators, single-spin sums, pair-averaged
//! two-body states and any requested witnesses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::reconstruction::{
    design_settings, record_phases, scan_to_separations, single_spin_averages, solve_symmetrized, two_body_rdm,
    witness_from_records, MeasurementSetting, SeparationCorrelators, SingleSpinSums, SymmetrizedCorrelators,
    TwoBodyRdm,
};
use crate::records::RecordSet;
use crate::scattering::LaserCavitySettings;
use crate::structure_factor::{ChainGeometry, WitnessSpec};

pub const RECONSTRUCTION_VERSION: u32 = 1;

/// p_j = jπ/N for j = 0..=N, enough phases to invert every separation.
pub fn default_scan_phases(n_sites: usize) -> Vec<f64> {
    (0..=n_sites).map(|j| j as f64 * PI / n_sites as f64).collect()
}

/// Default designs at every phase, concatenated.
pub fn scan_design(
    base: &LaserCavitySettings,
    n_sites: usize,
    phases: &[f64],
    include_rotations: bool,
    condition_cap: f64,
) -> Result<Vec<MeasurementSetting>> {
    let mut out = Vec::new();
    for &p in phases {
        out.extend(design_settings(base, n_sites, p, include_rotations, condition_cap)?.settings);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseSolve {
    pub phase_per_site: f64,
    pub correlators: SymmetrizedCorrelators,
    pub single_sums: [Option<f64>; 3],
    pub condition_number: f64,
    pub n_records: usize,
    pub residual_norm: f64,
    pub reduced_chi2: Option<f64>,
    pub residual_flag: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedWitness {
    pub name: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub format_version: u32,
    pub n_sites: usize,
    pub phases: Vec<PhaseSolve>,
    pub singles: Option<SingleSpinSums>,
    pub singles_error: Option<String>,
    pub separations: Option<SeparationCorrelators>,
    pub separations_error: Option<String>,
    pub rdms: Vec<TwoBodyRdm>,
    pub rdm_errors: Vec<String>,
    pub witnesses: Vec<NamedWitness>,
}

/// Solves every recorded phase and everything derivable from the scan.
/// Steps that the records cannot support are reported, not fatal; a phase
/// whose own solve fails is.
pub fn reconstruct(
    records: &RecordSet,
    geometry: &ChainGeometry,
    witnesses: &[(String, WitnessSpec)],
    condition_cap: f64,
) -> Result<Reconstruction> {
    geometry.check_compatible(records.n_sites)?;
    let mut phases = Vec::new();
    for p in record_phases(records) {
        let sol = solve_symmetrized(records, p, condition_cap)?;
        phases.push(PhaseSolve {
            phase_per_site: p,
            correlators: sol.correlators,
            single_sums: sol.single_sums,
            condition_number: sol.condition_number,
            n_records: sol.n_records,
            residual_norm: sol.residual_norm,
            reduced_chi2: sol.reduced_chi2,
            residual_flag: sol.residual_flag,
        });
    }
    let (singles, singles_error) = match single_spin_averages(records, condition_cap) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let scan: Vec<SymmetrizedCorrelators> = phases.iter().map(|p| p.correlators.clone()).collect();
    let (separations, separations_error) = match scan_to_separations(records.n_sites, &scan, condition_cap) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut rdms = Vec::new();
    let mut rdm_errors = Vec::new();
    if let (Some(sep), Some(single)) = (&separations, &singles) {
        for m in 1..records.n_sites {
            match two_body_rdm(sep, &single.values, m) {
                Ok(r) => rdms.push(r),
                Err(e) => rdm_errors.push(e.to_string()),
            }
        }
    }
    let witnesses = witnesses
        .iter()
        .map(|(name, spec)| {
            let w = witness_from_records(records, geometry, spec, condition_cap)?;
            Ok(NamedWitness { name: name.clone(), value: w.value, std_error: w.std_error })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Reconstruction {
        format_version: RECONSTRUCTION_VERSION,
        n_sites: records.n_sites,
        phases,
        singles,
        singles_error,
        separations,
        separations_error,
        rdms,
        rdm_errors,
        witnesses,
    })
}
