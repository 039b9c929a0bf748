//! Measurement records: forward simulation of a design and the
//! delimiter-separated record file.
//!
//! File layout: `#`-prefixed `key=value` metadata lines, one header line, then
//! one comma-separated row per measured setting.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::reconstruction::MeasurementSetting;
use crate::scattering::{
    calibration_factor, intensity_from_table, pulse_response, Ensemble, LaserCavitySettings,
    PulseProfile, Rotation, ScatteringChannel,
};
use crate::spin::MixedState;
use crate::structure_factor::{ChainGeometry, PairCorrelations};

pub const RECORD_FORMAT_VERSION: u32 = 1;

const COLUMNS: [&str; 12] = [
    "channel",
    "rabi_0",
    "rabi_1",
    "phase",
    "rotation",
    "phase_per_site",
    "normalized_intensity",
    "output_intensity",
    "time",
    "n_shots",
    "mean_count",
    "std_error",
];

/// Photon-count summary attached to noisy records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub n_shots: u64,
    pub mean_count: f64,
    /// Standard error of `normalized_intensity`; `None` for a single shot.
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub setting: MeasurementSetting,
    /// ĩ = I₀ + I_int (or its estimate from counts).
    pub normalized_intensity: f64,
    /// I_out = 2κ|f(t)|² ĩ.
    pub output_intensity: f64,
    pub time: f64,
    pub counts: Option<CountSummary>,
}

impl MeasurementRecord {
    pub fn std_error(&self) -> Option<f64> {
        self.counts.and_then(|c| c.std_error)
    }
}

/// Records plus what is needed to interpret them: the site count and the
/// laser/cavity constants that turn Rabi frequencies into couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub n_sites: usize,
    pub base: LaserCavitySettings,
    pub records: Vec<MeasurementRecord>,
}

fn rotate(state: &MixedState, rotation: Rotation) -> Result<MixedState> {
    if rotation == Rotation::None {
        return Ok(state.clone());
    }
    let comps = state
        .components()
        .iter()
        .map(|(w, s)| Ok((*w, rotation.apply(s)?)))
        .collect::<Result<Vec<_>>>()?;
    MixedState::new(comps)
}

/// Noiseless forward model for every setting, reading out at time `time`.
pub fn simulate_records<E: Ensemble + ?Sized>(
    state: &E,
    geometry: &ChainGeometry,
    base: &LaserCavitySettings,
    profile: &PulseProfile,
    settings: &[MeasurementSetting],
    time: f64,
) -> Result<RecordSet> {
    let members: Vec<(f64, _)> = state.members().into_iter().map(|(w, s)| (w, s.clone())).collect();
    let mixed = MixedState::new(members)?;
    geometry.check_compatible(mixed.components()[0].1.n_sites())?;
    base.validate()?;
    let f = pulse_response(profile, base, time)?;
    let calib = calibration_factor(base, f);

    let mut frames: Vec<Rotation> = settings.iter().map(|s| s.rotation).collect();
    frames.sort();
    frames.dedup();
    let tables: BTreeMap<Rotation, PairCorrelations> = frames
        .par_iter()
        .map(|&r| Ok((r, PairCorrelations::compute(&rotate(&mixed, r)?))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let records = settings
        .par_iter()
        .map(|s| {
            let coeffs = s.coefficients(base)?;
            let parts = intensity_from_table(&tables[&s.rotation], &coeffs, s.phase_per_site)?;
            let normalized = parts.normalized();
            Ok(MeasurementRecord {
                setting: s.clone(),
                normalized_intensity: normalized,
                output_intensity: calib * normalized,
                time,
                counts: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordSet { n_sites: geometry.n_sites(), base: base.clone(), records })
}

/// 2κ|f(t)|² for the given pulse, exposed for calibrating count rates.
pub fn pulse_calibration(base: &LaserCavitySettings, profile: &PulseProfile, time: f64) -> Result<f64> {
    let f: C64 = pulse_response(profile, base, time)?;
    Ok(calibration_factor(base, f))
}

fn opt(v: Option<impl ToString>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a record file. `metadata` lines follow the fixed header fields.
pub fn write_records<W: Write>(set: &RecordSet, metadata: &[(&str, String)], mut out: W) -> Result<()> {
    writeln!(out, "# measurement records")?;
    writeln!(out, "# format_version={RECORD_FORMAT_VERSION}")?;
    writeln!(out, "# n_sites={}", set.n_sites)?;
    let b = &set.base;
    writeln!(out, "# vacuum_rabi={}", b.vacuum_rabi)?;
    writeln!(out, "# detuning={}", b.detuning)?;
    writeln!(out, "# cavity_detuning={}", b.cavity_detuning)?;
    writeln!(out, "# cavity_linewidth={}", b.cavity_linewidth)?;
    writeln!(out, "# atomic_linewidth={}", b.atomic_linewidth)?;
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in &set.records {
        let s = &r.setting;
        w.write_record([
            s.channel.label().to_string(),
            s.rabi_0.to_string(),
            s.rabi_1.to_string(),
            s.phase.to_string(),
            s.rotation.label().to_string(),
            s.phase_per_site.to_string(),
            r.normalized_intensity.to_string(),
            r.output_intensity.to_string(),
            r.time.to_string(),
            opt(r.counts.map(|c| c.n_shots)),
            opt(r.counts.map(|c| c.mean_count)),
            opt(r.std_error()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_string(set: &RecordSet, metadata: &[(&str, String)]) -> String {
    let mut buf = Vec::new();
    write_records(set, metadata, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("record text is UTF-8")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("record file: {e}"))
}

fn parse_f64(field: &str, value: &str, line: usize) -> Result<f64> {
    value
        .trim()
        .parse()
        .map_err(|e| Error::Format(format!("record file row {line}: {field} = `{value}`: {e}")))
}

/// Reads a record file; returns the set and every metadata entry.
pub fn read_records<R: BufRead>(input: R) -> Result<(RecordSet, BTreeMap<String, String>)> {
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            body.push_str(&line);
            body.push('\n');
        }
    }
    match meta.get("format_version") {
        Some(v) if *v == RECORD_FORMAT_VERSION.to_string() => {}
        Some(v) => return Err(Error::Format(format!("unsupported record format_version {v}"))),
        None => return Err(Error::Format("record file: missing format_version".into())),
    }
    let need = |k: &str| -> Result<f64> {
        let v = meta
            .get(k)
            .ok_or_else(|| Error::Format(format!("record file: missing metadata `{k}`")))?;
        parse_f64(k, v, 0)
    };
    let n_sites: usize = meta
        .get("n_sites")
        .ok_or_else(|| Error::Format("record file: missing metadata `n_sites`".into()))?
        .parse()
        .map_err(|e| Error::Format(format!("record file: n_sites: {e}")))?;
    let base = LaserCavitySettings {
        rabi_0: 0.0,
        rabi_1: 0.0,
        phase: 0.0,
        vacuum_rabi: need("vacuum_rabi")?,
        detuning: need("detuning")?,
        cavity_detuning: need("cavity_detuning")?,
        cavity_linewidth: need("cavity_linewidth")?,
        atomic_linewidth: need("atomic_linewidth")?,
    };
    base.validate()?;

    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut index = BTreeMap::new();
    for name in COLUMNS {
        match col(name) {
            Some(i) => {
                index.insert(name, i);
            }
            None if matches!(name, "n_shots" | "mean_count" | "std_error") => {}
            None => return Err(Error::Format(format!("record file: missing column `{name}`"))),
        }
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 1;
        let get = |name: &str| index.get(name).and_then(|&j| row.get(j)).unwrap_or("");
        let num = |name: &str| parse_f64(name, get(name), line);
        let channel = match get("channel") {
            "mode1" => ScatteringChannel::Mode1,
            "mode2" => ScatteringChannel::Mode2,
            other => {
                return Err(Error::Format(format!("record file row {line}: unknown channel `{other}`")))
            }
        };
        let rotation = Rotation::parse(get("rotation")).ok_or_else(|| {
            Error::Format(format!("record file row {line}: unknown rotation `{}`", get("rotation")))
        })?;
        let counts = if get("n_shots").is_empty() {
            None
        } else {
            let n_shots: u64 = get("n_shots").parse().map_err(|e| {
                Error::Format(format!("record file row {line}: n_shots: {e}"))
            })?;
            let std_error = if get("std_error").is_empty() { None } else { Some(num("std_error")?) };
            Some(CountSummary { n_shots, mean_count: num("mean_count")?, std_error })
        };
        records.push(MeasurementRecord {
            setting: MeasurementSetting {
                rabi_0: num("rabi_0")?,
                rabi_1: num("rabi_1")?,
                phase: num("phase")?,
                rotation,
                channel,
                phase_per_site: num("phase_per_site")?,
            },
            normalized_intensity: num("normalized_intensity")?,
            output_intensity: num("output_intensity")?,
            time: num("time")?,
            counts,
        });
    }
    if records.is_empty() {
        return domain("record file contains no records");
    }
    Ok((RecordSet { n_sites, base, records }, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruction::{design_settings, DEFAULT_CONDITION_CAP};
    use crate::spin::build_random_pure;

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

    #[test]
    fn file_round_trip() {
        let g = ChainGeometry::along_x(3);
        let s = build_random_pure(3, 2).unwrap();
        let d = design_settings(&base(), 3, 0.4, true, DEFAULT_CONDITION_CAP).unwrap();
        let mut set =
            simulate_records(&s, &g, &base(), &PulseProfile::square(5.0).unwrap(), &d.settings, 5.0).unwrap();
        set.records[1].counts = Some(CountSummary { n_shots: 10, mean_count: 3.5, std_error: Some(0.25) });
        set.records[2].counts = Some(CountSummary { n_shots: 1, mean_count: 3.0, std_error: None });
        let text = records_to_string(&set, &[("seed", "7".into())]);
        let (back, meta) = read_records(text.as_bytes()).unwrap();
        assert_eq!(meta["seed"], "7");
        assert_eq!(back.records, set.records);
        assert_eq!(back.n_sites, 3);
        assert_eq!(records_to_string(&back, &[("seed", "7".into())]), text);
    }

    #[test]
    fn missing_metadata_rejected() {
        let text = "# format_version=1\n# n_sites=2\nchannel\n";
        assert!(matches!(read_records(text.as_bytes()), Err(Error::Format(_))));
    }
}
