//! Plain-text state files.
//!
//! ```text
//! # spin state
//! format_version = 1
//! n_sites = 2
//! basis_ordering = site0-lsb
//! seed = 42
//! amplitudes
//! 0.0000000000000000e0 0.0000000000000000e0
//! 7.0710678118654746e-1 0.0000000000000000e0
//! ...
//! ```
//!
//! Amplitudes are written with 17 significant digits, which round-trips every
//! `f64` exactly. Extra `key = value` lines in the header are kept as metadata.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spin::SpinState;

pub const STATE_FORMAT_VERSION: u32 = 1;
pub const BASIS_ORDERING: &str = "site0-lsb";

pub fn write_state<W: Write>(
    state: &SpinState,
    metadata: &[(&str, String)],
    mut out: W,
) -> Result<()> {
    writeln!(out, "# spin state")?;
    writeln!(out, "format_version = {STATE_FORMAT_VERSION}")?;
    writeln!(out, "n_sites = {}", state.n_sites())?;
    writeln!(out, "basis_ordering = {BASIS_ORDERING}")?;
    for (k, v) in metadata {
        writeln!(out, "{k} = {v}")?;
    }
    writeln!(out, "amplitudes")?;
    for a in state.amplitudes() {
        writeln!(out, "{:.16e} {:.16e}", a.re, a.im)?;
    }
    Ok(())
}

pub fn state_to_string(state: &SpinState, metadata: &[(&str, String)]) -> String {
    let mut buf = Vec::new();
    write_state(state, metadata, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("state text is ASCII")
}

fn fmt_err<T>(line: usize, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Format(format!("state file line {line}: {msg}")))
}

/// Parses a state file, returning the state and all header fields.
pub fn read_state<R: BufRead>(input: R) -> Result<(SpinState, BTreeMap<String, String>)> {
    let mut header = BTreeMap::new();
    let mut amps = Vec::new();
    let mut in_body = false;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_body {
            if line == "amplitudes" {
                in_body = true;
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return fmt_err(lineno, format!("expected `key = value`, found `{line}`"));
            };
            header.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            let mut parts = line.split_whitespace();
            let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
                return fmt_err(lineno, "expected two numbers `re im`");
            };
            let re: f64 = re.parse().or_else(|e| fmt_err(lineno, e))?;
            let im: f64 = im.parse().or_else(|e| fmt_err(lineno, e))?;
            amps.push(C64::new(re, im));
        }
    }
    match header.get("format_version").map(String::as_str) {
        Some(v) if v == STATE_FORMAT_VERSION.to_string() => {}
        Some(v) => return fmt_err(0, format!("unsupported format_version {v}")),
        None => return fmt_err(0, "missing format_version"),
    }
    match header.get("basis_ordering").map(String::as_str) {
        Some(BASIS_ORDERING) => {}
        other => return fmt_err(0, format!("unsupported basis_ordering {other:?}")),
    }
    let n_sites: usize = header
        .get("n_sites")
        .ok_or_else(|| Error::Format("state file: missing n_sites".into()))?
        .parse()
        .map_err(|e| Error::Format(format!("state file: n_sites: {e}")))?;
    if !in_body {
        return fmt_err(0, "missing `amplitudes` section");
    }
    let state = SpinState::from_amplitudes(n_sites, amps)?;
    Ok((state, header))
}
