//! File formats: spectra and plot data as CSV or JSON, trajectories as a
//! little-endian binary file or CSV. Every write goes through a temporary
//! file in the destination directory and an atomic rename.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Spectrum, Trajectory, CONVENTION_TAG};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"SPMTRAJ1";

/// Writes `bytes` to `path` so that readers see either the old file or the
/// complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// The one-line `#` header of every CSV file; `extra` holds further
/// `key=value` pairs.
pub fn csv_header(params_hash: Option<u64>, extra: &[(&str, String)]) -> String {
    let mut h = format!("# convention={CONVENTION_TAG}");
    if let Some(hash) = params_hash {
        let _ = write!(h, "; params_hash={hash:016x}");
    }
    for (k, v) in extra {
        let _ = write!(h, "; {k}={v}");
    }
    h.push('\n');
    h
}

/// A CSV table: header line, column names, then rows.
pub fn csv_table(header: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(num).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Two- or three-column plot data `(x, y[, yerr])`.
pub fn plot_csv(header: &str, names: [&str; 3], points: &[(f64, f64, Option<f64>)]) -> String {
    let with_err = points.iter().all(|p| p.2.is_some()) && !points.is_empty();
    let cols: &[&str] = if with_err { &names } else { &names[..2] };
    csv_table(
        header,
        cols,
        points.iter().map(|&(x, y, e)| match (with_err, e) {
            (true, Some(e)) => vec![x, y, e],
            _ => vec![x, y],
        }),
    )
}

pub fn spectrum_to_csv(spectrum: &Spectrum, params_hash: Option<u64>) -> String {
    let corr: Vec<String> = spectrum.bin_corr.iter().map(|v| num(*v)).collect();
    let header = csv_header(
        params_hash,
        &[
            ("rbw_Hz", num(spectrum.rbw_hz)),
            ("n_avg", spectrum.n_avg.to_string()),
            ("n_eff", num(spectrum.n_eff)),
            ("bin_corr", corr.join("|")),
        ],
    );
    let n = spectrum.freq_hz.len();
    match &spectrum.stderr {
        Some(se) => csv_table(
            &header,
            &["freq_Hz", "psd", "stderr"],
            (0..n).map(|i| vec![spectrum.freq_hz[i], spectrum.psd[i], se[i]]),
        ),
        None => csv_table(
            &header,
            &["freq_Hz", "psd"],
            (0..n).map(|i| vec![spectrum.freq_hz[i], spectrum.psd[i]]),
        ),
    }
}

fn header_fields(line: &str) -> Vec<(&str, &str)> {
    line.trim_start_matches('#')
        .split(';')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad number `{s}` in {what}")))
}

pub fn spectrum_from_csv(text: &str) -> Result<Spectrum> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .filter(|l| l.starts_with('#'))
        .ok_or_else(|| Error::Format("missing `#` header line".into()))?;
    let fields = header_fields(header);
    let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
    let convention = get("convention").unwrap_or_default();
    if convention != CONVENTION_TAG {
        return Err(Error::Format(format!(
            "convention `{convention}` differs from `{CONVENTION_TAG}`"
        )));
    }
    let cols: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("missing column names".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if cols.len() < 2 || cols[0] != "freq_Hz" || cols[1] != "psd" {
        return Err(Error::Format("expected columns freq_Hz,psd[,stderr]".into()));
    }
    let has_se = cols.get(2) == Some(&"stderr");
    let (mut freq, mut psd, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(Error::Format(format!("row has {} cells: `{line}`", cells.len())));
        }
        freq.push(parse_num(cells[0], "freq_Hz")?);
        psd.push(parse_num(cells[1], "psd")?);
        if has_se {
            se.push(parse_num(cells[2], "stderr")?);
        }
    }
    let n_avg = get("n_avg").map(|v| v.parse::<usize>()).transpose().map_err(|_| Error::Format("bad n_avg".into()))?.unwrap_or(1);
    let n_eff = get("n_eff").map(|v| parse_num(v, "n_eff")).transpose()?.unwrap_or(n_avg as f64);
    let bin_corr = match get("bin_corr") {
        Some(v) => v.split('|').map(|c| parse_num(c, "bin_corr")).collect::<Result<Vec<_>>>()?,
        None => vec![1.0],
    };
    let df = if freq.len() > 1 { freq[1] - freq[0] } else { 0.0 };
    let s = Spectrum {
        convention: convention.to_string(),
        freq_hz: freq,
        psd,
        stderr: has_se.then_some(se),
        rbw_hz: get("rbw_Hz").map(|v| parse_num(v, "rbw_Hz")).transpose()?.unwrap_or(df),
        n_avg,
        n_eff,
        bin_corr,
    };
    s.check()?;
    Ok(s)
}

/// Reads a spectrum from a `.json` or CSV file.
pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let text = fs::read_to_string(path)?;
    let s: Spectrum = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        spectrum_from_csv(&text)?
    };
    if s.convention != CONVENTION_TAG {
        return Err(Error::Format(format!(
            "convention `{}` differs from `{CONVENTION_TAG}`",
            s.convention
        )));
    }
    s.check()?;
    Ok(s)
}

/// Binary layout: magic, params hash, dt, seed, realization, length, then the
/// `jy`, `jz` and `sy_out` columns, all little-endian.
pub fn trajectory_to_bytes(t: &Trajectory, params_hash: u64) -> Vec<u8> {
    let n = t.len();
    let mut out = Vec::with_capacity(48 + 24 * n);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&params_hash.to_le_bytes());
    out.extend_from_slice(&t.dt_s.to_le_bytes());
    out.extend_from_slice(&t.seed.to_le_bytes());
    out.extend_from_slice(&u64::from(t.realization).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for col in [&t.jy, &t.jz, &t.sy_out] {
        for v in col.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a binary trajectory, rejecting files written for other params.
pub fn trajectory_from_bytes(bytes: &[u8], expected_hash: u64) -> Result<Trajectory> {
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|b| b.try_into().expect("8 bytes"))
            .ok_or_else(|| Error::Format("truncated trajectory file".into()))
    };
    if word(0)? != *TRAJECTORY_MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let found = u64::from_le_bytes(word(1)?);
    if found != expected_hash {
        return Err(Error::HashMismatch {
            found,
            expected: expected_hash,
        });
    }
    let dt_s = f64::from_le_bytes(word(2)?);
    let seed = u64::from_le_bytes(word(3)?);
    let realization = u32::try_from(u64::from_le_bytes(word(4)?))
        .map_err(|_| Error::Format("realization index out of range".into()))?;
    let n = usize::try_from(u64::from_le_bytes(word(5)?))
        .map_err(|_| Error::Format("length out of range".into()))?;
    if bytes.len() != 48 + 24 * n {
        return Err(Error::Format(format!(
            "trajectory file has {} bytes, expected {}",
            bytes.len(),
            48 + 24 * n
        )));
    }
    let column = |c: usize| -> Vec<f64> {
        (0..n)
            .map(|i| f64::from_le_bytes(word(6 + c * n + i).expect("length checked")))
            .collect()
    };
    let t = Trajectory {
        dt_s,
        jy: column(0),
        jz: column(1),
        sy_out: column(2),
        seed,
        realization,
    };
    t.check()?;
    Ok(t)
}

pub fn trajectory_to_csv(t: &Trajectory, params_hash: u64) -> String {
    let header = csv_header(
        Some(params_hash),
        &[
            ("dt_s", num(t.dt_s)),
            ("seed", t.seed.to_string()),
            ("realization", t.realization.to_string()),
        ],
    );
    csv_table(
        &header,
        &["t", "jy", "jz", "sy_out"],
        (0..t.len()).map(|i| vec![i as f64 * t.dt_s, t.jy[i], t.jz[i], t.sy_out[i]]),
    )
}
