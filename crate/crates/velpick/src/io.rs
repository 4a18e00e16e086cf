//! On-disk formats: gathers and spectra as flat little-endian f64 matrices
//! behind a small text header, picks and reports as line-oriented text,
//! images as binary portable graymaps. All writers are byte-deterministic.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::ensemble::PickResult;
use crate::model::{CmpGather, SpectrumGrid, SurveyIndex, TimeAxis, VelocityAxis, VelocityFunction};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: bad format: {reason}")]
    Format { path: String, reason: String },
}

fn format_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

const GATHER_MAGIC: &str = "velpick-gather 1";
const SPECTRUM_MAGIC: &str = "velpick-spectrum 1";

/// f64 formatted with Rust's shortest round-trip representation.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_gather(path: &Path, g: &CmpGather) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{GATHER_MAGIC}")?;
    writeln!(w, "line {}", g.location.line)?;
    writeln!(w, "cdp {}", g.location.cdp)?;
    writeln!(
        w,
        "taxis {} {} {}",
        fmt_f64(g.taxis.t0),
        fmt_f64(g.taxis.dt),
        g.taxis.n
    )?;
    let offsets: Vec<String> = g.offsets.iter().map(|o| fmt_f64(*o)).collect();
    writeln!(w, "offsets {}", offsets.join(" "))?;
    writeln!(w, "end")?;
    for a in g.traces() {
        w.write_all(&a.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_gather(path: &Path) -> Result<CmpGather, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err(path, "truncated header"));
        }
        let line = line.trim_end().to_string();
        if line == "end" {
            break;
        }
        header.push(line);
    }
    if header.first().map(String::as_str) != Some(GATHER_MAGIC) {
        return Err(format_err(path, "missing gather magic"));
    }
    let field = |key: &str| -> Result<String, IoError> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(&format!("{key} ")))
            .map(str::to_string)
            .ok_or_else(|| format_err(path, format!("missing field {key}")))
    };
    let line_no: i64 = field("line")?.parse().map_err(|_| format_err(path, "bad line"))?;
    let cdp: i64 = field("cdp")?.parse().map_err(|_| format_err(path, "bad cdp"))?;
    let tparts: Vec<f64> = field("taxis")?
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| format_err(path, "bad taxis")))
        .collect::<Result<_, _>>()?;
    if tparts.len() != 3 {
        return Err(format_err(path, "taxis needs t0 dt n"));
    }
    let taxis = TimeAxis::new(tparts[0], tparts[1], tparts[2] as usize)
        .map_err(|e| format_err(path, e.to_string()))?;
    let offsets: Vec<f64> = field("offsets")?
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| format_err(path, "bad offset")))
        .collect::<Result<_, _>>()?;
    let count = taxis.n * offsets.len();
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| format_err(path, "truncated trace data"))?;
    let traces: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    CmpGather::new(taxis, offsets, traces, SurveyIndex::new(line_no, cdp))
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn write_spectrum(path: &Path, s: &SpectrumGrid) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SPECTRUM_MAGIC}")?;
    writeln!(w, "line {}", s.location.line)?;
    writeln!(w, "cdp {}", s.location.cdp)?;
    writeln!(
        w,
        "taxis {} {} {}",
        fmt_f64(s.taxis.t0),
        fmt_f64(s.taxis.dt),
        s.taxis.n
    )?;
    writeln!(
        w,
        "vaxis {} {} {}",
        fmt_f64(s.vaxis.v0),
        fmt_f64(s.vaxis.dv),
        s.vaxis.m
    )?;
    writeln!(w, "end")?;
    for v in s.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<SpectrumGrid, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err(path, "truncated header"));
        }
        let line = line.trim_end().to_string();
        if line == "end" {
            break;
        }
        header.push(line);
    }
    if header.first().map(String::as_str) != Some(SPECTRUM_MAGIC) {
        return Err(format_err(path, "missing spectrum magic"));
    }
    let field = |key: &str| -> Result<String, IoError> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(&format!("{key} ")))
            .map(str::to_string)
            .ok_or_else(|| format_err(path, format!("missing field {key}")))
    };
    let line_no: i64 = field("line")?.parse().map_err(|_| format_err(path, "bad line"))?;
    let cdp: i64 = field("cdp")?.parse().map_err(|_| format_err(path, "bad cdp"))?;
    let parse3 = |s: String| -> Result<Vec<f64>, IoError> {
        s.split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|_| format_err(path, "bad axis")))
            .collect()
    };
    let tp = parse3(field("taxis")?)?;
    let vp = parse3(field("vaxis")?)?;
    let taxis = TimeAxis::new(tp[0], tp[1], tp[2] as usize)
        .map_err(|e| format_err(path, e.to_string()))?;
    let vaxis = VelocityAxis::new(vp[0], vp[1], vp[2] as usize)
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut buf = vec![0u8; taxis.n * vaxis.m * 8];
    r.read_exact(&mut buf)
        .map_err(|_| format_err(path, "truncated matrix data"))?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SpectrumGrid::new(taxis, vaxis, values, SurveyIndex::new(line_no, cdp))
        .map_err(|e| format_err(path, e.to_string()))
}

/// Picks file: one block per location, "t v" pairs, blank-line separated.
pub fn write_picks<'a>(
    path: &Path,
    picks: impl Iterator<Item = (&'a SurveyIndex, &'a VelocityFunction, bool)>,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# velpick picks 1")?;
    for (loc, f, low_conf) in picks {
        if low_conf {
            writeln!(w, "location {} {} low_confidence", loc.line, loc.cdp)?;
        } else {
            writeln!(w, "location {} {}", loc.line, loc.cdp)?;
        }
        for &(t, v) in f.picks() {
            writeln!(w, "{} {}", fmt_f64(t), fmt_f64(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_pick_results(
    path: &Path,
    picks: &BTreeMap<SurveyIndex, PickResult>,
) -> Result<(), IoError> {
    write_picks(
        path,
        picks
            .iter()
            .map(|(loc, p)| (loc, &p.curve, p.low_confidence)),
    )
}

pub fn read_picks(path: &Path) -> Result<BTreeMap<SurveyIndex, PickResult>, IoError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = BTreeMap::new();
    let mut cur: Option<(SurveyIndex, bool, Vec<(f64, f64)>)> = None;
    let mut flush = |cur: &mut Option<(SurveyIndex, bool, Vec<(f64, f64)>)>| -> Result<(), IoError> {
        if let Some((loc, low, picks)) = cur.take() {
            let curve = VelocityFunction::new(picks).map_err(|e| format_err(path, e.to_string()))?;
            out.insert(
                loc,
                PickResult {
                    curve,
                    low_confidence: low,
                },
            );
        }
        Ok(())
    };
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            flush(&mut cur)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("location ") {
            flush(&mut cur)?;
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() < 2 {
                return Err(format_err(path, "bad location line"));
            }
            let l: i64 = parts[0].parse().map_err(|_| format_err(path, "bad line number"))?;
            let c: i64 = parts[1].parse().map_err(|_| format_err(path, "bad cdp number"))?;
            let low = parts.get(2) == Some(&"low_confidence");
            cur = Some((SurveyIndex::new(l, c), low, Vec::new()));
        } else {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(format_err(path, format!("bad pick line: {line}")));
            }
            let t: f64 = parts[0].parse().map_err(|_| format_err(path, "bad t"))?;
            let v: f64 = parts[1].parse().map_err(|_| format_err(path, "bad v"))?;
            match &mut cur {
                Some((_, _, picks)) => picks.push((t, v)),
                None => return Err(format_err(path, "pick before location header")),
            }
        }
    }
    flush(&mut cur)?;
    Ok(out)
}

/// Noise-point file: same block layout as picks but without the curve
/// invariants (duplicate or unordered times allowed).
pub fn write_point_blocks(
    path: &Path,
    blocks: &BTreeMap<SurveyIndex, Vec<(f64, f64)>>,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# velpick points 1")?;
    for (loc, pts) in blocks {
        writeln!(w, "location {} {}", loc.line, loc.cdp)?;
        for &(t, v) in pts {
            writeln!(w, "{} {}", fmt_f64(t), fmt_f64(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_point_blocks(
    path: &Path,
) -> Result<BTreeMap<SurveyIndex, Vec<(f64, f64)>>, IoError> {
    let r = BufReader::new(File::open(path)?);
    let mut out: BTreeMap<SurveyIndex, Vec<(f64, f64)>> = BTreeMap::new();
    let mut cur: Option<SurveyIndex> = None;
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("location ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let l: i64 = parts[0].parse().map_err(|_| format_err(path, "bad line number"))?;
            let c: i64 = parts[1].parse().map_err(|_| format_err(path, "bad cdp number"))?;
            let loc = SurveyIndex::new(l, c);
            out.entry(loc).or_default();
            cur = Some(loc);
        } else {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let t: f64 = parts[0].parse().map_err(|_| format_err(path, "bad t"))?;
            let v: f64 = parts[1].parse().map_err(|_| format_err(path, "bad v"))?;
            let loc = cur.ok_or_else(|| format_err(path, "point before location header"))?;
            out.get_mut(&loc).unwrap().push((t, v));
        }
    }
    Ok(out)
}

/// Binary portable graymap, min/max normalized to 0..255. Rows are the
/// image top-down.
pub fn write_pgm(path: &Path, rows: &[Vec<f64>]) -> Result<(), IoError> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5")?;
    writeln!(w, "{width} {height}")?;
    writeln!(w, "255")?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in rows {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    for row in rows {
        let bytes: Vec<u8> = row
            .iter()
            .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}
