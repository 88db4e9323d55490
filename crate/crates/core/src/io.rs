//! CSV formats for path bundles and tabulated curves.
//!
//! A path bundle file starts with one metadata line
//!
//! ```text
//! # horizon=5.0000000000000000e0,n_steps=50,n_paths=100,seed=42
//! ```
//!
//! followed by one headerless row per path holding `X_0, …, X_n`. Values are
//! written with 17 significant digits so a round trip is exact for `f64`.
//!
//! A curve file has the header `abscissa,value` and one row per grid point.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nadaraya::CurveOnGrid;
use crate::scalar::Scalar;
use crate::sde::PathBundle;

/// Formats with 17 significant digits.
pub fn fmt_exact<T: Scalar>(v: T) -> String {
    format!("{v:.16e}")
}

pub fn write_paths<T: Scalar, W: Write>(bundle: &PathBundle<T>, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let meta = format!(
        "# horizon={},n_steps={},n_paths={},seed={}\n",
        fmt_exact(bundle.horizon()),
        bundle.n_steps(),
        bundle.n_paths(),
        bundle.seed()
    );
    out.write_all(meta.as_bytes()).map_err(|e| Error::io("<paths>", e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for path in bundle.paths() {
        w.write_record(path.iter().map(|&v| fmt_exact(v)))
            .map_err(|e| Error::parse("path csv", e))?;
    }
    w.flush().map_err(|e| Error::io("<paths>", e))
}

pub fn read_paths<T: Scalar, R: Read>(input: R) -> Result<PathBundle<T>> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| Error::io("<paths>", e))?;
    let meta = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::parse("path csv", "missing `# horizon=…` metadata line"))?;
    let mut horizon = None;
    let mut n_steps = None;
    let mut n_paths = None;
    let mut seed = None;
    for field in meta.split(',') {
        let (key, val) = field
            .trim()
            .split_once('=')
            .ok_or_else(|| Error::parse("path csv metadata", format!("bad field `{field}`")))?;
        let bad = |_| Error::parse("path csv metadata", format!("bad value for `{key}`: `{val}`"));
        match key {
            "horizon" => horizon = Some(val.parse::<T>().map_err(|_| bad(()))?),
            "n_steps" => n_steps = Some(val.parse::<usize>().map_err(|_| bad(()))?),
            "n_paths" => n_paths = Some(val.parse::<usize>().map_err(|_| bad(()))?),
            "seed" => seed = Some(val.parse::<u64>().map_err(|_| bad(()))?),
            other => {
                return Err(Error::parse("path csv metadata", format!("unknown key `{other}`")))
            }
        }
    }
    let horizon = horizon.ok_or_else(|| Error::parse("path csv metadata", "missing `horizon`"))?;
    let seed = seed.unwrap_or(0);

    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse("path csv", e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<T>()
                    .map_err(|_| Error::parse("path csv", format!("row {}: bad number `{f}`", i + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    let bundle = PathBundle::from_rows(rows, horizon, seed)?;
    if n_steps.is_some_and(|n| n != bundle.n_steps()) || n_paths.is_some_and(|n| n != bundle.n_paths()) {
        return Err(Error::parse("path csv", "row count or width disagrees with metadata"));
    }
    Ok(bundle)
}

pub fn save_paths<T: Scalar>(bundle: &PathBundle<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_paths(bundle, f).map_err(|e| relabel(e, path))
}

pub fn load_paths<T: Scalar>(path: &Path) -> Result<PathBundle<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_paths(f).map_err(|e| relabel(e, path))
}

pub fn write_curve<T: Scalar, W: Write>(curve: &CurveOnGrid<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["abscissa", "value"])
        .map_err(|e| Error::parse("curve csv", e))?;
    for (x, v) in curve.points() {
        w.write_record([fmt_exact(x), fmt_exact(v)])
            .map_err(|e| Error::parse("curve csv", e))?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))
}

/// Reads an `abscissa,value` file. Abscissae must be increasing and equally
/// spaced to a relative tolerance of 1e-6.
pub fn read_curve<T: Scalar, R: Read>(input: R) -> Result<CurveOnGrid<T>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| Error::parse("curve csv", e))?;
    if headers.len() != 2 || &headers[0] != "abscissa" || &headers[1] != "value" {
        return Err(Error::parse("curve csv", "expected header `abscissa,value`"));
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse("curve csv", e))?;
        let num = |j: usize| {
            rec[j]
                .trim()
                .parse::<T>()
                .map_err(|_| Error::parse("curve csv", format!("row {}: bad number `{}`", i + 1, &rec[j])))
        };
        xs.push(num(0)?);
        vs.push(num(1)?);
    }
    if xs.len() < 2 {
        return Err(Error::parse("curve csv", "need at least two rows"));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let step = (hi - lo) / T::from_count(xs.len() - 1);
    let tol = T::lit(1e-6) * step.abs();
    for (i, &x) in xs.iter().enumerate() {
        if (x - (lo + step * T::from_count(i))).abs() > tol {
            return Err(Error::parse("curve csv", format!("abscissae not uniformly spaced at row {}", i + 1)));
        }
    }
    CurveOnGrid::new(lo, hi, vs)
}

pub fn save_curve<T: Scalar>(curve: &CurveOnGrid<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_curve(curve, f).map_err(|e| relabel(e, path))
}

pub fn load_curve<T: Scalar>(path: &Path) -> Result<CurveOnGrid<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_curve(f).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::Parse { what, detail } => Error::Parse {
            what: format!("{what} ({})", path.display()),
            detail,
        },
        other => other,
    }
}
