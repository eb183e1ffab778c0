//! Time-series CSV, wave-function snapshots and JSON summaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, C64};
use crate::propagator::EvolutionState;

/// One output time of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub gamma_wrapped: f64,
    pub gamma_unwrapped: f64,
    pub mu: f64,
    pub alpha_trans: Vec<f64>,
    pub alpha_boost: Vec<f64>,
    pub alpha_gauge: f64,
    pub alpha_scale: f64,
    pub w_l2: f64,
    pub w_h1: f64,
    pub w_weighted: f64,
    pub w_energy: f64,
    pub mass: f64,
    pub energy: f64,
    pub momentum: Vec<f64>,
    pub h_classical: f64,
    pub lambda: f64,
}

fn indexed(name: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).map(move |j| format!("{name}[{j}]"))
}

pub fn series_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("a", d));
    h.extend(indexed("p", d));
    h.extend(["gamma_wrapped", "gamma_unwrapped", "mu"].map(String::from));
    h.extend(indexed("alpha_trans", d));
    h.extend(indexed("alpha_boost", d));
    h.extend(
        [
            "alpha_gauge",
            "alpha_scale",
            "w_l2",
            "w_h1",
            "w_weighted",
            "w_energy",
            "mass",
            "energy",
        ]
        .map(String::from),
    );
    h.extend(indexed("momentum", d));
    h.extend(["h_classical", "lambda"].map(String::from));
    h
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

impl SeriesRow {
    fn fields(&self) -> Vec<f64> {
        let mut v = vec![self.t];
        v.extend(&self.a);
        v.extend(&self.p);
        v.extend([self.gamma_wrapped, self.gamma_unwrapped, self.mu]);
        v.extend(&self.alpha_trans);
        v.extend(&self.alpha_boost);
        v.extend([
            self.alpha_gauge,
            self.alpha_scale,
            self.w_l2,
            self.w_h1,
            self.w_weighted,
            self.w_energy,
            self.mass,
            self.energy,
        ]);
        v.extend(&self.momentum);
        v.extend([self.h_classical, self.lambda]);
        v
    }

    fn from_fields(d: usize, f: &[f64]) -> Self {
        let mut it = f.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
        let t = take(1)[0];
        let a = take(d);
        let p = take(d);
        let g = take(3);
        let alpha_trans = take(d);
        let alpha_boost = take(d);
        let s = take(8);
        let momentum = take(d);
        let tail = take(2);
        Self {
            t,
            a,
            p,
            gamma_wrapped: g[0],
            gamma_unwrapped: g[1],
            mu: g[2],
            alpha_trans,
            alpha_boost,
            alpha_gauge: s[0],
            alpha_scale: s[1],
            w_l2: s[2],
            w_h1: s[3],
            w_weighted: s[4],
            w_energy: s[5],
            mass: s[6],
            energy: s[7],
            momentum,
            h_classical: tail[0],
            lambda: tail[1],
        }
    }
}

pub fn write_series(path: &Path, d: usize, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(series_header(d))?;
    for row in rows {
        w.write_record(row.fields().into_iter().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

fn dimension_from_header(header: &csv::StringRecord) -> Result<usize> {
    let n = header.len();
    if n < 14 || (n - 14) % 5 != 0 {
        return Err(Error::Config(format!("series header has {n} columns")));
    }
    let d = (n - 14) / 5;
    if header.iter().ne(series_header(d).iter().map(String::as_str)) {
        return Err(Error::Config("unexpected series header".into()));
    }
    Ok(d)
}

pub fn read_series(path: &Path) -> Result<(usize, Vec<SeriesRow>)> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let d = dimension_from_header(r.headers()?)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let values = record
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SeriesRow::from_fields(d, &values));
    }
    Ok((d, rows))
}

/// Snapshots as rows `t, re_0, im_0, re_1, im_1, ...`.
pub fn write_psi_series(path: &Path, states: &[EvolutionState]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    for s in states {
        let mut rec = vec![fmt(s.t)];
        for v in s.psi.values() {
            rec.push(fmt(v.re));
            rec.push(fmt(v.im));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_psi_series(path: &Path, grid: &Grid) -> Result<Vec<EvolutionState>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(BufReader::new(File::open(path)?));
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let nums = record
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if nums.len() != 1 + 2 * grid.len() {
            return Err(Error::LengthMismatch {
                expected: 1 + 2 * grid.len(),
                got: nums.len(),
            });
        }
        let values = nums[1..].chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        out.push(EvolutionState {
            t: nums[0],
            psi: ComplexField::new(grid, values)?,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
