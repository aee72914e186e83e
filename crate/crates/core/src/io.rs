//! CSV and JSON artifacts exchanged between CLI stages.
//!
//! All tables are long-format with a header row. Floats use Rust's shortest
//! round-trip formatting, so a write/read cycle is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use crate::error::{Error, Result};
use crate::girl::LossSlice;
use crate::glearner::{PosteriorStep, SolvedPlan, Trajectory};
use crate::linalg::{Mat, Vector};
use crate::market::{ReturnCovariance, ReturnPaths};

pub const RETURNS_EXPECTED: &str = "returns_expected.csv";
pub const RETURNS_REALIZED: &str = "returns_realized.csv";
pub const SIGMA_R: &str = "sigma_r.csv";
pub const ASSET_MEANS: &str = "asset_means.csv";
pub const PLAN: &str = "plan.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const CASH: &str = "cash.csv";
pub const GIRL_REPORT: &str = "girl_report.json";
pub const LOSS_SLICES: &str = "loss_slices.csv";
pub const PERFORMANCE: &str = "performance.csv";
pub const SUMMARY: &str = "summary.json";
pub const CASH_INSTALLMENTS: &str = "cash_installments.csv";

pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Files written by one command; removed again if the command fails.
#[derive(Debug, Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn track(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn remove_all(&mut self) {
        for p in self.written.drain(..) {
            let _ = std::fs::remove_file(&p);
        }
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|_| Error::MissingInput(path.display().to_string()))?;
    Ok(ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file)))
}

fn check_header(reader: &mut csv::Reader<BufReader<File>>, path: &Path, want: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(want.iter().copied()) {
        return Err(Error::Estimation(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            want.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &StringRecord, i: usize, path: &Path) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Estimation(format!("{}: bad value in column {} of {:?}", path.display(), i, rec)))
}

fn create_writer(path: &Path, out: &mut OutputSet, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path)?;
    out.track(path);
    let mut w = WriterBuilder::new().from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T, out: &mut OutputSet) -> Result<()> {
    let file = File::create(path)?;
    out.track(path);
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|_| Error::MissingInput(path.display().to_string()))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnKind {
    Expected,
    Realized,
}

/// `path,period,asset,value` with `asset` indexing risky assets from 0.
pub fn write_returns(path: &Path, paths: &ReturnPaths, kind: ReturnKind, out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["path", "period", "asset", "value"])?;
    for p in 0..paths.n_paths {
        for t in 0..paths.horizon {
            let row = match kind {
                ReturnKind::Expected => paths.expected_row(p, t),
                ReturnKind::Realized => paths.realized_row(p, t),
            };
            for (i, v) in row.iter().enumerate() {
                w.write_record([p.to_string(), t.to_string(), i.to_string(), fmt(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_return_table(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut r = open_reader(path)?;
    check_header(&mut r, path, &["path", "period", "asset", "value"])?;
    let mut rows = Vec::new();
    let (mut np, mut nt, mut na) = (0, 0, 0);
    for rec in r.records() {
        let rec = rec?;
        let (p, t, a): (usize, usize, usize) = (field(&rec, 0, path)?, field(&rec, 1, path)?, field(&rec, 2, path)?);
        let v: f64 = field(&rec, 3, path)?;
        np = np.max(p + 1);
        nt = nt.max(t + 1);
        na = na.max(a + 1);
        rows.push((p, t, a, v));
    }
    let total = np * nt * na;
    if rows.len() != total || total == 0 {
        return Err(Error::Shape {
            context: "return table rows",
            expected: total.to_string(),
            actual: rows.len().to_string(),
        });
    }
    let mut data = vec![f64::NAN; total];
    for (p, t, a, v) in rows {
        data[(p * nt + t) * na + a] = v;
    }
    if data.iter().any(|v| v.is_nan()) {
        return Err(Error::Estimation(format!("{}: duplicate or missing (path, period, asset) rows", path.display())));
    }
    Ok((np, nt, na, data))
}

/// Reads expected returns and, when given, realized returns of the same shape.
/// The market factor series is not stored and comes back as zeros.
pub fn read_returns(expected: &Path, realized: Option<&Path>) -> Result<ReturnPaths> {
    let (np, nt, na, exp) = read_return_table(expected)?;
    let mut out = ReturnPaths::zeros(np, nt, na);
    out.expected = exp;
    if let Some(rp) = realized {
        let (p2, t2, a2, real) = read_return_table(rp)?;
        if (p2, t2, a2) != (np, nt, na) {
            return Err(Error::Shape {
                context: "realized vs expected returns",
                expected: format!("{np}x{nt}x{na}"),
                actual: format!("{p2}x{t2}x{a2}"),
            });
        }
        out.realized = real;
    }
    Ok(out)
}

/// `row,col,value` for every entry.
pub fn write_matrix(path: &Path, m: &Mat, out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["row", "col", "value"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_record([i.to_string(), j.to_string(), fmt(m[(i, j)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let mut r = open_reader(path)?;
    check_header(&mut r, path, &["row", "col", "value"])?;
    let mut entries = Vec::new();
    let (mut nr, mut nc) = (0, 0);
    for rec in r.records() {
        let rec = rec?;
        let (i, j): (usize, usize) = (field(&rec, 0, path)?, field(&rec, 1, path)?);
        nr = nr.max(i + 1);
        nc = nc.max(j + 1);
        entries.push((i, j, field::<f64>(&rec, 2, path)?));
    }
    if entries.len() != nr * nc {
        return Err(Error::Shape { context: "matrix entries", expected: (nr * nc).to_string(), actual: entries.len().to_string() });
    }
    let mut m = Mat::zeros(nr, nc);
    for (i, j, v) in entries {
        m[(i, j)] = v;
    }
    Ok(m)
}

pub fn read_covariance(path: &Path) -> Result<ReturnCovariance> {
    ReturnCovariance::new(read_matrix(path)?)
}

/// `asset,mean_expected,mean_realized` per risky asset.
pub fn write_asset_means(path: &Path, paths: &ReturnPaths, out: &mut OutputSet) -> Result<()> {
    let (e, r) = paths.asset_means();
    let mut w = create_writer(path, out, &["asset", "mean_expected", "mean_realized"])?;
    for (i, (a, b)) in e.iter().zip(&r).enumerate() {
        w.write_record([i.to_string(), fmt(*a), fmt(*b)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_vector_block(
    w: &mut csv::Writer<BufWriter<File>>,
    t: usize,
    block: &str,
    v: &Vector,
) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        w.write_record([t.to_string(), block.to_string(), i.to_string(), "0".to_string(), fmt(*x)])?;
    }
    Ok(())
}

fn write_matrix_block(w: &mut csv::Writer<BufWriter<File>>, t: usize, block: &str, m: &Mat) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_record([t.to_string(), block.to_string(), i.to_string(), j.to_string(), fmt(m[(i, j)])])?;
        }
    }
    Ok(())
}

/// `period,block,row,col,value`. Policy blocks are `u_tilde`, `v_tilde`,
/// `sigma_p_tilde`; value-function blocks are `f_xx`, `f_x`, `f_0`, `q_xx`,
/// `q_ux`, `q_uu`, `q_x`, `q_u`, `q_0`. Vectors use `col = 0`, scalars `row = col = 0`.
pub fn write_plan(path: &Path, plan: &SolvedPlan, out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["period", "block", "row", "col", "value"])?;
    for t in 0..plan.horizon() {
        let p = plan.posterior(t);
        write_vector_block(&mut w, t, "u_tilde", &p.u_tilde)?;
        write_matrix_block(&mut w, t, "v_tilde", &p.v_tilde)?;
        write_matrix_block(&mut w, t, "sigma_p_tilde", &p.sigma_p_tilde)?;
        let f = &plan.f[t];
        write_matrix_block(&mut w, t, "f_xx", &f.f_xx)?;
        write_vector_block(&mut w, t, "f_x", &f.f_x)?;
        write_vector_block(&mut w, t, "f_0", &Vector::from_element(1, f.f_0))?;
        let q = &plan.q[t];
        write_matrix_block(&mut w, t, "q_xx", &q.q_xx)?;
        write_matrix_block(&mut w, t, "q_ux", &q.q_ux)?;
        write_matrix_block(&mut w, t, "q_uu", &q.q_uu)?;
        write_vector_block(&mut w, t, "q_x", &q.q_x)?;
        write_vector_block(&mut w, t, "q_u", &q.q_u)?;
        write_vector_block(&mut w, t, "q_0", &Vector::from_element(1, q.q_0))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the policy blocks of a plan file.
pub fn read_plan_policy(path: &Path) -> Result<Vec<PosteriorStep>> {
    let mut r = open_reader(path)?;
    check_header(&mut r, path, &["period", "block", "row", "col", "value"])?;
    let mut rows: Vec<(usize, u8, usize, usize, f64)> = Vec::new();
    let (mut horizon, mut n) = (0, 0);
    for rec in r.records() {
        let rec = rec?;
        let kind = match rec.get(1) {
            Some("u_tilde") => 0,
            Some("v_tilde") => 1,
            Some("sigma_p_tilde") => 2,
            _ => continue,
        };
        let t: usize = field(&rec, 0, path)?;
        let (i, j): (usize, usize) = (field(&rec, 2, path)?, field(&rec, 3, path)?);
        horizon = horizon.max(t + 1);
        n = n.max(i + 1);
        rows.push((t, kind, i, j, field(&rec, 4, path)?));
    }
    if horizon == 0 || rows.len() != horizon * (n + 2 * n * n) {
        return Err(Error::Estimation(format!("{}: incomplete policy blocks", path.display())));
    }
    let mut u = vec![Vector::zeros(n); horizon];
    let mut v = vec![Mat::zeros(n, n); horizon];
    let mut s = vec![Mat::zeros(n, n); horizon];
    for (t, kind, i, j, val) in rows {
        if i >= n || j >= n {
            return Err(Error::Estimation(format!("{}: index out of range", path.display())));
        }
        match kind {
            0 => u[t][i] = val,
            1 => v[t][(i, j)] = val,
            _ => s[t][(i, j)] = val,
        }
    }
    u.into_iter()
        .zip(v)
        .zip(s)
        .map(|((u, v), s)| PosteriorStep::from_covariance(u, v, s))
        .collect()
}

/// `path,period,asset,x,u`; `u` is empty at the terminal period.
pub fn write_trajectories(path: &Path, trajs: &[Trajectory], out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["path", "period", "asset", "x", "u"])?;
    for (p, tr) in trajs.iter().enumerate() {
        for t in 0..=tr.horizon() {
            for i in 0..tr.x[t].len() {
                let u = if t < tr.horizon() { fmt(tr.u[t][i]) } else { String::new() };
                w.write_record([p.to_string(), t.to_string(), i.to_string(), fmt(tr.x[t][i]), u])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let mut r = open_reader(path)?;
    check_header(&mut r, path, &["path", "period", "asset", "x", "u"])?;
    let mut rows = Vec::new();
    let (mut np, mut nt, mut na) = (0, 0, 0);
    for rec in r.records() {
        let rec = rec?;
        let (p, t, a): (usize, usize, usize) = (field(&rec, 0, path)?, field(&rec, 1, path)?, field(&rec, 2, path)?);
        let x: f64 = field(&rec, 3, path)?;
        let u: Option<f64> = match rec.get(4).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(field(&rec, 4, path)?),
        };
        np = np.max(p + 1);
        nt = nt.max(t + 1);
        na = na.max(a + 1);
        rows.push((p, t, a, x, u));
    }
    if nt < 2 || rows.len() != np * nt * na {
        return Err(Error::Estimation(format!("{}: incomplete trajectory table", path.display())));
    }
    let horizon = nt - 1;
    let mut xs = vec![vec![Vector::zeros(na); nt]; np];
    let mut us = vec![vec![Vector::zeros(na); horizon]; np];
    for (p, t, a, x, u) in rows {
        xs[p][t][a] = x;
        match (u, t < horizon) {
            (Some(u), true) => us[p][t][a] = u,
            (None, false) => {}
            _ => {
                return Err(Error::Estimation(format!(
                    "{}: trade column must be filled before the last period and empty at it",
                    path.display()
                )))
            }
        }
    }
    xs.into_iter().zip(us).map(|(x, u)| Trajectory::new(x, u)).collect()
}

/// `path,period,c`.
pub fn write_cash(path: &Path, trajs: &[Trajectory], out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["path", "period", "c"])?;
    for (p, tr) in trajs.iter().enumerate() {
        for (t, c) in tr.cash.iter().enumerate() {
            w.write_record([p.to_string(), t.to_string(), fmt(*c)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `parameter,value,nll`.
pub fn write_loss_slices(path: &Path, slices: &[LossSlice], out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["parameter", "value", "nll"])?;
    for s in slices {
        for (v, l) in s.values.iter().zip(&s.losses) {
            w.write_record([s.parameter.clone(), fmt(*v), fmt(*l)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `strategy,period,mean_return`.
pub fn write_performance(path: &Path, series: &[(&str, Vec<f64>)], out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["strategy", "period", "mean_return"])?;
    for (name, values) in series {
        for (t, v) in values.iter().enumerate() {
            w.write_record([name.to_string(), t.to_string(), fmt(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `period,mean_cash,cumulative_cash`.
pub fn write_cash_installments(path: &Path, mean_cash: &[f64], out: &mut OutputSet) -> Result<()> {
    let mut w = create_writer(path, out, &["period", "mean_cash", "cumulative_cash"])?;
    let mut acc = 0.0;
    for (t, c) in mean_cash.iter().enumerate() {
        acc += c;
        w.write_record([t.to_string(), fmt(*c), fmt(acc)])?;
    }
    w.flush()?;
    Ok(())
}
