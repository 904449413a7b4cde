//! Dataset CSV ingest and emission, and the binary posterior draw file.
//!
//! CSV files may carry `#` comment lines anywhere; the first non-comment
//! line is the header. Reals are written in shortest round-trip form so a
//! write followed by a read is bit-exact.
//!
//! Draw file layout, all integers and reals little-endian:
//!
//! ```text
//! "HOBZ1"  u32 version
//! u64 seed, iterations, burn_in, thin, num_trees, config_hash
//! u64 draws, n_train, n_test
//! section kappa
//! section train.f1, train.f0, train.fb
//! section test.f1,  test.f0,  test.fb
//! u64 x 7   proposed[3], accepted[3], rejected_min_leaf
//! section mean_leaves
//! ```
//!
//! A section is a `u64` element count followed by that many `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Matrix};
use crate::error::{HobzError, Result};
use crate::sampler::{ChainDiagnostics, ChainMeta, ComponentDraws, PosteriorDraws};
use crate::simgen::SimTruth;

pub const DRAW_MAGIC: &[u8; 5] = b"HOBZ1";
pub const DRAW_VERSION: u32 = 1;

/// A dataset read from CSV plus the columns that are not covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub data: Dataset,
    pub covariate_names: Vec<String>,
    pub response_name: String,
    /// Raw arm labels, when an arm column was requested.
    pub arm: Option<Vec<String>>,
}

impl Table {
    /// Distinct arm labels in sorted order.
    pub fn arm_levels(&self) -> Vec<String> {
        let mut v: Vec<String> = self.arm.iter().flatten().cloned().collect();
        v.sort();
        v.dedup();
        v
    }

    /// Membership of each row in the arm labelled `level`.
    pub fn arm_mask(&self, level: &str) -> Result<Vec<bool>> {
        let arm = self
            .arm
            .as_ref()
            .ok_or_else(|| HobzError::validation("no arm column was read"))?;
        Ok(arm.iter().map(|a| a == level).collect())
    }

    /// Rows belonging to the arm labelled `level`.
    pub fn arm_subset(&self, level: &str) -> Result<Table> {
        let mask = self.arm_mask(level)?;
        let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if idx.is_empty() {
            return Err(HobzError::validation(format!("arm '{level}' has no rows")));
        }
        Ok(Table {
            data: self.data.subset(&idx),
            covariate_names: self.covariate_names.clone(),
            response_name: self.response_name.clone(),
            arm: self.arm.as_ref().map(|a| idx.iter().map(|&i| a[i].clone()).collect()),
        })
    }
}

fn reader_builder() -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.comment(Some(b'#')).trim(csv::Trim::All).has_headers(true);
    b
}

fn parse_real(cell: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        HobzError::validation(format!("row {row}, column '{col}': '{cell}' is not a number"))
    })?;
    if !v.is_finite() {
        return Err(HobzError::validation(format!(
            "row {row}, column '{col}': missing or non-finite value '{cell}'"
        )));
    }
    Ok(v)
}

/// Read a table whose response column is `response`. Every other column
/// except `arm` must be numeric and becomes a covariate.
///
/// Row numbers in errors count data rows from 1.
pub fn read_table<R: Read>(input: R, response: &str, arm: Option<&str>) -> Result<Table> {
    let mut rdr = reader_builder().from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HobzError::validation(format!("column '{name}' not found")))
    };
    let y_col = find(response)?;
    let arm_col = arm.map(find).transpose()?;
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| j != y_col && Some(j) != arm_col)
        .collect();
    let mut xs = Vec::new();
    let mut y = Vec::new();
    let mut arms = arm_col.map(|_| Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(HobzError::validation(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                headers.len()
            )));
        }
        let v = parse_real(&rec[y_col], row, response)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(HobzError::validation(format!(
                "row {row}: response {v} lies outside [0, 1]"
            )));
        }
        y.push(v);
        for &j in &cov_cols {
            xs.push(parse_real(&rec[j], row, &headers[j])?);
        }
        if let (Some(j), Some(a)) = (arm_col, arms.as_mut()) {
            if rec[j].is_empty() {
                return Err(HobzError::validation(format!("row {row}: missing arm label")));
            }
            a.push(rec[j].to_string());
        }
    }
    let n = y.len();
    let x = Matrix::new(xs, n, cov_cols.len())?;
    Ok(Table {
        data: Dataset::new(x, y)?,
        covariate_names: cov_cols.iter().map(|&j| headers[j].clone()).collect(),
        response_name: response.to_string(),
        arm: arms,
    })
}

pub fn read_table_path(path: &Path, response: &str, arm: Option<&str>) -> Result<Table> {
    read_table(std::fs::File::open(path)?, response, arm)
}

/// Covariates without a response, e.g. rows to predict for.
pub fn read_covariates<R: Read>(input: R, drop: &[&str]) -> Result<(Matrix, Vec<String>)> {
    let mut rdr = reader_builder().from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let cols: Vec<usize> = (0..headers.len())
        .filter(|&j| !drop.contains(&headers[j].as_str()))
        .collect();
    let mut xs = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &j in &cols {
            xs.push(parse_real(&rec[j], r + 1, &headers[j])?);
        }
        n += 1;
    }
    Ok((
        Matrix::new(xs, n, cols.len())?,
        cols.iter().map(|&j| headers[j].clone()).collect(),
    ))
}

/// `# key=value ...` provenance line written at the top of every CSV.
pub fn write_comment<W: Write>(out: &mut W, comment: &str) -> Result<()> {
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

pub fn write_table<W: Write>(out: W, table: &Table, comment: Option<&str>) -> Result<()> {
    let mut out = out;
    if let Some(c) = comment {
        write_comment(&mut out, c)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = table.covariate_names.iter().map(String::as_str).collect();
    header.push(&table.response_name);
    if table.arm.is_some() {
        header.push("arm");
    }
    w.write_record(&header)?;
    let d = &table.data;
    for i in 0..d.n() {
        let mut rec: Vec<String> = d.x().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(d.y()[i].to_string());
        if let Some(a) = &table.arm {
            rec.push(a[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic numeric table writer; `columns` are equal-length.
pub fn write_columns<W: Write>(
    out: W,
    names: &[&str],
    columns: &[&[f64]],
    comment: Option<&str>,
) -> Result<()> {
    let mut out = out;
    if let Some(c) = comment {
        write_comment(&mut out, c)?;
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) || names.len() != columns.len() {
        return Err(HobzError::validation("column lengths differ"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-row generator truth as CSV.
pub fn write_truth<W: Write>(out: W, truth: &SimTruth, comment: Option<&str>) -> Result<()> {
    let mut out = out;
    if let Some(c) = comment {
        write_comment(&mut out, c)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["theta1", "theta0", "lambda", "expected", "d1", "d2", "y"];
    if truth.arm.is_some() {
        header.push("arm");
    }
    w.write_record(&header)?;
    for (i, r) in truth.rows.iter().enumerate() {
        let mut rec = vec![
            r.theta1.to_string(),
            r.theta0.to_string(),
            r.lambda.to_string(),
            r.expected().to_string(),
            (truth.d1[i] as u8).to_string(),
            (truth.d2[i] as u8).to_string(),
            truth.y[i].to_string(),
        ];
        if let Some(a) = &truth.arm {
            rec.push(arm_label(a[i]).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Label used for simulated arms: the first arm is `T`, the other `C`.
pub fn arm_label(first: bool) -> &'static str {
    if first {
        "T"
    } else {
        "C"
    }
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_section<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    put_u64(w, xs.len() as u64)?;
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_draws<W: Write>(mut w: W, d: &PosteriorDraws) -> Result<()> {
    d.validate()?;
    w.write_all(DRAW_MAGIC)?;
    w.write_all(&DRAW_VERSION.to_le_bytes())?;
    let m = &d.meta;
    for v in [m.seed, m.iterations, m.burn_in, m.thin, m.num_trees, m.config_hash] {
        put_u64(&mut w, v)?;
    }
    for v in [d.num_draws(), d.train.n_rows, d.test.n_rows] {
        put_u64(&mut w, v as u64)?;
    }
    put_section(&mut w, &d.kappa)?;
    for c in [&d.train, &d.test] {
        put_section(&mut w, &c.f1)?;
        put_section(&mut w, &c.f0)?;
        put_section(&mut w, &c.fb)?;
    }
    let g = &d.diagnostics;
    for v in g.proposed.iter().chain(&g.accepted).chain([&g.rejected_min_leaf]) {
        put_u64(&mut w, *v)?;
    }
    put_section(&mut w, &g.mean_leaves)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| HobzError::format("draw file is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn section(&mut self, expect: Option<usize>) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        if let Some(e) = expect {
            if len != e {
                return Err(HobzError::format(format!(
                    "section holds {len} values, header implies {e}"
                )));
            }
        }
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| HobzError::format("section too long"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn read_draws<R: Read>(mut r: R) -> Result<PosteriorDraws> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_draws(&buf)
}

pub fn decode_draws(buf: &[u8]) -> Result<PosteriorDraws> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(5)? != DRAW_MAGIC {
        return Err(HobzError::format("not a draw file (bad magic)"));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != DRAW_VERSION {
        return Err(HobzError::format(format!("unsupported draw file version {version}")));
    }
    let meta = ChainMeta {
        seed: c.u64()?,
        iterations: c.u64()?,
        burn_in: c.u64()?,
        thin: c.u64()?,
        num_trees: c.u64()?,
        config_hash: c.u64()?,
    };
    let l = c.u64()? as usize;
    let n_train = c.u64()? as usize;
    let n_test = c.u64()? as usize;
    let kappa = c.section(Some(l))?;
    let mut comp = |n: usize| -> Result<ComponentDraws> {
        let size = l
            .checked_mul(n)
            .ok_or_else(|| HobzError::format("draw dimensions overflow"))?;
        Ok(ComponentDraws {
            n_rows: n,
            f1: c.section(Some(size))?,
            f0: c.section(Some(size))?,
            fb: c.section(Some(size))?,
        })
    };
    let train = comp(n_train)?;
    let test = comp(n_test)?;
    let mut counts = [0u64; 7];
    for v in counts.iter_mut() {
        *v = c.u64()?;
    }
    let mean_leaves = c.section(None)?;
    if c.pos != buf.len() {
        return Err(HobzError::format("trailing bytes after draw file"));
    }
    let d = PosteriorDraws {
        meta,
        kappa,
        train,
        test,
        diagnostics: ChainDiagnostics {
            proposed: [counts[0], counts[1], counts[2]],
            accepted: [counts[3], counts[4], counts[5]],
            rejected_min_leaf: counts[6],
            mean_leaves,
        },
    };
    d.validate()
        .map_err(|e| HobzError::format(format!("inconsistent draw file: {e}")))?;
    Ok(d)
}
