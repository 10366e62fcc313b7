//! File formats: matrix CSV (row-major, `# rows,cols,field` header, complex
//! entries as adjacent real/imaginary column pairs), observation CSV
//! (`i,y,eps`), iteration-log CSV, and the landscape report row.

use crate::error::{Error, Result};
use crate::factored::IterRecord;
use crate::field::{FieldScalar, FieldTag};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

/// A matrix tagged by its scalar field, as read from disk.
#[derive(Debug, Clone)]
pub enum AnyMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl AnyMatrix {
    pub fn field(&self) -> FieldTag {
        match self {
            AnyMatrix::Real(_) => FieldTag::Real,
            AnyMatrix::Complex(_) => FieldTag::Complex,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            AnyMatrix::Real(m) => m.shape(),
            AnyMatrix::Complex(m) => m.shape(),
        }
    }
}

/// Serialize a matrix in the shared CSV format.
pub fn matrix_to_csv<S: FieldScalar>(m: &DMatrix<S>) -> String {
    let (rows, cols) = m.shape();
    let mut out = String::new();
    let _ = writeln!(out, "# {},{},{}", rows, cols, S::FIELD.name());
    for i in 0..rows {
        let mut fields: Vec<String> = Vec::with_capacity(cols * S::FIELD.c_f());
        for j in 0..cols {
            let v = m[(i, j)];
            match S::FIELD {
                FieldTag::Real => fields.push(format!("{}", v.real())),
                FieldTag::Complex => {
                    fields.push(format!("{}", v.real()));
                    fields.push(format!("{}", v.im_part()));
                }
            }
        }
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn write_matrix_csv<S: FieldScalar>(path: &Path, m: &DMatrix<S>) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: `{s}` is not a number")))
}

pub fn matrix_from_csv(text: &str) -> Result<AnyMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty matrix file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("matrix file must start with `# rows,cols,field`".into()))?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Format("matrix header must be `# rows,cols,field`".into()));
    }
    let rows: usize = parts[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad row count `{}`", parts[0])))?;
    let cols: usize = parts[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad column count `{}`", parts[1])))?;
    let field = FieldTag::parse(parts[2])
        .ok_or_else(|| Error::Format(format!("unknown field `{}`", parts[2])))?;

    let per_row = cols * field.c_f();
    let mut values: Vec<f64> = Vec::with_capacity(rows * per_row);
    let mut data_rows = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != per_row {
            return Err(Error::Format(format!(
                "line {}: expected {} values, got {}",
                lineno + 1,
                per_row,
                fields.len()
            )));
        }
        for f in fields {
            values.push(parse_f64(f, lineno + 1)?);
        }
        data_rows += 1;
    }
    if data_rows != rows {
        return Err(Error::Format(format!("expected {rows} data rows, got {data_rows}")));
    }
    Ok(match field {
        FieldTag::Real => {
            AnyMatrix::Real(DMatrix::from_fn(rows, cols, |i, j| values[i * cols + j]))
        }
        FieldTag::Complex => AnyMatrix::Complex(DMatrix::from_fn(rows, cols, |i, j| {
            Complex64::new(values[i * per_row + 2 * j], values[i * per_row + 2 * j + 1])
        })),
    })
}

pub fn read_matrix_csv(path: &Path) -> Result<AnyMatrix> {
    matrix_from_csv(&std::fs::read_to_string(path)?)
}

/// Observation CSV: header `i,y,eps`, one row per measurement; the eps
/// column is empty when the raw noise is unknown.
pub fn observation_to_csv(y: &DVector<f64>, eps: Option<&DVector<f64>>) -> String {
    let mut out = String::from("i,y,eps\n");
    for i in 0..y.len() {
        match eps {
            Some(e) => {
                let _ = writeln!(out, "{},{},{}", i, y[i], e[i]);
            }
            None => {
                let _ = writeln!(out, "{},{},", i, y[i]);
            }
        }
    }
    out
}

pub fn write_observation_csv(
    path: &Path,
    y: &DVector<f64>,
    eps: Option<&DVector<f64>>,
) -> Result<()> {
    std::fs::write(path, observation_to_csv(y, eps))?;
    Ok(())
}

pub fn observation_from_csv(text: &str) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "i,y,eps" => {}
        _ => return Err(Error::Format("observation file must start with `i,y,eps`".into())),
    }
    let mut ys = Vec::new();
    let mut eps = Vec::new();
    let mut have_eps = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!("line {}: expected `i,y,eps`", lineno + 1)));
        }
        let idx: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad index", lineno + 1)))?;
        if idx != ys.len() {
            return Err(Error::Format(format!(
                "line {}: indices must be consecutive from 0",
                lineno + 1
            )));
        }
        ys.push(parse_f64(fields[1], lineno + 1)?);
        if fields[2].trim().is_empty() {
            eps.push(0.0);
        } else {
            eps.push(parse_f64(fields[2], lineno + 1)?);
            have_eps += 1;
        }
    }
    let y = DVector::from_vec(ys);
    let eps = if have_eps == 0 {
        None
    } else if have_eps == y.len() {
        Some(DVector::from_vec(eps))
    } else {
        return Err(Error::Format("eps column must be fully present or fully empty".into()));
    };
    Ok((y, eps))
}

pub fn read_observation_csv(path: &Path) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
    observation_from_csv(&std::fs::read_to_string(path)?)
}

/// Iteration log CSV: `iter,objective,grad_norm,step_size`.
pub fn iteration_log_to_csv(trace: &[IterRecord]) -> String {
    let mut out = String::from("iter,objective,grad_norm,step_size\n");
    for r in trace {
        let _ = writeln!(out, "{},{},{},{}", r.iter, r.objective, r.grad_norm, r.step_size);
    }
    out
}

pub fn write_iteration_log(path: &Path, trace: &[IterRecord]) -> Result<()> {
    std::fs::write(path, iteration_log_to_csv(trace))?;
    Ok(())
}

/// The landscape report row shared by `landscape-check` and the sweep output.
pub const REPORT_HEADER: &str = "theorem,seed,d,n,p,field,loss,delta,lambda,lhs,rhs,slack,grad_norm,min_curvature,nuclear_error,vector_error";

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub theorem: String,
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub p: usize,
    pub field: FieldTag,
    pub loss: String,
    pub delta: f64,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub grad_norm: f64,
    pub min_curvature: f64,
    pub nuclear_error: f64,
    pub vector_error: f64,
}

impl ReportRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.theorem,
            self.seed,
            self.d,
            self.n,
            self.p,
            self.field,
            self.loss,
            self.delta,
            self.lambda,
            self.lhs,
            self.rhs,
            self.slack,
            self.grad_norm,
            self.min_curvature,
            self.nuclear_error,
            self.vector_error
        )
    }
}
