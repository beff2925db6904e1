//! Binary LASSO instance files.
//!
//! A file is one line of JSON header terminated by `\n`, followed by a
//! payload of little-endian IEEE-754 doubles in this order: `A_1 … A_n`
//! (each `p_i × m`, row-major), `y_1 … y_n`, `x_sharp` (length m), and
//! `x_star` (length m) when the header carries a reference solution.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{LocalObjective, ProblemInstance, ReferenceSolution};
use crate::prox::{DualProjector, FeasibleSet};

pub const INSTANCE_FORMAT: &str = "ndda-instance/1";
const LAYOUT: &str = "f64 little-endian, row-major: A_1..A_n (p_i x m), y_1..y_n, x_sharp (m), x_star (m, if reference)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceHeader {
    pub format: String,
    pub layout: String,
    pub n: usize,
    pub m: usize,
    pub p: Vec<usize>,
    pub seed: u64,
    pub radius: f64,
    pub smoothness: f64,
    pub reference: Option<ReferenceMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceMeta {
    pub f_star: f64,
    pub tol: f64,
    pub residual: f64,
    pub lipschitz: f64,
    pub iterations: usize,
}

/// Contents of an instance file.
#[derive(Debug, Clone)]
pub struct StoredInstance {
    pub instance: ProblemInstance,
    pub seed: u64,
    pub x_sharp: Array1<f64>,
    pub reference: Option<ReferenceSolution>,
}

fn put(w: &mut impl Write, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_instance(
    path: &Path,
    inst: &ProblemInstance,
    seed: u64,
    x_sharp: &Array1<f64>,
    reference: Option<&ReferenceSolution>,
) -> Result<()> {
    let FeasibleSet::L1Ball { radius, .. } = *inst.set() else {
        return Err(Error::Format("only l1-ball LASSO instances can be stored".into()));
    };
    let mut mats = Vec::with_capacity(inst.n());
    for f in inst.locals() {
        match f {
            LocalObjective::LeastSquares { a, y } => mats.push((a, y)),
            LocalObjective::Quadratic { .. } => {
                return Err(Error::Format("only least-squares locals can be stored".into()))
            }
        }
    }
    let header = InstanceHeader {
        format: INSTANCE_FORMAT.into(),
        layout: LAYOUT.into(),
        n: inst.n(),
        m: inst.dim(),
        p: mats.iter().map(|(a, _)| a.nrows()).collect(),
        seed,
        radius,
        smoothness: inst.smoothness(),
        reference: reference.map(|r| ReferenceMeta {
            f_star: r.f_star,
            tol: r.tol,
            residual: r.residual,
            lipschitz: r.lipschitz,
            iterations: r.iterations,
        }),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (a, _) in &mats {
        put(&mut w, a.iter().copied())?;
    }
    for (_, y) in &mats {
        put(&mut w, y.iter().copied())?;
    }
    put(&mut w, x_sharp.iter().copied())?;
    if let Some(r) = reference {
        put(&mut w, r.x_star.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

fn take(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

pub fn read_instance(path: &Path) -> Result<StoredInstance> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: InstanceHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.format != INSTANCE_FORMAT {
        return Err(Error::Format(format!("unsupported format '{}'", header.format)));
    }
    if header.p.len() != header.n {
        return Err(Error::Format("row counts do not match n".into()));
    }
    let m = header.m;
    let mut mats = Vec::with_capacity(header.n);
    for &p in &header.p {
        let data = take(&mut r, p * m)?;
        mats.push(Array2::from_shape_vec((p, m), data).map_err(|e| Error::Format(e.to_string()))?);
    }
    let mut ys = Vec::with_capacity(header.n);
    for &p in &header.p {
        ys.push(Array1::from(take(&mut r, p)?));
    }
    let x_sharp = Array1::from(take(&mut r, m)?);
    let reference = match &header.reference {
        Some(meta) => Some(ReferenceSolution {
            x_star: take(&mut r, m)?,
            f_star: meta.f_star,
            tol: meta.tol,
            residual: meta.residual,
            lipschitz: meta.lipschitz,
            iterations: meta.iterations,
        }),
        None => None,
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    let locals = mats
        .into_iter()
        .zip(ys)
        .map(|(a, y)| LocalObjective::least_squares(a, y))
        .collect::<Result<Vec<_>>>()?;
    let projector = DualProjector::quadratic(FeasibleSet::L1Ball { dim: m, radius: header.radius })?;
    let instance = ProblemInstance::new(locals, projector)?;
    Ok(StoredInstance { instance, seed: header.seed, x_sharp, reference })
}
