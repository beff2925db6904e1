//! Prox-functions, Bregman divergences and the dual-averaging projection
//! `u ↦ argmin_{x∈𝒳} {⟨u, x⟩ + d(x)}`.

use std::cmp::Ordering;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm};

/// Feasibility slack used by [`FeasibleSet::contains`].
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Nonnegative, 1-strongly convex function with `d(0) = 0`.
///
/// Only the half squared Euclidean norm is provided; its dual projection is
/// the Euclidean projection of `−u` onto the feasible set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxFunction {
    #[default]
    HalfSquaredNorm,
}

impl ProxFunction {
    pub fn name(&self) -> &'static str {
        match self {
            ProxFunction::HalfSquaredNorm => "half_squared_norm",
        }
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        match self {
            ProxFunction::HalfSquaredNorm => 0.5 * x.dot(x),
        }
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            ProxFunction::HalfSquaredNorm => x.clone(),
        }
    }

    /// `D_d(x, y) = d(x) − d(y) − ⟨∇d(y), x − y⟩`, without feasibility checks.
    pub fn bregman(&self, x: &Array1<f64>, y: &Array1<f64>) -> f64 {
        match self {
            // Closed form avoids the cancellation in the generic expression.
            ProxFunction::HalfSquaredNorm => 0.5 * crate::linalg::dist_sq(x, y),
        }
    }
}

/// Closed convex set containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FeasibleSet {
    Unconstrained { dim: usize },
    L1Ball { dim: usize, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Unconstrained { dim } | FeasibleSet::L1Ball { dim, .. } => *dim,
            FeasibleSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Unconstrained { .. } => Ok(()),
            // Radius 0 is the degenerate ball {0}, which a zero planted signal produces.
            FeasibleSet::L1Ball { radius, .. } => {
                if radius.is_finite() && *radius >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("l1 radius must be nonnegative, got {radius}")))
                }
            }
            FeasibleSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
                }
                for (k, (l, h)) in lo.iter().zip(hi).enumerate() {
                    if l.is_nan() || h.is_nan() || !(*l <= 0.0 && 0.0 <= *h) {
                        return Err(Error::InvalidInput(format!(
                            "box coordinate {k}: [{l}, {h}] must contain 0"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, x: &Array1<f64>) -> bool {
        if x.len() != self.dim() || !all_finite(x) {
            return false;
        }
        match self {
            FeasibleSet::Unconstrained { .. } => true,
            FeasibleSet::L1Ball { radius, .. } => l1_norm(x) <= radius * (1.0 + FEASIBILITY_TOL),
            FeasibleSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - FEASIBILITY_TOL && *v <= h + FEASIBILITY_TOL),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &Array1<f64>) -> Result<Array1<f64>> {
        check_vector(v, self.dim(), "projection input")?;
        match self {
            FeasibleSet::Unconstrained { .. } => Ok(v.clone()),
            FeasibleSet::L1Ball { radius, .. } if *radius == 0.0 => Ok(Array1::zeros(v.len())),
            FeasibleSet::L1Ball { radius, .. } => project_l1(v, *radius),
            FeasibleSet::Box { lo, hi } => Ok(Array1::from_iter(
                v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)),
            )),
        }
    }
}

pub(crate) fn l1_norm(x: &Array1<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn check_vector(v: &Array1<f64>, dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    if !all_finite(v) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ radius}` by sort and threshold.
///
/// Magnitudes are sorted descending (stable, ties by coordinate index) and
/// scanned for the last index where the soft-threshold level stays below
/// the sorted magnitude.
pub fn project_l1(v: &Array1<f64>, radius: f64) -> Result<Array1<f64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("l1 radius must be positive, got {radius}")));
    }
    if !all_finite(v) {
        return Err(Error::NonFinite("l1 projection input".into()));
    }
    if l1_norm(v) <= radius {
        return Ok(v.clone());
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        let mu = v[idx].abs();
        cumsum += mu;
        let level = (cumsum - radius) / (k + 1) as f64;
        if mu - level > 0.0 {
            theta = level;
        } else {
            break;
        }
    }
    Ok(v.mapv(|x| x.signum() * (x.abs() - theta).max(0.0)))
}

/// The pair `(𝒳, d)` with its argmin oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualProjector {
    set: FeasibleSet,
    prox: ProxFunction,
}

impl DualProjector {
    pub fn new(set: FeasibleSet, prox: ProxFunction) -> Result<Self> {
        set.validate()?;
        Ok(Self { set, prox })
    }

    pub fn quadratic(set: FeasibleSet) -> Result<Self> {
        Self::new(set, ProxFunction::HalfSquaredNorm)
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn prox(&self) -> ProxFunction {
        self.prox
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// `argmin_{x∈𝒳} {⟨u, x⟩ + d(x)}` for an already scaled dual vector `u`.
    pub fn da_project(&self, u: &Array1<f64>) -> Result<Array1<f64>> {
        check_vector(u, self.dim(), "dual vector")?;
        match self.prox {
            ProxFunction::HalfSquaredNorm => self.set.project(&-u),
        }
    }

    /// Bregman divergence of the prox-function, rejecting infeasible points.
    pub fn bregman(&self, x: &Array1<f64>, y: &Array1<f64>) -> Result<f64> {
        for (p, name) in [(x, "x"), (y, "y")] {
            if !self.set.contains(p) {
                return Err(Error::InvalidInput(format!("bregman: {name} is not feasible")));
            }
        }
        Ok(self.prox.bregman(x, y))
    }
}

/// Checks `‖Π(a·u) − Π(a·v)‖ ≤ a‖u − v‖ + 1e-12` for the dual projection `Π`.
pub fn nonexpansiveness_check(proj: &DualProjector, a: f64, u: &Array1<f64>, v: &Array1<f64>) -> Result<bool> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("scale must be positive, got {a}")));
    }
    let pu = proj.da_project(&(u * a))?;
    let pv = proj.da_project(&(v * a))?;
    Ok(norm(&(&pu - &pv)) <= a * norm(&(u - v)) + 1e-12)
}
