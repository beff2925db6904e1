//! Objective instances: the distributed constrained LASSO, synthetic
//! quadratics, gradient oracles, smoothness constants and a centralized
//! reference solver.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, seeded_start, top_eigenvalue_psd};
use crate::prox::{l1_norm, DualProjector, FeasibleSet};
use crate::rng::{streams, Stream};

const SMOOTHNESS_REL_TOL: f64 = 1e-10;
const SMOOTHNESS_MAX_ITER: usize = 1_000_000;

/// Iteration cap for [`reference_solution`].
pub const REFERENCE_MAX_ITER: usize = 10_000_000;
/// Default stopping tolerance on the projected-gradient residual.
pub const REFERENCE_TOL: f64 = 1e-10;

/// A convex, L-smooth local objective.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalObjective {
    /// `½‖y − A x‖²`
    LeastSquares { a: Array2<f64>, y: Array1<f64> },
    /// `½ xᵀHx + ⟨linear, x⟩ + constant` with symmetric PSD `H`
    Quadratic {
        hessian: Array2<f64>,
        linear: Array1<f64>,
        constant: f64,
    },
}

impl LocalObjective {
    pub fn quadratic(hessian: Array2<f64>, linear: Array1<f64>, constant: f64) -> Result<Self> {
        let (r, c) = hessian.dim();
        if r != c {
            return Err(Error::InvalidInput(format!("hessian must be square, got {r}x{c}")));
        }
        if linear.len() != r {
            return Err(Error::DimensionMismatch { expected: r, got: linear.len() });
        }
        if (0..r).any(|i| (0..i).any(|j| hessian[[i, j]] != hessian[[j, i]])) {
            return Err(Error::InvalidInput("hessian must be symmetric".into()));
        }
        Ok(LocalObjective::Quadratic { hessian, linear, constant })
    }

    pub fn least_squares(a: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: y.len() });
        }
        Ok(LocalObjective::LeastSquares { a, y })
    }

    pub fn dim(&self) -> usize {
        match self {
            LocalObjective::LeastSquares { a, .. } => a.ncols(),
            LocalObjective::Quadratic { linear, .. } => linear.len(),
        }
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        match self {
            LocalObjective::LeastSquares { a, y } => {
                let r = a.dot(x) - y;
                0.5 * r.dot(&r)
            }
            LocalObjective::Quadratic { hessian, linear, constant } => {
                0.5 * x.dot(&hessian.dot(x)) + linear.dot(x) + constant
            }
        }
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            LocalObjective::LeastSquares { a, y } => {
                let r = a.dot(x) - y;
                a.t().dot(&r)
            }
            LocalObjective::Quadratic { hessian, linear, .. } => hessian.dot(x) + linear,
        }
    }

    pub fn hessian_vec(&self, v: &Array1<f64>) -> Array1<f64> {
        match self {
            LocalObjective::LeastSquares { a, .. } => a.t().dot(&a.dot(v)),
            LocalObjective::Quadratic { hessian, .. } => hessian.dot(v),
        }
    }

    /// Lipschitz constant of the gradient: `σ_max(A)²` or `λ_max(H)`.
    ///
    /// For least squares the power iteration runs on the smaller of the two
    /// Gram matrices.
    pub fn smoothness(&self) -> Result<f64> {
        let what = "smoothness power iteration";
        match self {
            LocalObjective::LeastSquares { a, .. } => {
                let (p, m) = a.dim();
                if p <= m {
                    top_eigenvalue_psd(|v| a.dot(&a.t().dot(v)), seeded_start(p), SMOOTHNESS_REL_TOL, 0.0, SMOOTHNESS_MAX_ITER, what)
                } else {
                    top_eigenvalue_psd(|v| a.t().dot(&a.dot(v)), seeded_start(m), SMOOTHNESS_REL_TOL, 0.0, SMOOTHNESS_MAX_ITER, what)
                }
            }
            LocalObjective::Quadratic { hessian, .. } => top_eigenvalue_psd(
                |v| hessian.dot(v),
                seeded_start(hessian.nrows()),
                SMOOTHNESS_REL_TOL,
                0.0,
                SMOOTHNESS_MAX_ITER,
                what,
            ),
        }
    }
}

/// `min_{x∈𝒳} Σᵢ fᵢ(x)` with per-agent objectives.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    locals: Vec<LocalObjective>,
    projector: DualProjector,
    local_smoothness: Vec<f64>,
    smoothness: f64,
}

impl ProblemInstance {
    pub fn new(locals: Vec<LocalObjective>, projector: DualProjector) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidInput("instance needs at least one agent".into()));
        }
        let m = projector.dim();
        for f in &locals {
            if f.dim() != m {
                return Err(Error::DimensionMismatch { expected: m, got: f.dim() });
            }
        }
        let local_smoothness = locals.iter().map(|f| f.smoothness()).collect::<Result<Vec<_>>>()?;
        let smoothness = local_smoothness.iter().copied().fold(0.0, f64::max);
        if !(smoothness > 0.0) {
            return Err(Error::InvalidInput("smoothness constant must be positive".into()));
        }
        Ok(Self { locals, projector, local_smoothness, smoothness })
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.projector.dim()
    }

    pub fn locals(&self) -> &[LocalObjective] {
        &self.locals
    }

    pub fn projector(&self) -> &DualProjector {
        &self.projector
    }

    pub fn set(&self) -> &FeasibleSet {
        self.projector.set()
    }

    /// The common constant `L = maxᵢ Lᵢ`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn smoothness_constant(&self, i: usize) -> f64 {
        self.local_smoothness[i]
    }

    fn check_dim(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn local(&self, i: usize) -> Result<&LocalObjective> {
        self.locals
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("agent index {i} out of range for {} agents", self.n())))
    }

    pub fn local_value(&self, i: usize, x: &Array1<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.local(i)?.value(x))
    }

    pub fn local_gradient(&self, i: usize, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        Ok(self.local(i)?.gradient(x))
    }

    /// `f(x) = Σᵢ fᵢ(x)`, summed in agent order.
    pub fn value(&self, x: &Array1<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.locals.iter().map(|f| f.value(x)).sum())
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        let mut g = Array1::zeros(self.dim());
        for f in &self.locals {
            g += &f.gradient(x);
        }
        Ok(g)
    }

    /// Lipschitz constant of `∇f` for the summed objective.
    pub fn global_smoothness(&self) -> Result<f64> {
        top_eigenvalue_psd(
            |v| {
                let mut out = Array1::zeros(v.len());
                for f in &self.locals {
                    out += &f.hessian_vec(v);
                }
                out
            },
            seeded_start(self.dim()),
            SMOOTHNESS_REL_TOL,
            0.0,
            SMOOTHNESS_MAX_ITER,
            "global smoothness power iteration",
        )
    }

    /// `‖x − Π_𝒳(x − ∇f(x)/L)‖`.
    pub fn projected_gradient_residual(&self, x: &Array1<f64>, lipschitz: f64) -> Result<f64> {
        let g = self.gradient(x)?;
        let step = self.set().project(&(x - &(g / lipschitz)))?;
        Ok(norm(&(x - &step)))
    }
}

/// Sizes and noise level of a distributed LASSO instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoSpec {
    /// agents
    pub n: usize,
    /// dimension
    pub m: usize,
    /// rows per agent
    pub p: usize,
    pub noise_sigma2: f64,
    pub sparsity: usize,
}

impl LassoSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.p == 0 {
            return Err(Error::InvalidInput("lasso counts n, m, p must be positive".into()));
        }
        if self.sparsity > self.m {
            return Err(Error::InvalidInput(format!(
                "sparsity {} exceeds dimension {}",
                self.sparsity, self.m
            )));
        }
        if !(self.noise_sigma2.is_finite() && self.noise_sigma2 >= 0.0) {
            return Err(Error::InvalidInput(format!("noise variance {} is invalid", self.noise_sigma2)));
        }
        Ok(())
    }
}

/// Planted signal and noise behind a generated LASSO instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoData {
    pub spec: LassoSpec,
    pub seed: u64,
    pub x_sharp: Array1<f64>,
    pub noise: Vec<Array1<f64>>,
    pub radius: f64,
}

/// Draws `yᵢ = Aᵢ x♯ + bᵢ` with `fᵢ(x) = ½‖yᵢ − Aᵢx‖²` over the ball
/// `‖x‖₁ ≤ 1.1‖x♯‖₁`.
///
/// `Aᵢ` is filled row-major from stream `i`; the support of `x♯` is a partial
/// Fisher–Yates shuffle on the support stream followed by its values; the
/// noise is drawn agent by agent from the noise stream.
pub fn generate_lasso(spec: &LassoSpec, seed: u64) -> Result<(ProblemInstance, LassoData)> {
    spec.validate()?;
    let LassoSpec { n, m, p, noise_sigma2, sparsity } = *spec;

    let mats: Vec<Array2<f64>> = (0..n)
        .map(|i| {
            let mut s = Stream::new(seed, i as u64);
            Array2::from_shape_fn((p, m), |_| s.normal())
        })
        .collect();

    let mut s = Stream::new(seed, streams::SUPPORT);
    let mut perm: Vec<usize> = (0..m).collect();
    for k in 0..sparsity {
        let j = k + s.below((m - k) as u64) as usize;
        perm.swap(k, j);
    }
    let mut x_sharp = Array1::zeros(m);
    for &idx in &perm[..sparsity] {
        x_sharp[idx] = s.normal();
    }

    let sigma = noise_sigma2.sqrt();
    let mut s = Stream::new(seed, streams::NOISE);
    let noise: Vec<Array1<f64>> = (0..n).map(|_| Array1::from_shape_fn(p, |_| sigma * s.normal())).collect();

    let radius = 1.1 * l1_norm(&x_sharp);
    let locals = mats
        .into_iter()
        .zip(&noise)
        .map(|(a, b)| {
            let y = a.dot(&x_sharp) + b;
            LocalObjective::least_squares(a, y)
        })
        .collect::<Result<Vec<_>>>()?;
    let projector = DualProjector::quadratic(FeasibleSet::L1Ball { dim: m, radius })?;
    let inst = ProblemInstance::new(locals, projector)?;
    Ok((inst, LassoData { spec: *spec, seed, x_sharp, noise, radius }))
}

/// High-accuracy minimizer of the centralized problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// Requested tolerance on the projected-gradient residual.
    pub tol: f64,
    /// Achieved residual.
    pub residual: f64,
    /// Lipschitz constant of the summed gradient used as inverse step.
    pub lipschitz: f64,
    pub iterations: usize,
}

impl ReferenceSolution {
    pub fn x_star(&self) -> Array1<f64> {
        Array1::from(self.x_star.clone())
    }
}

/// Accelerated projected gradient with gradient-based adaptive restart,
/// stopped once `‖x − Π(x − ∇f(x)/L)‖ ≤ tol`.
pub fn reference_solution(inst: &ProblemInstance, tol: f64) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let lipschitz = inst.global_smoothness()?;
    let set = inst.set();
    let mut x = Array1::zeros(inst.dim());
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    for it in 0..REFERENCE_MAX_ITER {
        if it % 10 == 0 {
            let residual = inst.projected_gradient_residual(&x, lipschitz)?;
            if !residual.is_finite() {
                return Err(Error::NonFinite("reference solver iterate".into()));
            }
            if residual <= tol {
                let f_star = inst.value(&x)?;
                return Ok(ReferenceSolution {
                    x_star: x.to_vec(),
                    f_star,
                    tol,
                    residual,
                    lipschitz,
                    iterations: it,
                });
            }
        }
        let g = inst.gradient(&y)?;
        let x_next = set.project(&(&y - &(g / lipschitz)))?;
        let step = &x_next - &x;
        if (&y - &x_next).dot(&step) > 0.0 {
            momentum = 1.0;
            y = x_next.clone();
        } else {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &x_next + &(step * ((momentum - 1.0) / next));
            momentum = next;
        }
        x = x_next;
    }
    Err(Error::NonConvergence {
        what: "reference solver".into(),
        iterations: REFERENCE_MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_block_smoothness() {
        let f = LocalObjective::least_squares(Array2::eye(4), Array1::zeros(4)).unwrap();
        assert!((f.smoothness().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_smoothness() {
        let f = LocalObjective::least_squares(array![[1.0, 0.0], [0.0, 3.0]], array![0.0, 0.0]).unwrap();
        assert!((f.smoothness().unwrap() - 9.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_at_origin_and_planted_point() {
        let spec = LassoSpec { n: 3, m: 12, p: 4, noise_sigma2: 0.0, sparsity: 3 };
        let (inst, data) = generate_lasso(&spec, 5).unwrap();
        for i in 0..3 {
            let g = inst.local_gradient(i, &data.x_sharp).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-12));
            let LocalObjective::LeastSquares { a, y } = &inst.locals()[i] else { unreachable!() };
            let g0 = inst.local_gradient(i, &Array1::zeros(12)).unwrap();
            assert_eq!(g0, -a.t().dot(y));
        }
        assert!(inst.local_gradient(0, &Array1::zeros(3)).is_err());
    }

    #[test]
    fn lasso_invariants() {
        let spec = LassoSpec { n: 4, m: 30, p: 5, noise_sigma2: 0.01, sparsity: 3 };
        let (inst, data) = generate_lasso(&spec, 1).unwrap();
        assert_eq!(inst.n(), 4);
        assert_eq!(data.x_sharp.iter().filter(|v| **v != 0.0).count(), 3);
        assert!((data.radius - 1.1 * l1_norm(&data.x_sharp)).abs() < 1e-15);
        for (i, f) in inst.locals().iter().enumerate() {
            let LocalObjective::LeastSquares { a, y } = f else { unreachable!() };
            assert_eq!(a.dim(), (5, 30));
            assert_eq!(y, &(a.dot(&data.x_sharp) + &data.noise[i]));
        }
        let max_l = (0..4).map(|i| inst.smoothness_constant(i)).fold(0.0, f64::max);
        assert_eq!(inst.smoothness(), max_l);
    }

    #[test]
    fn zero_signal_instance() {
        let spec = LassoSpec { n: 2, m: 6, p: 3, noise_sigma2: 0.0, sparsity: 0 };
        let (inst, data) = generate_lasso(&spec, 4).unwrap();
        assert!(data.x_sharp.iter().all(|v| *v == 0.0));
        assert_eq!(inst.value(&Array1::zeros(6)).unwrap(), 0.0);
        let r = reference_solution(&inst, 1e-10).unwrap();
        assert_eq!(r.f_star, 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = LassoSpec { n: 3, m: 20, p: 4, noise_sigma2: 0.01, sparsity: 2 };
        let (a, da) = generate_lasso(&spec, 11).unwrap();
        let (b, db) = generate_lasso(&spec, 11).unwrap();
        assert_eq!(a.locals(), b.locals());
        assert_eq!(da, db);
        let (c, _) = generate_lasso(&spec, 12).unwrap();
        assert_ne!(a.locals(), c.locals());
    }

    #[test]
    fn invalid_specs() {
        let bad = LassoSpec { n: 2, m: 3, p: 1, noise_sigma2: 0.0, sparsity: 4 };
        assert!(generate_lasso(&bad, 0).is_err());
        let bad = LassoSpec { n: 0, m: 3, p: 1, noise_sigma2: 0.0, sparsity: 0 };
        assert!(generate_lasso(&bad, 0).is_err());
    }

    #[test]
    fn quadratic_rejects_asymmetric() {
        assert!(LocalObjective::quadratic(array![[1.0, 2.0], [0.0, 1.0]], array![0.0, 0.0], 0.0).is_err());
    }
}
