//! Convergence machinery as executable checks: the 2×2 gain matrix and its
//! closed-form spectral radius, step-size admissibility, the O(1/t) bound,
//! trajectory inequalities and log-log rate fitting.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::algorithms::{auxiliary_round, mean_gradient, mean_of, ndda_init, ndda_round, AgentState, AuxiliaryState, RunningMean};
use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::linalg::{dist_sq, norm};
use crate::problem::{ProblemInstance, ReferenceSolution};
use crate::prox::ProxFunction;

/// Relative slack allowed on every trajectory inequality.
pub const INEQUALITY_REL_TOL: f64 = 1e-8;
/// Conservation residuals must stay below `CONSERVATION_TOL·(1 + ‖g_t‖)`.
pub const CONSERVATION_TOL: f64 = 1e-9;

fn check_params(beta: f64, l: f64, a: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!("beta must lie in [0, 1), got {beta}")));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidInput(format!("smoothness must be positive, got {l}")));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {a}")));
    }
    Ok(())
}

/// `E(a) = [[β, a], [L(β+1), β + La]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub beta: f64,
    pub smoothness: f64,
    pub a: f64,
}

impl GainMatrix {
    pub fn entries(&self) -> [[f64; 2]; 2] {
        let GainMatrix { beta, smoothness: l, a } = *self;
        [[beta, a], [l * (beta + 1.0), beta + l * a]]
    }

    /// Both eigenvalues, larger first: `(2β + aL ± √(a²L² + 4(β+1)aL))/2`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let al = self.a * self.smoothness;
        let disc = (al * al + 4.0 * (self.beta + 1.0) * al).sqrt();
        let base = 2.0 * self.beta + al;
        ((base + disc) / 2.0, (base - disc) / 2.0)
    }
}

/// Spectral radius of the gain matrix in closed form.
pub fn rho_e(beta: f64, l: f64, a: f64) -> Result<f64> {
    check_params(beta, l, a)?;
    Ok(GainMatrix { beta, smoothness: l, a }.eigenvalues().0)
}

/// Outcome of the constant-step admissibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub beta: f64,
    pub smoothness: f64,
    pub a: f64,
    pub rho: f64,
    pub rho_ok: bool,
    /// `aL + aL/(1 − ρ)²`
    pub bound_value: f64,
    pub bound_ok: bool,
    pub admissible: bool,
    /// `1 − ρ`
    pub rho_margin: f64,
    /// `½ − bound_value`
    pub bound_margin: f64,
}

/// Checks `ρ(E(a)) < 1` and `aL + aL/(1 − ρ)² ≤ ½` independently.
pub fn check_admissible(beta: f64, l: f64, a: f64) -> Result<AdmissibilityReport> {
    let rho = rho_e(beta, l, a)?;
    let al = a * l;
    let bound_value = al + al / ((1.0 - rho) * (1.0 - rho));
    let rho_ok = rho < 1.0;
    let bound_ok = bound_value <= 0.5;
    Ok(AdmissibilityReport {
        beta,
        smoothness: l,
        a,
        rho,
        rho_ok,
        bound_value,
        bound_ok,
        admissible: rho_ok && bound_ok,
        rho_margin: 1.0 - rho,
        bound_margin: 0.5 - bound_value,
    })
}

/// Largest admissible constant step, by bisection on `(0, (β+1)/L)`.
///
/// The returned value always passes [`check_admissible`]; the bracket is
/// closed to relative width `rel_tol`.
pub fn max_admissible_a(beta: f64, l: f64, rel_tol: f64) -> Result<f64> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidInput(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let mut hi = (beta + 1.0) / l;
    check_params(beta, l, hi)?;
    if check_admissible(beta, l, hi)?.admissible {
        return Err(Error::InvalidInput("upper bracket unexpectedly admissible".into()));
    }
    // Walk down to an admissible point; both conditions hold as a → 0⁺.
    let mut lo = hi / 2.0;
    while !check_admissible(beta, l, lo)?.admissible {
        hi = lo;
        lo /= 2.0;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::NonConvergence { what: "admissible step search".into(), iterations: 1100 });
        }
    }
    while hi - lo > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if check_admissible(beta, l, mid)?.admissible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `n·d(x*)/(a·t)`.
pub fn theorem_bound(n: usize, d_xstar: f64, a: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidInput("bound needs t >= 1".into()));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {a}")));
    }
    Ok(n as f64 * d_xstar / (a * t as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    Skipped { reason: String },
}

/// Aggregate over every round at which one inequality was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub status: CheckStatus,
    pub evaluated: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Smallest `(rhs − lhs)/|rhs|` seen (absolute when `rhs = 0`); negative
    /// means the left side exceeded the right.
    pub worst_relative_slack: Option<f64>,
}

#[derive(Debug, Clone)]
struct Tally {
    name: &'static str,
    skipped: Option<String>,
    evaluated: usize,
    violations: usize,
    first_violation: Option<usize>,
    worst: Option<f64>,
}

impl Tally {
    fn new(name: &'static str, skipped: Option<String>) -> Self {
        Self { name, skipped, evaluated: 0, violations: 0, first_violation: None, worst: None }
    }

    /// Records `lhs ≤ rhs` with an allowance `tol` on top of `rhs`.
    fn record(&mut self, t: usize, lhs: f64, rhs: f64, tol: f64) {
        self.evaluated += 1;
        let ok = lhs <= rhs + tol;
        if !ok {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
        }
        let scale = if rhs != 0.0 { rhs.abs() } else { 1.0 };
        let slack = (rhs - lhs) / scale;
        self.worst = Some(self.worst.map_or(slack, |w| w.min(slack)));
    }

    fn summary(&self) -> CheckSummary {
        let status = match &self.skipped {
            Some(reason) => CheckStatus::Skipped { reason: reason.clone() },
            None if self.violations == 0 => CheckStatus::Passed,
            None => CheckStatus::Failed,
        };
        CheckSummary {
            name: self.name.to_string(),
            status,
            evaluated: self.evaluated,
            violations: self.violations,
            first_violation: self.first_violation,
            worst_relative_slack: self.worst,
        }
    }
}

/// Both sides of each monitored inequality at round `t`.
///
/// Fields are `None` when the check is skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub t: usize,
    /// `‖h̄_t − g_t‖`
    pub conservation_h: f64,
    /// `‖s̄_t − g_t‖`
    pub conservation_s: f64,
    /// `Σ_{k<t} ‖x_k − 1y_k‖²`
    pub consensus_lhs: f64,
    /// `n/(1−ρ)² Σ_{j<t} ‖y_{j+1} − y_j‖²`
    pub consensus_rhs: Option<f64>,
    /// `Σ_{k<t} ⟨a g_k, y_{k+1} − x*⟩`
    pub dual_averaging_lhs: Option<f64>,
    /// `d(x*) − Σ_{k<t} D_d(y_{k+1}, y_k)`
    pub dual_averaging_rhs: Option<f64>,
    /// `t‖x̃_t − 1ỹ_t‖²`
    pub averaged_lhs: f64,
    /// `Σ_{k=1}^t ‖x_k − 1y_k‖²`
    pub averaged_mid: f64,
    /// `n/(1−ρ)² Σ_{j≤t} ‖y_{j+1} − y_j‖²`
    pub averaged_rhs: Option<f64>,
    /// `f(ỹ_t) − f*`
    pub gap: Option<f64>,
    /// `n·d(x*)/(a t)`
    pub bound: Option<f64>,
}

/// Per-round inequality records plus a summary per check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceChecks {
    pub n: usize,
    pub a: f64,
    pub beta: f64,
    pub rho: f64,
    pub rounds: usize,
    pub checks: Vec<CheckSummary>,
    pub records: Vec<CheckRecord>,
}

impl TraceChecks {
    /// No check failed (skipped checks do not count as failures).
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Failed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Check names used in [`TraceChecks::checks`].
pub mod check_names {
    pub const CONSERVATION: &str = "conservation";
    pub const CONSENSUS_ERROR: &str = "consensus_error";
    pub const DUAL_AVERAGING: &str = "inexact_dual_averaging";
    pub const AVERAGED_CONSENSUS_LEFT: &str = "averaged_consensus_convexity";
    pub const AVERAGED_CONSENSUS: &str = "averaged_consensus";
    pub const RATE_BOUND: &str = "rate_bound";
    pub const GAP_NONNEGATIVE: &str = "gap_nonnegative";
}

struct Reference {
    x_star: Array1<f64>,
    f_star: f64,
    d_xstar: f64,
    guard: f64,
}

/// Streaming evaluator of the N-DDA trajectory inequalities.
///
/// Feed rounds `t = 0, 1, …` in order through [`TraceVerifier::observe`],
/// each with the agents' round-`t` states, `y_t`, `y_{t+1}` and `g_t`.
pub struct TraceVerifier {
    n: usize,
    a: f64,
    beta: f64,
    rho: f64,
    /// `n/(1−ρ)²` when `ρ < 1`
    consensus_factor: Option<f64>,
    prox: ProxFunction,
    reference: Option<Reference>,
    record_stride: usize,
    next_t: usize,

    consensus_sum: f64,
    consensus_sum_from1: f64,
    dy_sum: f64,
    da_lhs: f64,
    bregman_sum: f64,
    x_avg: Vec<RunningMean>,
    y_avg: RunningMean,

    tallies: [Tally; 7],
    records: Vec<CheckRecord>,
}

impl TraceVerifier {
    pub fn new(
        inst: &ProblemInstance,
        a: f64,
        beta: f64,
        reference: Option<&ReferenceSolution>,
        record_stride: usize,
    ) -> Result<Self> {
        use check_names::*;
        let rho = rho_e(beta, inst.smoothness(), a)?;
        let consensus_factor = (rho < 1.0).then(|| inst.n() as f64 / ((1.0 - rho) * (1.0 - rho)));
        let prox = inst.projector().prox();
        let reference = match reference {
            Some(r) => {
                let x_star = r.x_star();
                if x_star.len() != inst.dim() {
                    return Err(Error::DimensionMismatch { expected: inst.dim(), got: x_star.len() });
                }
                let guard = 2.0 * r.tol * norm(&inst.gradient(&x_star)?);
                Some(Reference { d_xstar: prox.value(&x_star), x_star, f_star: r.f_star, guard })
            }
            None => None,
        };
        let no_rho = consensus_factor.is_none().then(|| format!("rho(E(a)) = {rho} >= 1"));
        let no_ref = reference.is_none().then(|| "no reference solution".to_string());
        let tallies = [
            Tally::new(CONSERVATION, None),
            Tally::new(CONSENSUS_ERROR, no_rho.clone()),
            Tally::new(DUAL_AVERAGING, no_ref.clone()),
            Tally::new(AVERAGED_CONSENSUS_LEFT, None),
            Tally::new(AVERAGED_CONSENSUS, no_rho),
            Tally::new(RATE_BOUND, no_ref.clone()),
            Tally::new(GAP_NONNEGATIVE, no_ref),
        ];
        Ok(Self {
            n: inst.n(),
            a,
            beta,
            rho,
            consensus_factor,
            prox,
            reference,
            record_stride: record_stride.max(1),
            next_t: 0,
            consensus_sum: 0.0,
            consensus_sum_from1: 0.0,
            dy_sum: 0.0,
            da_lhs: 0.0,
            bregman_sum: 0.0,
            x_avg: (0..inst.n()).map(|_| RunningMean::new(inst.dim())).collect(),
            y_avg: RunningMean::new(inst.dim()),
            tallies,
            records: Vec::new(),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Consumes round `t`. Returns `f(ỹ_t)` for `t ≥ 1`.
    pub fn observe(
        &mut self,
        inst: &ProblemInstance,
        states: &[AgentState],
        y_t: &Array1<f64>,
        y_next: &Array1<f64>,
        g_t: &Array1<f64>,
    ) -> Result<Option<f64>> {
        if states.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: states.len() });
        }
        let t = self.next_t;
        self.next_t += 1;
        let tol = INEQUALITY_REL_TOL;

        // Conservation at t.
        let h_bar = mean_of(states.iter().map(|s| &s.h));
        let s_bar = mean_of(states.iter().map(|s| &s.s));
        let res_h = norm(&(&h_bar - g_t));
        let res_s = norm(&(&s_bar - g_t));
        let cons_tol = CONSERVATION_TOL * (1.0 + norm(g_t));
        self.tallies[0].record(t, res_h.max(res_s), cons_tol, 0.0);

        // Cumulative sums over k < t are current; evaluate the t-indexed checks.
        let consensus_rhs = self.consensus_factor.map(|c| c * self.dy_sum);
        let (da_lhs, da_rhs) = match &self.reference {
            Some(r) => (Some(self.da_lhs), Some(r.d_xstar - self.bregman_sum)),
            None => (None, None),
        };
        if t >= 1 {
            if let Some(rhs) = consensus_rhs {
                self.tallies[1].record(t, self.consensus_sum, rhs, tol * rhs.abs());
            }
            if let (Some(l), Some(r)) = (da_lhs, da_rhs) {
                self.tallies[2].record(t, l, r, tol * r.abs());
            }
        }

        // Fold in round t.
        let dev_t: f64 = states.iter().map(|s| dist_sq(&s.x, y_t)).sum();
        let dy = dist_sq(y_next, y_t);
        self.consensus_sum += dev_t;
        self.dy_sum += dy;
        self.bregman_sum += self.prox.bregman(y_next, y_t);
        if let Some(r) = &self.reference {
            self.da_lhs += (g_t * self.a).dot(&(y_next - &r.x_star));
        }

        let mut record = None;
        let mut f_avg = None;
        if t >= 1 {
            self.consensus_sum_from1 += dev_t;
            for (avg, s) in self.x_avg.iter_mut().zip(states) {
                avg.push(&s.x);
            }
            self.y_avg.push(y_t);
            let y_tilde = self.y_avg.mean();
            let spread: f64 = self.x_avg.iter().map(|avg| dist_sq(&avg.mean(), &y_tilde)).sum();
            let averaged_lhs = t as f64 * spread;
            let averaged_mid = self.consensus_sum_from1;
            self.tallies[3].record(t, averaged_lhs, averaged_mid, tol * averaged_mid.abs());
            let averaged_rhs = self.consensus_factor.map(|c| c * self.dy_sum);
            if let Some(rhs) = averaged_rhs {
                self.tallies[4].record(t, averaged_mid, rhs, tol * rhs.abs());
            }

            let f_tilde = inst.value(&y_tilde)?;
            f_avg = Some(f_tilde);
            let (gap, bound) = match &self.reference {
                Some(r) => {
                    let gap = f_tilde - r.f_star;
                    let bound = theorem_bound(self.n, r.d_xstar, self.a, t)?;
                    self.tallies[5].record(t, gap, bound, tol * bound.abs() + r.guard);
                    self.tallies[6].record(t, -gap, 0.0, r.guard);
                    (Some(gap), Some(bound))
                }
                None => (None, None),
            };
            if t.is_multiple_of(self.record_stride) {
                record = Some(CheckRecord {
                    t,
                    conservation_h: res_h,
                    conservation_s: res_s,
                    consensus_lhs: self.consensus_sum - dev_t,
                    consensus_rhs,
                    dual_averaging_lhs: da_lhs,
                    dual_averaging_rhs: da_rhs,
                    averaged_lhs,
                    averaged_mid,
                    averaged_rhs,
                    gap,
                    bound,
                });
            }
        }
        if let Some(r) = record {
            self.records.push(r);
        }
        Ok(f_avg)
    }

    pub fn finish(self) -> TraceChecks {
        TraceChecks {
            n: self.n,
            a: self.a,
            beta: self.beta,
            rho: self.rho,
            rounds: self.next_t.saturating_sub(1),
            checks: self.tallies.iter().map(Tally::summary).collect(),
            records: self.records,
        }
    }
}

/// Stored N-DDA trajectory with the simulator's global view.
///
/// `states[t]`, `ys[t]` for `t = 0..=T` and one extra `ys[T+1]`.
#[derive(Debug, Clone)]
pub struct NddaTrace {
    pub a: f64,
    pub states: Vec<Vec<AgentState>>,
    pub ys: Vec<Array1<f64>>,
    pub mean_gradients: Vec<Array1<f64>>,
}

/// Runs `rounds` N-DDA rounds and keeps every state. Intended for small runs.
pub fn record_ndda_trace(inst: &ProblemInstance, p: &WeightMatrix, a: f64, rounds: usize) -> Result<NddaTrace> {
    let mut states = vec![ndda_init(inst, p)?];
    let mut aux = AuxiliaryState::new(inst)?;
    let mut ys = vec![aux.y.clone()];
    let mut gs = Vec::new();
    for t in 0..=rounds {
        let cur = states.last().expect("nonempty");
        let g = mean_gradient(cur);
        aux = auxiliary_round(&aux, inst, &g, a)?;
        ys.push(aux.y.clone());
        gs.push(g);
        if t < rounds {
            let next = ndda_round(cur, inst, p, a, t)?;
            states.push(next);
        }
    }
    Ok(NddaTrace { a, states, ys, mean_gradients: gs })
}

/// Evaluates every trajectory inequality on a stored trace.
pub fn verify_trace(
    trace: &NddaTrace,
    inst: &ProblemInstance,
    beta: f64,
    reference: Option<&ReferenceSolution>,
) -> Result<TraceChecks> {
    let mut v = TraceVerifier::new(inst, trace.a, beta, reference, 1)?;
    for (t, states) in trace.states.iter().enumerate() {
        v.observe(inst, states, &trace.ys[t], &trace.ys[t + 1], &trace.mean_gradients[t])?;
    }
    Ok(v.finish())
}

/// Least-squares fit of `log(gap)` against `log(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    /// Points inside the window dropped for a nonpositive or non-finite gap.
    pub excluded: usize,
}

/// Log-log slope over `t ∈ [window.0, window.1]`.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let mut excluded = 0;
    let mut pts = Vec::new();
    for &(t, gap) in series {
        if t < lo || t > hi {
            continue;
        }
        if !(t > 0.0) || !(gap > 0.0) || !gap.is_finite() {
            excluded += 1;
            continue;
        }
        pts.push((t.ln(), gap.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::InvalidInput(format!("fit window [{lo}, {hi}] has fewer than 2 usable points")));
    }
    let (tmin, tmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if tmax - tmin < std::f64::consts::LN_10 * (1.0 - 1e-12) {
        return Err(Error::InvalidInput("fit window spans less than one decade".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, points: pts.len(), excluded })
}
