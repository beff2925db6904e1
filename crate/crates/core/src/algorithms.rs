//! Synchronous-round engines: the second-order-consensus dual averaging
//! method (N-DDA), the centralized (CDA) and classical distributed (DDA) dual
//! averaging baselines, distributed projected gradient (DPG), and the
//! auxiliary sequence driven by the exact mean gradient.
//!
//! Every distributed round is two-phase: all consensus sums read the
//! round-`t` snapshot, and the round returns fresh states.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::linalg::all_finite;
use crate::problem::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Cda,
    Dda,
    Dpg,
    Ndda,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::Cda => "cda",
            AlgorithmKind::Dda => "dda",
            AlgorithmKind::Dpg => "dpg",
            AlgorithmKind::Ndda => "ndda",
        }
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cda" => Ok(AlgorithmKind::Cda),
            "dda" => Ok(AlgorithmKind::Dda),
            "dpg" => Ok(AlgorithmKind::Dpg),
            "ndda" | "n-dda" => Ok(AlgorithmKind::Ndda),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Positive control parameters `a_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSequence {
    Constant { a: f64 },
    /// `a_t = c/√(t+1)`; the shift keeps `t = 0` finite.
    InverseSqrt { c: f64 },
}

impl ControlSequence {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            ControlSequence::Constant { a } => a,
            ControlSequence::InverseSqrt { c } => c / ((t + 1) as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            ControlSequence::Constant { a } => a,
            ControlSequence::InverseSqrt { c } => c,
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("control parameter must be positive, got {v}")))
        }
    }
}

fn check_network(inst: &ProblemInstance, p: &WeightMatrix, agents: usize) -> Result<()> {
    if p.n() != inst.n() {
        return Err(Error::DimensionMismatch { expected: inst.n(), got: p.n() });
    }
    if agents != inst.n() {
        return Err(Error::DimensionMismatch { expected: inst.n(), got: agents });
    }
    Ok(())
}

fn guard(algorithm: AlgorithmKind, agent: usize, round: usize, vs: &[&Array1<f64>]) -> Result<()> {
    if vs.iter().all(|v| all_finite(v)) {
        Ok(())
    } else {
        Err(Error::Divergence {
            algorithm: algorithm.name().to_string(),
            agent: agent + 1,
            round,
        })
    }
}

/// Per-agent N-DDA state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// primal iterate `x_{i,t}`
    pub x: Array1<f64>,
    /// first-order tracker `s_{i,t}`
    pub s: Array1<f64>,
    /// second-order tracker `h_{i,t}`
    pub h: Array1<f64>,
    /// accumulated scaled dual `Σ_{k<t} a·h_{i,k}`
    pub z: Array1<f64>,
    /// `∇fᵢ(x_{i,t})`
    pub grad_prev: Array1<f64>,
}

/// `x = argmin d = 0`, `s = h = ∇fᵢ(0)`, `z = 0`.
pub fn ndda_init(inst: &ProblemInstance, p: &WeightMatrix) -> Result<Vec<AgentState>> {
    check_network(inst, p, inst.n())?;
    let m = inst.dim();
    let x0 = inst.projector().da_project(&Array1::zeros(m))?;
    (0..inst.n())
        .map(|i| {
            let g = inst.local_gradient(i, &x0)?;
            Ok(AgentState {
                x: x0.clone(),
                s: g.clone(),
                h: g.clone(),
                z: Array1::zeros(m),
                grad_prev: g,
            })
        })
        .collect()
}

/// One synchronous N-DDA round from round `t` to `t + 1`.
///
/// Per agent, in order:
/// 1. `z ← z + a·h_t`, `x_{t+1} = Π(z)`;
/// 2. `s_{t+1} = Σⱼ p_ij s_{j,t} + ∇fᵢ(x_{t+1}) − ∇fᵢ(x_t)`;
/// 3. `h_{t+1} = Σⱼ p_ij h_{j,t} + s_{t+1} − s_t`;
/// 4. cache `∇fᵢ(x_{t+1})`.
///
/// `round` is only used in divergence diagnostics.
pub fn ndda_round(
    states: &[AgentState],
    inst: &ProblemInstance,
    p: &WeightMatrix,
    a: f64,
    round: usize,
) -> Result<Vec<AgentState>> {
    check_network(inst, p, states.len())?;
    let s_prev: Vec<&Array1<f64>> = states.iter().map(|st| &st.s).collect();
    let h_prev: Vec<&Array1<f64>> = states.iter().map(|st| &st.h).collect();
    states
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let z = &st.z + &(&st.h * a);
            guard(AlgorithmKind::Ndda, i, round, &[&z])?;
            let x = inst.projector().da_project(&z)?;
            let g_new = inst.local_gradient(i, &x)?;
            let s = p.mix_row(i, &s_prev) + &g_new - &st.grad_prev;
            let h = p.mix_row(i, &h_prev) + &s - &st.s;
            guard(AlgorithmKind::Ndda, i, round, &[&x, &s, &h])?;
            Ok(AgentState { x, s, h, z, grad_prev: g_new })
        })
        .collect()
}

/// Centralized dual averaging state.
#[derive(Debug, Clone, PartialEq)]
pub struct CdaState {
    pub x: Array1<f64>,
    /// `Σ_{k≤t} ∇f(x_k)` before scaling
    pub dual: Array1<f64>,
}

impl CdaState {
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let m = inst.dim();
        Ok(Self {
            x: inst.projector().da_project(&Array1::zeros(m))?,
            dual: Array1::zeros(m),
        })
    }
}

/// `x_{t+1} = Π(a_t Σ_{k≤t} ∇f(x_k))` with the full gradient `Σᵢ ∇fᵢ`.
pub fn cda_round(state: &CdaState, inst: &ProblemInstance, a_t: f64, round: usize) -> Result<CdaState> {
    let dual = &state.dual + &inst.gradient(&state.x)?;
    guard(AlgorithmKind::Cda, 0, round, &[&dual])?;
    let x = inst.projector().da_project(&(&dual * a_t))?;
    Ok(CdaState { x, dual })
}

/// Classical distributed dual averaging state.
#[derive(Debug, Clone, PartialEq)]
pub struct DdaState {
    pub x: Array1<f64>,
    pub q: Array1<f64>,
}

pub fn dda_init(inst: &ProblemInstance) -> Result<Vec<DdaState>> {
    let m = inst.dim();
    let x0 = inst.projector().da_project(&Array1::zeros(m))?;
    Ok((0..inst.n()).map(|_| DdaState { x: x0.clone(), q: Array1::zeros(m) }).collect())
}

/// `q_{i,t+1} = Σⱼ p_ij q_{j,t} + ∇fᵢ(x_{i,t})`, `x_{i,t+1} = Π(a_t q_{i,t+1})`.
///
/// The gradient is taken at the current iterate; a literal `x_{i,t+1}` inside
/// the update that defines it would not be computable.
pub fn dda_round(
    states: &[DdaState],
    inst: &ProblemInstance,
    p: &WeightMatrix,
    a_t: f64,
    round: usize,
) -> Result<Vec<DdaState>> {
    check_network(inst, p, states.len())?;
    let q_prev: Vec<&Array1<f64>> = states.iter().map(|st| &st.q).collect();
    states
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let q = p.mix_row(i, &q_prev) + &inst.local_gradient(i, &st.x)?;
            guard(AlgorithmKind::Dda, i, round, &[&q])?;
            let x = inst.projector().da_project(&(&q * a_t))?;
            Ok(DdaState { x, q })
        })
        .collect()
}

/// Distributed projected gradient state.
#[derive(Debug, Clone, PartialEq)]
pub struct DpgState {
    pub x: Array1<f64>,
}

pub fn dpg_init(inst: &ProblemInstance) -> Vec<DpgState> {
    (0..inst.n()).map(|_| DpgState { x: Array1::zeros(inst.dim()) }).collect()
}

/// `vᵢ = Σⱼ p_ij x_{j,t}`, `x_{i,t+1} = Π_𝒳(vᵢ − α_t ∇fᵢ(vᵢ))`.
pub fn dpg_round(
    states: &[DpgState],
    inst: &ProblemInstance,
    p: &WeightMatrix,
    alpha_t: f64,
    round: usize,
) -> Result<Vec<DpgState>> {
    check_network(inst, p, states.len())?;
    let x_prev: Vec<&Array1<f64>> = states.iter().map(|st| &st.x).collect();
    states
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let v = p.mix_row(i, &x_prev);
            let g = inst.local_gradient(i, &v)?;
            let step = &v - &(g * alpha_t);
            guard(AlgorithmKind::Dpg, i, round, &[&step])?;
            Ok(DpgState { x: inst.set().project(&step)? })
        })
        .collect()
}

/// Auxiliary sequence `y_{t+1} = Π(Σ_{k≤t} a·g_k)` driven by the exact mean
/// gradient `g_k = (1/n)Σᵢ ∇fᵢ(x_{i,k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState {
    pub y: Array1<f64>,
    /// `Σ_{k<t} a·g_k`
    pub dual: Array1<f64>,
}

impl AuxiliaryState {
    /// `y₀ = argmin d = 0`.
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let m = inst.dim();
        Ok(Self {
            y: inst.projector().da_project(&Array1::zeros(m))?,
            dual: Array1::zeros(m),
        })
    }
}

pub fn auxiliary_round(state: &AuxiliaryState, inst: &ProblemInstance, g_t: &Array1<f64>, a: f64) -> Result<AuxiliaryState> {
    let dual = &state.dual + &(g_t * a);
    let y = inst.projector().da_project(&dual)?;
    Ok(AuxiliaryState { y, dual })
}

/// `(1/n)Σᵢ vᵢ`, summed in agent order.
pub fn mean_of<'a>(vs: impl IntoIterator<Item = &'a Array1<f64>>) -> Array1<f64> {
    let mut it = vs.into_iter();
    let first = it.next().expect("mean of an empty set");
    let mut acc = first.clone();
    let mut count = 1usize;
    for v in it {
        acc += v;
        count += 1;
    }
    acc / count as f64
}

/// Mean of the local gradients at the agents' current iterates.
pub fn mean_gradient(states: &[AgentState]) -> Array1<f64> {
    mean_of(states.iter().map(|s| &s.grad_prev))
}

/// Ergodic mean `(1/t)Σ_{k=1}^t v_k`, kept as a running sum so it matches
/// direct summation exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    sum: Array1<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(dim: usize) -> Self {
        Self { sum: Array1::zeros(dim), count: 0 }
    }

    pub fn push(&mut self, v: &Array1<f64>) {
        self.sum += v;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Array1<f64> {
        assert!(self.count > 0, "running mean is empty");
        &self.sum / self.count as f64
    }
}

/// Prefix means `ṽ_t = (1/t)Σ_{k<t} v_{k+1}` for `t = 1..=len`.
///
/// `seq[k]` holds `v_{k+1}`.
pub fn running_averages(seq: &[Array1<f64>]) -> Vec<Array1<f64>> {
    let Some(first) = seq.first() else { return Vec::new() };
    let mut rm = RunningMean::new(first.len());
    seq.iter()
        .map(|v| {
            rm.push(v);
            rm.mean()
        })
        .collect()
}
