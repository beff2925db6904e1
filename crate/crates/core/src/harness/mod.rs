//! Experiment orchestration: seeded instance and topology construction,
//! single runs, side-by-side comparisons, step certification and file
//! output.

mod config;
mod instance_file;
mod trace;

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use config::{default_control, ControlSpec, ProblemSpec, RunConfig, TopologySpec, DESK_ER_RATIO, DESK_SEED, SCHEMA_VERSION};
pub use instance_file::{read_instance, write_instance, InstanceHeader, StoredInstance, INSTANCE_FORMAT};
pub use trace::{envelope, format_float, read_trace, series, write_trace, TraceRecord, TRACE_COLUMNS};

use crate::algorithms::{
    auxiliary_round, cda_round, dda_init, dda_round, dpg_init, dpg_round, mean_gradient, mean_of, ndda_init,
    ndda_round, AlgorithmKind, AuxiliaryState, CdaState, ControlSequence, RunningMean,
};
use crate::analysis::{
    check_admissible, fit_rate, max_admissible_a, theorem_bound, AdmissibilityReport, CheckSummary, RateFit,
    TraceChecks, TraceVerifier,
};
use crate::error::{Error, Result};
use crate::graph::{erdos_renyi, metropolis_weights, second_singular_value, SpectralInfo, Topology, WeightMatrix};
use crate::linalg::dist_sq;
use crate::problem::{generate_lasso, reference_solution, ProblemInstance, ReferenceSolution};

pub const RUN_FORMAT: &str = "ndda-run/1";
pub const COMPARE_FORMAT: &str = "ndda-compare/1";
/// Relative tolerance of the bisection behind [`ControlSpec::MaxAdmissible`].
pub const MAX_ADMISSIBLE_REL_TOL: f64 = 1e-9;

/// Everything a run needs that is shared between algorithms.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub instance: ProblemInstance,
    pub x_sharp: Array1<f64>,
    pub topology: Topology,
    pub weights: WeightMatrix,
    pub spectral: SpectralInfo,
    pub reference: Option<ReferenceSolution>,
}

/// Builds the instance, topology, weights and (if requested) the reference
/// solution for a configuration.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (instance, x_sharp, cached) = match &cfg.problem {
        ProblemSpec::Lasso(spec) => {
            let (inst, data) = generate_lasso(spec, cfg.seed)?;
            (inst, data.x_sharp, None)
        }
        ProblemSpec::File { path } => {
            let stored = read_instance(path)?;
            (stored.instance, stored.x_sharp, stored.reference)
        }
    };
    let topology = match &cfg.topology {
        TopologySpec::ErdosRenyi { ratio } => erdos_renyi(instance.n(), *ratio, cfg.seed)?,
        TopologySpec::Explicit(t) => {
            if t.n() != instance.n() {
                return Err(Error::Config(format!(
                    "topology.explicit.n: {} nodes for {} agents",
                    t.n(),
                    instance.n()
                )));
            }
            t.clone()
        }
    };
    let weights = metropolis_weights(&topology)?;
    let spectral = second_singular_value(&weights)?;
    let reference = match cfg.reference_tol {
        None => None,
        Some(tol) => match cached {
            Some(r) if r.tol <= tol => Some(r),
            _ => Some(reference_solution(&instance, tol)?),
        },
    };
    Ok(Prepared { instance, x_sharp, topology, weights, spectral, reference })
}

/// Resolves the control specification against the prepared instance.
pub fn resolve_control(spec: ControlSpec, prep: &Prepared) -> Result<ControlSequence> {
    let seq = match spec {
        ControlSpec::Constant { a } => ControlSequence::Constant { a },
        ControlSpec::InverseSqrt { c } => ControlSequence::InverseSqrt { c },
        ControlSpec::InverseDimension => ControlSequence::Constant { a: 1.0 / prep.instance.dim() as f64 },
        ControlSpec::InverseSmoothness { k } => ControlSequence::Constant { a: k / prep.instance.smoothness() },
        ControlSpec::MaxAdmissible => {
            let beta = prep.spectral.beta;
            if beta >= 1.0 {
                return Err(Error::Config(format!("beta = {beta} leaves no admissible step")));
            }
            ControlSequence::Constant {
                a: max_admissible_a(beta, prep.instance.smoothness(), MAX_ADMISSIBLE_REL_TOL)?,
            }
        }
    };
    seq.validate()?;
    Ok(seq)
}

/// Printed by `certify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyReport {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub smoothness: f64,
    pub report: AdmissibilityReport,
    pub max_admissible_a: f64,
}

/// Admissibility of the configured constant step (for `inverse_sqrt`
/// controls, of `c`).
pub fn certify(cfg: &RunConfig) -> Result<CertifyReport> {
    let mut cfg = cfg.clone();
    cfg.reference_tol = None;
    let prep = prepare(&cfg)?;
    certify_prepared(&cfg, &prep)
}

pub fn certify_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<CertifyReport> {
    let beta = prep.spectral.beta;
    let l = prep.instance.smoothness();
    let a = match resolve_control(cfg.control, prep)? {
        ControlSequence::Constant { a } => a,
        ControlSequence::InverseSqrt { c } => c,
    };
    if beta >= 1.0 {
        return Err(Error::Config(format!("beta = {beta}: network does not mix")));
    }
    Ok(CertifyReport {
        n: prep.instance.n(),
        m: prep.instance.dim(),
        beta,
        smoothness: l,
        report: check_admissible(beta, l, a)?,
        max_admissible_a: max_admissible_a(beta, l, MAX_ADMISSIBLE_REL_TOL)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub f_star: f64,
    pub tol: f64,
    pub residual: f64,
    pub x_star_norm_sq: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSummary {
    pub window: (f64, f64),
    pub gap_agent1: Option<RateFit>,
    pub gap_ergodic: Option<RateFit>,
    /// Fit of the running minimum of `gap_ergodic`.
    pub gap_ergodic_envelope: Option<RateFit>,
}

/// Summary written to `result.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub format: String,
    pub config: RunConfig,
    pub n: usize,
    pub m: usize,
    pub edges: usize,
    pub beta: f64,
    pub smoothness: f64,
    pub control: ControlSequence,
    pub admissibility: Option<AdmissibilityReport>,
    pub reference: Option<ReferenceSummary>,
    pub final_record: Option<TraceRecord>,
    pub rates: Option<RateSummary>,
    pub checks: Option<Vec<CheckSummary>>,
}

impl RunResult {
    /// False only when a verification check failed.
    pub fn verified(&self) -> bool {
        self.checks
            .as_ref()
            .is_none_or(|cs| cs.iter().all(|c| c.status != crate::analysis::CheckStatus::Failed))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub trace: Vec<TraceRecord>,
    pub checks: Option<TraceChecks>,
}

/// Builds everything from the configuration and runs it.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep)
}

fn should_record(t: usize, cfg: &RunConfig) -> bool {
    t.is_multiple_of(cfg.stride) || t == cfg.horizon
}

struct Metrics<'a> {
    prep: &'a Prepared,
    x_star: Option<(Array1<f64>, f64, f64)>,
}

impl<'a> Metrics<'a> {
    fn new(prep: &'a Prepared) -> Self {
        let x_star = prep.reference.as_ref().map(|r| {
            let x = r.x_star();
            let nsq = x.dot(&x);
            (x, nsq, r.f_star)
        });
        Self { prep, x_star }
    }

    fn record(
        &self,
        t: usize,
        xs: &[&Array1<f64>],
        f_ergodic: f64,
        bound: f64,
        seconds: f64,
    ) -> Result<TraceRecord> {
        let inst = &self.prep.instance;
        let f_agent1 = inst.value(xs[0])?;
        let (residual_agent1, residual_max, gap_agent1, gap_ergodic) = match &self.x_star {
            Some((x, nsq, f_star)) => {
                let res: Vec<f64> = xs.iter().map(|xi| dist_sq(xi, x) / nsq).collect();
                let max = res.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (res[0], max, f_agent1 - f_star, f_ergodic - f_star)
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        let mean = mean_of(xs.iter().copied());
        let consensus_error = xs.iter().map(|xi| dist_sq(xi, &mean)).sum();
        Ok(TraceRecord {
            t,
            residual_agent1,
            residual_max,
            f_agent1,
            gap_agent1,
            f_ergodic,
            gap_ergodic,
            consensus_error,
            theorem_bound: bound,
            round_seconds: seconds,
        })
    }
}

/// Runs one configuration against prepared data.
pub fn run_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<RunOutput> {
    cfg.validate()?;
    let inst = &prep.instance;
    let p = &prep.weights;
    let control = resolve_control(cfg.control, prep)?;
    let beta = prep.spectral.beta;

    let admissibility = match (cfg.algorithm, control) {
        (AlgorithmKind::Ndda, ControlSequence::Constant { a }) => {
            if beta >= 1.0 {
                return Err(Error::Config(format!("beta = {beta}: network does not mix")));
            }
            let report = check_admissible(beta, inst.smoothness(), a)?;
            if !report.admissible {
                if cfg.force {
                    log::warn!(
                        "step a = {a:e} is not admissible (rho = {:.6}, bound = {:.6}); running anyway",
                        report.rho,
                        report.bound_value
                    );
                } else {
                    return Err(Error::Config(format!(
                        "control: step a = {a:e} is not admissible (rho = {}, aL + aL/(1-rho)^2 = {}); use force to run anyway",
                        report.rho, report.bound_value
                    )));
                }
            }
            Some(report)
        }
        (AlgorithmKind::Ndda, _) => return Err(Error::Config("control: ndda needs a constant step".into())),
        _ => None,
    };

    let metrics = Metrics::new(prep);
    let mut trace = Vec::new();
    let mut checks = None;
    let horizon = cfg.horizon;
    let clock = |start: Instant| if cfg.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };

    match cfg.algorithm {
        AlgorithmKind::Ndda => {
            let a = control.at(0);
            let mut verifier = TraceVerifier::new(inst, a, beta, prep.reference.as_ref(), cfg.stride)?;
            let d_xstar = prep.reference.as_ref().map(|r| inst.projector().prox().value(&r.x_star()));
            let mut states = ndda_init(inst, p)?;
            let mut aux = AuxiliaryState::new(inst)?;
            let mut seconds = 0.0;
            for t in 0..=horizon {
                // The round runs first so that an overflow is reported against an agent.
                let next = if t < horizon {
                    let start = Instant::now();
                    let next = ndda_round(&states, inst, p, a, t)?;
                    Some((next, clock(start)))
                } else {
                    None
                };
                let g = mean_gradient(&states);
                let next_aux = auxiliary_round(&aux, inst, &g, a)?;
                let f_tilde = verifier.observe(inst, &states, &aux.y, &next_aux.y, &g)?;
                if t >= 1 && should_record(t, cfg) {
                    let xs: Vec<&Array1<f64>> = states.iter().map(|s| &s.x).collect();
                    let bound = match d_xstar {
                        Some(d) => theorem_bound(inst.n(), d, a, t)?,
                        None => f64::NAN,
                    };
                    trace.push(metrics.record(t, &xs, f_tilde.unwrap_or(f64::NAN), bound, seconds)?);
                }
                if let Some((next, secs)) = next {
                    states = next;
                    seconds = secs;
                }
                aux = next_aux;
            }
            checks = Some(verifier.finish());
        }
        AlgorithmKind::Cda => {
            let mut st = CdaState::new(inst)?;
            let mut avg = RunningMean::new(inst.dim());
            for t in 0..horizon {
                let start = Instant::now();
                st = cda_round(&st, inst, control.at(t), t)?;
                let secs = clock(start);
                avg.push(&st.x);
                if should_record(t + 1, cfg) {
                    let f_erg = inst.value(&avg.mean())?;
                    trace.push(metrics.record(t + 1, &[&st.x], f_erg, f64::NAN, secs)?);
                }
            }
        }
        AlgorithmKind::Dda => {
            let mut st = dda_init(inst)?;
            let mut avg = RunningMean::new(inst.dim());
            for t in 0..horizon {
                let start = Instant::now();
                st = dda_round(&st, inst, p, control.at(t), t)?;
                let secs = clock(start);
                avg.push(&st[0].x);
                if should_record(t + 1, cfg) {
                    let xs: Vec<&Array1<f64>> = st.iter().map(|s| &s.x).collect();
                    let f_erg = inst.value(&avg.mean())?;
                    trace.push(metrics.record(t + 1, &xs, f_erg, f64::NAN, secs)?);
                }
            }
        }
        AlgorithmKind::Dpg => {
            let mut st = dpg_init(inst);
            let mut avg = RunningMean::new(inst.dim());
            for t in 0..horizon {
                let start = Instant::now();
                st = dpg_round(&st, inst, p, control.at(t), t)?;
                let secs = clock(start);
                avg.push(&st[0].x);
                if should_record(t + 1, cfg) {
                    let xs: Vec<&Array1<f64>> = st.iter().map(|s| &s.x).collect();
                    let f_erg = inst.value(&avg.mean())?;
                    trace.push(metrics.record(t + 1, &xs, f_erg, f64::NAN, secs)?);
                }
            }
        }
    }

    let rates = rate_summary(&trace, horizon);
    let result = RunResult {
        format: RUN_FORMAT.into(),
        config: cfg.clone(),
        n: inst.n(),
        m: inst.dim(),
        edges: prep.topology.num_edges(),
        beta,
        smoothness: inst.smoothness(),
        control,
        admissibility,
        reference: prep.reference.as_ref().map(|r| ReferenceSummary {
            f_star: r.f_star,
            tol: r.tol,
            residual: r.residual,
            x_star_norm_sq: r.x_star.iter().map(|v| v * v).sum(),
        }),
        final_record: trace.last().copied(),
        rates,
        checks: checks.as_ref().map(|c: &TraceChecks| c.checks.clone()),
    };
    Ok(RunOutput { result, trace, checks })
}

/// Fits over `[T/100, T]` when that spans at least one decade.
fn rate_summary(trace: &[TraceRecord], horizon: usize) -> Option<RateSummary> {
    if horizon < 10 {
        return None;
    }
    let window = ((horizon as f64 / 100.0).max(1.0), horizon as f64);
    let fit = |col: &str| series(trace, col).ok().and_then(|s| fit_rate(&s, window).ok());
    let env = series(trace, "gap_ergodic").ok().and_then(|s| fit_rate(&envelope(&s), window).ok());
    Some(RateSummary {
        window,
        gap_agent1: fit("gap_agent1"),
        gap_ergodic: fit("gap_ergodic"),
        gap_ergodic_envelope: env,
    })
}

/// Writes `trace.csv`, `result.json` and (for N-DDA) `checks.json`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trace(std::fs::File::create(dir.join("trace.csv"))?, &out.trace)?;
    std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&out.result)? + "\n")?;
    if let Some(c) = &out.checks {
        std::fs::write(dir.join("checks.json"), serde_json::to_string_pretty(c)? + "\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareEntry {
    pub label: String,
    pub algorithm: AlgorithmKind,
    pub control: ControlSequence,
    pub final_gap_agent1: f64,
    pub final_gap_ergodic: f64,
    pub final_residual_agent1: f64,
    pub rates: Option<RateSummary>,
    pub verified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub format: String,
    pub horizon: usize,
    pub beta: f64,
    pub smoothness: f64,
    pub f_star: Option<f64>,
    pub entries: Vec<CompareEntry>,
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub report: CompareReport,
    pub runs: Vec<RunOutput>,
}

fn labels(cfgs: &[RunConfig]) -> Vec<String> {
    cfgs.iter()
        .enumerate()
        .map(|(k, c)| {
            let base = c.algorithm.name().to_string();
            if cfgs.iter().filter(|o| o.algorithm == c.algorithm).count() > 1 {
                format!("{base}_{}", k + 1)
            } else {
                base
            }
        })
        .collect()
}

/// Runs several configurations on one shared instance, concurrently.
pub fn compare(cfgs: &[RunConfig]) -> Result<CompareOutput> {
    let first = cfgs.first().ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    for (k, c) in cfgs.iter().enumerate() {
        if !first.comparable_with(c) {
            return Err(Error::Config(format!(
                "config {}: problem, topology, seed, reference_tol, horizon and stride must match config 1",
                k + 1
            )));
        }
    }
    let prep = prepare(first)?;
    let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(|| run_prepared(c, &prep))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let entries = labels(cfgs)
        .into_iter()
        .zip(&runs)
        .map(|(label, r)| {
            let last = r.result.final_record;
            CompareEntry {
                label,
                algorithm: r.result.config.algorithm,
                control: r.result.control,
                final_gap_agent1: last.map_or(f64::NAN, |l| l.gap_agent1),
                final_gap_ergodic: last.map_or(f64::NAN, |l| l.gap_ergodic),
                final_residual_agent1: last.map_or(f64::NAN, |l| l.residual_agent1),
                rates: r.result.rates.clone(),
                verified: r.result.verified(),
            }
        })
        .collect();
    Ok(CompareOutput {
        report: CompareReport {
            format: COMPARE_FORMAT.into(),
            horizon: first.horizon,
            beta: prep.spectral.beta,
            smoothness: prep.instance.smoothness(),
            f_star: prep.reference.as_ref().map(|r| r.f_star),
            entries,
        },
        runs,
    })
}

/// Writes `compare.json`, an aligned `compare.csv` of gaps, and each run's
/// files under a subdirectory named by its label.
pub fn write_compare(dir: &Path, out: &CompareOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&out.report)? + "\n")?;
    let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
    let mut header = vec!["t".to_string()];
    for e in &out.report.entries {
        header.push(format!("{}_gap_agent1", e.label));
        header.push(format!("{}_gap_ergodic", e.label));
        header.push(format!("{}_residual_agent1", e.label));
    }
    w.write_record(&header)?;
    let rows = out.runs.first().map_or(0, |r| r.trace.len());
    for k in 0..rows {
        let mut row = vec![out.runs[0].trace[k].t.to_string()];
        for r in &out.runs {
            let rec = &r.trace[k];
            row.push(format_float(rec.gap_agent1));
            row.push(format_float(rec.gap_ergodic));
            row.push(format_float(rec.residual_agent1));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    for (e, r) in out.report.entries.iter().zip(&out.runs) {
        write_outputs(&dir.join(&e.label), r)?;
    }
    Ok(())
}
