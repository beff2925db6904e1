use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ndda::algorithms::AlgorithmKind;
use ndda::analysis::fit_rate;
use ndda::harness::{
    self, envelope, prepare, read_trace, series, write_instance, ControlSpec, ProblemSpec, RunConfig, TopologySpec,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "ndda", version, about = "Distributed dual averaging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the instance (with its reference optimum), topology, weights and a config that loads them.
    Generate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Report β, L, ρ(E(a)), the admissibility margins and the largest admissible step.
    Certify {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run one algorithm and write trace.csv, result.json and checks.json.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run several algorithms on one shared instance.
    Compare {
        /// Config files; each must describe the same instance and horizon.
        #[arg(long = "config", num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Preset to expand when no config files are given.
        #[arg(long, default_value = "desk-compare")]
        preset: String,
        /// Algorithms run from the preset.
        #[arg(long, value_delimiter = ',', default_value = "ndda,dda,dpg")]
        algorithms: Vec<AlgorithmKind>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fit log(value) against log(t) on a trace column.
    FitRate {
        trace: PathBuf,
        #[arg(long, default_value = "gap_ergodic")]
        column: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Fit the running minimum of the column.
        #[arg(long)]
        envelope: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: desk, desk-compare or paper.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long, default_value = "ndda")]
    algorithm: AlgorithmKind,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run N-DDA with a step that fails the admissibility test.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Constant control parameter a.
    #[arg(long, conflicts_with = "c")]
    a: Option<f64>,
    /// Decaying control a_t = c/√(t+1).
    #[arg(long)]
    c: Option<f64>,
    /// Skip the reference solver (no gaps, no verification).
    #[arg(long)]
    no_reference: bool,
    /// Fill the round_seconds column.
    #[arg(long)]
    timing: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.force |= self.force;
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(s) = self.stride {
            cfg.stride = s;
        }
        if let Some(a) = self.a {
            cfg.control = ControlSpec::Constant { a };
        }
        if let Some(c) = self.c {
            cfg.control = ControlSpec::InverseSqrt { c };
        }
        if self.no_reference {
            cfg.reference_tol = None;
        }
        cfg.record_timing |= self.timing;
    }
}

impl RunArgs {
    fn resolve(&self) -> ndda::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::preset(&self.preset, self.algorithm)?,
        };
        self.overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn output_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    cfg.output.as_deref().context("no output directory (use --out)")
}

fn generate(cfg: RunConfig) -> anyhow::Result<()> {
    let dir = output_dir(&cfg)?.to_path_buf();
    let prep = prepare(&cfg)?;
    std::fs::create_dir_all(&dir)?;
    let instance_path = dir.join("instance.bin");
    write_instance(&instance_path, &prep.instance, cfg.seed, &prep.x_sharp, prep.reference.as_ref())?;
    std::fs::write(dir.join("topology.json"), serde_json::to_string_pretty(&prep.topology)? + "\n")?;
    std::fs::write(dir.join("weights.json"), serde_json::to_string_pretty(&prep.weights)? + "\n")?;
    let mut out_cfg = cfg.clone();
    out_cfg.problem = ProblemSpec::File { path: instance_path };
    out_cfg.topology = TopologySpec::Explicit(prep.topology.clone());
    out_cfg.output = None;
    std::fs::write(dir.join("config.json"), out_cfg.to_json()? + "\n")?;
    log::info!("wrote instance, topology, weights and config to {}", dir.display());
    Ok(())
}

fn run_one(cfg: RunConfig) -> anyhow::Result<ExitCode> {
    let out = harness::run(&cfg)?;
    if let Some(dir) = &cfg.output {
        harness::write_outputs(dir, &out)?;
    }
    print_json(&out.result)?;
    Ok(if out.result.verified() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFICATION) })
}

fn compare(configs: &[PathBuf], preset: &str, algorithms: &[AlgorithmKind], ov: &Overrides) -> anyhow::Result<ExitCode> {
    let mut cfgs = if configs.is_empty() {
        algorithms.iter().map(|&alg| RunConfig::preset(preset, alg)).collect::<ndda::Result<Vec<_>>>()?
    } else {
        configs.iter().map(|p| RunConfig::load(p)).collect::<ndda::Result<Vec<_>>>()?
    };
    for cfg in &mut cfgs {
        ov.apply(cfg);
        cfg.validate()?;
    }
    let out = harness::compare(&cfgs)?;
    if let Some(dir) = &ov.out {
        harness::write_compare(dir, &out)?;
    }
    print_json(&out.report)?;
    let verified = out.report.entries.iter().all(|e| e.verified);
    Ok(if verified { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFICATION) })
}

fn fit(trace: &Path, column: &str, from: f64, to: f64, use_envelope: bool) -> anyhow::Result<()> {
    let records = read_trace(File::open(trace).with_context(|| format!("cannot open {}", trace.display()))?)?;
    let mut s = series(&records, column)?;
    if use_envelope {
        s = envelope(&s);
    }
    if s.is_empty() {
        bail!("trace {} has no records", trace.display());
    }
    print_json(&fit_rate(&s, (from, to))?)
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Generate { run } => generate(run.resolve()?).map(|_| ExitCode::SUCCESS),
        Command::Certify { run } => {
            print_json(&harness::certify(&run.resolve()?)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { run } => run_one(run.resolve()?),
        Command::Compare { configs, preset, algorithms, overrides } => {
            compare(&configs, &preset, &algorithms, &overrides)
        }
        Command::FitRate { trace, column, from, to, envelope } => {
            fit(&trace, &column, from, to, envelope).map(|_| ExitCode::SUCCESS)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ndda::Error>() {
        Some(ndda::Error::Divergence { .. }) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
