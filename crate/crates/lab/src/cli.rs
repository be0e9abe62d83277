//! Command-line front end.
//!
//! Exit codes: 0 when every selected experiment passes, 1 on a failed check
//! or a simulation error, 2 on a configuration error, 3 when the worst
//! verdict is inconclusive.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use branco_core::branco::simulate;
use branco_core::oracle::TruncatedChain;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{ConfigError, ExperimentConfig, LatticeSpec};
use crate::experiments::{Experiment, ExperimentError};
use crate::report::{Report, Summary, Verdict};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "branco-lab", version, about = "Simulation and verification suite for branco-processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `sim.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Prefix of every output file.
    #[arg(long, global = true, default_value = "")]
    pub out: String,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Lattice shorthand: torus1d:N, torus2d:RxC, complete:N or custom:FILE.
    #[arg(long, global = true)]
    pub lattice: Option<String>,
    /// Overrides `sim.cap`, the per-site truncation of the oracle.
    #[arg(long, global = true)]
    pub cap: Option<u64>,
    /// Replaces the lattice by a ring of this many sites.
    #[arg(long, global = true)]
    pub site_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Check the configuration and the jump kernel.
    Validate,
    /// Write particle trajectories on the time grid.
    Simulate,
    /// Write the exact transient law of the truncated chain at the last grid time.
    Oracle,
    Duality,
    Thinning,
    Poissonization,
    Invariant,
    Bounds,
    /// Run every experiment.
    All,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Model(#[from] branco_core::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Experiment(ExperimentError::Model(_)) | CliError::Model(_) | CliError::Io(_) => EXIT_FAIL,
            CliError::Experiment(_) => EXIT_CONFIG,
        }
    }
}

pub fn verdict_exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass | Verdict::Diagnostic => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

pub fn load_config(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let (mut cfg, base) = match &common.config {
        Some(path) => (
            ExperimentConfig::load(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(spec) = &common.lattice {
        cfg.lattice = LatticeSpec::parse_shorthand(spec, &base)?;
    }
    if let Some(n) = common.site_count {
        cfg.lattice = LatticeSpec::Torus1d(n);
    }
    if let Some(cap) = common.cap {
        cfg.cap = cap;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> u8 {
    let outcome = match cli.common.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Usage(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_str();
    match cli.command {
        Command::Validate => validate(&cfg),
        Command::Simulate => simulate_trajectories(&cfg, out),
        Command::Oracle => oracle(&cfg, out),
        Command::Duality => run_experiments(&cfg, &[Experiment::Duality], out),
        Command::Thinning => run_experiments(&cfg, &[Experiment::Thinning], out),
        Command::Poissonization => run_experiments(&cfg, &[Experiment::Poissonization], out),
        Command::Invariant => run_experiments(&cfg, &[Experiment::Invariant], out),
        Command::Bounds => run_experiments(&cfg, &[Experiment::Bounds], out),
        Command::All => run_experiments(&cfg, &Experiment::ALL, out),
    }
}

fn create(path: &str) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = Path::new(path).parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn validate(cfg: &ExperimentConfig) -> Result<u8, CliError> {
    let lat = cfg.lattice.build()?;
    let report = lat.validate();
    println!("lattice: {:?}, {} sites", cfg.lattice, lat.len());
    println!(
        "max exit rate {}, irreducible {}, counting measure invariant {}",
        report.max_exit_rate, report.irreducible, report.counting_measure_invariant
    );
    let p = cfg.rates;
    println!(
        "rates (a, b, c, d) = ({}, {}, {}, {})",
        p.annihilation, p.branching, p.coalescence, p.death
    );
    Ok(EXIT_PASS)
}

fn simulate_trajectories(cfg: &ExperimentConfig, out: &str) -> Result<u8, CliError> {
    let lat = cfg.lattice.build()?;
    let sites = lat.len();
    let paths = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = branco_core::rng::stream_rng(cfg.master_seed, 0, r);
            let x0 = cfg.init.sample(sites, &mut rng);
            simulate(&x0, &cfg.rates, &lat, &cfg.t_grid, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = format!("{out}trajectory.csv");
    let mut w = create(&path)?;
    writeln!(w, "replicate,t,site,count")?;
    for (r, states) in paths.iter().enumerate() {
        for (t, x) in cfg.t_grid.iter().zip(states) {
            for (i, n) in x.counts().iter().enumerate() {
                writeln!(w, "{r},{t},{i},{n}")?;
            }
        }
    }
    w.flush()?;
    println!("wrote {path}");
    Ok(EXIT_PASS)
}

fn oracle(cfg: &ExperimentConfig, out: &str) -> Result<u8, CliError> {
    let lat = cfg.lattice.build()?;
    let x0 = cfg
        .init
        .counts(lat.len())
        .ok_or_else(|| CliError::Usage("the oracle needs deterministic initial counts".into()))?;
    let chain = TruncatedChain::new(&lat, &cfg.rates, cfg.cap)?;
    let t = *cfg.t_grid.last().expect("validated grid");
    let law = chain.transient_distribution(&chain.point_mass(&x0)?, t)?;
    let path = format!("{out}oracle.csv");
    let mut w = create(&path)?;
    writeln!(w, "state_index,state,probability")?;
    for (s, p) in law.distribution.iter().enumerate() {
        let state: Vec<String> = chain.decode(s).iter().map(u64::to_string).collect();
        writeln!(w, "{s},{},{p}", state.join(" "))?;
    }
    w.flush()?;
    println!(
        "wrote {path}: {} states at t = {t}, total mass {}, suppressed mass {}",
        chain.states(),
        law.distribution.iter().sum::<f64>(),
        law.suppressed_mass
    );
    Ok(EXIT_PASS)
}

fn run_experiments(cfg: &ExperimentConfig, which: &[Experiment], out: &str) -> Result<u8, CliError> {
    let mut reports: Vec<Report> = Vec::new();
    for exp in which {
        let report = exp.run(cfg)?;
        let path = format!("{out}{}.csv", exp.name());
        let mut w = create(&path)?;
        report.write_csv(&mut w)?;
        w.flush()?;
        println!("{}: {} ({} entries) -> {path}", exp.name(), report.verdict().as_str(), report.entries.len());
        for e in report.checks().filter(|e| e.verdict != Verdict::Pass) {
            println!(
                "  {} {}: estimate {} reference {} z {}",
                e.verdict.as_str(),
                e.panel_key,
                e.estimate,
                e.reference,
                e.z
            );
        }
        reports.push(report);
    }
    let summary = Summary::new(cfg.master_seed, &reports);
    let path = format!("{out}summary.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(verdict_exit_code(summary.verdict))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "branco-lab",
            "duality",
            "--seed",
            "42",
            "--threads",
            "2",
            "--lattice",
            "torus2d:2x2",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Duality));
        let cfg = load_config(&cli.common).unwrap();
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.lattice, LatticeSpec::Torus2d(2, 2));
        assert!(Cli::try_parse_from(["branco-lab", "frobnicate"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(verdict_exit_code(Verdict::Pass), 0);
        assert_eq!(verdict_exit_code(Verdict::Fail), 1);
        assert_eq!(verdict_exit_code(Verdict::Inconclusive), 3);
        assert_eq!(CliError::Config(ConfigError::Syntax { line: 1 }).exit_code(), 2);
        assert_eq!(
            CliError::Experiment(ExperimentError::Precondition("a + c > 0")).exit_code(),
            2
        );
    }
}
