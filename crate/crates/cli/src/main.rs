use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use intht_cli::commands::PARAM_HEADER;
use intht_cli::{
    execute_run, execute_sweep_bk, execute_sweep_mp, execute_validate_params, write_run,
    write_sweep, HarnessError, Preset, Result, RunConfig, SweepKind,
};

#[derive(Parser)]
#[command(name = "intht", version, about = "Sparse interaction regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run with per-iteration metrics
    Run(Flags),
    /// Support recovery over a (K, b) grid
    SweepBk(SweepFlags),
    /// Support recovery over a (p, m) grid, exact extraction
    SweepMp(SweepFlags),
    /// One run on order-3 data
    Order3(Flags),
    /// Check (b, d, delta) against the recovery conditions
    ValidateParams(Flags),
}

#[derive(Args)]
struct SweepFlags {
    #[command(flatten)]
    flags: Flags,
    /// Stop each grid row at its first passing column
    #[arg(long)]
    until_pass: bool,
}

/// Every flag maps to the config key of the same name.
#[derive(Args, Default)]
struct Flags {
    /// key=value file applied before the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long = "big-k")]
    big_k: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    d: Option<String>,
    /// Significance level: a number, `theory` or `auto`
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    delta_factor: Option<String>,
    /// atee, exact or vr
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    order: Option<String>,
    /// uniform or bernoulli
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    inner: Option<String>,
    #[arg(long)]
    outer_pick: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    hash_reuse: bool,
    #[arg(long)]
    theory_schedule: bool,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    smoothness: Option<String>,
    #[arg(long)]
    theta_bound: Option<String>,
    #[arg(long)]
    grad_at_target: Option<String>,
    #[arg(long)]
    failure_control: Option<String>,
    #[arg(long)]
    grad_norm: Option<String>,
    #[arg(long)]
    include_diagonal: bool,
    #[arg(long)]
    noise_std: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    start_at_truth: bool,
    #[arg(long)]
    b_grid: Option<String>,
    #[arg(long)]
    k_grid: Option<String>,
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long)]
    p_grid: Option<String>,
    #[arg(long)]
    load_data: Option<String>,
    #[arg(long)]
    save_data: Option<String>,
    /// Output CSV path (standard output if absent)
    #[arg(long)]
    out: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, Option<&str>)> {
        let flag = |on: bool| on.then_some("true");
        vec![
            ("p", self.p.as_deref()),
            ("n", self.n.as_deref()),
            ("m", self.m.as_deref()),
            ("big-k", self.big_k.as_deref()),
            ("k", self.k.as_deref()),
            ("iters", self.iters.as_deref()),
            ("eta", self.eta.as_deref()),
            ("b", self.b.as_deref()),
            ("d", self.d.as_deref()),
            ("delta", self.delta.as_deref()),
            ("delta-factor", self.delta_factor.as_deref()),
            ("mode", self.mode.as_deref()),
            ("order", self.order.as_deref()),
            ("regime", self.regime.as_deref()),
            ("seed", self.seed.as_deref()),
            ("seeds", self.seeds.as_deref()),
            ("inner", self.inner.as_deref()),
            ("outer-pick", self.outer_pick.as_deref()),
            ("scheme", self.scheme.as_deref()),
            ("hash-reuse", flag(self.hash_reuse)),
            ("theory-schedule", flag(self.theory_schedule)),
            ("alpha", self.alpha.as_deref()),
            ("smoothness", self.smoothness.as_deref()),
            ("theta-bound", self.theta_bound.as_deref()),
            ("grad-at-target", self.grad_at_target.as_deref()),
            ("failure-control", self.failure_control.as_deref()),
            ("grad-norm", self.grad_norm.as_deref()),
            ("include-diagonal", flag(self.include_diagonal)),
            ("noise-std", self.noise_std.as_deref()),
            ("tol", self.tol.as_deref()),
            ("start-at-truth", flag(self.start_at_truth)),
            ("b-grid", self.b_grid.as_deref()),
            ("k-grid", self.k_grid.as_deref()),
            ("m-grid", self.m_grid.as_deref()),
            ("p-grid", self.p_grid.as_deref()),
            ("load-data", self.load_data.as_deref()),
            ("save-data", self.save_data.as_deref()),
            ("out", self.out.as_deref()),
        ]
    }

    /// Defaults, then the config file, then the flags.
    fn resolve(&self, preset: Preset) -> Result<RunConfig> {
        let mut cfg = RunConfig::preset(preset);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| HarnessError::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit(
    out: Box<dyn Write>,
    path: Option<&Path>,
    write: impl FnOnce(Box<dyn Write>) -> io::Result<()>,
) -> Result<()> {
    write(out).map_err(|e| HarnessError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn timing_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".timing.csv");
    PathBuf::from(name)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(flags) => single_run(flags.resolve(Preset::Run)?, false),
        Command::Order3(flags) => single_run(flags.resolve(Preset::Order3)?, true),
        Command::SweepBk(s) => {
            let cfg = s.flags.resolve(Preset::SweepBk)?;
            let out = open_out(cfg.out.as_deref())?;
            let table = execute_sweep_bk(&cfg, s.until_pass)?;
            emit(out, cfg.out.as_deref(), |w| write_sweep(w, SweepKind::Bk, &table))
        }
        Command::SweepMp(s) => {
            let cfg = s.flags.resolve(Preset::SweepMp)?;
            let out = open_out(cfg.out.as_deref())?;
            let table = execute_sweep_mp(&cfg, s.until_pass)?;
            emit(out, cfg.out.as_deref(), |w| write_sweep(w, SweepKind::Mp, &table))
        }
        Command::ValidateParams(flags) => {
            let cfg = flags.resolve(Preset::ValidateParams)?;
            let out = open_out(cfg.out.as_deref())?;
            let check = execute_validate_params(&cfg)?;
            for w in &check.report.warnings {
                log::warn!("{w}");
            }
            emit(out, cfg.out.as_deref(), |out| {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(PARAM_HEADER)?;
                w.write_record(check.record())?;
                w.flush()?;
                Ok(())
            })
        }
    }
}

fn single_run(cfg: RunConfig, order3: bool) -> Result<()> {
    if order3 && cfg.order != intht_core::Order::Three {
        return Err(HarnessError::config("order3 requires order = 3"));
    }
    let out = open_out(cfg.out.as_deref())?;
    let timing = match &cfg.out {
        Some(p) => {
            let path = timing_path(p);
            Some((open_out(Some(&path))?, path))
        }
        None => None,
    };
    let report = execute_run(&cfg)?;
    emit(out, cfg.out.as_deref(), |w| write_run(w, &report.table))?;
    if let Some((w, path)) = timing {
        emit(w, Some(&path), |w| intht_cli::results::write_timing(w, &report.timing))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
