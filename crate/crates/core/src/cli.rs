//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::agents::{AgentName, InitSpec, ScheduleClock};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, THREADS_ENV};
use crate::mdp::{self, TabularMdp};
use crate::oracle;
use crate::schedules::{check_robbins_monro, Schedule};
use crate::smoothing::SmoothingSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "smoothq", version, about = "Tabular Q-learning variants on the maximization-bias benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one agent over many seeded runs and write the averaged curves as CSV.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// `q`, `double-q`, `sarsa` or `smoothed-q`.
        #[arg(long, required_unless_present = "config")]
        agent: Option<AgentName>,
        /// Output CSV; a `.meta.json` sibling is written next to it.
        #[arg(long, required_unless_present = "config")]
        out: Option<PathBuf>,
    },
    /// Run all four agents with one configuration.
    Compare {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Directory receiving `<agent>.csv` files and `combined.csv`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print Q* of an environment as CSV.
    Oracle {
        #[arg(long, default_value = mdp::MAX_BIAS)]
        env: String,
        #[arg(long)]
        env_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = harness::ORACLE_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
    },
    /// Report finite-horizon step-size condition checks for schedules.
    CheckSchedules {
        /// Schedule in text form; repeatable. Defaults to the benchmark's
        /// alpha, beta and delta schedules.
        #[arg(long = "schedule")]
        schedules: Vec<Schedule>,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// JSON environment description (overrides --env).
    #[arg(long)]
    env_file: Option<PathBuf>,
    /// `max`, `softmax:<schedule>` or `clipped:<schedule>`.
    #[arg(long)]
    smoothing: Option<SmoothingSpec>,
    /// Learning-rate schedule, e.g. `hyperbolic:0.1:0.001`.
    #[arg(long)]
    alpha: Option<Schedule>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `global-step`, `per-visit` or `per-episode`.
    #[arg(long)]
    clock: Option<ScheduleClock>,
    /// `zeros`, `const:C` or `uniform:LO:HI`.
    #[arg(long)]
    init: Option<InitSpec>,
    #[arg(long)]
    max_episode_steps: Option<usize>,
    /// Worker threads (1 = serial).
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$field = v.clone(); })*
            };
        }
        set!(env => env, smoothing => smoothing, alpha => alpha,
             epsilon => epsilon, gamma => gamma, episodes => episodes, runs => runs,
             seed => base_seed, clock => clock, init => init,
             max_episode_steps => max_episode_steps);
        if self.env_file.is_some() {
            cfg.env_file = self.env_file.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn threads(&self) -> Result<Option<usize>> {
        match self.threads {
            Some(0) => Err(Error::InvalidArgument("--threads must be >= 1".into())),
            t => Ok(t),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        // A closed pipe (`smoothq oracle | head`) is not worth a message.
        Err(Error::Io { ref source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => {
            EXIT_FAILURE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

/// Entry point used by the binary.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    match command {
        Command::Run {
            experiment,
            agent,
            out: out_path,
        } => {
            let mut cfg = experiment.resolve()?;
            if let Some(agent) = agent {
                cfg.agent = agent;
            }
            if out_path.is_some() {
                cfg.out = out_path;
            }
            let path = cfg
                .out
                .clone()
                .ok_or_else(|| Error::InvalidArgument("no output path (--out or config `out`)".into()))?;
            let exp = harness::Experiment::new(cfg)?;
            let series = exp.aggregate(experiment.threads()?)?;
            let (csv, meta) = harness::emit_csv(&series, &path)?;
            writeln!(out, "wrote {} and {}", csv.display(), meta.display()).map_err(io)?;
        }
        Command::Compare { experiment, out_dir } => {
            let base = experiment.resolve()?;
            let threads = experiment.threads()?;
            let mut all = Vec::with_capacity(AgentName::ALL.len());
            for agent in AgentName::ALL {
                let cfg = ExperimentConfig {
                    agent,
                    out: Some(out_dir.join(format!("{agent}.csv"))),
                    ..base.clone()
                };
                let path = cfg.out.clone().expect("set above");
                let series = harness::Experiment::new(cfg)?.aggregate(threads)?;
                harness::emit_csv(&series, &path)?;
                writeln!(out, "wrote {}", path.display()).map_err(io)?;
                all.push(series);
            }
            let combined = out_dir.join("combined.csv");
            harness::emit_combined_csv(&all, &combined)?;
            writeln!(out, "wrote {}", combined.display()).map_err(io)?;
        }
        Command::Oracle {
            env,
            env_file,
            gamma,
            tolerance,
            max_iters,
        } => {
            let mdp = match env_file {
                Some(path) => TabularMdp::from_json_file(&path)?.with_discount(gamma)?,
                None => mdp::builtin(&env, gamma)?,
            };
            let opt = oracle::value_iteration(&mdp, tolerance, max_iters)?;
            writeln!(out, "state,action,q_star").map_err(io)?;
            for row in opt.rows(&mdp) {
                writeln!(out, "{},{},{}", row.state, row.action, row.q_star).map_err(io)?;
            }
        }
        Command::CheckSchedules { schedules, horizon } => {
            let schedules = if schedules.is_empty() {
                vec![
                    Schedule::hyperbolic(0.1, 0.001),
                    Schedule::linear(0.1, 0.1),
                    Schedule::exponential_decay(0.02),
                ]
            } else {
                schedules
            };
            writeln!(
                out,
                "schedule,horizon,partial_sum,partial_sum_squares,head_sq_sum,tail_sq_sum,sum_diverges,squares_converge,within_unit_interval,robbins_monro"
            )
            .map_err(io)?;
            for s in schedules {
                let r = check_robbins_monro(&s, horizon)?;
                writeln!(
                    out,
                    "{s},{},{},{},{},{},{},{},{},{}",
                    r.horizon,
                    r.partial_sum,
                    r.partial_sum_squares,
                    r.head_sq_sum,
                    r.tail_sq_sum,
                    r.sum_diverges,
                    r.squares_converge,
                    r.within_unit_interval,
                    r.satisfied()
                )
                .map_err(io)?;
            }
        }
    }
    Ok(())
}
