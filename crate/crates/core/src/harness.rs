//! Monte Carlo experiment harness.
//!
//! A run plays `episodes` episodes from the start state with one agent and
//! one [`RngStream`] derived from `(base_seed, run_index)`. After each
//! episode it records the first action taken and the distance of the
//! agent's estimate to `Q*`. [`run_experiment`] averages these per episode
//! over all runs.
//!
//! Aggregation sums runs in fixed-size chunks of consecutive indices and then
//! adds the chunk sums in index order, so the floating-point result does not
//! depend on the thread count or completion order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentKind, AgentName, InitSpec, ScheduleClock};
use crate::error::{Error, Result};
use crate::mdp::{self, TabularMdp};
use crate::oracle::{self, OptimalQ};
use crate::rng::RngStream;
use crate::schedules::Schedule;
use crate::smoothing::{argmax_lowest, bound_slack, SmoothingSpec};

pub const DEFAULT_EPISODES: usize = 300;
pub const DEFAULT_RUNS: usize = 10_000;
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 10_000;
/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "SMOOTHQ_THREADS";
pub const CSV_HEADER: &str = "episode,left_fraction,q_distance";
pub const ORACLE_TOLERANCE: f64 = 1e-12;
const RUN_CHUNK: usize = 64;

fn default_env() -> String {
    mdp::MAX_BIAS.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Built-in environment name; ignored when `env_file` is set.
    pub env: String,
    pub env_file: Option<PathBuf>,
    pub agent: AgentName,
    pub smoothing: SmoothingSpec,
    pub alpha: Schedule,
    pub epsilon: f64,
    /// Overrides the environment's own discount.
    pub gamma: f64,
    pub episodes: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub clock: ScheduleClock,
    pub init: InitSpec,
    /// Episodes reaching this many steps are cut off.
    pub max_episode_steps: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// The maximization-bias settings: epsilon 0.1, gamma 0.99,
    /// `alpha_t = 0.1 / (1 + 0.001 t)`, clipped-max `delta_t = exp(-0.02 t)`.
    fn default() -> Self {
        Self {
            env: default_env(),
            env_file: None,
            agent: AgentName::SmoothedQ,
            smoothing: SmoothingSpec::ClippedMax(Schedule::exponential_decay(0.02)),
            alpha: Schedule::hyperbolic(0.1, 0.001),
            epsilon: 0.1,
            gamma: 0.99,
            episodes: DEFAULT_EPISODES,
            runs: DEFAULT_RUNS,
            base_seed: 0,
            clock: ScheduleClock::GlobalStep,
            init: InitSpec::Zeros,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.runs < 1 {
            return fail("runs must be >= 1".into());
        }
        if self.episodes < 1 {
            return fail("episodes must be >= 1".into());
        }
        if self.max_episode_steps < 1 {
            return fail("max_episode_steps must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("epsilon {} not in [0, 1]", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma {} not in [0, 1)", self.gamma));
        }
        Ok(())
    }

    pub fn agent_kind(&self) -> AgentKind {
        AgentKind::new(self.agent, self.smoothing)
    }

    pub fn load_mdp(&self) -> Result<TabularMdp> {
        match &self.env_file {
            Some(path) => TabularMdp::from_json_file(path)?.with_discount(self.gamma),
            None => mdp::builtin(&self.env, self.gamma),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// One sample of the smoothing slack `gamma delta_t (|max_a Q(s',a)| +
/// |Q(s',b-)|)`, where `delta_t` is the mass the smoothing distribution
/// places off the greedy action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackSample {
    pub t: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Action taken at the start state, per episode.
    pub first_action: Vec<usize>,
    /// Distance of the estimate to `Q*` after each episode.
    pub q_distance: Vec<f64>,
    /// Recorded only on request, for smoothed Q-learning, at every
    /// transition into a non-terminal state.
    pub slack: Vec<SlackSample>,
}

impl RunTrace {
    pub fn episodes(&self) -> usize {
        self.first_action.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSeries {
    pub left_fraction: Vec<f64>,
    pub q_distance: Vec<f64>,
    pub runs: usize,
    pub config: ExperimentConfig,
}

impl AggregateSeries {
    pub fn episodes(&self) -> usize {
        self.left_fraction.len()
    }

    /// Mean of `series[from..to]`.
    pub fn window_mean(series: &[f64], from: usize, to: usize) -> f64 {
        let slice = &series[from..to];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    pub fn peak_left_fraction(&self) -> f64 {
        self.left_fraction.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A validated config with its environment and `Q*` resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    mdp: TabularMdp,
    optimal: OptimalQ,
    tracked_action: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mdp = config.load_mdp()?;
        let max_iters = oracle::sweep_bound(&mdp, ORACLE_TOLERANCE) + 10;
        let optimal = oracle::value_iteration(&mdp, ORACLE_TOLERANCE, max_iters)?;
        let tracked_action = mdp.tracked_action().unwrap_or(0);
        Ok(Self {
            config,
            mdp,
            optimal,
            tracked_action,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn optimal(&self) -> &OptimalQ {
        &self.optimal
    }

    pub fn tracked_action(&self) -> usize {
        self.tracked_action
    }

    pub fn fresh_agent(&self, rng: &mut RngStream) -> Agent {
        Agent::new(
            self.config.agent_kind(),
            &self.mdp,
            self.config.init,
            self.config.clock,
            rng,
        )
    }

    pub fn run(&self, run_index: u64) -> Result<RunTrace> {
        let mut rng = RngStream::new(self.config.base_seed, run_index);
        let agent = self.fresh_agent(&mut rng);
        self.run_agent(agent, &mut rng, false)
    }

    pub fn run_recording_slack(&self, run_index: u64) -> Result<RunTrace> {
        let mut rng = RngStream::new(self.config.base_seed, run_index);
        let agent = self.fresh_agent(&mut rng);
        self.run_agent(agent, &mut rng, true)
    }

    /// Plays all episodes with a caller-supplied agent.
    pub fn run_agent(&self, mut agent: Agent, rng: &mut RngStream, record_slack: bool) -> Result<RunTrace> {
        let cfg = &self.config;
        let episodes = cfg.episodes;
        let mut trace = RunTrace {
            first_action: Vec::with_capacity(episodes),
            q_distance: Vec::with_capacity(episodes),
            slack: Vec::new(),
        };
        let on_policy = matches!(agent.kind(), AgentKind::Sarsa);
        let smoothing = match agent.kind() {
            AgentKind::SmoothedQ(spec) if record_slack => Some(*spec),
            _ => None,
        };

        for _ in 0..episodes {
            agent.start_episode();
            let mut state = self.mdp.start_state();
            let mut action = agent.select_action(state, cfg.epsilon, rng)?;
            trace.first_action.push(action);
            for _ in 0..cfg.max_episode_steps {
                let tr = self.mdp.step(state, action, rng)?;
                let t = agent.clock_for(state, action)?;
                let alpha = cfg.alpha.unit_value(t)?;
                let next_action = if on_policy && !tr.is_terminal {
                    Some(agent.select_action(tr.next_state, cfg.epsilon, rng)?)
                } else {
                    None
                };
                if let (Some(spec), false) = (smoothing, tr.is_terminal) {
                    let row = agent.primary().row(tr.next_state);
                    let dist = spec.smooth(row, t)?;
                    let off_greedy = 1.0 - dist.probs()[argmax_lowest(row)];
                    trace.slack.push(SlackSample {
                        t,
                        value: bound_slack(row, off_greedy, agent.gamma()),
                    });
                }
                agent.observe(&tr, next_action, alpha, rng)?;
                if tr.is_terminal {
                    break;
                }
                state = tr.next_state;
                action = match next_action {
                    Some(a) => a,
                    None => agent.select_action(state, cfg.epsilon, rng)?,
                };
            }
            trace.q_distance.push(oracle::agent_distance(&agent, &self.optimal)?);
        }
        Ok(trace)
    }

    /// Per-episode sums over runs `range`, in index order.
    fn chunk_sums(&self, range: std::ops::Range<usize>) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.config.episodes;
        let (mut left, mut dist) = (vec![0.0; n], vec![0.0; n]);
        for run in range {
            let trace = self.run(run as u64)?;
            for e in 0..n {
                if trace.first_action[e] == self.tracked_action {
                    left[e] += 1.0;
                }
                dist[e] += trace.q_distance[e];
            }
        }
        Ok((left, dist))
    }

    /// `threads = Some(1)` runs serially on the calling thread; `None` uses
    /// rayon's global pool.
    pub fn aggregate(&self, threads: Option<usize>) -> Result<AggregateSeries> {
        let runs = self.config.runs;
        let chunks: Vec<_> = (0..runs)
            .step_by(RUN_CHUNK)
            .map(|lo| lo..(lo + RUN_CHUNK).min(runs))
            .collect();
        let partials: Vec<(Vec<f64>, Vec<f64>)> = match threads {
            Some(1) => chunks.into_iter().map(|c| self.chunk_sums(c)).collect::<Result<_>>()?,
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
                pool.install(|| {
                    chunks
                        .into_par_iter()
                        .map(|c| self.chunk_sums(c))
                        .collect::<Result<_>>()
                })?
            }
            None => chunks
                .into_par_iter()
                .map(|c| self.chunk_sums(c))
                .collect::<Result<_>>()?,
        };

        let n = self.config.episodes;
        let (mut left, mut dist) = (vec![0.0; n], vec![0.0; n]);
        for (l, d) in partials {
            for e in 0..n {
                left[e] += l[e];
                dist[e] += d[e];
            }
        }
        let scale = 1.0 / runs as f64;
        left.iter_mut().chain(dist.iter_mut()).for_each(|v| *v *= scale);
        Ok(AggregateSeries {
            left_fraction: left,
            q_distance: dist,
            runs,
            config: self.config.clone(),
        })
    }
}

pub fn run_single(config: &ExperimentConfig, run_index: u64) -> Result<RunTrace> {
    Experiment::new(config.clone())?.run(run_index)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateSeries> {
    run_experiment_with_threads(config, None)
}

pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<AggregateSeries> {
    Experiment::new(config.clone())?.aggregate(threads)
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn fmt_value(v: f64) -> String {
    // 17 significant digits: parses back to the identical f64.
    format!("{v:.16e}")
}

pub fn series_csv(series: &AggregateSeries) -> String {
    let mut out = String::with_capacity(64 * (series.episodes() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (e, (l, d)) in series.left_fraction.iter().zip(&series.q_distance).enumerate() {
        let _ = writeln!(out, "{},{},{}", e + 1, fmt_value(*l), fmt_value(*d));
    }
    out
}

/// Parses [`series_csv`] output into `(left_fraction, q_distance)` columns.
pub fn parse_series_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing CSV header".into()));
    }
    let (mut left, mut dist) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("bad CSV row {}: `{line}`", i + 1));
        if fields.len() != 3 || fields[0].parse::<usize>().map_err(|_| bad())? != i + 1 {
            return Err(bad());
        }
        left.push(fields[1].parse().map_err(|_| bad())?);
        dist.push(fields[2].parse().map_err(|_| bad())?);
    }
    Ok((left, dist))
}

pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    generator: String,
    base_seed: u64,
    runs: usize,
    episodes: usize,
    config: &'a ExperimentConfig,
    rng: &'static str,
    left_fraction: &'static str,
    q_distance: &'static str,
    schedule_clock: ScheduleClock,
    oracle_residual: Option<f64>,
}

pub fn series_metadata(series: &AggregateSeries, optimal: Option<&OptimalQ>) -> String {
    let meta = Metadata {
        generator: format!("smoothq {}", env!("CARGO_PKG_VERSION")),
        base_seed: series.config.base_seed,
        runs: series.runs,
        episodes: series.episodes(),
        config: &series.config,
        rng: "ChaCha8, key = seed_from_u64(base_seed), stream = run_index; normals by ziggurat",
        left_fraction: "fraction of runs whose first action from the start state is the tracked action",
        q_distance: "mean |Q - Q*| over non-terminal (state, action) pairs at episode end; double-q reports (Q_A + Q_B) / 2",
        schedule_clock: series.config.clock,
        oracle_residual: optimal.map(|o| o.residual),
    };
    serde_json::to_string_pretty(&meta).expect("metadata serializes")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the CSV and its sibling `*.meta.json`; returns both paths.
pub fn emit_csv(series: &AggregateSeries, path: &Path) -> Result<(PathBuf, PathBuf)> {
    write_file(path, &series_csv(series))?;
    let meta = metadata_path(path);
    write_file(&meta, &series_metadata(series, None))?;
    Ok((path.to_path_buf(), meta))
}

/// Wide CSV with `<agent>_left_fraction,<agent>_q_distance` column pairs.
pub fn combined_csv(series: &[AggregateSeries]) -> Result<String> {
    let episodes = series.first().map_or(0, AggregateSeries::episodes);
    if series.iter().any(|s| s.episodes() != episodes) {
        return Err(Error::InvalidArgument("series differ in length".into()));
    }
    let mut out = String::from("episode");
    for s in series {
        let _ = write!(out, ",{0}_left_fraction,{0}_q_distance", s.config.agent);
    }
    out.push('\n');
    for e in 0..episodes {
        let _ = write!(out, "{}", e + 1);
        for s in series {
            let _ = write!(out, ",{},{}", fmt_value(s.left_fraction[e]), fmt_value(s.q_distance[e]));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_combined_csv(series: &[AggregateSeries], path: &Path) -> Result<()> {
    write_file(path, &combined_csv(series)?)
}
