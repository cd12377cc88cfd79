//! Acceptance criteria for the library and benchmark harness.
//!
//! Each test prints one `[PASS]` / `[FAIL]` line. Run with
//! `cargo test -p smoothq --test acceptance -- --nocapture --test-threads=1`
//! to see the report.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use smoothq::agents::{Agent, AgentKind, AgentName, QTable, ScheduleClock};
use smoothq::harness::{self, AggregateSeries, Experiment, ExperimentConfig};
use smoothq::mdp::{make_max_bias_env, max_bias, TabularMdp, Transition};
use smoothq::oracle::value_iteration;
use smoothq::rng::RngStream;
use smoothq::schedules::{check_robbins_monro, Schedule};
use smoothq::smoothing::{hard_max, softmax, SmoothingSpec, MASS_TOLERANCE};

const RUNS: usize = 1000;
const EPISODES: usize = 300;
const SEED: u64 = 7;
const FINAL_WINDOW: usize = 50;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id}: {name}: {detail}");
}

fn benchmark_config(agent: AgentName) -> ExperimentConfig {
    ExperimentConfig {
        agent,
        smoothing: SmoothingSpec::ClippedMax(Schedule::exponential_decay(0.02)),
        alpha: Schedule::hyperbolic(0.1, 0.001),
        epsilon: 0.1,
        gamma: 0.99,
        episodes: EPISODES,
        runs: RUNS,
        base_seed: SEED,
        ..ExperimentConfig::default()
    }
}

struct Benchmark {
    series: Vec<(AgentName, AggregateSeries)>,
    elapsed: Duration,
}

impl Benchmark {
    fn get(&self, agent: AgentName) -> &AggregateSeries {
        &self.series.iter().find(|(a, _)| *a == agent).unwrap().1
    }
}

/// The four agents at the benchmark settings, computed once for
/// criteria 3 to 5.
fn benchmark() -> &'static Benchmark {
    static CELL: OnceLock<Benchmark> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let series = AgentName::ALL
            .into_iter()
            .map(|a| (a, harness::run_experiment(&benchmark_config(a)).unwrap()))
            .collect();
        Benchmark {
            series,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_1_oracle_exactness() {
    let start = Instant::now();
    let env = make_max_bias_env(0.99).unwrap();
    let opt = value_iteration(&env, 1e-12, 10_000).unwrap();
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for a in 0..max_bias::B_ACTIONS {
        worst = worst.max((opt.get(max_bias::B, a) + 0.1).abs());
    }
    worst = worst.max((opt.get(max_bias::A, max_bias::LEFT) + 0.099).abs());
    worst = worst.max(opt.get(max_bias::A, max_bias::RIGHT).abs());
    let ok = worst <= 1e-10 && elapsed < Duration::from_secs(1);
    report(1, "oracle exactness", ok, format!("max error {worst:e}, {elapsed:?}"));
    assert!(ok);
}

/// Transitions from a uniformly random behaviour policy on a small
/// stochastic MDP with a cycle, so bootstraps hit non-trivial rows.
fn recorded_transitions(n: usize) -> (TabularMdp, Vec<Transition>) {
    let env = TabularMdp::from_json_str(
        r#"{
          "discount": 0.95,
          "states": [
            {"actions": [
              {"outcomes": [
                {"next": 1, "prob": 0.6, "reward": {"kind": "gaussian", "mean": 0.5, "std": 1.0}},
                {"next": 2, "prob": 0.4, "reward": {"kind": "constant", "mean": -1.0}}]},
              {"outcomes": [
                {"next": 0, "prob": 0.3, "reward": {"kind": "gaussian", "mean": 0.0, "std": 2.0}},
                {"next": 3, "prob": 0.7, "reward": {"kind": "constant", "mean": 1.0}}]}]},
            {"actions": [
              {"outcomes": [{"next": 2, "prob": 1.0, "reward": {"kind": "gaussian", "mean": -0.2, "std": 0.5}}]},
              {"outcomes": [{"next": 0, "prob": 1.0, "reward": {"kind": "constant", "mean": 0.1}}]},
              {"outcomes": [{"next": 3, "prob": 1.0, "reward": {"kind": "gaussian", "mean": 0.3, "std": 1.0}}]}]},
            {"actions": [
              {"outcomes": [
                {"next": 0, "prob": 0.5, "reward": {"kind": "constant", "mean": 0.0}},
                {"next": 1, "prob": 0.5, "reward": {"kind": "gaussian", "mean": 0.2, "std": 0.3}}]},
              {"outcomes": [{"next": 3, "prob": 1.0, "reward": {"kind": "constant", "mean": 2.0}}]}]},
            {"terminal": true}
          ]
        }"#,
    )
    .unwrap();
    let mut rng = RngStream::new(2024, 0);
    let mut out = Vec::with_capacity(n);
    let mut state = env.start_state();
    while out.len() < n {
        let action = rng.below(env.num_actions(state));
        let tr = env.step(state, action, &mut rng).unwrap();
        out.push(tr);
        state = if tr.is_terminal { env.start_state() } else { tr.next_state };
    }
    (env, out)
}

#[test]
fn criterion_2_reduction_equivalence() {
    let start = Instant::now();
    let (env, transitions) = recorded_transitions(10_000);
    let alpha = Schedule::hyperbolic(0.1, 0.001);
    let table = QTable::zeros(&env);
    let mut q = Agent::from_table(AgentKind::Q, table.clone(), env.discount(), ScheduleClock::GlobalStep);
    let mut smoothed = Agent::from_table(
        AgentKind::SmoothedQ(SmoothingSpec::HardMax),
        table,
        env.discount(),
        ScheduleClock::GlobalStep,
    );
    for (i, tr) in transitions.iter().enumerate() {
        let a = alpha.unit_value(i as u64 + 1).unwrap();
        q.q_update(tr, a).unwrap();
        smoothed.smoothed_q_update(tr, a).unwrap();
    }
    let elapsed = start.elapsed();
    let bits = |t: &QTable| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let identical = bits(q.primary()) == bits(smoothed.primary());
    let moved = q.primary().values().iter().any(|&v| v != 0.0);
    let ok = identical && moved && elapsed < Duration::from_secs(1);
    report(
        2,
        "reduction equivalence",
        ok,
        format!("bit-identical = {identical} after {} transitions, {elapsed:?}", transitions.len()),
    );
    assert!(ok);
}

#[test]
fn criterion_3_asymptote() {
    let bench = benchmark();
    let mut ok = bench.elapsed < Duration::from_secs(60);
    let mut parts = Vec::new();
    for (agent, series) in &bench.series {
        let tail = AggregateSeries::window_mean(&series.left_fraction, EPISODES - FINAL_WINDOW, EPISODES);
        ok &= (0.03..=0.07).contains(&tail);
        parts.push(format!("{agent}={tail:.4}"));
    }
    report(
        3,
        "final-50 Left fraction in [0.03, 0.07]",
        ok,
        format!("{} ({:?} for all four agents)", parts.join(" "), bench.elapsed),
    );
    assert!(ok);
}

#[test]
fn criterion_4_overestimation_ordering() {
    let bench = benchmark();
    let q = bench.get(AgentName::Q).peak_left_fraction();
    let smoothed = bench.get(AgentName::SmoothedQ).peak_left_fraction();
    let double = bench.get(AgentName::DoubleQ).peak_left_fraction();
    let ok = smoothed <= q - 0.05 && double <= q - 0.05 && q > 0.55;
    report(
        4,
        "peak Left fraction ordering",
        ok,
        format!("q={q:.4} smoothed-q={smoothed:.4} double-q={double:.4}"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_convergence_ordering() {
    let bench = benchmark();
    let last = |a| *bench.get(a).q_distance.last().unwrap();
    let first = |a: AgentName| bench.get(a).q_distance[0];
    let mut ok = last(AgentName::SmoothedQ) <= last(AgentName::DoubleQ);
    let mut parts = vec![format!(
        "final smoothed-q={:.4} vs double-q={:.4}",
        last(AgentName::SmoothedQ),
        last(AgentName::DoubleQ)
    )];
    for agent in AgentName::ALL {
        let (f, l) = (first(agent), last(agent));
        ok &= l < 0.5 * f;
        parts.push(format!("{agent}: {l:.4} vs 0.5*{f:.4}"));
    }
    report(5, "q_distance convergence ordering", ok, parts.join("; "));
    assert!(ok);
}

#[test]
fn criterion_6_property_suites() {
    let mut rng = RngStream::new(6, 0);
    let mut results = Vec::new();

    // Average <= max over 1e5 random rows and smoothing choices.
    let specs = [
        SmoothingSpec::HardMax,
        SmoothingSpec::Softmax(Schedule::linear(0.1, 0.1)),
        SmoothingSpec::ClippedMax(Schedule::exponential_decay(0.02)),
        SmoothingSpec::ClippedMax(Schedule::constant(1.0)),
    ];
    let mut dominance = true;
    let mut normalized = true;
    for i in 0..100_000 {
        let len = 1 + rng.below(10);
        let row: Vec<f64> = (0..len).map(|_| 20.0 * rng.uniform() - 10.0).collect();
        let spec = specs[i % specs.len()];
        let t = 1 + rng.below(2000) as u64;
        let dist = spec.smooth(&row, t).unwrap();
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        dominance &= dist.expected_value(&row).unwrap() <= top + 1e-12;
        if let SmoothingSpec::ClippedMax(_) = spec {
            let total: f64 = dist.probs().iter().sum();
            normalized &= (total - 1.0).abs() <= MASS_TOLERANCE;
        }
    }
    results.push(("dominance", dominance));
    results.push(("clipped normalization", normalized));

    // Softmax at beta = 1e4 on rows whose top gap is at least 0.01.
    let mut limit = true;
    for _ in 0..10_000 {
        let len = 2 + rng.below(8);
        let mut row: Vec<f64> = (0..len).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let best = rng.below(len);
        let runner_up = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        row[best] = runner_up + 0.01 + rng.uniform();
        limit &= softmax(&row, 1e4).total_variation(&hard_max(&row)) < 1e-9;
    }
    results.push(("softmax limit", limit));

    let rm = check_robbins_monro(&Schedule::hyperbolic(0.1, 0.001), 1_000_000).unwrap();
    results.push((
        "robbins-monro",
        rm.partial_sum > 50.0 && rm.sum_diverges && rm.tail_sq_sum < rm.head_sq_sum && rm.squares_converge,
    ));

    let (first, last) = slack_deciles(200);
    results.push(("slack trend", last < first));

    let ok = results.iter().all(|(_, r)| *r);
    let detail = results
        .iter()
        .map(|(n, r)| format!("{n}={}", if *r { "ok" } else { "fail" }))
        .collect::<Vec<_>>()
        .join(" ");
    report(6, "property suites", ok, format!("{detail} (slack first-decile {first:.3e}, last-decile {last:.3e})"));
    assert!(ok);
}

/// Mean over runs of the first- and last-decile mean of the recorded slack.
fn slack_deciles(runs: u64) -> (f64, f64) {
    let exp = Experiment::new(benchmark_config(AgentName::SmoothedQ)).unwrap();
    let (mut first, mut last, mut counted) = (0.0, 0.0, 0);
    for run in 0..runs {
        let slack: Vec<f64> = exp.run_recording_slack(run).unwrap().slack.iter().map(|s| s.value).collect();
        if slack.len() < 10 {
            continue;
        }
        let k = slack.len() / 10;
        first += slack[..k].iter().sum::<f64>() / k as f64;
        last += slack[slack.len() - k..].iter().sum::<f64>() / k as f64;
        counted += 1;
    }
    (first / counted as f64, last / counted as f64)
}

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for rep in 0..3 {
        for threads in ["1", "4"] {
            let path = dir.path().join(format!("rep{rep}_t{threads}.csv"));
            let args = [
                "smoothq", "run", "--agent", "smoothed-q", "--smoothing", "clipped:exp:0.02",
                "--alpha", "hyperbolic:0.1:0.001", "--epsilon", "0.1", "--gamma", "0.99",
                "--episodes", "100", "--runs", "300", "--seed", "7", "--threads", threads,
                "--out", path.to_str().unwrap(),
            ];
            let code = smoothq::cli::run_cli(args, &mut Vec::new(), &mut Vec::new());
            assert_eq!(code, 0);
            outputs.push(std::fs::read(&path).unwrap());
        }
    }
    let ok = outputs.windows(2).all(|w| w[0] == w[1]);
    report(7, "determinism", ok, format!("{} CSVs byte-identical = {ok}", outputs.len()));
    assert!(ok);
}
