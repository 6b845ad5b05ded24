//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revalued::agents::{epsilon_at, Agent, AgentConfig, Algorithm};
use revalued::envs::{EnvKind, NoiseWrapperConfig};
use revalued::metrics::{cvar, evaluate};
use revalued::net::{gradient_check, polyak_update, GradCheckConfig, NetConfig, NetParams};
use revalued::replay::{NStepAssembler, PrioritizedBuffer, RawStep, ReplayConfig, SumTree};
use revalued::theory::{
    closed_form_target_moments, max_uniform_moments, simulate_max_uniform, simulate_target_diff, spec_grid,
    verify_inequalities, NoiseModel, TargetMode,
};
use revalued::{ActionSpaceSpec, GlobalAction, Transition};
use revalued_cli::train::{eval_env_seed, stream_rng};
use revalued_cli::{point_mass_baselines, run_tabular_credit, train_seed, RunConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const MC_TRIALS: usize = 1_000_000;
const MEAN_SIGMAS: f64 = 5.0;
const VAR_RTOL: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn run(name: &str, limit: Option<Duration>, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = outcome.pass && in_time;
    let limit_note = match limit {
        Some(l) => format!(" (limit {:.0}s)", l.as_secs_f64()),
        None => String::new(),
    };
    println!(
        "{} {name}: {} [{:.1}s{limit_note}]",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn spec(sizes: &[usize]) -> ActionSpaceSpec {
    ActionSpaceSpec::new(sizes.to_vec()).unwrap()
}

fn unit_noise() -> NoiseModel {
    NoiseModel::new(1.0, 1.0).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn lemma_1() -> Outcome {
    let mut worst_sigmas = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut pass = true;
    for (i, &n) in [2usize, 3, 5, 10].iter().enumerate() {
        for (j, &b) in [0.5, 1.0].iter().enumerate() {
            let cf = max_uniform_moments(n, b).unwrap();
            let mc = simulate_max_uniform(n, b, MC_TRIALS, (10 * i + j) as u64).unwrap();
            let sigmas = (mc.mean - cf.mean).abs() / mc.std_error();
            let var_err = (mc.variance() - cf.variance).abs() / cf.variance;
            worst_sigmas = worst_sigmas.max(sigmas);
            worst_var = worst_var.max(var_err);
            pass &= sigmas < MEAN_SIGMAS && var_err < VAR_RTOL;
        }
    }
    let fixtures = [(3, 1.0, 0.5, 0.15), (2, 0.5, 1.0 / 6.0, 1.0 / 18.0), (1, 1.0, 0.0, 1.0 / 3.0)];
    for (n, b, mean, var) in fixtures {
        let m = max_uniform_moments(n, b).unwrap();
        pass &= close(m.mean, mean, 1e-12) && close(m.variance, var, 1e-12);
    }
    Outcome::new(pass, format!("worst mean deviation {worst_sigmas:.2} SE, worst variance error {:.3}%", 100.0 * worst_var))
}

fn theorem_1() -> Outcome {
    let grid = spec_grid(1..=5, 2..=10).unwrap();
    let reports = verify_inequalities(&grid, unit_noise(), 10).unwrap();
    let failures = reports
        .iter()
        .filter(|r| {
            r.comparisons
                .iter()
                .filter(|c| c.label == "mean_dec<=mean_dqn" || c.label == "var_dqn<=var_dec")
                .any(|c| !c.holds)
        })
        .count();
    let mixed = grid.iter().filter(|s| s.sizes().windows(2).any(|w| w[0] != w[1])).count();

    let s = spec(&[3, 3]);
    let dqn_cf = closed_form_target_moments(&s, unit_noise(), TargetMode::Dqn, 1).unwrap();
    let dec_cf = closed_form_target_moments(&s, unit_noise(), TargetMode::Dec, 1).unwrap();
    let fixtures_ok = close(dqn_cf.mean, 0.8, 1e-12)
        && close(dqn_cf.variance, 36.0 / 1100.0, 1e-12)
        && close(dec_cf.mean, 0.5, 1e-12)
        && close(dec_cf.variance, 0.075, 1e-12);
    let dqn = simulate_target_diff(&s, unit_noise(), TargetMode::Dqn, 1, MC_TRIALS, 1).unwrap();
    let dec = simulate_target_diff(&s, unit_noise(), TargetMode::Dec, 1, MC_TRIALS, 2).unwrap();
    let mc_ok = (dqn.mean - 0.8).abs() < MEAN_SIGMAS * dqn.std_error_mean
        && (dec.mean - 0.5).abs() < MEAN_SIGMAS * dec.std_error_mean
        && (dqn.variance - 36.0 / 1100.0).abs() < VAR_RTOL * 36.0 / 1100.0
        && (dec.variance - 0.075).abs() < VAR_RTOL * 0.075;
    Outcome::new(
        failures == 0 && fixtures_ok && mc_ok,
        format!(
            "{} specs ({mixed} mixed), {failures} failures; [3,3] MC mean dec {:.4} vs dqn {:.4}, var dqn {:.5} vs dec {:.5}",
            grid.len(),
            dec.mean,
            dqn.mean,
            dqn.variance,
            dec.variance
        ),
    )
}

fn theorem_2() -> Outcome {
    let s = spec(&[3, 3, 3]);
    let dec = simulate_target_diff(&s, unit_noise(), TargetMode::Dec, 1, MC_TRIALS, 20).unwrap();
    let dec_cf = closed_form_target_moments(&s, unit_noise(), TargetMode::Dec, 1).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [3usize, 10] {
        let ens = simulate_target_diff(&s, unit_noise(), TargetMode::Ens, k, MC_TRIALS, 20 + k as u64).unwrap();
        let ratio = ens.variance * k as f64 / dec.variance;
        let ens_cf = closed_form_target_moments(&s, unit_noise(), TargetMode::Ens, k).unwrap();
        let means_equal = (ens_cf.mean - dec_cf.mean).abs() <= 1e-12;
        pass &= (0.95..=1.05).contains(&ratio) && means_equal;
        parts.push(format!("K={k} ratio {ratio:.4}"));
    }
    Outcome::new(pass, format!("{}; closed-form means equal", parts.join(", ")))
}

fn theorem_3() -> Outcome {
    let grid = spec_grid(1..=5, 2..=10).unwrap();
    let reports = verify_inequalities(&grid, unit_noise(), 10).unwrap();
    let failures = reports
        .iter()
        .filter(|r| {
            r.comparisons
                .iter()
                .filter(|c| c.label == "mean_dqn<=mean_sum" || c.label == "var_dqn<=var_sum")
                .any(|c| !c.holds)
        })
        .count();
    Outcome::new(failures == 0, format!("{} specs, {failures} failures", grid.len()))
}

fn gradients() -> Outcome {
    let report = gradient_check(&GradCheckConfig::default()).unwrap();
    Outcome::new(
        report.max_relative_error < 1e-4,
        format!(
            "{} draws, {} coordinates, max relative error {:.2e} at {} [{}]",
            report.draws, report.parameters_checked, report.max_relative_error, report.worst.0, report.worst.1
        ),
    )
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tabular_credit(out: &Path) -> Outcome {
    let config = RunConfig::load(&config_dir().join("tabular_credit.toml")).unwrap();
    let summary = run_tabular_credit(&config, out, config.seeds[0]).unwrap();
    let (d, r) = (&summary.decqn.points, &summary.revalued.points);
    let violations: Vec<usize> = d
        .iter()
        .zip(r)
        .filter(|(a, b)| a.update_idx > 10 && b.frequency < a.frequency)
        .map(|(a, _)| a.update_idx)
        .collect();
    let (fd, fr) = (d.last().unwrap(), r.last().unwrap());
    let gap = fr.frequency - fd.frequency;
    let separated = fr.frequency - fr.ci_half_width > fd.frequency + fd.ci_half_width;
    Outcome::new(
        violations.is_empty() && gap >= 0.05 && separated && d.len() == 100,
        format!(
            "final revalued {:.3}±{:.3} vs decqn {:.3}±{:.3}, gap {:.1} pp, {} checkpoints after 10 with revalued below",
            fr.frequency,
            fr.ci_half_width,
            fd.frequency,
            fd.ci_half_width,
            100.0 * gap,
            violations.len()
        ),
    )
}

fn point_mass_config() -> RunConfig {
    RunConfig::load(&config_dir().join("point_mass.toml")).unwrap()
}

fn collapse(out: &Path) -> Outcome {
    let mut decqn = point_mass_config();
    decqn.training.total_updates = 2000;
    decqn.agent.algorithm = Algorithm::Decqn;
    decqn.agent.ensemble_size = None;
    decqn.agent.beta = None;
    let mut revalued = decqn.clone();
    revalued.agent.algorithm = Algorithm::Revalued;
    revalued.agent.ensemble_size = Some(1);
    revalued.agent.beta = Some(0.0);
    let seed = 7;
    let (da, db) = (out.join("collapse_decqn"), out.join("collapse_revalued"));
    train_seed(&decqn, seed, Some(&da)).unwrap();
    train_seed(&revalued, seed, Some(&db)).unwrap();
    let mut same = true;
    let mut rows = 0;
    for name in [format!("train_{seed}.csv"), format!("eval_{seed}.csv")] {
        let (a, b) = (std::fs::read(da.join(&name)).unwrap(), std::fs::read(db.join(&name)).unwrap());
        same &= a == b;
        rows += a.iter().filter(|&&c| c == b'\n').count();
    }
    Outcome::new(same, format!("train and eval CSVs byte-identical: {same} ({rows} lines)"))
}

/// Evaluation index used for the post-training comparison, distinct from
/// every in-training evaluation.
const FINAL_EVAL: u64 = u64::MAX;
const FINAL_EPISODES: usize = 20;

fn learning_sanity() -> Outcome {
    let base = point_mass_config();
    let EnvKind::PointMass(pm) = base.env.resolve().unwrap() else { panic!("point-mass config expected") };
    let noise = NoiseWrapperConfig::default();
    let seeds = base.seeds.clone();

    let (mut random, mut oracle) = (0.0, 0.0);
    for &seed in &seeds {
        let (r, o) = point_mass_baselines(&pm, &noise, seed, FINAL_EVAL, FINAL_EPISODES).unwrap();
        random += r / seeds.len() as f64;
        oracle += o / seeds.len() as f64;
    }

    let mut pass = oracle > random;
    let mut parts = vec![format!("random {random:.2}, oracle {oracle:.2}")];
    for (algorithm, k) in [(Algorithm::Decqn, 1), (Algorithm::Revalued, 3)] {
        let mut config = base.clone();
        config.agent.algorithm = algorithm;
        config.agent.ensemble_size = Some(k);
        config.agent.beta = None;
        let mut mean = 0.0;
        for &seed in &seeds {
            let outcome = train_seed(&config, seed, None).unwrap();
            let kind = EnvKind::PointMass(pm.clone());
            let mut env = kind.build(&noise, eval_env_seed(seed, FINAL_EVAL)).unwrap();
            mean += evaluate(&outcome.agent, &mut env, FINAL_EPISODES).unwrap() / seeds.len() as f64;
        }
        let fraction = (mean - random) / (oracle - random);
        pass &= fraction >= 0.5;
        parts.push(format!("{} {mean:.2} ({:.0}% of gap)", algorithm.name(), 100.0 * fraction));
    }
    Outcome::new(pass, format!("{} seeds x {} updates: {}", seeds.len(), base.training.total_updates, parts.join(", ")))
}

fn transition(tag: usize) -> Transition {
    Transition {
        state: vec![tag as f32],
        action: GlobalAction::new(vec![0]),
        reward: 0.0,
        next_state: vec![tag as f32],
        done: true,
        n_used: 1,
    }
}

fn per_chi_square() -> (bool, String) {
    let slots = 20;
    let config = ReplayConfig { capacity: slots, ..Default::default() };
    let mut buffer = PrioritizedBuffer::new(config).unwrap();
    (0..slots).for_each(|i| buffer.push(transition(i)));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tds: Vec<f32> = (0..slots).map(|_| rng.random_range(0.0..3.0)).collect();
    buffer.update_priorities(&(0..slots).collect::<Vec<_>>(), &tds).unwrap();
    let draws = 200_000;
    let batch = buffer.sample(draws, &mut rng).unwrap();
    let mut counts = vec![0usize; slots];
    batch.indices.iter().for_each(|&i| counts[i] += 1);
    let stat: f64 = (0..slots)
        .map(|i| {
            let p = (tds[i] as f64 + config.priority_floor).powf(config.alpha);
            let total: f64 = tds.iter().map(|&t| (t as f64 + config.priority_floor).powf(config.alpha)).sum();
            let expected = draws as f64 * p / total;
            (counts[i] as f64 - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new((slots - 1) as f64).unwrap().cdf(stat);
    (p > 0.001, format!("PER chi-square p={p:.3}"))
}

fn sum_tree_ops() -> (bool, String) {
    let capacity = 300;
    let mut tree = SumTree::new(capacity);
    let mut shadow = vec![0.0f64; capacity];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = true;
    for _ in 0..100_000 {
        let i = rng.random_range(0..capacity);
        let mass = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..10.0) };
        tree.set(i, mass, mass);
        shadow[i] = mass;
        let exact: f64 = shadow.iter().sum();
        let max = shadow.iter().cloned().fold(0.0, f64::max);
        ok &= (tree.total() - exact).abs() <= 1e-9 * exact.max(1.0) && tree.max() == max;
        if exact > 0.0 {
            let leaf = tree.find(rng.random::<f64>() * tree.total());
            ok &= shadow[leaf] > 0.0;
        }
    }
    (ok, "sum tree 1e5 ops".into())
}

fn nstep_brute_force() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    for episode in 0..1000 {
        let n = rng.random_range(1..=5);
        let gamma: f32 = rng.random_range(0.5..1.0);
        let len = rng.random_range(1..=12);
        let rewards: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let states: Vec<Vec<f32>> = (0..=len).map(|t| vec![episode as f32, t as f32]).collect();
        let mut assembler = NStepAssembler::new(n, gamma).unwrap();
        let mut got = Vec::new();
        for t in 0..len {
            got.extend(
                assembler
                    .push(RawStep {
                        state: states[t].clone(),
                        action: GlobalAction::new(vec![t % 2]),
                        reward: rewards[t],
                        next_state: states[t + 1].clone(),
                        done: t + 1 == len,
                    })
                    .unwrap(),
            );
        }
        ok &= got.len() == len;
        for (t, tr) in got.iter().enumerate() {
            let m = n.min(len - t);
            let mut expected = 0.0f32;
            let mut discount = 1.0f32;
            for r in &rewards[t..t + m] {
                expected += discount * r;
                discount *= gamma;
            }
            ok &= tr.state == states[t]
                && tr.next_state == states[t + m]
                && tr.n_used == m
                && tr.done == (t + m == len)
                && tr.reward == expected
                && tr.action[0] == t % 2;
        }
    }
    (ok, "n-step 1e3 episodes".into())
}

fn epsilon_decay() -> (bool, String) {
    let config = AgentConfig {
        hidden: 8,
        replay: ReplayConfig { batch_size: 4, capacity: 64, ..Default::default() },
        ..AgentConfig::for_algorithm(Algorithm::Decqn)
    };
    let mut agent = Agent::new(config.clone(), 1, spec(&[2, 2]), 0).unwrap();
    let mut buffer = PrioritizedBuffer::new(config.replay).unwrap();
    (0..8).for_each(|i| {
        let mut t = transition(i);
        t.action = GlobalAction::new(vec![i % 2, 0]);
        buffer.push(t)
    });
    let mut rng = stream_rng(0, 0);
    let mut ok = agent.epsilon() == 1.0;
    for t in 1..=300u64 {
        agent.total_update(&mut buffer, &mut rng).unwrap();
        ok &= agent.epsilon() == (0.99995f64.powf(t as f64)).max(0.05);
    }
    for t in [59_000u64, 59_912, 59_913, 1_000_000] {
        ok &= epsilon_at(&config, t) == (0.99995f64.powf(t as f64)).max(0.05);
    }
    ok &= epsilon_at(&config, 1_000_000) == 0.05;
    (ok, "epsilon closed form".into())
}

fn polyak_exact() -> (bool, String) {
    let net = NetConfig::new(2, spec(&[2, 3]), 1).with_hidden(4);
    let online = NetParams::<f32>::from_raw(&net, (0..NetParams::<f32>::init(&net).unwrap().len()).map(|i| (i % 7) as f32).collect()).unwrap();
    let mut target = NetParams::<f32>::from_raw(&net, vec![64.0; online.len()]).unwrap();
    let mut ok = true;
    for m in 1..=6 {
        polyak_update(&mut target, &online, 0.5).unwrap();
        let factor = 0.5f32.powi(m);
        ok &= target
            .as_slice()
            .iter()
            .zip(online.as_slice())
            .all(|(&t, &o)| t == o + factor * (64.0 - o));
    }
    (ok, "Polyak recursion".into())
}

fn cvar_fixture() -> (bool, String) {
    let samples: Vec<f64> = (1..=20).map(f64::from).collect();
    let c = cvar(&samples, 0.95).unwrap();
    (c == 19.5, format!("CVaR(1..20)={c}"))
}

fn infrastructure() -> Outcome {
    let checks = [per_chi_square(), sum_tree_ops(), nstep_brute_force(), epsilon_decay(), polyak_exact(), cvar_fixture()];
    let pass = checks.iter().all(|(ok, _)| *ok);
    let detail = checks.iter().map(|(ok, d)| format!("{d} {}", if *ok { "ok" } else { "FAILED" })).collect::<Vec<_>>();
    Outcome::new(pass, detail.join("; "))
}

fn main() {
    let out = tempfile::tempdir().unwrap();
    let secs = Duration::from_secs;
    let results = [
        run("lemma-1 max-of-uniform moments", Some(secs(10)), lemma_1),
        run("theorem-1 decomposition bias/variance", Some(secs(30)), theorem_1),
        run("theorem-2 ensemble variance ratio", None, theorem_2),
        run("theorem-3 sum decomposition", None, theorem_3),
        run("gradient check", Some(secs(30)), gradients),
        run("tabular credit assignment", Some(secs(120)), || tabular_credit(out.path())),
        run("collapse equivalence", Some(secs(300)), || collapse(out.path())),
        run("infrastructure properties", None, infrastructure),
        run("learning sanity", Some(secs(1200)), learning_sanity),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
