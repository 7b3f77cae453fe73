//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Run with `cargo test --release --test acceptance`.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use dsm_core::agents::{noop_action, random_action};
use dsm_core::cli::{read_log, run, EXIT_OK};
use dsm_core::data::{generate_synthetic, month_blocks_for};
use dsm_core::env::{observation_len, simulate, ActionLayout, ActionVector, DistrictEnv, EnvConfig};
use dsm_core::metrics::{avg_daily_peak, net_consumption, one_minus_load_factor, peak_demand, ramping, score, CostReport, MetricSet};
use dsm_core::neural::Mlp;
use dsm_core::reward::{reward, shaping_term, RewardConfig};
use dsm_core::sac::{update, ReplayBuffer, SacAgent, SacConfig, Transition};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/district_3b_90d_seed1")
}

fn dsm(args: &[&str]) -> i32 {
    run(std::iter::once("dsm").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Training hyperparameters with the evaluation minibatch; see README.
const RUN_CONFIG: &str = "[sac]\nminibatch = 64\n";

fn table_format() -> Outcome {
    let report = CostReport::from_ratios(MetricSet::from_array([0.735, 0.881, 0.849, 0.986, 1.014]));
    check((report.avg_score - 0.893).abs() <= 0.0005, || format!("average {}", report.avg_score))?;
    let expected = "ramping,1-load_factor,avg_daily_peak,peak_demand,net_consumption,avg_score\n0.735,0.881,0.849,0.986,1.014,0.893\n";
    check(report.to_csv() == expected, || format!("csv {:?}", report.to_csv()))?;
    Ok(format!("avg {:.4}", report.avg_score))
}

fn random_day_trace(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let days = rng.random_range(1..=60);
    (0..days * 24).map(|_| rng.random_range(0.0..800.0)).collect()
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_day_trace(&mut rng);
        let blocks = month_blocks_for(x.len());
        let pairs = [
            (ramping(&x).unwrap(), brute_ramping(&x)),
            (one_minus_load_factor(&x, &blocks).unwrap(), brute_load_factor(&x, &blocks)),
            (avg_daily_peak(&x).unwrap(), brute_daily_peak(&x)),
            (peak_demand(&x).unwrap(), brute_peak(&x)),
            (net_consumption(&x).unwrap(), brute_net(&x)),
        ];
        for (got, want) in pairs {
            let rel = (got - want).abs() / want.abs().max(1e-300);
            worst = worst.max(rel);
            check(rel_close(got, want, 1e-9), || format!("{got} vs {want}"))?;
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!("max rel err {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

fn normalization_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let x = random_day_trace(&mut rng);
        let r = score(&x, &x, &month_blocks_for(x.len())).unwrap();
        check(r.ratios.to_array().iter().all(|v| v.to_bits() == 1f64.to_bits()), || format!("{:?}", r.ratios))?;
        check(r.avg_score.to_bits() == 1f64.to_bits(), || format!("avg {}", r.avg_score))?;
    }
    Ok("100 traces".into())
}

fn environment_invariants() -> Outcome {
    let d = generate_synthetic(9, 30, 3);
    let mut env = DistrictEnv::new(&d, EnvConfig::default()).unwrap();
    let layout = env.layout().clone();
    for step in 0..10_000u64 {
        let out = env.step(&random_action(&layout, 17, step)).unwrap();
        let st = env.state();
        check(st.soc_cooling.iter().chain(&st.soc_dhw).all(|s| (0.0..=1.0).contains(s)), || {
            format!("SOC out of range at step {step}")
        })?;
        let finite = out.e_total.is_finite()
            && out.e_i.iter().all(|v| v.is_finite())
            && out.observation.values().iter().all(|v| v.is_finite());
        check(finite, || format!("non-finite value at step {step}"))?;
        if out.done {
            env.reset();
        }
    }
    let mut zero = d.clone();
    for b in &mut zero.buildings {
        b.cooling_storage_factor = 0.0;
        b.dhw_storage_factor = 0.0;
    }
    let noop = simulate(&zero, EnvConfig::default(), |_, _, _, l| noop_action(l)).unwrap();
    let random = simulate(&zero, EnvConfig::default(), |t, _, _, l| random_action(l, 5, t as u64)).unwrap();
    check(noop.e_total == random.e_total, || "zero-storage trace differs from no-op".into())?;
    Ok("10000 steps, 9 buildings".into())
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let d = generate_synthetic(9, 2, 1);
    let obs = observation_len(&d);
    let act = ActionLayout::for_dataset(&d).len();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for sizes in [vec![obs, 256, 256, 2 * act], vec![obs + act, 256, 256, 1]] {
        let net = Mlp::new(&sizes, &mut rng);
        let batch = 3;
        let inputs: Vec<Vec<f64>> = (0..batch).map(|_| (0..sizes[0]).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let out_w = *sizes.last().unwrap();
        let probe: Vec<Vec<f64>> = (0..batch).map(|_| (0..out_w).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x = Array2::from_shape_fn((batch, sizes[0]), |(i, j)| inputs[i][j]);
        let g = Array2::from_shape_fn((batch, out_w), |(i, j)| probe[i][j]);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, _) = net.backward(&cache, g.view()).unwrap();
        let analytic = Mlp { layers: grads.layers }.flat_parameters();
        // every bias plus a strided sample of every weight matrix
        let mut sample_rng = ChaCha8Rng::seed_from_u64(sizes[0] as u64);
        let result = finite_difference_check(&net, &inputs, &probe, &analytic, 1e-5, |_, is_bias, _| {
            is_bias || sample_rng.random_bool(0.01)
        });
        check(result.checked > 500, || format!("only {} parameters checked", result.checked))?;
        check(result.max_rel_error < 1e-4, || format!("{sizes:?}: max rel err {:.2e}", result.max_rel_error))?;
        worst = worst.max(result.max_rel_error);
        checked += result.checked;
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "actor {obs}->256->256->{}, critic {}->256->256->1, {checked} params, max rel err {worst:.1e}, {:.1}s",
        2 * act,
        obs + act,
        start.elapsed().as_secs_f64()
    ))
}

fn reward_contract() -> Outcome {
    let c = RewardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100_000 {
        let n = rng.random_range(1..10);
        let e_i: Vec<f64> = (0..n).map(|_| rng.random_range(-1000.0..10_000.0)).collect();
        let e_total = e_i.iter().sum::<f64>().max(0.0);
        let a = ActionVector::new((0..rng.random_range(1..17)).map(|_| rng.random_range(-1.0..=1.0)).collect());
        let r = reward(e_total, &e_i, rng.random_range(1..=24), &a, &c);
        check((-1.0..=1.0).contains(&r), || format!("reward {r}"))?;
    }
    let table = [
        (21, -0.1, 0.0),
        (21, 0.05, 0.0),
        (21, 0.5, 0.0),
        (22, -0.1, -1000.0),
        (22, 0.05, 0.0),
        (22, 0.5, 1000.0),
        (24, -0.1, -1000.0),
        (24, 0.05, 0.0),
        (24, 0.5, 1000.0),
    ];
    for (hour, mean, want) in table {
        let got = shaping_term(hour, &ActionVector::new(vec![mean; 4]), &c);
        check(got == want, || format!("hour {hour} mean {mean}: {got}"))?;
    }
    Ok("100000 fuzzed, 9 boundary cases".into())
}

fn bandit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = SacConfig {
        minibatch: 64,
        hidden: 64,
        learning_rate: 1e-3,
        gradient_updates_per_interval: 10_000,
        ..SacConfig::training()
    };
    let mut agent = SacAgent::new(1, 1, &config, &mut rng);
    agent.actor.layers.last_mut().unwrap().biases[0] = 1.5;
    let mut buffer = ReplayBuffer::new(4096, 1, 1);
    for _ in 0..4096 {
        let a: f64 = rng.random_range(-1.0..1.0);
        let t = Transition {
            state: vec![0.5],
            action: vec![a],
            reward: 1.0 - a * a,
            next_state: vec![0.5],
            done: true,
        };
        buffer.push(t).unwrap();
    }
    update(&buffer, &mut agent, &config, &mut rng).unwrap();
    let (mean, _) = agent.policy_head(&[0.5]).unwrap();
    let a = mean[0].tanh();
    check(a.abs() < 0.15, || format!("policy mean {a:.3}"))?;
    within(start.elapsed(), 300)?;
    Ok(format!("mean action {a:+.4} after 10000 updates, {:.1}s", start.elapsed().as_secs_f64()))
}

fn learning_progress(work: &Path) -> Outcome {
    let start = Instant::now();
    let config = work.join("run.toml");
    fs::write(&config, RUN_CONFIG).unwrap();
    let out = work.join("learning");
    let code = dsm(&["train", "--config", p(&config), "--seed", "1", "--episodes", "20", "--data", p(&fixture()), "--out", p(&out)]);
    check(code == EXIT_OK, || format!("train exited {code}"))?;
    let log = read_log(&out.join("log.csv")).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = log.iter().map(|r| r.2).collect();
    let listing = scores.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(" ");
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let (first, last) = (scores[0], *scores.last().unwrap());
    check(scores.len() == 20, || format!("{} log rows", scores.len()))?;
    check(best < 1.0, || format!("best score {best:.3} never beat RBC; scores {listing}"))?;
    check(last < first, || format!("final {last:.3} not below first {first:.3}; scores {listing}"))?;
    within(start.elapsed(), 900)?;
    Ok(format!("scores {listing}; {:.0}s", start.elapsed().as_secs_f64()))
}

fn cross_zone(work: &Path) -> Outcome {
    let config = work.join("run.toml");
    fs::write(&config, RUN_CONFIG).unwrap();
    let zones: Vec<PathBuf> = [(-4.0, "A"), (-1.5, "B"), (1.5, "C"), (4.0, "D")]
        .iter()
        .map(|(offset, name)| {
            let dir = work.join(format!("zone_{name}"));
            let offset = offset.to_string();
            let code = dsm(&[
                "generate", "--buildings", "3", "--days", "30", "--seed", "11", "--t-offset", &offset,
                "--label", &format!("zone {name}"), "--out", p(&dir),
            ]);
            assert_eq!(code, EXIT_OK);
            dir
        })
        .collect();
    let train_out = work.join("zone_train");
    let code = dsm(&["train", "--config", p(&config), "--seed", "3", "--episodes", "3", "--data", p(&zones[0]), "--out", p(&train_out)]);
    check(code == EXIT_OK, || format!("train exited {code}"))?;
    let eval_out = work.join("zone_eval");
    let mut args = vec!["evaluate", "--config", p(&config), "--seed", "3", "--out", p(&eval_out)];
    let checkpoint = train_out.join("checkpoint");
    args.extend(["--checkpoint", p(&checkpoint)]);
    for z in &zones {
        args.extend(["--data", p(z)]);
    }
    let code = dsm(&args);
    check(code == EXIT_OK, || format!("evaluate exited {code}"))?;
    let table = fs::read_to_string(eval_out.join("scores.csv")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = table.lines().collect();
    check(lines.len() == 6 && lines[5].starts_with("Avg. Score,"), || format!("table {table:?}"))?;
    for line in &lines[1..] {
        let ok = line.split(',').skip(1).all(|c| c.parse::<f64>().is_ok_and(f64::is_finite));
        check(ok, || format!("bad row {line}"))?;
    }
    Ok(format!("\n    {}", lines.join("\n    ")))
}

fn determinism(work: &Path) -> Outcome {
    let config = work.join("run.toml");
    fs::write(&config, RUN_CONFIG).unwrap();
    let mut logs = Vec::new();
    for name in ["det_a", "det_b"] {
        let out = work.join(name);
        let code = dsm(&["train", "--config", p(&config), "--seed", "4", "--episodes", "2", "--data", p(&fixture()), "--out", p(&out)]);
        check(code == EXIT_OK, || format!("train exited {code}"))?;
        logs.push(fs::read(out.join("log.csv")).map_err(|e| e.to_string())?);
    }
    check(logs[0] == logs[1], || "log CSVs differ".into())?;
    Ok(format!("{} identical bytes", logs[0].len()))
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let w = work.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("score table format", Box::new(table_format)),
        ("metric oracles", Box::new(metric_oracles)),
        ("normalization identity", Box::new(normalization_identity)),
        ("environment invariants", Box::new(environment_invariants)),
        ("gradient correctness", Box::new(gradient_check)),
        ("reward contract", Box::new(reward_contract)),
        ("SAC bandit", Box::new(bandit)),
        ("determinism", Box::new(|| determinism(w))),
        ("cross-zone protocol", Box::new(|| cross_zone(w))),
        ("learning progress", Box::new(|| learning_progress(w))),
    ];
    let mut failed = 0;
    for (name, criterion) in &criteria {
        match criterion() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
