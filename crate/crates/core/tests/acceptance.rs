//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use driftsel::correction::Strategy;
use driftsel::drift::{BucketAssignment, DriftSchedule};
use driftsel::eval::{Pipeline, PipelineOptions, StreamRow};
use driftsel::explain::explain_to_jsonl;
use driftsel::features::{FeatureVector, RunningMean};
use driftsel::learners::{
    BayesConfig, BayesLinear, BayesUpdate, FactorizationMachine, FmConfig, HoeffdingTree, HoeffdingTreeConfig, Mlp,
    MlpConfig,
};
use driftsel::plan::{Literal, Operator};
use driftsel::synth::{
    generate_database, AttributeSpec, Correlation, CorrelationMode, Distribution, RelationSpec, SynthSchema,
};
use driftsel::workload::{generate_workload, LiteralSlot, PredicateTemplate, QueryTemplate};
use driftsel::{FactorClamp, Regressor, RunConfig, Runner};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; enough for test inputs.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn bayes_conjugacy() -> Outcome {
    let d = 8;
    let (alpha, beta) = (1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = BayesConfig { alpha, beta, intercept: false, ..BayesConfig::default() };
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut model = BayesLinear::new(&names, config);
    let truth: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let mut xs = DMatrix::zeros(500, d);
    let mut ys = DVector::zeros(500);
    for i in 0..500 {
        let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let y = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.3 * normal(&mut rng);
        model.update_raw(&DVector::from_vec(x.clone()), y).map_err(|e| e.to_string())?;
        xs.row_mut(i).copy_from(&DVector::from_vec(x).transpose());
        ys[i] = y;
    }
    let precision = DMatrix::identity(d, d) * alpha + xs.transpose() * &xs * beta;
    let covariance = precision.clone().try_inverse().ok_or("oracle precision singular")?;
    let m = &covariance * xs.transpose() * &ys * beta;
    let dm = max_abs_diff(model.mean().as_slice(), m.as_slice());
    let ds = max_abs_diff(model.covariance().as_slice(), covariance.as_slice());
    check(dm < 1e-8 && ds < 1e-8, format!("max|Δm| = {dm:.2e}, max|ΔS| = {ds:.2e}"))?;
    Ok(format!("max|Δm| = {dm:.2e}, max|ΔS| = {ds:.2e}"))
}

fn drift_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let names: Vec<String> = (0..3).map(|i| format!("x{i}")).collect();
    let mut trained = BayesLinear::new(&names, BayesConfig::default());
    for _ in 0..20 {
        let x = DVector::from_fn(4, |_, _| normal(&mut rng));
        trained.update_raw(&x, normal(&mut rng)).map_err(|e| e.to_string())?;
    }
    let mut cfg = *trained.config();
    cfg.update = BayesUpdate::Drift { gamma: 1.0 };
    let mut drifting = rebuild(trained, cfg);
    let (m1, s1) = (drifting.mean().clone(), drifting.covariance().clone());
    for _ in 0..100 {
        let x = DVector::from_fn(4, |_, _| normal(&mut rng));
        drifting.update_raw(&x, normal(&mut rng)).map_err(|e| e.to_string())?;
    }
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check(bits(drifting.mean().as_slice()) == bits(m1.as_slice()), "γ=1 changed m")?;
    check(bits(drifting.covariance().as_slice()) == bits(s1.as_slice()), "γ=1 changed S")?;

    let one = vec!["x".to_string()];
    let forget = BayesConfig { update: BayesUpdate::Drift { gamma: 0.0 }, intercept: false, ..BayesConfig::default() };
    let mut model = BayesLinear::new(&one, forget);
    let mut last = 0.0;
    for _ in 0..50 {
        last = 10.0 * normal(&mut rng);
        model.update_raw(&DVector::from_element(1, 1.0), last).map_err(|e| e.to_string())?;
        check(model.mean()[0] == last, format!("γ=0: m = {} after y = {last}", model.mean()[0]))?;
    }

    let half = BayesConfig { update: BayesUpdate::Drift { gamma: 0.5 }, intercept: false, ..BayesConfig::default() };
    let mut model = BayesLinear::new(&one, half);
    model.update_raw(&DVector::from_element(1, 1.0), 2.0).map_err(|e| e.to_string())?;
    let (s, m) = (model.covariance()[(0, 0)], model.mean()[0]);
    check(s == 1.0 && m == 1.0, format!("γ=0.5 example gave S = {s}, m = {m}"))?;
    Ok(format!("γ=1 bit-identical over 100 updates; γ=0 m = last y ({last:.3}); γ=0.5 → S = {s}, m = {m}"))
}

/// Same learned state under a different update rule.
fn rebuild(model: BayesLinear, config: BayesConfig) -> BayesLinear {
    let mut v = serde_json::to_value(&model).expect("serializes");
    v["config"] = serde_json::to_value(config).expect("serializes");
    serde_json::from_value(v).expect("deserializes")
}

fn random_fm(rng: &mut ChaCha8Rng, p: usize, k: usize) -> (FactorizationMachine, FeatureVector) {
    let mut fm = FactorizationMachine::new(FmConfig { factors: k, seed: rng.random(), ..FmConfig::default() });
    fm.w0 = normal(rng);
    let mut x = FeatureVector::new();
    for j in 0..p {
        let name = format!("f{j}");
        fm.w.insert(name.clone(), normal(rng));
        fm.v.insert(name.clone(), (0..k).map(|_| 0.5 * normal(rng)).collect());
        x.insert(name, normal(rng));
    }
    (fm, x)
}

fn fm_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.random_range(1..=16);
        let (fm, x) = random_fm(&mut rng, p, 10);
        worst = worst.max((fm.predict(&x) - fm.predict_naive(&x)).abs());
    }
    check(worst < 1e-9, format!("max |diff| = {worst:.2e}"))?;
    Ok(format!("max |diff| = {worst:.2e} over 1000 states"))
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

fn gradient_checks() -> Outcome {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_fm: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(1..=12);
        let (fm, x) = random_fm(&mut rng, p, 10);
        let g = fm.gradient(&x);
        let diff = |f: &dyn Fn(&mut FactorizationMachine, f64)| {
            let (mut a, mut b) = (fm.clone(), fm.clone());
            f(&mut a, h);
            f(&mut b, -h);
            (a.predict(&x) - b.predict(&x)) / (2.0 * h)
        };
        worst_fm = worst_fm.max(rel_err(g.w0, diff(&|m, d| m.w0 += d)));
        for (name, gw) in &g.w {
            worst_fm = worst_fm.max(rel_err(*gw, diff(&|m, d| *m.w.get_mut(name).unwrap() += d)));
            for (f, gv) in g.v[name].iter().enumerate() {
                worst_fm = worst_fm.max(rel_err(*gv, diff(&|m, d| m.v.get_mut(name).unwrap()[f] += d)));
            }
        }
    }

    let names: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
    let mut worst_mlp: f64 = 0.0;
    for i in 0..100 {
        let mlp = Mlp::new(&names, &MlpConfig { hidden: vec![8, 8], learning_rate: 0.01, seed: i });
        let x: FeatureVector = names.iter().map(|n| (n.clone(), normal(&mut rng))).collect();
        let y = normal(&mut rng);
        let g = mlp.loss_gradient(&x, y);
        for (j, gj) in g.iter().enumerate() {
            let (mut a, mut b) = (mlp.clone(), mlp.clone());
            a.parameters_mut()[j] += h;
            b.parameters_mut()[j] -= h;
            worst_mlp = worst_mlp.max(rel_err(*gj, (a.loss(&x, y) - b.loss(&x, y)) / (2.0 * h)));
        }
    }
    check(worst_fm < 1e-4 && worst_mlp < 1e-4, format!("FM {worst_fm:.2e}, MLP {worst_mlp:.2e}"))?;
    Ok(format!("max relative error FM {worst_fm:.2e}, MLP {worst_mlp:.2e}"))
}

fn streaming_mean() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<f64> = (0..100_000).map(|_| rng.random_range(-100.0..100.0)).collect();
    let mut running = RunningMean::default();
    for &v in &values {
        running.push(v);
    }
    let batch = values.iter().sum::<f64>() / values.len() as f64;
    let diff = (running.mean - batch).abs();
    check(diff < 1e-10, format!("|diff| = {diff:.2e}"))?;
    Ok(format!("|diff| = {diff:.2e} over 1e5 values"))
}

fn analytic_factor() -> Outcome {
    let schema = SynthSchema {
        relations: vec![RelationSpec {
            name: "r".into(),
            rows: 10_000,
            attributes: vec![
                AttributeSpec { name: "a".into(), domain: 10, distribution: Distribution::Uniform },
                AttributeSpec { name: "b".into(), domain: 10, distribution: Distribution::Uniform },
            ],
        }],
        correlations: vec![Correlation {
            relation: "r".into(),
            attr_a: "a".into(),
            attr_b: "b".into(),
            mode: CorrelationMode::Equal,
        }],
        join_keys: vec![],
        seed: 6,
    };
    let db = generate_database(&schema).map_err(|e| e.to_string())?;
    let pred = |attr: &str| PredicateTemplate {
        relation: "r".into(),
        attribute: attr.into(),
        operator: Operator::Eq,
        literal: LiteralSlot::Slot { slot: "v".into() },
    };
    let templates = vec![QueryTemplate {
        id: "ab".into(),
        relations: ["r".to_string()].into(),
        joins: Default::default(),
        predicates: vec![pred("a"), pred("b")],
        bucket: None,
    }];
    let assignment = BucketAssignment::new(vec![0], 1).map_err(|e| e.to_string())?;
    let schedule = DriftSchedule::Hard { switch_points: vec![] };
    let items = generate_workload(&db, &templates, &assignment, schedule, 1000, 6).map_err(|e| e.to_string())?;

    // Brute force over the stored rows.
    let table = db.table("r").map_err(|e| e.to_string())?;
    let a = &table.column("a").map_err(|e| e.to_string())?.values;
    let b = &table.column("b").map_err(|e| e.to_string())?.values;
    let n = a.len() as f64;
    let mut oracle_q = Vec::new();
    for item in &items {
        let v = match &item.record.predicates[0].literal {
            Literal::Int(v) => *v as u32,
            other => return Err(format!("unexpected literal {other:?}")),
        };
        let both = a.iter().zip(b).filter(|(x, y)| **x == v && **y == v).count() as u64;
        let na = a.iter().filter(|x| **x == v).count() as f64;
        let nb = b.iter().filter(|x| **x == v).count() as f64;
        let avi = n * (na / n) * (nb / n);
        check(item.record.actual_cardinality == both, "true cardinality disagrees with brute force")?;
        check((item.record.estimated_cardinality - avi).abs() < 1e-9 * avi, "AVI estimate disagrees with brute force")?;
        let (y, e) = ((both as f64).max(1.0), avi.max(1.0));
        oracle_q.push((y / e).max(e / y));
    }
    let avi_median = median(&oracle_q);
    check((8.0..=12.0).contains(&avi_median), format!("AVI median q-error {avi_median:.2}"))?;

    let options = PipelineOptions { prior_weight: 5.0, factor_clamp: FactorClamp::default(), window: 100, seed: 6 };
    let mut pipeline = Pipeline::new(Strategy::Global, None, &options).map_err(|e| e.to_string())?;
    let mut q = Vec::new();
    for item in &items {
        q.push(pipeline.step(item.step, item.bucket, &item.record).map_err(|e| e.to_string())?.q_corrected);
    }
    let c = pipeline.factors().global().value();
    let corrected_median = median(&q);
    check((8.0..=12.0).contains(&c), format!("c = {c:.3}"))?;
    check(corrected_median < 1.5, format!("corrected median {corrected_median:.3}"))?;
    Ok(format!("AVI median q {avi_median:.2}; c = {c:.3}; corrected median q {corrected_median:.3}"))
}

fn hoeffding_structure() -> Outcome {
    let config = HoeffdingTreeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tree = HoeffdingTree::new(config);
    let mut max_depth = 0;
    for _ in 0..50_000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = 3.0 * (12.0 * x[0]).sin() + if x[1] < 0.6 { 2.0 } else { -1.0 } + 4.0 * x[2] * x[3]
            + 0.1 * normal(&mut rng);
        let fv: FeatureVector = x.iter().enumerate().map(|(i, v)| (format!("x{i}"), *v)).collect();
        tree.learn(&fv, y).map_err(|e| e.to_string())?;
        max_depth = max_depth.max(tree.depth());
        check(tree.depth() <= config.max_depth, format!("depth {} exceeds limit", tree.depth()))?;
    }
    let n_splits = tree.splits().len();
    let early = tree.splits().iter().filter(|s| s.leaf_samples < config.grace_period).count();
    check(early == 0, format!("{early} splits before the grace period"))?;
    check(!tree.splits().is_empty(), "tree never split")?;

    // Step function of x0; x1..x3 are noise.
    let mut tree = HoeffdingTree::new(config);
    let mut seen = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    while tree.root_split().is_none() && seen.len() < 50_000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = if x[0] < 0.4 { 0.0 } else { 5.0 };
        let fv: FeatureVector = x.iter().enumerate().map(|(i, v)| (format!("x{i}"), *v)).collect();
        tree.learn(&fv, y).map_err(|e| e.to_string())?;
        seen.push((x, y));
    }
    let (feature, threshold) = tree.root_split().ok_or("root never split")?;
    let oracle = best_variance_split(&seen);
    check(feature == format!("x{}", oracle.0), format!("tree split {feature}, oracle x{}", oracle.0))?;
    Ok(format!(
        "max depth {max_depth}, {n_splits} splits none early; root {feature} < {threshold:.3} (oracle x{} < {:.3})",
        oracle.0,
        oracle.1
    ))
}

/// Exhaustive variance-reduction split over every feature and sample threshold.
fn best_variance_split(samples: &[(Vec<f64>, f64)]) -> (usize, f64) {
    let sse = |ys: &[f64]| {
        let m = mean(ys.iter().copied());
        ys.iter().map(|y| (y - m).powi(2)).sum::<f64>()
    };
    let mut best = (0, 0.0, f64::INFINITY);
    for f in 0..samples[0].0.len() {
        let mut sorted: Vec<(f64, f64)> = samples.iter().map(|(x, y)| (x[f], *y)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for i in 1..sorted.len() {
            let (left, right): (Vec<f64>, Vec<f64>) = (
                sorted[..i].iter().map(|p| p.1).collect(),
                sorted[i..].iter().map(|p| p.1).collect(),
            );
            let cost = sse(&left) + sse(&right);
            if cost < best.2 {
                best = (f, sorted[i].0, cost);
            }
        }
    }
    (best.0, best.1)
}

const ONLINE: [&str; 6] = ["linear", "fm", "mlp", "htree", "bayes", "bayes-drift"];

fn scaled_run(drift: &str) -> Result<Runner, String> {
    let strategies: Vec<String> =
        ONLINE.iter().chain(["batch-linear"].iter()).map(|n| format!("\"model:{n}\"")).collect();
    let json = format!(
        r#"{{"scenario": "three-bucket", "strategy": [{}], "drift": {drift},
            "n": 30000, "warm_up": 5000, "seed": 42}}"#,
        strategies.join(", ")
    );
    let config: RunConfig = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let mut runner = Runner::new(config).map_err(|e| e.to_string())?;
    runner.run().map_err(|e| e.to_string())?;
    Ok(runner)
}

fn rows_of<'a>(runner: &'a Runner, name: &str) -> &'a [StreamRow] {
    let i = runner
        .pipelines()
        .iter()
        .position(|p| p.strategy().model_name() == Some(name))
        .expect("strategy configured");
    &runner.rows()[i]
}

fn drift_crossover() -> Outcome {
    let runner = scaled_run(r#"{"mode": "hard", "switch_points": [10000, 20000]}"#)?;
    let batch = rows_of(&runner, "batch-linear");
    let linear = rows_of(&runner, "linear");
    let (b2k, l2k) = (batch[1999].q_corrected_roll, linear[1999].q_corrected_roll);
    check(b2k <= l2k, format!("rolling q at 2k: batch {b2k:.3} > linear {l2k:.3}"))?;

    let post = |rows: &[StreamRow]| {
        mean(
            rows.iter()
                .filter(|r| (12_000..20_000).contains(&r.step) || r.step >= 22_000)
                .map(|r| r.q_corrected),
        )
    };
    let batch_post = post(batch);
    let mut parts = vec![format!("2k: batch {b2k:.3} ≤ linear {l2k:.3}"), format!("post batch {batch_post:.2}")];
    let mut losers = Vec::new();
    for name in ONLINE {
        let m = post(rows_of(&runner, name));
        parts.push(format!("{name} {m:.2}"));
        if name != "htree" && m >= batch_post {
            losers.push(name);
        }
    }
    check(losers.is_empty(), format!("not below batch after drift: {losers:?}; {}", parts.join(", ")))?;
    Ok(parts.join(", "))
}

fn soft_drift() -> Outcome {
    let runner = scaled_run(r#"{"mode": "soft", "d": 0.02}"#)?;
    let items = &runner.workload().items;
    let mut worst_sum: f64 = 0.0;
    for item in items {
        let p = item.probabilities.as_ref().ok_or("soft step without probabilities")?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    check(worst_sum <= 1e-12, format!("probabilities off by {worst_sum:.2e}"))?;

    let freqs: Vec<Vec<f64>> = items
        .chunks(1000)
        .map(|w| (0..3).map(|b| w.iter().filter(|i| i.bucket == b).count() as f64 / w.len() as f64).collect())
        .collect();
    let jump = freqs
        .windows(2)
        .flat_map(|w| (0..3).map(move |b| (w[1][b] - w[0][b]).abs()))
        .fold(0.0, f64::max);
    check(jump < 0.5, format!("frequency jump {jump:.3}"))?;

    let final_third = |rows: &[StreamRow]| mean(rows.iter().filter(|r| r.step >= 20_000).map(|r| r.q_corrected));
    let batch = final_third(rows_of(&runner, "batch-linear"));
    let resilient = final_third(rows_of(&runner, "bayes-drift"));
    check(batch > resilient, format!("final third: batch {batch:.3} ≤ bayes-drift {resilient:.3}"))?;
    Ok(format!(
        "|Σp − 1| ≤ {worst_sum:.1e}; max 1k-window jump {jump:.3}; final third batch {batch:.2} > bayes-drift {resilient:.3}"
    ))
}

fn determinism() -> Outcome {
    let json = r#"{"scenario": "three-bucket",
        "strategy": ["none", "global", "per-join", "model:linear", "model:fm", "model:mlp",
                     "model:htree", "model:bayes", "model:bayes-drift", "model:batch-linear"],
        "drift": {"mode": "soft"}, "n": 3000, "warm_up": 500, "seed": 11}"#;
    let run = |dir: &Path| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let config: RunConfig = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut runner = Runner::new(config).map_err(|e| e.to_string())?;
        runner.run().map_err(|e| e.to_string())?;
        let paths = runner.write_outputs(dir).map_err(|e| e.to_string())?;
        paths
            .iter()
            .map(|p| Ok((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).map_err(|e| e.to_string())?)))
            .collect()
    };
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (first, second) = (run(a.path())?, run(b.path())?);
    let csvs = first.keys().filter(|k| k.ends_with(".csv")).count();
    check(csvs == 10, format!("expected 10 CSV files, got {csvs}"))?;
    check(first == second, "outputs differ between identical runs")?;
    Ok(format!("{} files byte-identical across two runs", first.len()))
}

fn explain_goldens() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/explain");
    let mut parts = Vec::new();
    for (name, nodes) in [("scan", 1), ("join1", 3), ("join3", 7)] {
        let doc = std::fs::read_to_string(dir.join(format!("{name}.json"))).map_err(|e| e.to_string())?;
        let golden = std::fs::read_to_string(dir.join(format!("{name}.jsonl"))).map_err(|e| e.to_string())?;
        let got = explain_to_jsonl(&doc, name).map_err(|e| e.to_string())?;
        check(got == golden, format!("{name}: output differs from golden"))?;
        check(got.lines().count() == nodes, format!("{name}: {} records, expected {nodes}", got.lines().count()))?;
        parts.push(format!("{name} {nodes}"));
    }
    Ok(format!("goldens match ({})", parts.join(", ")))
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("Bayesian conjugacy", Duration::from_secs(1), bayes_conjugacy),
        ("drift-variant limits", Duration::from_secs(1), drift_limits),
        ("FM identity", Duration::from_secs(1), fm_identity),
        ("gradient checks", Duration::from_secs(10), gradient_checks),
        ("streaming mean", Duration::from_secs(10), streaming_mean),
        ("analytic correction factor", Duration::from_secs(30), analytic_factor),
        ("Hoeffding tree structure", Duration::from_secs(20), hoeffding_structure),
        ("drift crossover", Duration::from_secs(180), drift_crossover),
        ("soft drift", Duration::from_secs(180), soft_drift),
        ("determinism", Duration::from_secs(180), determinism),
        ("EXPLAIN goldens", Duration::from_secs(10), explain_goldens),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > *limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({elapsed:.2?}): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
