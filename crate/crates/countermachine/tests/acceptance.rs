//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Stdio};
use std::time::{Duration, Instant};

use common::*;
use countermachine::core::annealer::minimize;
use countermachine::core::training::{mse, premise_gradient, Sample};
use countermachine::core::{
    find_counterfactual, AnnealConfig, CounterfactualQuery, FeatureVector, LabelEncoding,
    MembershipFunction, Rule, TskModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

fn random_mfs(
    rng: &mut ChaCha8Rng,
    n: usize,
    mfs_per_input: std::ops::RangeInclusive<usize>,
) -> Vec<Vec<MembershipFunction>> {
    (0..n)
        .map(|_| {
            (0..rng.random_range(mfs_per_input.clone()))
                .map(|_| {
                    MembershipFunction::new(rng.random_range(0.0..1.0), rng.random_range(0.05..0.8))
                        .unwrap()
                })
                .collect()
        })
        .collect()
}

fn random_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Weighted average of rule outputs, recomputed from the raw parameters.
fn brute_force(model: &TskModel, x: &[f64]) -> f64 {
    let mfs = model.membership_functions();
    let (mut num, mut den) = (0.0, 0.0);
    for rule in model.rules() {
        let mut w = 1.0;
        for (i, &k) in rule.mf_indices().iter().enumerate() {
            let mf = &mfs[i][k];
            let d = x[i] - mf.center();
            w *= (-(d * d) / (2.0 * mf.width() * mf.width())).exp();
        }
        let a = rule.coeffs();
        let f = a[0] + x.iter().zip(&a[1..]).map(|(xi, ai)| xi * ai).sum::<f64>();
        num += w * f;
        den += w;
    }
    num / den.max(1e-12)
}

fn inference_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let mfs = random_mfs(&mut rng, n, 1..=3);
        let rules = (0..rng.random_range(1..=8))
            .map(|_| {
                let idx = mfs.iter().map(|l| rng.random_range(0..l.len())).collect();
                Rule::new(idx, random_coeffs(&mut rng, n))
            })
            .collect();
        let model = TskModel::new(names(n), mfs, rules, LabelEncoding::default()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            let y = model.evaluate(&x).unwrap().y;
            worst = worst.max((y - brute_force(&model, &x)).abs());
        }
    }
    let detail = format!("100 models x 20 inputs, max |diff| = {worst:.2e} (tol 1e-9)");
    if worst <= 1e-9 { Ok(detail) } else { Err(detail) }
}

fn with_mf(model: &TskModel, i: usize, k: usize, center: f64, width: f64) -> TskModel {
    let mut mfs = model.membership_functions().to_vec();
    mfs[i][k] = MembershipFunction::new(center, width).unwrap();
    TskModel::new(
        model.feature_names().to_vec(),
        mfs,
        model.rules().to_vec(),
        *model.label_encoding(),
    )
    .unwrap()
}

fn gradient_check() -> Outcome {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        // A lone membership function cancels out of the normalized output, so
        // its partials are identically zero; use at least two per input.
        let mfs = random_mfs(&mut rng, n, 2..=3);
        // Full grid so every membership function influences the loss.
        let mut tuples: Vec<Vec<usize>> = vec![vec![]];
        for list in &mfs {
            tuples = tuples
                .into_iter()
                .flat_map(|t| (0..list.len()).map(move |k| [t.clone(), vec![k]].concat()))
                .collect();
        }
        let rules = tuples
            .into_iter()
            .map(|idx| Rule::new(idx, random_coeffs(&mut rng, n)))
            .collect();
        let model = TskModel::new(names(n), mfs, rules, LabelEncoding::default()).unwrap();
        let samples: Vec<Sample> = (0..30)
            .map(|_| Sample {
                x: (0..n).map(|_| rng.random_range(0.0..=1.0)).collect(),
                target: f64::from(rng.random_range(0..2u8)),
            })
            .collect();
        let grad = premise_gradient(&model, &samples);
        for (i, list) in model.membership_functions().iter().enumerate() {
            for (k, mf) in list.iter().enumerate() {
                let (c, w) = (mf.center(), mf.width());
                let fd_c = (mse(&with_mf(&model, i, k, c + H, w), &samples)
                    - mse(&with_mf(&model, i, k, c - H, w), &samples))
                    / (2.0 * H);
                let fd_w = (mse(&with_mf(&model, i, k, c, w + H), &samples)
                    - mse(&with_mf(&model, i, k, c, w - H), &samples))
                    / (2.0 * H);
                for (a, f) in [(grad[i][k].0, fd_c), (grad[i][k].1, fd_w)] {
                    let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-8);
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    let detail = format!("20 models, {checked} partials, max relative error = {worst:.2e} (tol 1e-4)");
    if worst < 1e-4 { Ok(detail) } else { Err(detail) }
}

fn annealing() -> Outcome {
    let bowl = |x: &[f64]| x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>();
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..=1.0)).collect();
        let cfg = AnnealConfig {
            seed,
            max_evaluations: 50_000,
            ..AnnealConfig::default()
        };
        let out = minimize(bowl, &x0, &[true; 7], &cfg).map_err(|e| e.to_string())?;
        if out.error_best < 1e-2 && out.evaluations <= 50_000 {
            hits += 1;
        }
    }
    // The fixture dips below zero, which would trip the target_error stop
    // at the first nonpositive point. Shifting by 0.05 keeps the argmin and
    // keeps the objective above the stop threshold everywhere.
    let bumpy = |x: &[f64]| {
        (x[0] - 0.25).powi(2) + (x[1] - 0.75).powi(2) + 0.05 * (20.0 * x[0]).sin() + 0.05
    };
    // Minimum of the 1001 x 1001 grid on [0,1]^2, computed offline.
    let grid_opt = [0.237, 0.75];
    // Start in the basin of the local minimum near x1 = 0.52.
    let cfg = AnnealConfig {
        seed: 7,
        ..AnnealConfig::default()
    };
    let out = minimize(bumpy, &[0.55, 0.5], &[true; 2], &cfg).map_err(|e| e.to_string())?;
    let dist = (out.x_best[0] - grid_opt[0])
        .abs()
        .max((out.x_best[1] - grid_opt[1]).abs());
    let detail = format!(
        "bowl {hits}/100 runs < 1e-2 (need >= 95); nonconvex x_best = ({:.4}, {:.4}), inf-dist {dist:.4} to grid optimum (tol 0.02)",
        out.x_best[0], out.x_best[1]
    );
    if hits >= 95 && dist <= 0.02 { Ok(detail) } else { Err(detail) }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok_stdout(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = run(args);
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn json(bytes: &[u8]) -> Result<Value, String> {
    serde_json::from_slice(bytes).map_err(|e| e.to_string())
}

fn training(dir: &Path) -> Outcome {
    let data = dir.join("dyads.csv");
    let model = dir.join("model.json");
    ok_stdout(&["gen", "--rows", "2000", "--seed", "7", "--out", p(&data)])?;
    let start = Instant::now();
    let report = json(&ok_stdout(&[
        "train", "--data", p(&data), "--out", p(&model), "--seed", "7",
        "--train-per-class", "500", "--test-per-class", "392",
    ])?)?;
    let secs = start.elapsed().as_secs_f64();
    let acc = report["test_acc"].as_f64().ok_or("report lacks test_acc")?;
    let detail = format!("2000 rows, 500/500 train, 392/392 test: test_acc = {acc:.4} (need >= 0.90), {secs:.1} s (limit 60)");
    if acc >= 0.90 && secs < 60.0 { Ok(detail) } else { Err(detail) }
}

fn scenario(dir: &Path) -> Outcome {
    let model_path = dir.join("model.json");
    let model = countermachine::model_file::load(&model_path).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let y0 = model.evaluate(&OBSERVED_DYAD).map_err(|e| e.to_string())?.y;
    let factual_class = model.label_encoding().classify(y0);
    let r = json(&ok_stdout(&[
        "cf", "--model", p(&model_path), "--features", OBSERVED_DYAD_ARG, "--target", "peace",
        "--free", "distance,allies,capability", "--seed", "7",
    ])?)?;
    let secs = start.elapsed().as_secs_f64();
    let x: Vec<f64> = serde_json::from_value(r["antecedent"].clone()).map_err(|e| e.to_string())?;
    let error = r["error"].as_f64().ok_or("no error field")?;
    let locked_equal = [1, 2, 4, 5]
        .iter()
        .all(|&i| x[i].to_bits() == OBSERVED_DYAD[i].to_bits());
    let changed: Vec<&str> = r["deltas"]
        .as_array()
        .ok_or("no deltas")?
        .iter()
        .filter(|d| d["direction"] != "unchanged")
        .filter_map(|d| d["name"].as_str())
        .collect();
    let pass = factual_class == countermachine::core::Consequent::War
        && r["success"] == true
        && r["achieved_class"] == "peace"
        && error <= y0 * y0
        && locked_equal
        && changed == ["distance", "allies", "capability"]
        && secs < 10.0;
    let detail = format!(
        "factual y = {y0:.4} ({factual_class}); counterfactual y = {:.4} ({}), success = {}, error {error:.4} <= {:.4}, locks bit-equal = {locked_equal}, changed = {changed:?}, {secs:.2} s (limit 10)",
        r["achieved_y"].as_f64().unwrap_or(f64::NAN),
        r["achieved_class"].as_str().unwrap_or("?"),
        r["success"],
        y0 * y0,
    );
    if pass { Ok(detail) } else { Err(detail) }
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_server(model: &Path) -> Result<Server, String> {
    let mut child = bin()
        .args(["serve", "--model", p(model), "--port", "0", "--seed", "7"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).map_err(|e| e.to_string())?;
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .ok_or_else(|| format!("unexpected server banner: {line:?}"))?
        .to_owned();
    Ok(Server(child, addr))
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> Result<String, String> {
    let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(Duration::from_secs(30))).ok();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .map_err(|e| e.to_string())?;
    let mut resp = String::new();
    s.read_to_string(&mut resp).map_err(|e| e.to_string())?;
    let (head, body) = resp.split_once("\r\n\r\n").ok_or("malformed response")?;
    Ok(format!("{}\n{body}", head.lines().next().unwrap_or("")))
}

fn serve_transcript(model: &Path) -> Result<(Vec<String>, Vec<u8>), String> {
    let mut server = spawn_server(model)?;
    let addr = server.1.clone();
    let cf = format!(
        r#"{{"factual":{OBSERVED_DYAD:?},"target":"peace","free":["distance","allies","capability"]}}"#
    );
    let transcript = vec![
        http(&addr, "GET", "/model", "")?,
        http(&addr, "POST", "/evaluate", &format!(r#"{{"features":{OBSERVED_DYAD:?}}}"#))?,
        http(&addr, "POST", "/counterfactual", &cf)?,
    ];
    let _ = server.0.kill();
    let mut stdout = Vec::new();
    server.0.stdout.take().unwrap().read_to_end(&mut stdout).map_err(|e| e.to_string())?;
    Ok((transcript, stdout))
}

fn determinism(dir: &Path) -> Outcome {
    let model = dir.join("model.json");
    let data = dir.join("dyads.csv");
    let runs = |tag: &str| -> Result<Vec<Vec<u8>>, String> {
        let out_csv = dir.join(format!("gen-{tag}.csv"));
        let out_model = dir.join(format!("train-{tag}.json"));
        Ok(vec![
            ok_stdout(&["gen", "--rows", "500", "--seed", "7", "--out", p(&out_csv)])?,
            std::fs::read(&out_csv).map_err(|e| e.to_string())?,
            ok_stdout(&[
                "train", "--data", p(&data), "--out", p(&out_model), "--seed", "7", "--epochs", "2",
            ])?,
            std::fs::read(&out_model).map_err(|e| e.to_string())?,
            ok_stdout(&["eval", "--model", p(&model), "--features", OBSERVED_DYAD_ARG, "--seed", "7"])?,
            ok_stdout(&[
                "cf", "--model", p(&model), "--features", OBSERVED_DYAD_ARG, "--target", "peace",
                "--seed", "7",
            ])?,
        ])
    };
    let (a, b) = (runs("a")?, runs("b")?);
    let labels = ["gen stdout", "gen file", "train stdout", "train model file", "eval stdout", "cf stdout"];
    let mut diffs: Vec<&str> = labels
        .iter()
        .zip(a.iter().zip(&b))
        .filter(|(_, (x, y))| x != y)
        .map(|(l, _)| *l)
        .collect();
    let (ta, sa) = serve_transcript(&model)?;
    let (tb, sb) = serve_transcript(&model)?;
    if ta != tb {
        diffs.push("serve responses");
    }
    if sa != sb {
        diffs.push("serve stdout");
    }
    if !ta.iter().all(|r| r.starts_with("HTTP/1.1 200")) {
        return Err(format!("serve returned non-200: {:?}", ta.iter().map(|r| r.lines().next()).collect::<Vec<_>>()));
    }
    let detail = format!("gen, train, eval, cf, serve with --seed 7 twice; differing outputs: {diffs:?}");
    if diffs.is_empty() { Ok(detail) } else { Err(detail) }
}

fn lock_preservation(dir: &Path) -> Outcome {
    let model = countermachine::model_file::load(&dir.join("model.json")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut violations = 0;
    for q in 0..500u64 {
        let factual: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..=1.0)).collect();
        let mut query = CounterfactualQuery::new(
            FeatureVector::new(factual.clone()).unwrap(),
            rng.random_range(0.0..=1.0),
        );
        query.free_mask = (0..7).map(|_| rng.random_bool(0.5)).collect();
        query.anneal = AnnealConfig {
            seed: q,
            max_evaluations: 2_000,
            restarts: 2,
            ..AnnealConfig::default()
        };
        let r = find_counterfactual(&model, &query).map_err(|e| e.to_string())?;
        let ok = (0..7).all(|i| query.free_mask[i] || r.antecedent[i].to_bits() == factual[i].to_bits())
            && r.antecedent.iter().all(|v| (0.0..=1.0).contains(v));
        if !ok {
            violations += 1;
        }
    }
    let detail = format!("500 random queries on the trained model, {violations} lock violations");
    if violations == 0 { Ok(detail) } else { Err(detail) }
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    let criteria: Vec<(&str, f64, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("inference oracle equivalence", 5.0, Box::new(inference_oracle)),
        ("premise gradient check", 10.0, Box::new(gradient_check)),
        ("training accuracy", f64::INFINITY, Box::new(|| training(dir))),
        ("annealing convergence", 30.0, Box::new(annealing)),
        ("observed-dyad counterfactual", f64::INFINITY, Box::new(|| scenario(dir))),
        ("determinism suite", f64::INFINITY, Box::new(|| determinism(dir))),
        ("lock preservation", f64::INFINITY, Box::new(|| lock_preservation(dir))),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(d) if secs < limit => (true, d),
            Ok(d) => (false, format!("{d}; took {secs:.2} s, limit {limit} s")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {name}: {detail} [{secs:.2} s]", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
