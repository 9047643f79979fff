//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ufls_core::dataset::Dataset;
use ufls_core::island::IslandSystem;
use ufls_core::linear::AffineForm;
use ufls_core::milp::verify_encoding;
use ufls_core::model_io::{ModelFile, TobitArtifact};
use ufls_core::pipeline;
use ufls_core::scenario::{outage_jobs, Labeler};
use ufls_core::tobit::{fit_tobit_from, olsen_gradient, olsen_log_likelihood, TobitModel};
use ufls_core::tree::logistic::{gradient as logistic_gradient, log_likelihood as logistic_log_likelihood};
use ufls_core::tree::{build_tree_from, evaluate, Leaf, TreeParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scratch(name: &str) -> PathBuf {
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&p);
    fs::create_dir_all(&p).unwrap();
    p
}

fn shipped_config() -> pipeline::PipelineConfig {
    pipeline::PipelineConfig::load(workspace_root().join("configs/pipeline.toml")).unwrap()
}

/// Runs the full pipeline through the CLI binary.
fn cli_run(out: &Path) -> (bool, Duration, String) {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_ufls"))
        .arg("--config")
        .arg(workspace_root().join("configs/pipeline.toml"))
        .arg("--out")
        .arg(out)
        .arg("run")
        .output()
        .expect("cannot start ufls");
    let text = String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr);
    (o.status.success(), start.elapsed(), text)
}

/// Zero cluster plus two linear regimes, uniform features on [0, 1]^4.
fn three_regimes(n: usize, noise: f64, seed: u64) -> (Vec<[f64; 4]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, noise).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r: [f64; 4] = rng.random();
        let v = if r[0] + 0.5 * r[1] < 1.0 {
            0.0
        } else if r[2] < r[3] {
            1.6 + 0.4 * r[2] + 0.3 * r[3] + eps.sample(&mut rng)
        } else {
            5.2 + 0.8 * r[0] + 0.5 * r[2] + eps.sample(&mut rng)
        };
        x.push(r);
        y.push(v);
    }
    (x, y)
}

fn relative_fd_error(f: impl Fn(&[f64]) -> f64, g: &[f64], theta: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..theta.len() {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let mut a = theta.to_vec();
        let mut b = theta.to_vec();
        a[j] += h;
        b[j] -= h;
        let fd = (f(&a) - f(&b)) / (2.0 * h);
        num += (fd - g[j]).powi(2);
        den += g[j].powi(2);
    }
    (num / den).sqrt()
}

fn c1_encoding_equivalence(run: &Path) -> Outcome {
    let train = Dataset::load(run.join("train.csv")).unwrap().features();
    let mut details = Vec::new();
    let mut ok = true;
    let start = Instant::now();
    for stem in ["tree", "tobit"] {
        let model = ModelFile::load(run.join(format!("{stem}.toml"))).unwrap();
        let lp = fs::read_to_string(run.join(format!("{stem}.lp"))).unwrap();
        let block = ufls_core::milp::parse_lp(&lp).unwrap().extract_block("o0_", 4).unwrap();
        let samples = pipeline::verification_samples(&model, &train, 1000, 0xACCE);
        let mut passed = 0;
        let mut worst = 0.0_f64;
        for x in &samples {
            let expected = model.predict(x);
            let rep = verify_encoding(&block, x, expected).unwrap();
            if let Ok(y) = rep.unique_output() {
                worst = worst.max((y - expected).abs());
                if (y - expected).abs() < 1e-6 {
                    passed += 1;
                }
            }
        }
        ok &= passed == 1000;
        details.push(format!("{stem} {passed}/1000 max_err {worst:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    outcome(ok, format!("{}, {secs:.1} s (limit 30 s)", details.join(", ")))
}

fn c2_counts() -> Outcome {
    let (x, y) = three_regimes(5000, 0.05, 11);
    let tree = build_tree_from(&x, &y, 4, &TreeParams::default(), 0).unwrap();
    let ts = ModelFile::Tree(tree.clone()).encode(0).unwrap().stats();
    let tobit = ModelFile::Tobit(TobitArtifact {
        feature_bounds: vec![(0.0, 1.0); 4],
        model: TobitModel {
            alpha: AffineForm::new(vec![-0.702, -0.027, -0.001, 1.382, -0.132]),
            sigma: 1.0,
            loglik: 0.0,
        },
    });
    let bs = tobit.encode(0).unwrap().stats();
    let shape = (tree.nodes.len(), tree.leaves.len());
    let tree_counts = (ts.n_constraints, ts.n_binary, ts.n_continuous);
    let tobit_counts = (bs.n_constraints, bs.n_binary, bs.n_continuous);
    outcome(
        shape == (2, 3) && tree_counts == (18, 3, 3) && tobit_counts == (12, 2, 2),
        format!("tree {shape:?} -> {tree_counts:?}, tobit -> {tobit_counts:?}"),
    )
}

fn c3_fixed_coefficients() -> Outcome {
    let leaf = Leaf {
        alpha: AffineForm::new(vec![0.006, 0.026, -0.002, 0.870, -0.176]),
        is_zero_leaf: false,
        m_lower: 0.0,
        m_upper: 0.0,
        train_mae: 0.0,
        n_train: 0,
        rank_deficient: false,
    };
    let tobit = TobitModel {
        alpha: AffineForm::new(vec![-0.702, -0.027, -0.001, 1.382, -0.132]),
        sigma: 1.0,
        loglik: 0.0,
    };
    let a = leaf.predict(&[10.0, 100.0, 5.0, 2.0]);
    let b = tobit.predict(&[10.0, 50.0, 0.5, 1.0]);
    let c = tobit.predict(&[10.0, 50.0, 5.0, 1.0]);
    let ok = (a - 4.064).abs() < 1e-9 && b == 0.0 && (c - 5.756).abs() < 1e-9;
    outcome(ok, format!("leaf L2 {a:.9}, tobit {b} and {c:.9}"))
}

fn c4_sfr_physics() -> Outcome {
    use ufls_core::sfr::{simulate_outage, OperatingPoint, SimConfig, UflsScheme};
    let start = Instant::now();
    let island = IslandSystem::bundled();
    let units = &island.units;
    let dispatch = |v: &[(&str, f64)]| v.iter().map(|(k, p)| (k.to_string(), *p)).collect();

    // zero disturbance: lose a unit dispatched at 0 MW
    let op = OperatingPoint::balanced(dispatch(&[("G3", 6.0), ("G4", 7.0), ("G5", 0.0)]), island.load_damping);
    let cfg = SimConfig {
        trajectory_stride: Some(1),
        ..island.simulation
    };
    let res = simulate_outage(&op, units, "G5", &island.ufls, &cfg).unwrap();
    let drift = res.trajectory.unwrap().iter().map(|(_, f)| (f - 50.0).abs()).fold(0.0, f64::max);

    // quasi-steady state without stages, headroom to spare
    let op = OperatingPoint::balanced(dispatch(&[("G3", 4.0), ("G4", 4.0), ("G5", 6.0), ("G1", 1.5)]), island.load_damping);
    let quiet = UflsScheme {
        stages: vec![],
        ..island.ufls.clone()
    };
    let res = simulate_outage(&op, units, "G1", &quiet, &island.simulation).unwrap();
    let k_mw_hz: f64 = units
        .iter()
        .filter(|u| ["G3", "G4", "G5"].contains(&u.id.as_str()))
        .map(|u| u.k_gov * u.rated)
        .sum::<f64>()
        / 50.0
        + island.load_damping * op.demand / 50.0;
    let expected = -1.5 / k_mw_hz;
    let qss_rel = ((res.f_qss - 50.0) - expected).abs() / expected.abs();

    // step halving on 50 outages spread over the scenario set
    let combos = pipeline::combinations(&island, &shipped_config().scenarios).unwrap();
    let jobs = outage_jobs(&combos);
    let stride = jobs.len() / 50;
    let half = SimConfig {
        dt: island.simulation.dt / 2.0,
        ..island.simulation
    };
    let mut worst = 0.0_f64;
    for i in 0..50 {
        let job = &jobs[i * stride];
        let c = &combos[job.combo_index];
        let op = c.operating_point(units, island.load_damping);
        let lost = &units[job.unit_index].id;
        let a = simulate_outage(&op, units, lost, &island.ufls, &island.simulation).unwrap();
        let b = simulate_outage(&op, units, lost, &island.ufls, &half).unwrap();
        worst = worst.max((a.ufls_total - b.ufls_total).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        drift < 1e-12 && qss_rel < 1e-3 && worst < 1e-3 && secs < 60.0,
        format!("drift {drift:.1e} Hz, qss rel err {qss_rel:.1e}, dt/2 max change {worst:.1e} MW, {secs:.1} s"),
    )
}

fn c5_learning_recovery() -> Outcome {
    let start = Instant::now();
    let noise = 0.05;
    let (x, y) = three_regimes(50_000, noise, 2024);
    let cut = 40_000;
    let tree = build_tree_from(&x[..cut], &y[..cut], 4, &TreeParams::default(), 0).unwrap();
    let report = evaluate(&tree, &x[cut..], &y[cut..]).unwrap();
    let zeros: Vec<usize> = (cut..x.len()).filter(|&i| y[i] == 0.0).collect();
    let exact = zeros.iter().filter(|&&i| tree.predict(&x[i]) == 0.0).count();
    let share = exact as f64 / zeros.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        report.mae < 2.0 * noise && share >= 0.99 && secs < 120.0,
        format!(
            "test MAE {:.4} MW (limit {:.2}), exact zeros {:.2}%, {} leaves, {secs:.1} s",
            report.mae,
            2.0 * noise,
            100.0 * share,
            tree.leaves.len()
        ),
    )
}

fn c6_tobit_recovery() -> Outcome {
    let start = Instant::now();
    let truth = [-0.1, 1.0, -0.5];
    let sigma = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps = Normal::new(0.0, sigma).unwrap();
    let mut x = Vec::with_capacity(100_000);
    let mut y = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        let r: [f64; 2] = rng.random();
        let latent = truth[0] + truth[1] * r[0] + truth[2] * r[1] + eps.sample(&mut rng);
        x.push(r);
        y.push(latent.max(0.0));
    }
    let censored = y.iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
    let fit = fit_tobit_from(&x, &y, 2).unwrap();
    let mut z_max = ((fit.model.sigma - sigma) / fit.sigma_se).abs();
    for (j, &t) in truth.iter().enumerate() {
        z_max = z_max.max(((fit.model.alpha.coefficients[j] - t) / fit.alpha_se[j]).abs());
    }

    let xs = &x[..2000];
    let ys = &y[..2000];
    let theta = [0.1, 1.5, -0.4, 1.7];
    let tobit_ll = |t: &[f64]| olsen_log_likelihood(xs, ys, &AffineForm::new(t[..3].to_vec()), t[3]);
    let g = olsen_gradient(xs, ys, &AffineForm::new(theta[..3].to_vec()), theta[3]);
    let tobit_err = relative_fd_error(tobit_ll, &g, &theta);

    let z: Vec<bool> = ys.iter().map(|&v| v > 0.3).collect();
    let beta = [-0.4, 2.0, -1.0];
    let logit_ll = |b: &[f64]| logistic_log_likelihood(xs, &z, &AffineForm::new(b.to_vec()));
    let g = logistic_gradient(xs, &z, &AffineForm::new(beta.to_vec()));
    let logit_err = relative_fd_error(logit_ll, &g, &beta);

    let secs = start.elapsed().as_secs_f64();
    outcome(
        z_max < 3.0 && tobit_err < 1e-4 && logit_err < 1e-4 && secs < 60.0,
        format!(
            "censored {:.1}%, max |z| {z_max:.2}, fd rel err tobit {tobit_err:.1e} logistic {logit_err:.1e}, {secs:.1} s",
            100.0 * censored
        ),
    )
}

fn c7_end_to_end(first: &Path, first_ok: bool, first_time: Duration) -> Outcome {
    let second = scratch("run_b");
    let (second_ok, _, log) = cli_run(&second);
    let mut differing = Vec::new();
    let mut names: Vec<String> = fs::read_dir(first)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in &names {
        if fs::read(first.join(name)).ok() != fs::read(second.join(name)).ok() {
            differing.push(name.clone());
        }
    }
    let rows = Dataset::load(first.join("dataset.csv")).map(|d| d.len()).unwrap_or(0);
    let (train, test) = (
        Dataset::load(first.join("train.csv")).map(|d| d.len()).unwrap_or(0),
        Dataset::load(first.join("test.csv")).map(|d| d.len()).unwrap_or(0),
    );
    let split_ok = rows > 0 && (test as f64 / rows as f64 - 0.2).abs() < 0.001 && train + test == rows;

    // labeling speedup, 1 vs 4 workers, on a fixed slice of outages
    let island = IslandSystem::bundled();
    let combos = pipeline::combinations(&island, &shipped_config().scenarios).unwrap();
    let jobs = outage_jobs(&combos);
    let jobs = &jobs[..4000];
    let labeler = Labeler {
        units: &island.units,
        scheme: &island.ufls,
        sim: &island.simulation,
        load_damping: island.load_damping,
    };
    let time = |w: usize| {
        let s = Instant::now();
        labeler.label_jobs(&combos, jobs, w).unwrap();
        s.elapsed().as_secs_f64()
    };
    let t1 = time(1);
    let t4 = time(4);
    let speedup = t1 / t4;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());

    let ok = first_ok
        && second_ok
        && differing.is_empty()
        && rows >= 50_000
        && split_ok
        && first_time.as_secs() < 15 * 60
        && speedup >= 3.0;
    if !second_ok {
        eprintln!("{log}");
    }
    outcome(
        ok,
        format!(
            "{rows} samples, split {train}/{test}, {} differing artifacts of {}, run {:.0} s, labeling speedup {speedup:.2}x at 4 workers ({cores} cores available)",
            differing.len(),
            names.len(),
            first_time.as_secs_f64()
        ),
    )
}

fn c8_structure(run: &Path) -> Outcome {
    let ModelFile::Tree(tree) = ModelFile::load(run.join("tree.toml")).unwrap() else {
        return outcome(false, "tree.toml is not a tree");
    };
    let test = Dataset::load(run.join("test.csv")).unwrap();
    let report = ufls_core::tree::evaluate_dataset(&tree, &test).unwrap();
    let root_zero_leaf = match tree.nodes.first().map(|n| n.child_neg) {
        Some(ufls_core::tree::NodeRef::Leaf(l)) => tree.leaves[l].is_zero_leaf,
        _ => false,
    };
    let root_acc = report.node_accuracy.first().copied().unwrap_or(0.0);
    let tobit = match ModelFile::load(run.join("tobit.toml")).unwrap() {
        ModelFile::Tobit(t) => t,
        _ => return outcome(false, "tobit.toml is not a tobit model"),
    };
    let tobit_mae = pipeline::evaluate_tobit(&tobit, &test).unwrap().mae;
    let train_acc = tree.nodes.first().map_or(0.0, |n| n.train_accuracy);
    outcome(
        root_zero_leaf && root_acc > 0.95 && tobit_mae > report.mae,
        format!(
            "root zero leaf {root_zero_leaf}, root accuracy {:.2}% test ({:.2}% train), MAE tobit {tobit_mae:.4} vs tree {:.4} MW",
            100.0 * root_acc,
            100.0 * train_acc,
            report.mae
        ),
    )
}

fn main() {
    let run = scratch("run_a");
    let (run_ok, run_time, log) = cli_run(&run);
    if !run_ok {
        eprintln!("{log}");
    }

    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("1 encoding equivalence", Box::new(|| c1_encoding_equivalence(&run))),
        ("2 encoding counts", Box::new(c2_counts)),
        ("3 fixed coefficients", Box::new(c3_fixed_coefficients)),
        ("4 SFR physics", Box::new(c4_sfr_physics)),
        ("5 tree recovery", Box::new(c5_learning_recovery)),
        ("6 Tobit recovery", Box::new(c6_tobit_recovery)),
        ("7 end-to-end run", Box::new(|| c7_end_to_end(&run, run_ok, run_time))),
        ("8 island structure", Box::new(|| c8_structure(&run))),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
