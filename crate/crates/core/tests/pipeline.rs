use std::fs;
use std::path::Path;

use ufls_core::dataset::Dataset;
use ufls_core::island::IslandSystem;
use ufls_core::model_io::ModelFile;
use ufls_core::pipeline::{self, PipelineConfig, PipelineError};
use ufls_core::sfr;

const SMALL: &str = r#"
seed = 7
workers = 2

[scenarios]
step = 1.0
gen_min = 16.0
gen_max = 36.0
max_unit_share = 0.45
keep_per_level = 60

[verify]
n_samples = 200
"#;

fn small() -> PipelineConfig {
    PipelineConfig::from_toml_str(SMALL).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_is_byte_for_byte_reproducible() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline::run(&cfg, a.path()).unwrap();
    let single = PipelineConfig { workers: 1, ..cfg.clone() };
    let rb = pipeline::run(&single, b.path()).unwrap();
    assert!(ra.tree_verify.ok() && ra.tobit_verify.ok());
    assert_eq!(ra.tree_verify.n_samples, 200);
    assert_eq!(ra.tree, rb.tree);
    // the worker count is recorded in the manifest, everything else must match
    let fa = files(a.path());
    let fb = files(b.path());
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na != "run_manifest.txt" {
            assert!(ba == bb, "{na} differs between worker counts");
        }
    }
    let manifest = fs::read_to_string(a.path().join("run_manifest.txt")).unwrap();
    for name in &ra.artifacts[..ra.artifacts.len() - 1] {
        assert!(manifest.contains(&format!("artifact {name} ")), "{name} missing from manifest");
    }
    assert!(manifest.contains("seed = 7"));
}

#[test]
fn labels_match_direct_simulation() {
    let island = IslandSystem::bundled();
    let cfg = small();
    let combos = pipeline::combinations(&island, &cfg.scenarios).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let data = pipeline::label_to_csv(&island, &combos, &dir.path().join("d.csv"), 2).unwrap();
    let reread = Dataset::load(dir.path().join("d.csv")).unwrap();
    assert_eq!(reread, data);
    let by_id: std::collections::HashMap<usize, _> = combos.iter().map(|c| (c.id, c)).collect();
    for row in data.rows().iter().step_by(data.len() / 40) {
        let c = by_id[&row.combo_id];
        let op = c.operating_point(&island.units, island.load_damping);
        let res = sfr::simulate_outage(&op, &island.units, &row.lost_unit, &island.ufls, &island.simulation).unwrap();
        assert_eq!(res.ufls_total, row.y);
        let i = island.units.iter().position(|u| u.id == row.lost_unit).unwrap();
        assert_eq!(c.dispatch[i], row.p);
    }
}

#[test]
fn interrupted_labeling_resumes_to_the_same_file() {
    let island = IslandSystem::bundled();
    let cfg = small();
    let combos = pipeline::combinations(&island, &cfg.scenarios).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    pipeline::label_to_csv(&island, &combos, &path, 1).unwrap();
    let full = fs::read_to_string(&path).unwrap();

    let keep: String = full.lines().take(101).map(|l| format!("{l}\n")).collect();
    fs::write(&path, keep).unwrap();
    pipeline::label_to_csv(&island, &combos, &path, 2).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), full);

    // a file from a different configuration is refused
    let other = PipelineConfig {
        scenarios: pipeline::ScenarioConfig {
            keep_per_level: 3,
            ..cfg.scenarios.clone()
        },
        ..cfg
    };
    let fewer = pipeline::combinations(&island, &other.scenarios).unwrap();
    let err = pipeline::label_to_csv(&island, &fewer, &path, 1).unwrap_err();
    assert!(matches!(err, PipelineError::ResumeMismatch(_)), "{err}");
}

#[test]
fn correlation_file_matches_direct_pearson() {
    let island = IslandSystem::bundled();
    let cfg = small();
    let combos = pipeline::combinations(&island, &cfg.scenarios).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let data = pipeline::label_to_csv(&island, &combos, &dir.path().join("d.csv"), 1).unwrap();
    pipeline::write_analysis(&data, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("correlation.csv")).unwrap();
    let cols: Vec<Vec<f64>> = (0..5)
        .map(|j| {
            data.rows()
                .iter()
                .map(|r| [r.h, r.k, r.p, r.r, r.y][j])
                .collect()
        })
        .collect();
    let pearson = |a: &[f64], b: &[f64]| {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    for (i, line) in text.lines().skip(1).enumerate() {
        let vals: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        for (j, v) in vals.iter().enumerate() {
            assert!((v - pearson(&cols[i], &cols[j])).abs() < 1e-6, "r[{i}][{j}]");
        }
    }
}

#[test]
fn saved_models_reload_and_encode_identically() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    pipeline::run(&cfg, dir.path()).unwrap();
    for stem in ["tree", "tobit"] {
        let model = ModelFile::load(dir.path().join(format!("{stem}.toml"))).unwrap();
        let (_, lp, manifest) = pipeline::encode_model(&model, 1).unwrap();
        assert_eq!(lp, fs::read_to_string(dir.path().join(format!("{stem}.lp"))).unwrap());
        assert_eq!(manifest, fs::read_to_string(dir.path().join(format!("{stem}_manifest.txt"))).unwrap());
    }
}

#[test]
fn config_errors_are_reported() {
    let bad = |text: &str| PipelineConfig::from_toml_str(text).unwrap_err().to_string();
    assert!(bad("sed = 1").contains("unknown field"));
    assert!(bad("[scenarios]\nstep = -1.0").contains("step"));
    assert!(bad("[scenarios]\ngen_min = 40.0").contains("window"));
    assert!(bad("[split]\ntest_fraction = 1.0").contains("test_fraction"));
    assert!(bad("[tree]\nmin_leaf_size = 0").contains("min_leaf_size"));
    assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, "island = \"missing.toml\"\n").unwrap();
    assert!(matches!(PipelineConfig::load(&cfg_path), Err(PipelineError::Config(_))));
    fs::write(dir.path().join("missing.toml"), include_str!("../data/island.toml")).unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.island_system().unwrap(), IslandSystem::bundled());
}

#[test]
fn empty_window_errors_cleanly() {
    let cfg = PipelineConfig::from_toml_str("[scenarios]\ngen_min = 100.0\ngen_max = 101.0").unwrap();
    let err = pipeline::combinations(&IslandSystem::bundled(), &cfg.scenarios).unwrap_err();
    assert!(matches!(err, PipelineError::Scenario(_)), "{err}");
}
