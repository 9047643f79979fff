//! Run configuration and the stages of a full run: enumerate, label,
//! analyze, split, train, encode and verify.
//!
//! Defaults:
//!
//! ```toml
//! island = "island.toml"       # optional; the bundled island when absent
//! seed = 0
//! workers = 0                  # 0 = one per core
//!
//! [scenarios]
//! step = 0.5                   # MW
//! gen_min = 16.0               # MW
//! gen_max = 36.0               # MW
//! max_unit_share = 0.45
//! keep_per_level = 20
//!
//! [split]
//! test_fraction = 0.2
//!
//! [tree]
//! max_depth = 2
//! min_leaf_size = 30
//! c_step = 0.1
//!
//! [encode]
//! n_observations = 1
//!
//! [verify]
//! n_samples = 1000
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, DatasetError};
use crate::island::{IslandError, IslandSystem};
use crate::milp::{self, verify_encoding, AssignmentOutcome, MilpBlock, MilpError};
use crate::model_io::{ModelFile, ModelIoError, TobitArtifact};
use crate::scenario::{
    enumerate_combinations, outage_jobs, rank_and_prune, GenerationCombination, Labeler, OutageJob, ScenarioError,
    ScenarioGrid,
};
use crate::tobit::{fit_tobit, TobitError, TobitFit};
use crate::tree::{build_tree, evaluate_dataset, RegressionTree, TreeError, TreeParams, TreeReport};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Island(#[from] IslandError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Tobit(#[from] TobitError),
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("existing dataset {0} does not match this configuration; remove it to relabel")]
    ResumeMismatch(String),
    #[error("verification failed for {failed} of {total} samples")]
    VerificationFailed { failed: usize, total: usize },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub step: f64,
    pub gen_min: f64,
    pub gen_max: f64,
    pub max_unit_share: f64,
    pub keep_per_level: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            gen_min: 16.0,
            gen_max: 36.0,
            max_unit_share: 0.45,
            keep_per_level: 20,
        }
    }
}

impl ScenarioConfig {
    pub fn grid(&self) -> ScenarioGrid {
        ScenarioGrid {
            step: self.step,
            gen_min: self.gen_min,
            gen_max: self.gen_max,
            max_unit_share: self.max_unit_share,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub n_observations: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self { n_observations: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub n_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { n_samples: 1000 }
    }
}

/// Every section is optional; missing keys take the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub island: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub scenarios: ScenarioConfig,
    pub split: SplitConfig,
    pub tree: TreeParams,
    pub encode: EncodeConfig,
    pub verify: VerifyConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative island path is resolved
    /// against the config file's directory and must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(format!("cannot read config {}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(island) = &cfg.island {
            let resolved = if island.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(island)
            } else {
                island.clone()
            };
            if !resolved.is_file() {
                return Err(PipelineError::Config(format!("island file {} does not exist", resolved.display())));
            }
            cfg.island = Some(resolved);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let s = &self.scenarios;
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(s.step > 0.0) {
            return bad(format!("scenarios.step must be positive, got {}", s.step));
        }
        if !(s.gen_min >= 0.0 && s.gen_min <= s.gen_max) {
            return bad(format!("scenarios window [{}, {}] is invalid", s.gen_min, s.gen_max));
        }
        if !(s.max_unit_share > 0.0 && s.max_unit_share <= 1.0) {
            return bad(format!("scenarios.max_unit_share must be in (0, 1], got {}", s.max_unit_share));
        }
        if s.keep_per_level == 0 {
            return bad("scenarios.keep_per_level must be at least 1".into());
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return bad(format!("split.test_fraction must be in (0, 1), got {}", self.split.test_fraction));
        }
        if self.encode.n_observations == 0 {
            return bad("encode.n_observations must be at least 1".into());
        }
        self.tree.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn island_system(&self) -> Result<IslandSystem, PipelineError> {
        Ok(match &self.island {
            Some(p) => IslandSystem::load(p)?,
            None => IslandSystem::bundled(),
        })
    }

    /// Seeds for the split and the verification samples, drawn in that order
    /// from one generator seeded with `seed`.
    pub fn stage_seeds(&self) -> StageSeeds {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        StageSeeds {
            split: rng.random(),
            verify: rng.random(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub split: u64,
    pub verify: u64,
}

pub fn combinations(island: &IslandSystem, cfg: &ScenarioConfig) -> Result<Vec<GenerationCombination>, PipelineError> {
    let all = enumerate_combinations(&island.units, &cfg.grid())?;
    let kept = rank_and_prune(&all, cfg.keep_per_level);
    log::info!("{} combinations in the window, {} kept", all.len(), kept.len());
    Ok(kept)
}

pub fn write_combinations_csv<W: Write>(
    island: &IslandSystem,
    combos: &[GenerationCombination],
    mut out: W,
) -> std::io::Result<()> {
    let ids: Vec<&str> = island.units.iter().map(|u| u.id.as_str()).collect();
    writeln!(out, "id,total,cost,{}", ids.join(","))?;
    for c in combos {
        let d: Vec<String> = c.dispatch.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{},{}", c.id, c.total, c.cost, d.join(","))?;
    }
    Ok(())
}

/// Labels every outage into `path`, appending in chunks so an interrupted
/// run can resume. Existing rows must match the start of the job list.
pub fn label_to_csv(
    island: &IslandSystem,
    combos: &[GenerationCombination],
    path: &Path,
    workers: usize,
) -> Result<Dataset, PipelineError> {
    const CHUNK: usize = 4096;
    let jobs = outage_jobs(combos);
    let done = if path.exists() {
        let existing = Dataset::load(path)?;
        let n = existing.len();
        let matches = n <= jobs.len()
            && existing.rows().iter().zip(&jobs).all(|(row, job)| {
                row.combo_id == combos[job.combo_index].id && row.lost_unit == island.units[job.unit_index].id
            });
        if !matches {
            return Err(PipelineError::ResumeMismatch(path.display().to_string()));
        }
        if n > 0 {
            log::info!("resuming: {n} of {} outages already labeled", jobs.len());
        }
        existing.into_rows()
    } else {
        Dataset::new(Vec::new()).save(path)?;
        Vec::new()
    };

    let labeler = Labeler {
        units: &island.units,
        scheme: &island.ufls,
        sim: &island.simulation,
        load_damping: island.load_damping,
    };
    let mut rows = done;
    let file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_err(format!("cannot append to {}", path.display())))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    let todo: &[OutageJob] = &jobs[rows.len()..];
    for chunk in todo.chunks(CHUNK) {
        let labeled = labeler.label_jobs(combos, chunk, workers)?;
        for s in &labeled {
            wtr.serialize(s).map_err(DatasetError::from)?;
        }
        wtr.flush().map_err(io_err(format!("cannot write {}", path.display())))?;
        rows.extend(labeled);
        log::info!("labeled {} / {} outages", rows.len(), jobs.len());
    }
    Ok(Dataset::new(rows))
}

pub fn write_analysis(data: &Dataset, dir: &Path) -> Result<(), PipelineError> {
    let m = data.correlation_matrix()?;
    let f = create(&dir.join("correlation.csv"))?;
    dataset::write_correlation_csv(&m, f).map_err(io_err("cannot write correlation.csv"))?;
    let mut f = create(&dir.join("summary.csv"))?;
    let w = |e| PipelineError::Io {
        context: "cannot write summary.csv".into(),
        source: e,
    };
    writeln!(f, "column,min,max,mean,std,zero_share").map_err(w)?;
    for s in data.summary() {
        writeln!(f, "{},{},{},{},{},{}", s.column, s.min, s.max, s.mean, s.std, s.zero_share).map_err(w)?;
    }
    f.flush().map_err(w)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(format!("cannot create {}", path.display())))
}

pub fn train_tree(train: &Dataset, params: &TreeParams, workers: usize) -> Result<RegressionTree, PipelineError> {
    let tree = build_tree(train, params, workers)?;
    log::info!("tree: {} nodes, {} leaves", tree.nodes.len(), tree.leaves.len());
    Ok(tree)
}

pub fn train_tobit(train: &Dataset) -> Result<(TobitArtifact, TobitFit), PipelineError> {
    let fit = fit_tobit(train)?;
    let artifact = TobitArtifact {
        feature_bounds: train.feature_bounds().to_vec(),
        model: fit.model.clone(),
    };
    Ok((artifact, fit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TobitReport {
    pub mae: f64,
    pub predictions: Vec<f64>,
    pub observed: Vec<f64>,
}

pub fn evaluate_tobit(model: &TobitArtifact, test: &Dataset) -> Result<TobitReport, PipelineError> {
    let predictions: Vec<f64> = test.features().iter().map(|x| model.model.predict(x)).collect();
    let observed = test.labels();
    Ok(TobitReport {
        mae: dataset::mae(&predictions, &observed)?,
        predictions,
        observed,
    })
}

pub fn write_tree_report(report: &TreeReport, dir: &Path, stem: &str) -> Result<(), PipelineError> {
    let ctx = |f: &str| format!("cannot write {f}");
    let name = format!("{stem}_report.txt");
    let mut f = create(&dir.join(&name))?;
    report.write_summary(&mut f).and_then(|_| f.flush()).map_err(io_err(ctx(&name)))?;
    let name = format!("{stem}_residuals.csv");
    let mut f = create(&dir.join(&name))?;
    report.write_residuals_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(ctx(&name)))?;
    let name = format!("{stem}_confusion.csv");
    let mut f = create(&dir.join(&name))?;
    report.confusion.write_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(ctx(&name)))?;
    Ok(())
}

pub fn write_tobit_report(fit: &TobitFit, report: &TobitReport, dir: &Path, stem: &str) -> Result<(), PipelineError> {
    let name = format!("{stem}_report.txt");
    let mut f = create(&dir.join(&name))?;
    let mut body = format!("rows {}\nmae_mw {:.6}\n", report.observed.len(), report.mae);
    for (j, (a, se)) in fit.model.alpha.coefficients.iter().zip(&fit.alpha_se).enumerate() {
        body.push_str(&format!("alpha{j} {a} se {se}\n"));
    }
    body.push_str(&format!(
        "sigma {} se {}\nloglik {}\ncensored_train_rows {}\nconverged {}\n",
        fit.model.sigma, fit.sigma_se, fit.model.loglik, fit.n_censored, fit.converged
    ));
    f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(io_err(format!("cannot write {name}")))?;
    let name = format!("{stem}_residuals.csv");
    let mut f = create(&dir.join(&name))?;
    let mut body = String::from("observed,predicted,residual\n");
    for (o, p) in report.observed.iter().zip(&report.predictions) {
        body.push_str(&format!("{o},{p},{}\n", p - o));
    }
    f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(io_err(format!("cannot write {name}")))?;
    Ok(())
}

/// Blocks for `n` observations, the LP text and the manifest text.
pub fn encode_model(model: &ModelFile, n: usize) -> Result<(Vec<MilpBlock>, String, String), PipelineError> {
    let blocks = (0..n).map(|i| model.encode(i)).collect::<Result<Vec<_>, _>>()?;
    let mut lp = Vec::new();
    milp::emit_lp(&blocks, &mut lp).map_err(io_err("cannot render LP"))?;
    let mut manifest = Vec::new();
    milp::write_manifest(&blocks, &mut manifest).map_err(io_err("cannot render manifest"))?;
    Ok((
        blocks,
        String::from_utf8(lp).expect("LP text is ASCII"),
        String::from_utf8(manifest).expect("manifest is ASCII"),
    ))
}

/// Feature vectors for the equivalence check. Tree samples are random convex
/// combinations of two training rows from the same leaf, so they respect the
/// stored per-node and per-leaf bounds; Tobit samples are uniform over the
/// training feature box.
pub fn verification_samples(model: &ModelFile, train: &[[f64; 4]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        ModelFile::Tree(tree) => {
            let mut by_leaf: Vec<Vec<usize>> = vec![Vec::new(); tree.leaves.len()];
            for (i, x) in train.iter().enumerate() {
                by_leaf[tree.leaf_of(x)].push(i);
            }
            (0..n)
                .map(|_| {
                    let i = rng.random_range(0..train.len());
                    let group = &by_leaf[tree.leaf_of(&train[i])];
                    let j = group[rng.random_range(0..group.len())];
                    let t: f64 = rng.random();
                    train[i].iter().zip(&train[j]).map(|(a, b)| a + t * (b - a)).collect()
                })
                .collect()
        }
        ModelFile::Tobit(t) => (0..n)
            .map(|_| t.feature_bounds.iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub n_samples: usize,
    pub passed: usize,
    pub max_abs_error: f64,
    /// (sample index, reason) for each failure.
    pub failures: Vec<(usize, String)>,
}

impl VerifySummary {
    pub fn ok(&self) -> bool {
        self.passed == self.n_samples
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "samples {}", self.n_samples)?;
        writeln!(out, "passed {}", self.passed)?;
        writeln!(out, "max_abs_error_mw {:e}", self.max_abs_error)?;
        for (i, why) in &self.failures {
            writeln!(out, "fail sample {i}: {why}")?;
        }
        Ok(())
    }
}

/// Checks `block` against direct predictions on every sample, in parallel.
pub fn verify_block(model: &ModelFile, block: &MilpBlock, samples: &[Vec<f64>], workers: usize) -> Result<VerifySummary, PipelineError> {
    let results = crate::par::try_map(samples, workers, |x| {
        let expected = model.predict(x);
        verify_encoding(block, x, expected).map(|r| (expected, r))
    })?;
    let mut passed = 0;
    let mut max_abs_error = 0.0_f64;
    let mut failures = Vec::new();
    for (i, (expected, rep)) in results.iter().enumerate() {
        match rep.unique_output() {
            Ok(y) if (y - expected).abs() < milp::OUTPUT_TOL => {
                passed += 1;
                max_abs_error = max_abs_error.max((y - expected).abs());
            }
            Ok(y) => failures.push((i, format!("milp output {y} differs from prediction {expected}"))),
            Err(e) => {
                let excluded: Vec<String> = rep
                    .assignments
                    .iter()
                    .map(|(bits, o)| {
                        let b: String = bits.iter().map(|v| v.to_string()).collect();
                        match o {
                            AssignmentOutcome::Excluded { constraint } => format!("{b}:{constraint}"),
                            AssignmentOutcome::Feasible { yhat } => format!("{b}:feasible({yhat})"),
                            AssignmentOutcome::Undetermined { variable } => format!("{b}:free {variable}"),
                        }
                    })
                    .collect();
                failures.push((i, format!("{e} [{}]", excluded.join(" "))));
            }
        }
    }
    Ok(VerifySummary {
        n_samples: samples.len(),
        passed,
        max_abs_error,
        failures,
    })
}

/// Key facts of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub n_samples: usize,
    pub tree: RegressionTree,
    pub tree_report: TreeReport,
    pub tobit: TobitArtifact,
    pub tobit_mae: f64,
    pub tree_verify: VerifySummary,
    pub tobit_verify: VerifySummary,
    /// Files written, relative to the run directory, in write order.
    pub artifacts: Vec<String>,
}

/// The whole pipeline into `out`. All artifacts are deterministic functions
/// of the config; the labeled dataset is reused if already present.
pub fn run(cfg: &PipelineConfig, out: &Path) -> Result<RunOutcome, PipelineError> {
    fs::create_dir_all(out).map_err(io_err(format!("cannot create {}", out.display())))?;
    let island = cfg.island_system()?;
    let seeds = cfg.stage_seeds();
    let mut artifacts = Vec::new();
    let mut note = |name: &str| artifacts.push(name.to_string());

    let combos = combinations(&island, &cfg.scenarios)?;
    let mut f = create(&out.join("combinations.csv"))?;
    write_combinations_csv(&island, &combos, &mut f)
        .and_then(|_| f.flush())
        .map_err(io_err("cannot write combinations.csv"))?;
    note("combinations.csv");

    let data = label_to_csv(&island, &combos, &out.join("dataset.csv"), cfg.workers)?;
    note("dataset.csv");
    write_analysis(&data, out)?;
    note("correlation.csv");
    note("summary.csv");

    let (train, test) = data.split(cfg.split.test_fraction, seeds.split)?;
    train.save(out.join("train.csv"))?;
    test.save(out.join("test.csv"))?;
    note("train.csv");
    note("test.csv");

    let tree = train_tree(&train, &cfg.tree, cfg.workers)?;
    let tree_file = ModelFile::Tree(tree.clone());
    tree_file.save(out.join("tree.toml"))?;
    note("tree.toml");
    let tree_report = evaluate_dataset(&tree, &test)?;
    write_tree_report(&tree_report, out, "tree")?;
    note("tree_report.txt");
    note("tree_residuals.csv");
    note("tree_confusion.csv");

    let (tobit, fit) = train_tobit(&train)?;
    let tobit_file = ModelFile::Tobit(tobit.clone());
    tobit_file.save(out.join("tobit.toml"))?;
    note("tobit.toml");
    let tobit_report = evaluate_tobit(&tobit, &test)?;
    write_tobit_report(&fit, &tobit_report, out, "tobit")?;
    note("tobit_report.txt");
    note("tobit_residuals.csv");

    let train_x = train.features();
    let mut summaries = Vec::new();
    for (stem, model) in [("tree", &tree_file), ("tobit", &tobit_file)] {
        let (blocks, lp, manifest) = encode_model(model, cfg.encode.n_observations)?;
        let lp_name = format!("{stem}.lp");
        fs::write(out.join(&lp_name), &lp).map_err(io_err(format!("cannot write {lp_name}")))?;
        let man_name = format!("{stem}_manifest.txt");
        fs::write(out.join(&man_name), &manifest).map_err(io_err(format!("cannot write {man_name}")))?;
        note(&lp_name);
        note(&man_name);

        // verify what was written, not the in-memory block
        let parsed = milp::parse_lp(&lp)?.extract_block(&blocks[0].prefix, model.n_features())?;
        let samples = verification_samples(model, &train_x, cfg.verify.n_samples, seeds.verify);
        let summary = verify_block(model, &parsed, &samples, cfg.workers)?;
        let name = format!("{stem}_verify.txt");
        let mut f = create(&out.join(&name))?;
        summary.write(&mut f).and_then(|_| f.flush()).map_err(io_err(format!("cannot write {name}")))?;
        note(&name);
        log::info!("{stem}: {} / {} samples verified", summary.passed, summary.n_samples);
        summaries.push(summary);
    }
    let tobit_verify = summaries.pop().expect("two models verified");
    let tree_verify = summaries.pop().expect("two models verified");

    write_run_manifest(cfg, &seeds, out, &artifacts, &data, &tree_report, tobit_report.mae)?;
    artifacts.push("run_manifest.txt".into());

    Ok(RunOutcome {
        n_samples: data.len(),
        tree,
        tree_report,
        tobit,
        tobit_mae: tobit_report.mae,
        tree_verify,
        tobit_verify,
        artifacts,
    })
}

fn write_run_manifest(
    cfg: &PipelineConfig,
    seeds: &StageSeeds,
    out: &Path,
    artifacts: &[String],
    data: &Dataset,
    tree_report: &TreeReport,
    tobit_mae: f64,
) -> Result<(), PipelineError> {
    let mut body = String::new();
    body.push_str(&format!("seed {}\nsplit_seed {}\nverify_seed {}\n", cfg.seed, seeds.split, seeds.verify));
    body.push_str(&format!(
        "island {}\n",
        cfg.island.as_ref().map_or("bundled".to_string(), |p| p.display().to_string())
    ));
    body.push_str(&format!("outage_samples {}\n", data.len()));
    body.push_str(&format!("tree_test_mae_mw {:.6}\ntobit_test_mae_mw {:.6}\n", tree_report.mae, tobit_mae));
    for name in artifacts {
        let len = fs::metadata(out.join(name)).map_err(io_err(format!("cannot stat {name}")))?.len();
        body.push_str(&format!("artifact {name} {len}\n"));
    }
    body.push_str("\n[config]\n");
    body.push_str(&toml::to_string(cfg).map_err(|e| PipelineError::Config(e.to_string()))?);
    fs::write(out.join("run_manifest.txt"), body).map_err(io_err("cannot write run_manifest.txt"))
}
