use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ufls_core::dataset::{Dataset, DatasetError};
use ufls_core::island::IslandError;
use ufls_core::milp::{self, MilpError};
use ufls_core::model_io::{ModelFile, ModelIoError};
use ufls_core::pipeline::{self, PipelineConfig, PipelineError};
use ufls_core::scenario::ScenarioError;
use ufls_core::sfr::{self, OperatingPoint, SfrError};
use ufls_core::tree::{evaluate_dataset, TreeError};

#[derive(Parser)]
#[command(name = "ufls", version, about = "UFLS estimation: labeling, model training and MILP encoding")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 = one per core. Overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run directory for all artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates one outage and prints the UFLS amount.
    Simulate {
        /// Dispatch as `UNIT=MW,UNIT=MW,...`.
        #[arg(long)]
        dispatch: String,
        /// Unit that trips.
        #[arg(long)]
        lost: String,
        /// Writes the frequency trajectory to this CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Enumerates and ranks generation combinations.
    Generate,
    /// Labels every outage into `<out>/dataset.csv`, resuming a partial file.
    Label,
    /// Correlation matrix and column summary of a dataset.
    Analyze {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Splits a dataset, trains one model and evaluates it on the test part.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluates a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Writes the MILP encoding of a saved model.
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Number of observation blocks; defaults to the config value.
        #[arg(long)]
        observations: Option<usize>,
    },
    /// Checks an LP file against direct model predictions.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lp: PathBuf,
        /// Defaults to the config value.
        #[arg(long)]
        samples: Option<usize>,
        /// Training rows used to draw in-bounds tree samples.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Block prefix to check.
        #[arg(long, default_value = "o0_")]
        prefix: String,
    },
    /// Full pipeline from one config.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Tree,
    Tobit,
}

impl ModelKind {
    fn stem(self) -> &'static str {
        match self {
            ModelKind::Tree => "tree",
            ModelKind::Tobit => "tobit",
        }
    }
}

/// Exit codes by error class.
mod exit {
    // 1 is unused, 2 is clap's usage error
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    pub const INPUT: u8 = 5;
    pub const SIMULATION: u8 = 6;
    pub const TRAINING: u8 = 7;
    pub const ENCODING: u8 = 8;
    pub const VERIFICATION: u8 = 9;
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("simulation failed: {0}")]
    Sfr(#[from] SfrError),
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        PipelineError::from(e).into()
    }
}
impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        PipelineError::from(e).into()
    }
}
impl From<MilpError> for CliError {
    fn from(e: MilpError) -> Self {
        PipelineError::from(e).into()
    }
}
impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        PipelineError::from(e).into()
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::CONFIG,
            CliError::Sfr(SfrError::NumericalDivergence { .. }) => exit::SIMULATION,
            CliError::Sfr(_) => exit::INPUT,
            CliError::Pipeline(p) => match p {
                PipelineError::Config(_) => exit::CONFIG,
                PipelineError::Io { .. } => exit::IO,
                PipelineError::Island(IslandError::Io { .. }) => exit::IO,
                PipelineError::Island(_) => exit::INPUT,
                PipelineError::Scenario(ScenarioError::Simulation { .. }) => exit::SIMULATION,
                PipelineError::Scenario(_) => exit::CONFIG,
                PipelineError::Dataset(DatasetError::Csv(e)) if e.is_io_error() => exit::IO,
                PipelineError::Dataset(_) => exit::INPUT,
                PipelineError::Model(ModelIoError::Io { .. }) => exit::IO,
                PipelineError::Model(_) => exit::INPUT,
                PipelineError::ResumeMismatch(_) => exit::INPUT,
                PipelineError::Tree(_) | PipelineError::Tobit(_) => exit::TRAINING,
                PipelineError::Milp(MilpError::Io(_)) => exit::IO,
                PipelineError::Milp(MilpError::Parse { .. } | MilpError::MissingBlock(_)) => exit::INPUT,
                PipelineError::Milp(_) => exit::ENCODING,
                PipelineError::VerificationFailed { .. } => exit::VERIFICATION,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn create_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|source| {
        CliError::from(PipelineError::Io {
            context: format!("cannot create {}", out.display()),
            source,
        })
    })
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), CliError> {
    fs::write(path, body).map_err(|source| {
        CliError::from(PipelineError::Io {
            context: format!("cannot write {}", path.display()),
            source,
        })
    })
}

fn parse_dispatch(spec: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, mw) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("dispatch entry `{part}` is not UNIT=MW")))?;
        let mw: f64 = mw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("dispatch entry `{part}` has a non-numeric MW value")))?;
        if out.insert(id.trim().to_string(), mw).is_some() {
            return Err(CliError::Usage(format!("unit `{}` appears twice in the dispatch", id.trim())));
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("empty dispatch".into()));
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    let stdout = std::io::stdout();
    let mut so = stdout.lock();
    let print = |so: &mut std::io::StdoutLock, s: String| {
        let _ = writeln!(so, "{s}");
    };

    match &cli.command {
        Command::Simulate {
            dispatch,
            lost,
            trajectory,
        } => {
            let island = cfg.island_system()?;
            let op = OperatingPoint::balanced(parse_dispatch(dispatch)?, island.load_damping);
            // a unit listed at 0 MW is allowed, so its loss is a zero disturbance
            let loaded = op.dispatch.iter().filter(|(_, &p)| p != 0.0).map(|(k, &p)| (k.clone(), p)).collect();
            OperatingPoint::balanced(loaded, island.load_damping).validate(&island.units)?;
            let mut sim_cfg = island.simulation;
            if trajectory.is_some() {
                sim_cfg.trajectory_stride = Some(1);
            }
            let res = sfr::simulate_outage(&op, &island.units, lost, &island.ufls, &sim_cfg)?;
            print(&mut so, format!("ufls_mw {}", res.ufls_total));
            print(&mut so, format!("f_nadir_hz {}", res.f_nadir));
            print(&mut so, format!("f_qss_hz {}", res.f_qss));
            for s in &res.fired_stages {
                print(&mut so, format!("stage {} t_s {} shed_mw {}", s.stage, s.time, s.shed_mw));
            }
            if let Some(path) = trajectory {
                let mut buf = Vec::new();
                res.write_trajectory_csv(&mut buf).expect("writing to memory");
                write_file(path, &buf)?;
            }
        }
        Command::Generate => {
            create_out(out)?;
            let island = cfg.island_system()?;
            let combos = pipeline::combinations(&island, &cfg.scenarios)?;
            let mut buf = Vec::new();
            pipeline::write_combinations_csv(&island, &combos, &mut buf).expect("writing to memory");
            write_file(&out.join("combinations.csv"), &buf)?;
            let outages: usize = combos.iter().map(|c| c.online()).sum();
            print(&mut so, format!("combinations {}", combos.len()));
            print(&mut so, format!("outages {outages}"));
        }
        Command::Label => {
            create_out(out)?;
            let island = cfg.island_system()?;
            let combos = pipeline::combinations(&island, &cfg.scenarios)?;
            let data = pipeline::label_to_csv(&island, &combos, &out.join("dataset.csv"), cfg.workers)?;
            print(&mut so, format!("rows {}", data.len()));
        }
        Command::Analyze { dataset } => {
            create_out(out)?;
            let path = dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
            let data = Dataset::load(&path)?;
            pipeline::write_analysis(&data, out)?;
            print(&mut so, fs::read_to_string(out.join("correlation.csv")).unwrap_or_default().trim_end().to_string());
        }
        Command::Train { model, dataset } => {
            create_out(out)?;
            let path = dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
            let data = Dataset::load(&path)?;
            let (train, test) = data.split(cfg.split.test_fraction, cfg.stage_seeds().split)?;
            train.save(out.join("train.csv"))?;
            test.save(out.join("test.csv"))?;
            let stem = model.stem();
            match model {
                ModelKind::Tree => {
                    let tree = pipeline::train_tree(&train, &cfg.tree, cfg.workers)?;
                    let report = evaluate_dataset(&tree, &test)?;
                    ModelFile::Tree(tree).save(out.join("tree.toml"))?;
                    pipeline::write_tree_report(&report, out, stem)?;
                    print(&mut so, format!("test_mae_mw {:.6}", report.mae));
                }
                ModelKind::Tobit => {
                    let (artifact, fit) = pipeline::train_tobit(&train)?;
                    let report = pipeline::evaluate_tobit(&artifact, &test)?;
                    ModelFile::Tobit(artifact).save(out.join("tobit.toml"))?;
                    pipeline::write_tobit_report(&fit, &report, out, stem)?;
                    print(&mut so, format!("test_mae_mw {:.6}", report.mae));
                }
            }
        }
        Command::Evaluate { model, dataset } => {
            let model = ModelFile::load(model)?;
            let data = Dataset::load(dataset)?;
            match &model {
                ModelFile::Tree(tree) => {
                    let report = evaluate_dataset(tree, &data)?;
                    report.write_summary(&mut so).map_err(io_stdout)?;
                }
                ModelFile::Tobit(t) => {
                    let report = pipeline::evaluate_tobit(t, &data)?;
                    print(&mut so, format!("rows {}", report.observed.len()));
                    print(&mut so, format!("mae_mw {:.6}", report.mae));
                }
            }
        }
        Command::Encode { model, observations } => {
            create_out(out)?;
            let file = ModelFile::load(model)?;
            let n = observations.unwrap_or(cfg.encode.n_observations);
            if n == 0 {
                return Err(CliError::Usage("--observations must be at least 1".into()));
            }
            let (blocks, lp, manifest) = pipeline::encode_model(&file, n)?;
            let stem = file.kind();
            write_file(&out.join(format!("{stem}.lp")), lp.as_bytes())?;
            write_file(&out.join(format!("{stem}_manifest.txt")), manifest.as_bytes())?;
            let s = blocks[0].stats();
            print(&mut so, format!("blocks {}", blocks.len()));
            print(&mut so, format!("constraints_per_block {}", s.n_constraints));
            print(&mut so, format!("binaries_per_block {}", s.n_binary));
            print(&mut so, format!("continuous_per_block {}", s.n_continuous));
        }
        Command::Verify {
            model,
            lp,
            samples,
            dataset,
            prefix,
        } => {
            let file = ModelFile::load(model)?;
            let text = fs::read_to_string(lp).map_err(|source| {
                CliError::from(PipelineError::Io {
                    context: format!("cannot read {}", lp.display()),
                    source,
                })
            })?;
            let block = milp::parse_lp(&text)?.extract_block(prefix, file.n_features())?;
            let train = match (&file, dataset) {
                (_, Some(p)) => Dataset::load(p)?.features(),
                (ModelFile::Tree(_), None) => Dataset::load(out.join("train.csv"))?.features(),
                (ModelFile::Tobit(_), None) => Vec::new(),
            };
            let n = samples.unwrap_or(cfg.verify.n_samples);
            let xs = pipeline::verification_samples(&file, &train, n, cfg.stage_seeds().verify);
            let summary = pipeline::verify_block(&file, &block, &xs, cfg.workers)?;
            summary.write(&mut so).map_err(io_stdout)?;
            if !summary.ok() {
                return Err(PipelineError::VerificationFailed {
                    failed: summary.n_samples - summary.passed,
                    total: summary.n_samples,
                }
                .into());
            }
        }
        Command::Run => {
            let res = pipeline::run(&cfg, out)?;
            print(&mut so, format!("outage_samples {}", res.n_samples));
            print(&mut so, format!("tree_test_mae_mw {:.6}", res.tree_report.mae));
            print(&mut so, format!("tobit_test_mae_mw {:.6}", res.tobit_mae));
            for (name, v) in [("tree", &res.tree_verify), ("tobit", &res.tobit_verify)] {
                print(&mut so, format!("{name}_verified {}/{}", v.passed, v.n_samples));
            }
            for v in [&res.tree_verify, &res.tobit_verify] {
                if !v.ok() {
                    return Err(PipelineError::VerificationFailed {
                        failed: v.n_samples - v.passed,
                        total: v.n_samples,
                    }
                    .into());
                }
            }
        }
    }
    Ok(())
}

fn io_stdout(source: std::io::Error) -> CliError {
    PipelineError::Io {
        context: "cannot write to stdout".into(),
        source,
    }
    .into()
}
