//! Command-line pipeline. Every stage reads its inputs from and writes its
//! artifacts under `--out`, together with a manifest recording the config
//! hash, the seed and digests of the files it read and wrote.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::datagen::{generate_portfolio, read_portfolio_csv, write_portfolio_csv, PortfolioConfig};
use crate::domain::{Invoice, Snapshot, YearMonth, GRACE_DAYS};
use crate::error::Error;
use crate::eval::{evaluate, region_robustness_experiment, window_sweep, EvalReport, RegionTable, SweepResult};
use crate::features::{featurize, read_features, write_features, FeatureVector, WindowSize};
use crate::models::{grid_search, HyperGrid, Metric, ModelKind, ScoringModel};
use crate::pipeline::{prepare_with_split, Prepared};
use crate::ranking::{compare_rankings, overdue_balances, write_greedy_ranking, write_risk_ranking, ScoredInvoice};
use crate::report::{write_report, ReportInputs};
use crate::simulate::{run_simulation, sim_invoices, SimConfig, SimResult};
use crate::splits::{time_series_folds, time_split, Split, SplitManifest, SplitSpec};

#[derive(Debug, Parser)]
#[command(name = "arcollect", version, about = "Late-payment prediction, risk ranking and collection simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic invoice portfolio.
    Generate(CommonArgs),
    /// Compute windowed features and labels.
    Featurize(CommonArgs),
    /// Chronological train/test split.
    Split(CommonArgs),
    /// Fit the configured models on the training partition.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated model kinds, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Test metrics and the region-robustness table.
    Evaluate(CommonArgs),
    /// Accuracy against feature window size.
    Sweep(CommonArgs),
    /// Risk and greedy customer rankings for one month.
    Rank(CommonArgs),
    /// Monte-Carlo comparison of the two rankings.
    Simulate(CommonArgs),
    /// Figures and tables from the earlier stages.
    Report(CommonArgs),
    /// Every stage in order.
    Run(CommonArgs),
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchConfig {
    pub folds: usize,
    pub metric: Metric,
    /// Per-kind axes replacing the built-in search grid.
    pub grids: BTreeMap<ModelKind, BTreeMap<String, Vec<Value>>>,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            folds: 5,
            metric: Metric::Accuracy,
            grids: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub windows: Vec<u32>,
    pub models: Vec<ModelKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            windows: (WindowSize::MIN..=WindowSize::MAX).collect(),
            models: vec![ModelKind::Gbdt, ModelKind::RandomForest],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    /// Month whose invoices are ranked; defaults to the first simulated month.
    pub month: Option<YearMonth>,
    pub top_k: Vec<usize>,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            month: None,
            top_k: vec![10, 50, 100],
        }
    }
}

/// Simulated months when none are configured: the most recent test months.
pub const DEFAULT_SIM_MONTHS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; also replaces `portfolio.seed` and `simulation.seed`.
    pub seed: u64,
    /// External invoice CSV used instead of `generate` output.
    #[serde(default)]
    pub invoices: Option<PathBuf>,
    /// Required with `invoices`.
    #[serde(default)]
    pub snapshot_date: Option<NaiveDate>,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    #[serde(default = "default_window")]
    pub window: u32,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    /// Cross-validated search; default parameters are used when absent.
    #[serde(default)]
    pub grid_search: Option<GridSearchConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_region_model")]
    pub region_model: ModelKind,
    /// Model whose probabilities drive ranking and simulation.
    #[serde(default = "default_scoring_model")]
    pub scoring_model: ModelKind,
    #[serde(default)]
    pub ranking: RankingConfig,
    #[serde(default)]
    pub simulation: SimConfig,
}

fn default_window() -> u32 {
    4
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_region_model() -> ModelKind {
    ModelKind::Gbdt
}

fn default_scoring_model() -> ModelKind {
    ModelKind::Ensemble
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            invoices: None,
            snapshot_date: None,
            portfolio: PortfolioConfig::with_seed(0),
            window: default_window(),
            split: SplitSpec::default(),
            models: default_models(),
            grid_search: None,
            sweep: SweepConfig::default(),
            region_model: default_region_model(),
            scoring_model: default_scoring_model(),
            ranking: RankingConfig::default(),
            simulation: SimConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let mut cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.portfolio.seed = seed;
        self.simulation.seed = seed;
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let field = |name: &str, e: Error| Failure::Config(format!("{name}: {e}"));
        WindowSize::new(self.window).map_err(|e| field("window", e))?;
        for &w in &self.sweep.windows {
            WindowSize::new(w).map_err(|e| field("sweep.windows", e))?;
        }
        if self.sweep.windows.is_empty() || self.sweep.models.is_empty() {
            return Err(Failure::Config("sweep: windows and models must be non-empty".into()));
        }
        if self.models.is_empty() {
            return Err(Failure::Config("models: at least one model kind is required".into()));
        }
        if let SplitSpec::TrainFraction(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                return Err(Failure::Config(format!("split.train_fraction: {f} outside (0, 1)")));
            }
        }
        if self.invoices.is_some() != self.snapshot_date.is_some() {
            return Err(Failure::Config("invoices and snapshot_date must be given together".into()));
        }
        if let Some(g) = &self.grid_search {
            if g.folds < 2 {
                return Err(Failure::Config("grid_search.folds: must be >= 2".into()));
            }
        }
        self.portfolio.validate().map_err(|e| field("portfolio", e))?;
        self.simulation.validate().map_err(|e| field("simulation", e))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// A failed command, carrying its exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    MissingInput(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::MissingInput(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::MissingInput(m) => write!(f, "missing input: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownModelKind(_) | Error::WindowSize(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Outcome<String> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Runtime(format!("reading {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// One stage's view of the artifact directory.
struct Stage<'a> {
    name: &'static str,
    out: &'a Path,
    cfg: &'a PipelineConfig,
    inputs: Vec<PathBuf>,
}

impl<'a> Stage<'a> {
    fn new(name: &'static str, out: &'a Path, cfg: &'a PipelineConfig) -> Self {
        Stage {
            name,
            out,
            cfg,
            inputs: Vec::new(),
        }
    }

    /// Declares an input, failing with a hint naming the producing stage.
    fn input(&mut self, path: PathBuf, producer: &str) -> Outcome<PathBuf> {
        if !path.is_file() {
            return Err(Failure::MissingInput(format!(
                "{} not found; run `arcollect {producer}` first",
                path.display()
            )));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    fn manifest_path(&self) -> PathBuf {
        self.out.join("manifests").join(format!("{}.json", self.name))
    }

    fn digest(&self, path: &Path) -> Outcome<FileDigest> {
        let shown = path.strip_prefix(self.out).unwrap_or(path);
        Ok(FileDigest {
            path: shown.to_string_lossy().replace('\\', "/"),
            sha256: file_sha256(path)?,
        })
    }

    fn input_digests(&self) -> Outcome<Vec<FileDigest>> {
        self.inputs.iter().map(|p| self.digest(p)).collect()
    }

    /// True when a previous run with the same config and inputs left its
    /// outputs untouched.
    fn up_to_date(&self) -> Outcome<bool> {
        let Ok(text) = std::fs::read_to_string(self.manifest_path()) else {
            return Ok(false);
        };
        let Ok(old) = serde_json::from_str::<Manifest>(&text) else {
            return Ok(false);
        };
        if old.config_sha256 != self.cfg.hash() || old.inputs != self.input_digests()? {
            return Ok(false);
        }
        for o in &old.outputs {
            let p = self.out.join(&o.path);
            if !p.is_file() || file_sha256(&p)? != o.sha256 {
                return Ok(false);
            }
        }
        log::info!("{}: outputs up to date", self.name);
        Ok(true)
    }

    fn finish(&self, outputs: &[PathBuf]) -> Outcome<()> {
        let m = Manifest {
            stage: self.name.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            config_sha256: self.cfg.hash(),
            inputs: self.input_digests()?,
            outputs: outputs.iter().map(|p| self.digest(p)).collect::<Outcome<_>>()?,
        };
        write_text(&self.manifest_path(), &(serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"))?;
        log::info!("{}: wrote {} files", self.name, outputs.len());
        Ok(())
    }
}

fn write_text(path: &Path, body: &str) -> Outcome<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
    }
    std::fs::write(path, body).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Artifact locations inside the output directory.
pub mod paths {
    pub const INVOICES: &str = "invoices.csv";
    pub const PORTFOLIO: &str = "portfolio.json";
    pub const FEATURES: &str = "features.csv";
    pub const SPLIT: &str = "split.json";
    pub const EVAL: &str = "metrics/eval.json";
    pub const REGION_JSON: &str = "metrics/region_table.json";
    pub const REGION_CSV: &str = "metrics/region_table.csv";
    pub const SWEEP_JSON: &str = "sweep/sweep.json";
    pub const SWEEP_CSV: &str = "sweep/sweep.csv";
    pub const RISK_RANKING: &str = "ranking/risk_ranking.csv";
    pub const GREEDY_RANKING: &str = "ranking/greedy_ranking.csv";
    pub const RANK_COMPARISON: &str = "ranking/comparison.json";
    pub const SIM_JSON: &str = "simulation/result.json";
    pub const SIM_CSV: &str = "simulation/savings.csv";
    pub const SIM_SUMMARY: &str = "simulation/summary.csv";
    pub const REPORT_DIR: &str = "report";

    pub fn model(kind: crate::models::ModelKind) -> String {
        format!("models/{kind}.json")
    }

    pub fn cv_table(kind: crate::models::ModelKind) -> String {
        format!("models/{kind}_cv.csv")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PortfolioRecord {
    config: PortfolioConfig,
    snapshot_date: NaiveDate,
    n_invoices: usize,
}

/// Invoices and snapshot for featurizing, from the config or `generate`.
fn load_invoices(stage: &mut Stage) -> Outcome<(Vec<Invoice>, Snapshot)> {
    if let (Some(path), Some(date)) = (&stage.cfg.invoices, stage.cfg.snapshot_date) {
        if !path.is_file() {
            return Err(Failure::MissingInput(format!("invoice file {} not found", path.display())));
        }
        stage.inputs.push(path.clone());
        return Ok((read_portfolio_csv(path)?, Snapshot::new(date)));
    }
    let inv = stage.input(stage.out.join(paths::INVOICES), "generate")?;
    let rec: PortfolioRecord = read_json(&stage.input(stage.out.join(paths::PORTFOLIO), "generate")?)?;
    Ok((read_portfolio_csv(&inv)?, Snapshot::new(rec.snapshot_date)))
}

fn load_features(stage: &mut Stage) -> Outcome<Vec<FeatureVector>> {
    let p = stage.input(stage.out.join(paths::FEATURES), "featurize")?;
    let file = std::fs::File::open(&p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
    Ok(read_features(std::io::BufReader::new(file), &p)?)
}

/// Features re-partitioned by the recorded split and imputed.
fn load_prepared(stage: &mut Stage) -> Outcome<Prepared> {
    let rows = load_features(stage)?;
    let m: SplitManifest = read_json(&stage.input(stage.out.join(paths::SPLIT), "split")?)?;
    if m.spec != stage.cfg.split {
        return Err(Failure::MissingInput(format!(
            "{} was made with a different split; run `arcollect split` again",
            paths::SPLIT
        )));
    }
    let at: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.invoice_id.as_str(), i)).collect();
    let resolve = |ids: &[String]| -> Outcome<Vec<usize>> {
        ids.iter()
            .map(|id| {
                at.get(id.as_str()).copied().ok_or_else(|| {
                    Failure::MissingInput(format!("split refers to unknown invoice {id}; run `arcollect split` again"))
                })
            })
            .collect()
    };
    let split = Split {
        train: resolve(&m.train_ids)?,
        test: resolve(&m.test_ids)?,
    };
    Ok(prepare_with_split(&rows, split)?)
}

fn load_model(stage: &mut Stage, kind: ModelKind) -> Outcome<ScoringModel> {
    let p = stage.input(stage.out.join(paths::model(kind)), "train")?;
    Ok(ScoringModel::load(&p)?)
}

pub fn cmd_generate(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let stage = Stage::new("generate", out, cfg);
    if stage.up_to_date()? {
        return Ok(());
    }
    let pf = generate_portfolio(&cfg.portfolio)?;
    let inv = out.join(paths::INVOICES);
    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("creating {}: {e}", out.display())))?;
    write_portfolio_csv(&pf.invoices, &inv)?;
    let rec = out.join(paths::PORTFOLIO);
    write_json(
        &rec,
        &PortfolioRecord {
            config: cfg.portfolio.clone(),
            snapshot_date: pf.snapshot.as_of_date,
            n_invoices: pf.invoices.len(),
        },
    )?;
    stage.finish(&[inv, rec])
}

pub fn cmd_featurize(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("featurize", out, cfg);
    let (invoices, snap) = load_invoices(&mut stage)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let rows = featurize(&invoices, &snap, WindowSize::new(cfg.window)?, GRACE_DAYS)?;
    let path = out.join(paths::FEATURES);
    let mut buf = Vec::new();
    write_features(&rows, &mut buf)?;
    write_text(&path, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    stage.finish(&[path])
}

pub fn cmd_split(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("split", out, cfg);
    let rows = load_features(&mut stage)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let split = time_split(&rows, &cfg.split)?;
    let path = out.join(paths::SPLIT);
    write_json(&path, &SplitManifest::new(&rows, cfg.split, &split))?;
    stage.finish(&[path])
}

pub fn cmd_train(cfg: &PipelineConfig, out: &Path, kinds: &[ModelKind]) -> Outcome<()> {
    let mut stage = Stage::new("train", out, cfg);
    let prepared = load_prepared(&mut stage)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let mut outputs = Vec::new();
    for &kind in kinds {
        let params = match &cfg.grid_search {
            None => kind.default_params(),
            Some(gs) => {
                let grid = match gs.grids.get(&kind) {
                    Some(axes) => HyperGrid {
                        kind,
                        axes: axes.clone(),
                    },
                    None => HyperGrid::default_for(kind),
                };
                let folds = time_series_folds(&prepared.train_rows, gs.folds)?;
                let res = grid_search(&grid, &prepared.train, &folds, gs.metric, cfg.seed)?;
                let mut table = String::from("point,fold,score,params\n");
                for r in &res.table {
                    let params = serde_json::to_string(&r.params).expect("params serialize").replace('"', "\"\"");
                    table.push_str(&format!("{},{},{:.6},\"{params}\"\n", r.point, r.fold, r.score));
                }
                let p = out.join(paths::cv_table(kind));
                write_text(&p, &table)?;
                outputs.push(p);
                log::info!("{kind}: best mean score {:.4} at point {}", res.mean_scores[res.best_index], res.best_index);
                res.best
            }
        };
        let model = ScoringModel::fit(&params, &prepared.train, cfg.seed)?;
        let p = out.join(paths::model(kind));
        write_text(&p, &(model.to_json()? + "\n"))?;
        outputs.push(p);
        log::info!("trained {kind}");
    }
    stage.finish(&outputs)
}

pub fn cmd_evaluate(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("evaluate", out, cfg);
    let prepared = load_prepared(&mut stage)?;
    let mut models = Vec::new();
    for &kind in &cfg.models {
        models.push((kind.to_string(), load_model(&mut stage, kind)?));
    }
    if !cfg.models.contains(&cfg.region_model) {
        return Err(Failure::Config(format!(
            "region_model: {} is not among the trained models",
            cfg.region_model
        )));
    }
    if stage.up_to_date()? {
        return Ok(());
    }
    let refs: Vec<(String, &ScoringModel)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let report = evaluate(&refs, &prepared)?;
    let region_params = models
        .iter()
        .find(|(n, _)| *n == cfg.region_model.to_string())
        .map(|(_, m)| m.params.clone())
        .expect("checked above");
    let table = region_robustness_experiment(&prepared, &region_params, cfg.seed)?;
    let (e, rj, rc) = (out.join(paths::EVAL), out.join(paths::REGION_JSON), out.join(paths::REGION_CSV));
    write_json(&e, &report)?;
    write_json(&rj, &table)?;
    write_text(&rc, &table.to_csv())?;
    stage.finish(&[e, rj, rc])
}

pub fn cmd_sweep(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("sweep", out, cfg);
    let (invoices, snap) = load_invoices(&mut stage)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let windows: Vec<WindowSize> = cfg.sweep.windows.iter().map(|&w| WindowSize::new(w)).collect::<Result<_, _>>()?;
    let params: Vec<_> = cfg.sweep.models.iter().map(|k| k.default_params()).collect();
    let res = window_sweep(&invoices, &snap, &params, &windows, &cfg.split, cfg.seed)?;
    let (j, c) = (out.join(paths::SWEEP_JSON), out.join(paths::SWEEP_CSV));
    write_json(&j, &res)?;
    write_text(&c, &res.to_csv())?;
    stage.finish(&[j, c])
}

/// Months to simulate: configured, else the latest test months.
fn simulation_months(cfg: &PipelineConfig, prepared: &Prepared) -> Vec<YearMonth> {
    if !cfg.simulation.months.is_empty() {
        return cfg.simulation.months.clone();
    }
    let mut months: Vec<YearMonth> = prepared.test_rows.iter().map(|r| r.creation_month()).collect();
    months.sort();
    months.dedup();
    let skip = months.len().saturating_sub(DEFAULT_SIM_MONTHS);
    months.split_off(skip)
}

/// Scored test invoices from the configured scoring model.
fn scored_test(stage: &mut Stage, prepared: &Prepared) -> Outcome<Vec<f64>> {
    let model = load_model(stage, stage.cfg.scoring_model)?;
    Ok(model.predict_dataset(&prepared.test)?)
}

pub fn cmd_rank(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("rank", out, cfg);
    let prepared = load_prepared(&mut stage)?;
    let (invoices, _) = load_invoices(&mut stage)?;
    let proba = scored_test(&mut stage, &prepared)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let month = match cfg.ranking.month {
        Some(m) => m,
        None => *simulation_months(cfg, &prepared)
            .first()
            .ok_or_else(|| Failure::Runtime("test partition is empty".into()))?,
    };
    let scored: Vec<ScoredInvoice> = prepared
        .test_rows
        .iter()
        .zip(&proba)
        .filter(|(r, _)| r.creation_month() == month)
        .map(|(r, &p)| ScoredInvoice {
            invoice_id: r.invoice_id.clone(),
            customer_id: r.customer_id.clone(),
            value: r.base_amount,
            p_late: p,
        })
        .collect();
    if scored.is_empty() {
        return Err(Failure::Config(format!("ranking.month: no test invoices created in {month}")));
    }
    let overdue = overdue_balances(&invoices, month.first_day());
    let (risk, greedy, cmp) = compare_rankings(&scored, &overdue, &cfg.ranking.top_k)?;
    log::info!("{month}: kendall tau between rankings {:.4}", cmp.kendall_tau);
    let (r, g, c) = (out.join(paths::RISK_RANKING), out.join(paths::GREEDY_RANKING), out.join(paths::RANK_COMPARISON));
    let mut buf = Vec::new();
    write_risk_ranking(&risk, &mut buf)?;
    write_text(&r, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    let mut buf = Vec::new();
    write_greedy_ranking(&greedy, &mut buf)?;
    write_text(&g, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    #[derive(Serialize)]
    struct Comparison<'a> {
        month: YearMonth,
        #[serde(flatten)]
        inner: &'a crate::ranking::RankingComparison,
    }
    write_json(&c, &Comparison { month, inner: &cmp })?;
    stage.finish(&[r, g, c])
}

pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("simulate", out, cfg);
    let prepared = load_prepared(&mut stage)?;
    let (invoices, _) = load_invoices(&mut stage)?;
    let proba = scored_test(&mut stage, &prepared)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let sims = sim_invoices(&prepared.test_rows, &proba)?;
    let sim_cfg = SimConfig {
        months: simulation_months(cfg, &prepared),
        ..cfg.simulation.clone()
    };
    let res = run_simulation(&sims, &invoices, &sim_cfg)?;
    let (j, c, s) = (out.join(paths::SIM_JSON), out.join(paths::SIM_CSV), out.join(paths::SIM_SUMMARY));
    write_json(&j, &res)?;
    let mut buf = Vec::new();
    res.write_csv(&mut buf)?;
    write_text(&c, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    let mut buf = Vec::new();
    res.write_summary_csv(&mut buf)?;
    write_text(&s, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    stage.finish(&[j, c, s])
}

pub fn cmd_report(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    let mut stage = Stage::new("report", out, cfg);
    let sweep: SweepResult = read_json(&stage.input(out.join(paths::SWEEP_JSON), "sweep")?)?;
    let eval: EvalReport = read_json(&stage.input(out.join(paths::EVAL), "evaluate")?)?;
    let region: RegionTable = read_json(&stage.input(out.join(paths::REGION_JSON), "evaluate")?)?;
    let simulation: SimResult = read_json(&stage.input(out.join(paths::SIM_JSON), "simulate")?)?;
    if stage.up_to_date()? {
        return Ok(());
    }
    let inputs = ReportInputs {
        sweep: Some(sweep),
        eval: Some(eval),
        region: Some(region),
        simulation: Some(simulation),
    };
    let files = write_report(&out.join(paths::REPORT_DIR), &inputs)?;
    stage.finish(&files)
}

pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Outcome<()> {
    if cfg.invoices.is_none() {
        cmd_generate(cfg, out)?;
    }
    cmd_featurize(cfg, out)?;
    cmd_split(cfg, out)?;
    cmd_train(cfg, out, &cfg.models)?;
    cmd_evaluate(cfg, out)?;
    cmd_sweep(cfg, out)?;
    cmd_rank(cfg, out)?;
    cmd_simulate(cfg, out)?;
    cmd_report(cfg, out)
}

fn load_config(args: &CommonArgs) -> Outcome<PipelineConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::MissingInput(format!("config {}: {e}", args.config.display())))?;
    let mut cfg = PipelineConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

/// Runs one parsed command line.
pub fn execute(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&PipelineConfig::default()).expect("config serializes"));
            Ok(())
        }
        Command::Train { common, models } => {
            let cfg = load_config(&common)?;
            let kinds = match models {
                Some(names) => names.iter().map(|n| n.trim().parse()).collect::<Result<Vec<ModelKind>, _>>()?,
                None => cfg.models.clone(),
            };
            cmd_train(&cfg, &common.out, &kinds)
        }
        Command::Generate(a) => cmd_generate(&load_config(&a)?, &a.out),
        Command::Featurize(a) => cmd_featurize(&load_config(&a)?, &a.out),
        Command::Split(a) => cmd_split(&load_config(&a)?, &a.out),
        Command::Evaluate(a) => cmd_evaluate(&load_config(&a)?, &a.out),
        Command::Sweep(a) => cmd_sweep(&load_config(&a)?, &a.out),
        Command::Rank(a) => cmd_rank(&load_config(&a)?, &a.out),
        Command::Simulate(a) => cmd_simulate(&load_config(&a)?, &a.out),
        Command::Report(a) => cmd_report(&load_config(&a)?, &a.out),
        Command::Run(a) => run_all(&load_config(&a)?, &a.out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_and_validates() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = PipelineConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn seed_is_mandatory() {
        let e = PipelineConfig::from_json("{}").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn bad_fields_are_named() {
        let e = PipelineConfig::from_json(r#"{"seed": 1, "window": 20}"#).unwrap_err();
        assert!(e.to_string().contains("window"), "{e}");
        let e = PipelineConfig::from_json(r#"{"seed": 1, "colour": 3}"#).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = PipelineConfig::from_json(r#"{"seed": 1, "models": ["boosted_cat"]}"#).unwrap_err();
        assert!(e.to_string().contains("boosted_cat"), "{e}");
    }

    #[test]
    fn seed_override_reaches_sub_configs() {
        let mut cfg = PipelineConfig::default();
        cfg.set_seed(9);
        assert_eq!((cfg.portfolio.seed, cfg.simulation.seed), (9, 9));
    }
}
