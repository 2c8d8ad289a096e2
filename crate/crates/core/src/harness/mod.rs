//! Experiment orchestration: plan files, cell enumeration over the
//! heterogeneity grids, crash-safe execution, and result persistence.
//!
//! A plan expands into cells: the all-IID configuration, one cell per
//! volume-skew concentration, and one per (prevalence, disparity, method)
//! grid point; each cell runs once per seed. Completed cells append one
//! line-delimited JSON row to `results.jsonl` in canonical order, so a rerun
//! of the same plan file reproduces the file byte for byte and an
//! interrupted run resumes where it stopped. Wall-clock timings go to a
//! separate sidecar (`timings.jsonl`) to keep the results deterministic.

mod report;

pub use report::{report, ReportFormat};

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    build_unlabeled_pool, filter_min_count, generate_synthetic, read_manifest,
    sample_labeled_subsets, train_test_split, CorpusError, SyntheticSpec,
};
use crate::federation::{
    evaluate_global, federated_finetune, federated_pretrain, FederationConfig, FederationError,
};
use crate::learners::{load_checkpoint, save_checkpoint, LearnerError, ParamVector};
use crate::partition::{
    materialize_volume_split, partition_unlabeled, predi_partition, AssignmentMatrix,
    PartitionError, PartitionTarget, VolumeMode,
};
use crate::seed::derive;
use crate::Manifest;

const NS_VOLUME: u64 = 1;
const NS_PRETRAIN: u64 = 2;
const NS_PREDI: u64 = 3;
const NS_FINETUNE: u64 = 4;
const NS_SPLIT: u64 = 5;
const NS_SUBSETS: u64 = 6;

/// Worker-count environment variable for cell-level parallelism.
pub const WORKERS_ENV: &str = "FEDPREDI_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("results file does not match this plan: {0}")]
    ResumeMismatch(String),
    #[error("cell {cell}: {method} rows have no paired counterpart for the gain column")]
    Unpaired { cell: String, method: String },
    #[error("results row {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Fine-tuning method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain cross-entropy fine-tuning.
    Baseline,
    /// Prevalence-weighted fine-tuning over the one-shot exchange.
    Prep,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Prep => "prep",
        })
    }
}

/// Corpus source: a synthetic recipe or an existing manifest file, plus the
/// reconstruction parameters applied to it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CorpusPlan {
    pub synthetic: Option<SyntheticSpec>,
    pub manifest_path: Option<PathBuf>,
    /// Classes below this labeled count are filtered into the unlabeled
    /// remainder.
    pub min_count: usize,
    pub test_fraction: f64,
    /// Seed for the train/test split and the balanced subset draw.
    pub split_seed: u64,
}

impl Default for CorpusPlan {
    fn default() -> Self {
        CorpusPlan {
            synthetic: None,
            manifest_path: None,
            min_count: 1,
            test_fraction: 0.2,
            split_seed: 0,
        }
    }
}

/// Unlabeled-stage heterogeneity: the uniform split and/or a concentration
/// list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct UnlabeledPlan {
    pub iid: bool,
    pub alphas: Vec<f64>,
}

impl Default for UnlabeledPlan {
    fn default() -> Self {
        UnlabeledPlan {
            iid: true,
            alphas: Vec::new(),
        }
    }
}

/// Labeled-stage heterogeneity: the IID configuration and/or the
/// (prevalence, disparity) target grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LabeledPlan {
    pub iid: bool,
    pub prevalence_targets: Vec<f64>,
    pub disparity_targets: Vec<f64>,
    pub samples_per_class: usize,
}

impl Default for LabeledPlan {
    fn default() -> Self {
        LabeledPlan {
            iid: true,
            prevalence_targets: Vec::new(),
            disparity_targets: Vec::new(),
            samples_per_class: 50,
        }
    }
}

/// A whole study: corpus, stage-specific partition specs, federation
/// configuration, replicate seeds, and the methods to compare.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentPlan {
    pub corpus: CorpusPlan,
    #[serde(default)]
    pub unlabeled: UnlabeledPlan,
    #[serde(default)]
    pub labeled: LabeledPlan,
    #[serde(default)]
    pub federation: FederationConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Baseline, Method::Prep]
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let plan: ExperimentPlan =
            toml::from_str(text).map_err(|e| HarnessError::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::InvalidPlan(msg));
        match (&self.corpus.synthetic, &self.corpus.manifest_path) {
            (Some(_), Some(_)) => {
                return invalid("corpus gives both a synthetic spec and a manifest path".into())
            }
            (None, None) => {
                return invalid("corpus needs a synthetic spec or a manifest path".into())
            }
            _ => {}
        }
        if let Some(spec) = &self.corpus.synthetic {
            spec.validate()?;
        }
        if !self.corpus.test_fraction.is_finite()
            || self.corpus.test_fraction <= 0.0
            || self.corpus.test_fraction >= 1.0
        {
            return invalid(format!(
                "test_fraction must be in (0,1), got {}",
                self.corpus.test_fraction
            ));
        }
        if self.corpus.min_count < 1 {
            return invalid("min_count must be >= 1".into());
        }
        if self.labeled.samples_per_class == 0 {
            return invalid("samples_per_class must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return invalid("replicate seeds must be distinct".into());
        }
        if self.unlabeled.alphas.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return invalid("alphas must be positive".into());
        }
        if self.labeled.prevalence_targets.is_empty() != self.labeled.disparity_targets.is_empty()
        {
            return invalid(
                "prevalence_targets and disparity_targets must be given together".into(),
            );
        }
        if !self.labeled.prevalence_targets.is_empty() {
            if self.methods.is_empty() {
                return invalid("the target grid needs at least one method".into());
            }
            let distinct: BTreeSet<Method> = self.methods.iter().copied().collect();
            if distinct.len() != self.methods.len() {
                return invalid("methods must be distinct".into());
            }
        }
        self.federation.validate()?;
        if self.enumerate_cells().is_empty() {
            return invalid("plan expands to no cells".into());
        }
        Ok(())
    }

    /// Expand the plan into its canonical cell order: IID, volume-skew
    /// concentrations, then the target grid (prevalence-major), with seeds
    /// innermost.
    pub fn enumerate_cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let push_all = |kind: CellKind, cells: &mut Vec<Cell>| {
            for &seed in &self.seeds {
                cells.push(Cell {
                    kind: kind.clone(),
                    seed,
                });
            }
        };
        if self.unlabeled.iid && self.labeled.iid {
            push_all(CellKind::Iid, &mut cells);
        }
        for &alpha in &self.unlabeled.alphas {
            push_all(CellKind::VolumeSkew { alpha }, &mut cells);
        }
        for &prevalence in &self.labeled.prevalence_targets {
            for &disparity in &self.labeled.disparity_targets {
                for &method in &self.methods {
                    push_all(
                        CellKind::LabelSkew {
                            prevalence,
                            disparity,
                            method,
                        },
                        &mut cells,
                    );
                }
            }
        }
        cells
    }
}

/// One experiment configuration, before seeding.
#[derive(Debug, Clone, PartialEq)]
pub enum CellKind {
    /// Uniform unlabeled volumes, all classes on all clients.
    Iid,
    /// Dirichlet volume skew for pre-training, IID labeled data.
    VolumeSkew { alpha: f64 },
    /// IID unlabeled volumes, targeted label-space heterogeneity.
    LabelSkew {
        prevalence: f64,
        disparity: f64,
        method: Method,
    },
}

/// A cell plus its replicate seed; the unit of execution and persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub kind: CellKind,
    pub seed: u64,
}

impl Cell {
    /// Stable identifier; doubles as the completion marker in results files.
    pub fn key(&self) -> String {
        match &self.kind {
            CellKind::Iid => format!("iid/s{}", self.seed),
            CellKind::VolumeSkew { alpha } => format!("alpha{alpha}/s{}", self.seed),
            CellKind::LabelSkew {
                prevalence,
                disparity,
                method,
            } => format!("rho{prevalence}-sigma{disparity}-{method}/s{}", self.seed),
        }
    }

    fn method(&self) -> Method {
        match self.kind {
            CellKind::LabelSkew { method, .. } => method,
            _ => Method::Baseline,
        }
    }
}

/// One completed (or failed) cell, as persisted to `results.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultRow {
    pub cell: String,
    pub kind: String,
    pub method: Method,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub prevalence_target: Option<f64>,
    pub disparity_target: Option<f64>,
    pub realized_prevalence: Option<f64>,
    pub realized_disparity: Option<f64>,
    pub macro_accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// All rows of a run, in canonical cell order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HarnessError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: ResultRow = serde_json::from_str(line).map_err(|e| HarnessError::BadRow {
                line: i + 1,
                reason: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok(ResultTable { rows })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

/// The corpus reconstruction shared by every cell of a run.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub train: Manifest,
    pub test: Manifest,
    pub pool: Manifest,
    pub subsets: Vec<Manifest>,
    pub class_count: usize,
}

/// Run the reconstruction chain once per plan: load or generate, filter,
/// split, draw balanced subsets, and pool the unlabeled data.
pub fn prepare_corpus(plan: &ExperimentPlan) -> Result<PreparedCorpus, HarnessError> {
    let base: Manifest = match (&plan.corpus.synthetic, &plan.corpus.manifest_path) {
        (Some(spec), None) => generate_synthetic(spec)?.manifest,
        (None, Some(path)) => read_manifest(path)?,
        _ => return Err(HarnessError::InvalidPlan("ambiguous corpus source".into())),
    };
    let filtered = filter_min_count(&base, plan.corpus.min_count)?;
    let (train, test) = train_test_split(
        &filtered.kept,
        plan.corpus.test_fraction,
        derive(plan.corpus.split_seed, &[NS_SPLIT]),
    )?;
    let subsets = sample_labeled_subsets(
        &train,
        plan.federation.client_count,
        plan.labeled.samples_per_class,
        derive(plan.corpus.split_seed, &[NS_SUBSETS]),
    )?;
    let pool = build_unlabeled_pool(&train, &filtered.remainder)?;
    let class_count = train.class_count();
    Ok(PreparedCorpus {
        train,
        test,
        pool,
        subsets,
        class_count,
    })
}

fn volume_tag(kind: &CellKind) -> u64 {
    match kind {
        CellKind::VolumeSkew { alpha } => alpha.to_bits(),
        _ => 0,
    }
}

/// Pre-training cache key: pools and schedule are fully determined by the
/// volume mode and the replicate seed.
fn pretrain_cache_name(cell: &Cell) -> String {
    format!("pretrain-v{:016x}-s{}.ckpt", volume_tag(&cell.kind), cell.seed)
}

fn cached_pretrain(
    cache_dir: &Path,
    cell: &Cell,
    pools: &[Manifest],
    cfg: &FederationConfig,
) -> Result<ParamVector<f64>, HarnessError> {
    static TMP_ID: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let path = cache_dir.join(pretrain_cache_name(cell));
    if path.exists() {
        return Ok(load_checkpoint(&path)?);
    }
    // Concurrent cells may recompute the same key; the result is a pure
    // function of (pools, cfg), so last rename wins with identical bytes.
    let outcome = federated_pretrain(pools, cfg)?;
    let tmp = path.with_extension(format!(
        "tmp{}",
        TMP_ID.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
    ));
    save_checkpoint(&tmp, &outcome.encoder)?;
    fs::rename(&tmp, &path)?;
    Ok(outcome.encoder)
}

/// Execute one cell end to end. Module failures become error rows; the rest
/// of the run continues.
pub fn run_cell(
    prepared: &PreparedCorpus,
    plan: &ExperimentPlan,
    cell: &Cell,
    cache_dir: &Path,
) -> ResultRow {
    let (kind_name, alpha, prevalence_target, disparity_target) = match &cell.kind {
        CellKind::Iid => ("iid", None, None, None),
        CellKind::VolumeSkew { alpha } => ("volume_skew", Some(*alpha), None, None),
        CellKind::LabelSkew {
            prevalence,
            disparity,
            ..
        } => ("label_skew", None, Some(*prevalence), Some(*disparity)),
    };
    let mut row = ResultRow {
        cell: cell.key(),
        kind: kind_name.to_string(),
        method: cell.method(),
        seed: cell.seed,
        alpha,
        prevalence_target,
        disparity_target,
        realized_prevalence: None,
        realized_disparity: None,
        macro_accuracy: None,
        macro_f1: None,
        error: None,
    };

    let outcome = execute_cell(prepared, plan, cell, cache_dir);
    match outcome {
        Ok(done) => {
            row.realized_prevalence = done.realized.map(|(p, _)| p);
            row.realized_disparity = done.realized.map(|(_, d)| d);
            row.macro_accuracy = Some(done.macro_accuracy);
            row.macro_f1 = Some(done.macro_f1);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

struct CellOutcome {
    macro_accuracy: f64,
    macro_f1: f64,
    realized: Option<(f64, f64)>,
}

fn execute_cell(
    prepared: &PreparedCorpus,
    plan: &ExperimentPlan,
    cell: &Cell,
    cache_dir: &Path,
) -> Result<CellOutcome, HarnessError> {
    let clients = plan.federation.client_count;
    let vtag = volume_tag(&cell.kind);

    // Stage 1 data: volume split of the unlabeled pool.
    let mode = match &cell.kind {
        CellKind::VolumeSkew { alpha } => VolumeMode::Dirichlet(*alpha),
        _ => VolumeMode::Iid,
    };
    let volume = partition_unlabeled(
        prepared.pool.len(),
        clients,
        mode,
        derive(cell.seed, &[NS_VOLUME, vtag]),
    )?;
    let pools = materialize_volume_split(&prepared.pool, &volume)?;

    // Stage 1: federated pre-training (cached per volume mode and seed).
    let mut pretrain_cfg = plan.federation.clone();
    pretrain_cfg.seed = derive(cell.seed, &[NS_PRETRAIN, vtag]);
    let encoder = cached_pretrain(cache_dir, cell, &pools, &pretrain_cfg)?;

    // Stage 2 data: IID subsets or a targeted partition.
    let (splits, matrix, realized) = match &cell.kind {
        CellKind::LabelSkew {
            prevalence,
            disparity,
            ..
        } => {
            let target = PartitionTarget::new(
                *prevalence,
                *disparity,
                derive(
                    cell.seed,
                    &[NS_PREDI, prevalence.to_bits(), disparity.to_bits()],
                ),
            );
            let out = predi_partition(
                &prepared.subsets,
                &target,
                prepared.class_count,
                clients,
                plan.labeled.samples_per_class,
            )?;
            let stats = out.matrix.stats();
            let realized = (stats.mean_prevalence, stats.size_disparity);
            (out.client_manifests, out.matrix, Some(realized))
        }
        _ => (
            prepared.subsets.clone(),
            AssignmentMatrix::all_ones(prepared.class_count, clients),
            None,
        ),
    };

    // Stage 2: federated fine-tuning; the seed is method-independent so
    // baseline and prep runs of one seed pair exactly.
    let mut finetune_cfg = plan.federation.clone();
    let (rho_bits, sigma_bits) = match &cell.kind {
        CellKind::LabelSkew {
            prevalence,
            disparity,
            ..
        } => (prevalence.to_bits(), disparity.to_bits()),
        _ => (0, 0),
    };
    finetune_cfg.seed = derive(cell.seed, &[NS_FINETUNE, vtag, rho_bits, sigma_bits]);
    let use_prep = cell.method() == Method::Prep;
    let outcome = federated_finetune(&splits, &matrix, &encoder, &finetune_cfg, use_prep, None)?;

    let record = evaluate_global(&outcome.model, &prepared.test)?;
    Ok(CellOutcome {
        macro_accuracy: record.macro_accuracy,
        macro_f1: record.macro_f1,
        realized,
    })
}

/// Completed run: the full table plus where it was persisted.
#[derive(Debug)]
pub struct RunOutcome {
    pub table: ResultTable,
    pub results_path: PathBuf,
    pub failed: usize,
    pub resumed: usize,
}

fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Execute every cell of the plan, appending rows to
/// `<out_dir>/results.jsonl` in canonical order. Already-present rows are
/// treated as completion markers and skipped, so an interrupted run resumes
/// to the same bytes an uninterrupted one produces.
pub fn run_plan(plan: &ExperimentPlan, out_dir: impl AsRef<Path>) -> Result<RunOutcome, HarnessError> {
    plan.validate()?;
    let out_dir = out_dir.as_ref();
    let cache_dir = out_dir.join("cache");
    fs::create_dir_all(&cache_dir)?;
    let results_path = out_dir.join("results.jsonl");
    let timings_path = out_dir.join("timings.jsonl");

    let cells = plan.enumerate_cells();
    let existing = load_existing_rows(&results_path, &cells)?;
    let resumed = existing.len();

    let prepared = prepare_corpus(plan)?;
    let workers = workers_from_env();

    let mut rows = existing;
    let mut results_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&results_path)?;
    let mut timings_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&timings_path)?;

    let remaining = &cells[rows.len()..];
    for chunk in remaining.chunks(workers.max(1)) {
        let started = Instant::now();
        let chunk_rows: Vec<ResultRow> = if workers <= 1 || chunk.len() == 1 {
            chunk
                .iter()
                .map(|c| run_cell(&prepared, plan, c, &cache_dir))
                .collect()
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|c| scope.spawn(|| run_cell(&prepared, plan, c, &cache_dir)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("cell worker")).collect()
            })
        };
        let elapsed = started.elapsed().as_secs_f64();
        for row in chunk_rows {
            writeln!(results_file, "{}", serde_json::to_string(&row).expect("row"))?;
            writeln!(
                timings_file,
                "{}",
                serde_json::json!({"cell": row.cell, "chunk_seconds": elapsed})
            )?;
            rows.push(row);
        }
        results_file.flush()?;
    }

    let table = ResultTable { rows };
    let failed = table.failed();
    Ok(RunOutcome {
        table,
        results_path,
        failed,
        resumed,
    })
}

/// Read prior rows and verify they form a prefix of this plan's canonical
/// cell order. A trailing partial line (interrupted write) is dropped.
fn load_existing_rows(
    results_path: &Path,
    cells: &[Cell],
) -> Result<Vec<ResultRow>, HarnessError> {
    if !results_path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(results_path)?;
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut kept_len = 0usize;
    for line in text.split_inclusive('\n') {
        let complete = line.ends_with('\n');
        let body = line.trim_end_matches('\n');
        if body.is_empty() {
            kept_len += line.len();
            continue;
        }
        match serde_json::from_str::<ResultRow>(body) {
            Ok(row) if complete => {
                rows.push(row);
                kept_len += line.len();
            }
            _ => break, // partial or corrupt tail: recompute from here
        }
    }
    if kept_len < text.len() {
        fs::write(results_path, &text[..kept_len])?;
    }
    if rows.len() > cells.len() {
        return Err(HarnessError::ResumeMismatch(format!(
            "{} rows recorded but the plan has {} cells",
            rows.len(),
            cells.len()
        )));
    }
    for (row, cell) in rows.iter().zip(cells) {
        if row.cell != cell.key() {
            return Err(HarnessError::ResumeMismatch(format!(
                "row {:?} does not match expected cell {:?}",
                row.cell,
                cell.key()
            )));
        }
    }
    Ok(rows)
}
