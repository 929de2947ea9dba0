//! Two-stage optimization pipeline and its run artifacts.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{local_refine, pso_run, ParameterSpace, PowellConfig, PsoConfig};

/// Which model a design vector is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Suspended membrane in air, in-plane + thickness parameters
    /// (R, P, W, t_sc).
    Membrane,
    /// Full stack with spacer and mirror, (R, P, W, t_sc, t_s).
    FullStack,
}

/// Compact per-evaluation metrics kept in run artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub resonance_nm: Option<f64>,
    pub purcell: Option<f64>,
    pub e_up: Option<f64>,
    pub o_ff: Option<f64>,
    pub c_na07: Option<f64>,
    pub trusted: bool,
}

/// Objective evaluation result: cost plus optional metric detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub cost: f64,
    pub metrics: Option<MetricsSummary>,
}

/// One recorded evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEvent {
    pub vector: Vec<f64>,
    pub cost: f64,
    pub metrics: Option<MetricsSummary>,
    pub seconds: f64,
}

/// Everything one optimizer stage produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub stage_label: String,
    pub seed: u64,
    /// Global-best cost after initialization and after each iteration.
    pub best_cost_trace: Vec<f64>,
    /// Global-best vector matching each trace entry.
    pub best_vector_trace: Vec<Vec<f64>>,
    pub evaluations: Vec<StageEvent>,
    pub best_vector: Vec<f64>,
    pub best_cost: f64,
}

impl OptimizationRun {
    pub fn new(label: &str, seed: u64) -> Self {
        OptimizationRun {
            stage_label: label.to_string(),
            seed,
            best_cost_trace: Vec::new(),
            best_vector_trace: Vec::new(),
            evaluations: Vec::new(),
            best_vector: Vec::new(),
            best_cost: f64::INFINITY,
        }
    }

    pub fn record(&mut self, ev: StageEvent) {
        self.evaluations.push(ev);
    }

    pub fn push_trace(&mut self, cost: f64, vector: &[f64]) {
        self.best_cost_trace.push(cost);
        self.best_vector_trace.push(vector.to_vec());
    }

    pub fn finish(&mut self, vector: Vec<f64>, cost: f64) {
        self.best_vector = vector;
        self.best_cost = cost;
    }
}

/// A design objective the pipeline can drive: maps a parameter vector to a
/// cost under the given stage's physical model.
pub trait DesignObjective: Sync {
    fn evaluate(&self, stage: Stage, vector: &[f64]) -> EvalOutcome;
    fn label(&self) -> &str;
}

/// Pipeline configuration: search spaces, budgets, and the stage-2 start
/// value for the spacer thickness.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub membrane_space: ParameterSpace,
    pub full_space: ParameterSpace,
    pub pso: PsoConfig,
    pub powell: PowellConfig,
    /// Initial spacer thickness appended to the stage-1 best when seeding
    /// stage 2.
    pub spacer_start_nm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub stage1: OptimizationRun,
    pub stage2: OptimizationRun,
}

impl PipelineResult {
    pub fn final_vector(&self) -> &[f64] {
        &self.stage2.best_vector
    }

    pub fn final_cost(&self) -> f64 {
        self.stage2.best_cost
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage 1 found no feasible design (all evaluations failed)")]
    AllInfeasible,
    #[error("artifact i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact encoding error: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Runs the two-stage pipeline: global PSO on the suspended-membrane model,
/// then Powell refinement on the full stack seeded by the stage-1 best with
/// the configured spacer start.
pub fn two_stage_optimize(
    objective: &dyn DesignObjective,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let mut stage1 = pso_run(
        &|x: &[f64]| objective.evaluate(Stage::Membrane, x),
        &config.membrane_space,
        &config.pso,
    );
    stage1.stage_label = "stage1-pso-membrane".into();
    if !stage1.best_cost.is_finite() {
        return Err(PipelineError::AllInfeasible);
    }

    let mut start = stage1.best_vector.clone();
    start.push(config.spacer_start_nm);
    config.full_space.clamp(&mut start);

    let mut stage2 = local_refine(
        &|x: &[f64]| objective.evaluate(Stage::FullStack, x),
        &start,
        &config.full_space,
        &config.powell,
    );
    stage2.stage_label = "stage2-powell-fullstack".into();
    stage2.seed = config.pso.seed;

    Ok(PipelineResult { stage1, stage2 })
}

/// Content-addressed evaluation cache: wraps an objective and memoizes
/// outcomes on disk keyed by the exact bit pattern of the request, so a
/// resumed run re-evaluates nothing it has already seen.
pub struct CachedObjective<'a> {
    inner: &'a dyn DesignObjective,
    dir: PathBuf,
    /// Extra context folded into the key (mesh profile, weights, band).
    context: String,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<'a> CachedObjective<'a> {
    pub fn new(
        inner: &'a dyn DesignObjective,
        dir: PathBuf,
        context: String,
    ) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(CachedObjective {
            inner,
            dir,
            context,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn key(&self, stage: Stage, vector: &[f64]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.context.as_bytes());
        hasher.update(match stage {
            Stage::Membrane => b"membrane",
            Stage::FullStack => b"fullstack" as &[u8],
        });
        for v in vector {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    vector: Vec<f64>,
    stage: Stage,
    outcome: EvalOutcome,
}

impl DesignObjective for CachedObjective<'_> {
    fn evaluate(&self, stage: Stage, vector: &[f64]) -> EvalOutcome {
        let path = self.dir.join(format!("{}.json", self.key(stage, vector)));
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return entry.outcome;
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let outcome = self.inner.evaluate(stage, vector);
        let entry = CacheEntry {
            vector: vector.to_vec(),
            stage,
            outcome: outcome.clone(),
        };
        if let Ok(text) = serde_json::to_string(&entry) {
            let tmp = path.with_extension("tmp");
            if std::fs::write(&tmp, text).is_ok() {
                let _ = std::fs::rename(&tmp, &path);
            }
        }
        outcome
    }

    fn label(&self) -> &str {
        self.inner.label()
    }
}
