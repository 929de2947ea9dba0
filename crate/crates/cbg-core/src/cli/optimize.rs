//! `cbg optimize`: the two-stage pipeline with resumable, content-addressed
//! evaluation caching and deterministic run artifacts.

use clap::Args;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

use super::{grid_bytes_cap, parse_mesh, resolve_design, CliError, OutputDir};
use crate::geometry::{save_design, CbgDesign};
use crate::optimizer::{
    two_stage_optimize, CachedObjective, CostWeights, DesignObjective, OptimizationRun,
    ParameterSpace, PipelineConfig, PowellConfig, PsoConfig, Stage, SurrogateObjective,
};
use crate::runner::{design_from_vector, Band, FdtdObjective, RunOptions};

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Optimization config file (JSON); defaults are derived from the
    /// template design when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Use the analytic cavity surrogate instead of FDTD runs.
    #[arg(long)]
    pub surrogate: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Reuse cached evaluations in the output directory.
    #[arg(long)]
    pub resume: bool,
}

/// Bounds per stage parameter, [lo, hi] in nm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub r_nm: [f64; 2],
    pub p_nm: [f64; 2],
    pub w_nm: [f64; 2],
    pub t_sc_nm: [f64; 2],
    pub t_s_nm: [f64; 2],
}

/// On-disk optimization configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeConfigFile {
    pub weights: CostWeights,
    pub bounds: BoundsConfig,
    pub pso: PsoConfig,
    pub powell: PowellConfig,
    #[serde(default = "default_mesh")]
    pub mesh: String,
    pub band: Band,
    #[serde(default = "default_na")]
    pub na: Vec<f64>,
    #[serde(default)]
    pub surrogate: bool,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub flux_samples: Option<usize>,
}

fn default_mesh() -> String {
    "desk".into()
}

fn default_na() -> Vec<f64> {
    vec![0.4, 0.7, 1.0]
}

impl OptimizeConfigFile {
    /// Sensible defaults centered on a template design.
    pub fn for_design(design: &CbgDesign) -> Self {
        let weights = CostWeights::standard(design.target_wavelength_nm);
        let surrogate = SurrogateObjective::for_design(design, weights);
        let m = surrogate.membrane_space();
        let f = surrogate.full_space();
        OptimizeConfigFile {
            weights,
            bounds: BoundsConfig {
                r_nm: [m.lo[0], m.hi[0]],
                p_nm: [m.lo[1], m.hi[1]],
                w_nm: [m.lo[2], m.hi[2]],
                t_sc_nm: [m.lo[3], m.hi[3]],
                t_s_nm: [f.lo[4], f.hi[4]],
            },
            pso: PsoConfig::default(),
            powell: PowellConfig {
                // The stage-2 walk down the wavelength-compensation valley
                // takes many cycles; the budget is generous because each
                // stage-2 evaluation is one local model run.
                max_evaluations: 12_000,
                ..PowellConfig::default()
            },
            mesh: "desk".into(),
            band: Band::around(design.target_wavelength_nm),
            na: default_na(),
            surrogate: false,
            max_steps: None,
            flux_samples: Some(9),
        }
    }

    pub fn membrane_space(&self) -> ParameterSpace {
        ParameterSpace::new(
            &["inner_radius_nm", "grating_period_nm", "etch_width_nm", "t_sc_nm"],
            vec![self.bounds.r_nm[0], self.bounds.p_nm[0], self.bounds.w_nm[0], self.bounds.t_sc_nm[0]],
            vec![self.bounds.r_nm[1], self.bounds.p_nm[1], self.bounds.w_nm[1], self.bounds.t_sc_nm[1]],
        )
    }

    pub fn full_space(&self) -> ParameterSpace {
        ParameterSpace::new(
            &[
                "inner_radius_nm",
                "grating_period_nm",
                "etch_width_nm",
                "t_sc_nm",
                "t_s_nm",
            ],
            vec![
                self.bounds.r_nm[0],
                self.bounds.p_nm[0],
                self.bounds.w_nm[0],
                self.bounds.t_sc_nm[0],
                self.bounds.t_s_nm[0],
            ],
            vec![
                self.bounds.r_nm[1],
                self.bounds.p_nm[1],
                self.bounds.w_nm[1],
                self.bounds.t_sc_nm[1],
                self.bounds.t_s_nm[1],
            ],
        )
    }
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<(), CliError> {
    let template = resolve_design(&args.design, &args.preset)?;
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config: {e}")))?;
            serde_json::from_str::<OptimizeConfigFile>(&text)
                .map_err(|e| CliError::usage(format!("bad optimization config: {e}")))?
        }
        None => OptimizeConfigFile::for_design(&template),
    };
    if args.surrogate {
        config.surrogate = true;
    }
    if let Some(seed) = args.seed {
        config.pso.seed = seed;
    }
    if config.bounds.w_nm[0] < crate::geometry::MIN_ETCH_WIDTH_NM {
        return Err(CliError::usage(format!(
            "etch-width lower bound {} nm violates the {} nm minimum",
            config.bounds.w_nm[0],
            crate::geometry::MIN_ETCH_WIDTH_NM
        )));
    }
    let mesh = parse_mesh(&config.mesh)?;

    let mut out = OutputDir::prepare(&args.out, args.force, args.resume)?;

    // Context string folded into every cache key: anything that changes the
    // meaning of an evaluation must appear here.
    let context = serde_json::to_string(&serde_json::json!({
        "surrogate": config.surrogate,
        "weights": config.weights,
        "mesh": config.mesh,
        "band": config.band,
        "na": config.na,
        "max_steps": config.max_steps,
        "flux_samples": config.flux_samples,
        "template": template,
    }))
    .expect("cache context");

    let pipeline_config = PipelineConfig {
        membrane_space: config.membrane_space(),
        full_space: config.full_space(),
        pso: config.pso.clone(),
        powell: config.powell.clone(),
        spacer_start_nm: spacer_start(&template, &config),
    };

    let surrogate_obj;
    let fdtd_obj;
    let inner: &dyn DesignObjective = if config.surrogate {
        surrogate_obj = SurrogateObjective::for_design(&template, config.weights);
        &surrogate_obj
    } else {
        let mut opts = RunOptions::new(&template, mesh);
        opts.band = config.band;
        opts.na_values = config.na.clone();
        if let Some(max_steps) = config.max_steps {
            opts.max_steps = max_steps;
        }
        opts.flux_samples = config.flux_samples;
        opts.max_grid_bytes = grid_bytes_cap();
        fdtd_obj = FdtdObjective {
            template: template.clone(),
            weights: config.weights,
            opts,
        };
        &fdtd_obj
    };
    let cached = CachedObjective::new(inner, out.path("evals"), context)
        .map_err(|e| CliError::numerical(format!("cannot open eval cache: {e}")))?;

    let result = two_stage_optimize(&cached, &pipeline_config)
        .map_err(|e| CliError::numerical(format!("optimization failed: {e}")))?;

    write_trace_csv(&[&result.stage1, &result.stage2], &out.path("trace.csv"))?;
    out.track("trace.csv")?;

    let best_design = design_from_vector(&template, Stage::FullStack, result.final_vector());
    save_design(&best_design, &out.path("best_design.json"))
        .map_err(|e| CliError::numerical(format!("cannot write best design: {e}")))?;
    out.track("best_design.json")?;

    out.write_manifest(serde_json::json!({
        "command": "optimize",
        "seed": config.pso.seed,
        "surrogate": config.surrogate,
        "mesh": config.mesh,
        "weights": config.weights,
        "bounds": config.bounds,
        "pso": config.pso,
        "powell": config.powell,
        "stage1": {
            "label": result.stage1.stage_label,
            "best_vector": result.stage1.best_vector,
            "best_cost": result.stage1.best_cost,
            "evaluations": result.stage1.evaluations.len(),
        },
        "stage2": {
            "label": result.stage2.stage_label,
            "best_vector": result.stage2.best_vector,
            "best_cost": result.stage2.best_cost,
            "evaluations": result.stage2.evaluations.len(),
        },
        "cache": {"hits": cached.hits(), "misses": cached.misses()},
    }))?;

    println!(
        "optimize: stage1 best {:.6}, stage2 best {:.6} at {:?} (cache {} hits / {} misses)",
        result.stage1.best_cost,
        result.stage2.best_cost,
        result.final_vector(),
        cached.hits(),
        cached.misses()
    );
    Ok(())
}

/// Stage-2 spacer start: the template's spacer thickness when present,
/// otherwise the middle of the spacer bounds.
fn spacer_start(template: &CbgDesign, config: &OptimizeConfigFile) -> f64 {
    let start = template.stack.membrane_start();
    if start > 0 {
        template.stack.layers()[start - 1].thickness_nm
    } else {
        0.5 * (config.bounds.t_s_nm[0] + config.bounds.t_s_nm[1])
    }
}

/// Writes the combined best-cost trace of both stages with a stable layout
/// and formatting, so identical runs produce byte-identical files.
pub fn write_trace_csv(stages: &[&OptimizationRun], path: &std::path::Path) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path)
            .map_err(|e| CliError::numerical(format!("cannot write trace.csv: {e}")))?,
    );
    let werr = |e: std::io::Error| CliError::numerical(format!("trace.csv write error: {e}"));
    writeln!(
        w,
        "stage,iteration,best_cost,inner_radius_nm,grating_period_nm,etch_width_nm,t_sc_nm,t_s_nm"
    )
    .map_err(werr)?;
    for stage in stages {
        for (it, (cost, vector)) in stage
            .best_cost_trace
            .iter()
            .zip(&stage.best_vector_trace)
            .enumerate()
        {
            let mut fields: Vec<String> = vector.iter().map(|v| format!("{v:.9e}")).collect();
            while fields.len() < 5 {
                fields.push(String::new());
            }
            writeln!(
                w,
                "{},{},{:.9e},{}",
                stage.stage_label,
                it,
                cost,
                fields.join(",")
            )
            .map_err(werr)?;
        }
    }
    Ok(())
}
