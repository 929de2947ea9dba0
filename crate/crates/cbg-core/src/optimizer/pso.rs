//! Bound-constrained global-best particle swarm optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{EvalOutcome, OptimizationRun, StageEvent};
use super::ParameterSpace;

/// Swarm hyperparameters. Defaults are the standard constriction values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Velocity clamp as a fraction of each parameter's bound range.
    pub velocity_clamp: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 20,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            iterations: 50,
            seed: 0,
            velocity_clamp: 0.5,
        }
    }
}

/// Runs global-best PSO on the objective. Evaluations within an iteration
/// may run concurrently; best-selection is by index order, so the result is
/// deterministic for a given seed regardless of worker count. Failed
/// evaluations (non-finite cost) mark the particle infeasible for that
/// position and the run continues.
pub fn pso_run(
    objective: &(dyn Fn(&[f64]) -> EvalOutcome + Sync),
    space: &ParameterSpace,
    config: &PsoConfig,
) -> OptimizationRun {
    assert!(config.swarm_size >= 2, "swarm size must be at least 2");
    assert!(
        config.cognitive > 0.0 && config.social > 0.0,
        "acceleration coefficients must be positive"
    );
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let range: Vec<f64> = space.hi.iter().zip(&space.lo).map(|(h, l)| h - l).collect();

    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(config.swarm_size);
    let mut velocities: Vec<Vec<f64>> = Vec::with_capacity(config.swarm_size);
    for _ in 0..config.swarm_size {
        let mut x = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        for d in 0..dim {
            x[d] = rng.gen_range(space.lo[d]..=space.hi[d]);
            v[d] = rng.gen_range(-1.0..=1.0) * config.velocity_clamp * range[d];
        }
        positions.push(x);
        velocities.push(v);
    }

    let mut run = OptimizationRun::new("pso", config.seed);
    let evaluate_all = |positions: &[Vec<f64>]| -> Vec<(EvalOutcome, f64)> {
        positions
            .par_iter()
            .map(|x| {
                let t0 = std::time::Instant::now();
                let out = objective(x);
                (out, t0.elapsed().as_secs_f64())
            })
            .collect()
    };

    let mut personal_best = positions.clone();
    let mut personal_cost = vec![f64::INFINITY; config.swarm_size];
    let mut global_best = positions[0].clone();
    let mut global_cost = f64::INFINITY;

    let outcomes = evaluate_all(&positions);
    for (p, (out, secs)) in outcomes.into_iter().enumerate() {
        let cost = if out.cost.is_finite() { out.cost } else { f64::INFINITY };
        run.record(StageEvent {
            vector: positions[p].clone(),
            cost,
            metrics: out.metrics,
            seconds: secs,
        });
        personal_cost[p] = cost;
        if cost < global_cost {
            global_cost = cost;
            global_best = positions[p].clone();
        }
    }
    run.push_trace(global_cost, &global_best);

    for _ in 0..config.iterations {
        for p in 0..config.swarm_size {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = config.inertia * velocities[p][d]
                    + config.cognitive * r1 * (personal_best[p][d] - positions[p][d])
                    + config.social * r2 * (global_best[d] - positions[p][d]);
                let clamp = config.velocity_clamp * range[d];
                velocities[p][d] = v.clamp(-clamp, clamp);
                positions[p][d] += velocities[p][d];
            }
            space.clamp(&mut positions[p]);
        }
        let outcomes = evaluate_all(&positions);
        for (p, (out, secs)) in outcomes.into_iter().enumerate() {
            let cost = if out.cost.is_finite() { out.cost } else { f64::INFINITY };
            run.record(StageEvent {
                vector: positions[p].clone(),
                cost,
                metrics: out.metrics,
                seconds: secs,
            });
            if cost < personal_cost[p] {
                personal_cost[p] = cost;
                personal_best[p] = positions[p].clone();
            }
            if cost < global_cost {
                global_cost = cost;
                global_best = positions[p].clone();
            }
        }
        run.push_trace(global_cost, &global_best);
    }

    run.finish(global_best, global_cost);
    run
}
