//! Composite cost function and the two-stage optimization pipeline:
//! global particle-swarm search on the suspended membrane, then
//! derivative-free local refinement on the full stack.

mod pipeline;
mod powell;
mod pso;
mod surrogate;

pub use pipeline::{
    two_stage_optimize, CachedObjective, DesignObjective, EvalOutcome, MetricsSummary,
    OptimizationRun, PipelineConfig, PipelineResult, Stage, StageEvent,
};
pub use powell::{local_refine, PowellConfig};
pub use pso::{pso_run, PsoConfig};
pub use surrogate::SurrogateObjective;

use serde::{Deserialize, Serialize};

use crate::emission::EmissionMetrics;

/// Weights and targets of the composite cost.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub lambda0_nm: f64,
    /// Lowest acceptable Purcell factor.
    pub p0: f64,
    /// Conditioning extension: divide f1 by lambda0^2 and f2 by p0^2.
    #[serde(default)]
    pub normalized: bool,
}

impl CostWeights {
    pub fn standard(lambda0_nm: f64) -> Self {
        CostWeights {
            w1: 0.2,
            w2: 0.2,
            w3: 0.6,
            lambda0_nm,
            p0: 25.0,
            normalized: false,
        }
    }
}

/// Wavelength-targeting penalty (lambda - lambda0)^2, in nm^2.
pub fn f1(lambda_nm: f64, lambda0_nm: f64) -> f64 {
    (lambda_nm - lambda0_nm).powi(2)
}

/// Purcell shortfall penalty (P - P0)^2 / (1 + exp(P - P0 - 5)); the
/// sigmoid denominator releases the penalty once P clears P0.
pub fn f2(purcell: f64, p0: f64) -> f64 {
    (purcell - p0).powi(2) / (1.0 + (purcell - p0 - 5.0).exp())
}

/// Composite cost w1 f1 + w2 f2 - w3 C for explicit metric values, where C
/// is the collected-power term E_up * O_ff * NA_0.7.
pub fn cost_terms(lambda_nm: f64, purcell: f64, c_na07: f64, w: &CostWeights) -> f64 {
    let (n1, n2) = if w.normalized {
        (w.lambda0_nm * w.lambda0_nm, w.p0 * w.p0)
    } else {
        (1.0, 1.0)
    };
    w.w1 * f1(lambda_nm, w.lambda0_nm) / n1 + w.w2 * f2(purcell, w.p0) / n2 - w.w3 * c_na07
}

/// Cost of an analyzed run, evaluated at the resonance peak. Runs without
/// a peak in band are infeasible (+inf).
pub fn cost(metrics: &EmissionMetrics, w: &CostWeights) -> f64 {
    let Some(resonance) = metrics.resonance_nm else {
        return f64::INFINITY;
    };
    let Some(purcell) = metrics.purcell_at_resonance() else {
        return f64::INFINITY;
    };
    let Some(c) = metrics.at_resonance(&metrics.c_na07_cost) else {
        return f64::INFINITY;
    };
    cost_terms(resonance, purcell, c, w)
}

/// Search-space description for one optimization stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParameterSpace {
    pub fn new(names: &[&str], lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(names.len(), lo.len());
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "bounds must be ordered");
        ParameterSpace {
            names: names.iter().map(|s| s.to_string()).collect(),
            lo,
            hi,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn f1_hand_values() {
        assert_eq!(f1(930.0, 930.0), 0.0);
        assert_eq!(f1(935.0, 930.0), 25.0);
        assert_eq!(f1(925.0, 930.0), f1(935.0, 930.0));
    }

    #[test]
    fn f2_hand_values() {
        assert_eq!(f2(25.0, 25.0), 0.0);
        // Independent arithmetic for the hand-derived references.
        let expect_20 = 25.0 / (1.0 + (-10.0f64).exp());
        assert_relative_eq!(f2(20.0, 25.0), expect_20, max_relative = 1e-12);
        assert_relative_eq!(f2(20.0, 25.0), 24.9989, max_relative = 1e-5);
        let expect_35 = 100.0 / (1.0 + 5.0f64.exp());
        assert_relative_eq!(f2(35.0, 25.0), expect_35, max_relative = 1e-12);
        assert_relative_eq!(f2(35.0, 25.0), 0.6693, max_relative = 1e-4);
        // Exactly 12.5 at P0 + 5 (sigmoid at its midpoint).
        assert_eq!(f2(30.0, 25.0), 12.5);
    }

    #[test]
    fn cost_hand_values() {
        let w = CostWeights::standard(930.0);
        assert_eq!(cost_terms(930.0, 25.0, 0.0, &w), 0.0);
        let composite = cost_terms(930.0, 35.0, 0.9, &w);
        assert_relative_eq!(composite, 0.2 * f2(35.0, 25.0) - 0.54, max_relative = 1e-12);
        assert_relative_eq!(composite, -0.4061, max_relative = 2e-4);
        let off_target = cost_terms(935.0, 25.0, 0.9, &w);
        assert_relative_eq!(off_target, 0.2 * 25.0 - 0.54, max_relative = 1e-12);
        assert_relative_eq!(off_target, 4.46, max_relative = 1e-12);
    }

    #[test]
    fn normalized_cost_divides_penalties() {
        let mut w = CostWeights::standard(930.0);
        w.normalized = true;
        let c = cost_terms(935.0, 25.0, 0.0, &w);
        assert_relative_eq!(c, 0.2 * 25.0 / (930.0 * 930.0), max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn f2_is_bounded_by_quadratic_and_vanishes_at_infinity(p in -50.0..200.0f64) {
            let v = f2(p, 25.0);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= (p - 25.0).powi(2) + 1e-12);
        }

        #[test]
        fn cost_strictly_decreases_in_collection(c1 in 0.0..1.0f64, delta in 1e-6..0.5f64) {
            let w = CostWeights::standard(930.0);
            let c2 = (c1 + delta).min(1.5);
            prop_assert!(cost_terms(930.0, 30.0, c2, &w) < cost_terms(930.0, 30.0, c1, &w));
        }
    }

    #[test]
    fn f2_tail_vanishes() {
        assert!(f2(200.0, 25.0) < 1e-60);
    }
}
