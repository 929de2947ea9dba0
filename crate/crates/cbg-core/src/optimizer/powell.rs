//! Powell-style derivative-free local refinement: cyclic line searches
//! along a maintained direction set, with the classic direction-replacement
//! rule and bound-constrained golden-section line minimization.

use serde::{Deserialize, Serialize};

use super::pipeline::{EvalOutcome, OptimizationRun, StageEvent};
use super::ParameterSpace;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowellConfig {
    /// Stop when a full iteration moves every coordinate by less than this.
    pub step_tolerance: f64,
    pub max_evaluations: usize,
    /// Initial line-search step as a fraction of each bound range.
    pub initial_step_fraction: f64,
}

impl Default for PowellConfig {
    fn default() -> Self {
        PowellConfig {
            step_tolerance: 0.5,
            max_evaluations: 2000,
            initial_step_fraction: 0.1,
        }
    }
}

struct Budget<'a> {
    objective: &'a dyn Fn(&[f64]) -> EvalOutcome,
    run: OptimizationRun,
    evals: usize,
    max: usize,
}

impl<'a> Budget<'a> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let t0 = std::time::Instant::now();
        let out = (self.objective)(x);
        let cost = if out.cost.is_finite() { out.cost } else { f64::INFINITY };
        self.run.record(StageEvent {
            vector: x.to_vec(),
            cost,
            metrics: out.metrics,
            seconds: t0.elapsed().as_secs_f64(),
        });
        cost
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.max
    }
}

/// Feasible parameter interval [t_lo, t_hi] along direction d from x.
fn feasible_segment(x: &[f64], d: &[f64], space: &ParameterSpace) -> (f64, f64) {
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for i in 0..x.len() {
        if d[i].abs() < 1e-300 {
            continue;
        }
        let a = (space.lo[i] - x[i]) / d[i];
        let b = (space.hi[i] - x[i]) / d[i];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        t_lo = t_lo.max(lo);
        t_hi = t_hi.min(hi);
    }
    if !t_lo.is_finite() || !t_hi.is_finite() || t_lo > t_hi {
        (0.0, 0.0)
    } else {
        (t_lo, t_hi)
    }
}

/// Golden-section minimization of the objective along x + t d, starting
/// from a bracket grown around t = 0. Returns (t_best, cost_best).
fn line_minimize(
    x: &[f64],
    d: &[f64],
    f0: f64,
    h0: f64,
    space: &ParameterSpace,
    budget: &mut Budget,
) -> (f64, f64) {
    let (t_lo, t_hi) = feasible_segment(x, d, space);
    if t_hi - t_lo <= 0.0 {
        return (0.0, f0);
    }
    let point = |t: f64| -> Vec<f64> {
        let mut p: Vec<f64> = x.iter().zip(d).map(|(&xi, &di)| xi + t * di).collect();
        space.clamp(&mut p);
        p
    };

    // Find the descent scale: probe +-h, shrinking h toward zero until one
    // side improves (the minimum may sit arbitrarily close to t = 0 in a
    // curved valley). Physical floor well below the step tolerance.
    let d_mag = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let h_floor = 1e-3 / d_mag.max(1e-300);
    let mut h = h0.min((t_hi - t_lo) / 4.0).max(1e-12);
    let mut a;
    let mut b;
    #[allow(unused_assignments)]
    let mut m = 0.0;
    let mut fm = f0;
    loop {
        if budget.exhausted() {
            return (0.0, f0);
        }
        let hp = h.min(t_hi);
        let fp = budget.eval(&point(hp));
        if fp < fm {
            // March forward.
            a = 0.0;
            m = hp;
            fm = fp;
            loop {
                if budget.exhausted() {
                    return (m, fm);
                }
                let next = (m + h * 2.0).min(t_hi);
                if next <= m {
                    b = m;
                    break;
                }
                let fnx = budget.eval(&point(next));
                if fnx >= fm {
                    b = next;
                    break;
                }
                a = m;
                m = next;
                fm = fnx;
                h *= 2.0;
            }
            break;
        }
        let hb = (-h).max(t_lo);
        let fmn = budget.eval(&point(hb));
        if fmn < fm {
            b = 0.0;
            m = hb;
            fm = fmn;
            loop {
                if budget.exhausted() {
                    return (m, fm);
                }
                let next = (m - h * 2.0).max(t_lo);
                if next >= m {
                    a = m;
                    break;
                }
                let fnx = budget.eval(&point(next));
                if fnx >= fm {
                    a = next;
                    break;
                }
                b = m;
                m = next;
                fm = fnx;
                h *= 2.0;
            }
            break;
        }
        if h <= h_floor {
            // No improvement at any scale: t = 0 is the line minimum.
            return (0.0, f0);
        }
        h = (h / 4.0).max(h_floor);
    }

    // Golden-section on [a, b] keeping the best interior point.
    let gold = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - gold * (b - a);
    let mut x2 = a + gold * (b - a);
    let mut fx1 = if (x1 - m).abs() < 1e-15 { fm } else { budget.eval(&point(x1)) };
    let mut fx2 = if (x2 - m).abs() < 1e-15 { fm } else { budget.eval(&point(x2)) };
    for _ in 0..40 {
        if budget.exhausted() || (b - a) < 1e-9 {
            break;
        }
        if fx1 < fx2 {
            b = x2;
            x2 = x1;
            fx2 = fx1;
            x1 = b - gold * (b - a);
            fx1 = budget.eval(&point(x1));
        } else {
            a = x1;
            x1 = x2;
            fx1 = fx2;
            x2 = a + gold * (b - a);
            fx2 = budget.eval(&point(x2));
        }
        let span_small = (b - a)
            * d.iter().map(|v| v.abs()).fold(0.0, f64::max)
            < 0.05 * 1e-3;
        if span_small {
            break;
        }
    }
    let (t, f) = if fx1 < fx2 { (x1, fx1) } else { (x2, fx2) };
    if f < fm {
        (t, f)
    } else {
        (m, fm)
    }
}

/// Derivative-free local refinement from `start`. The result never has a
/// higher cost than the start point; termination is by per-parameter step
/// tolerance or the evaluation budget.
pub fn local_refine(
    objective: &dyn Fn(&[f64]) -> EvalOutcome,
    start: &[f64],
    space: &ParameterSpace,
    config: &PowellConfig,
) -> OptimizationRun {
    assert!(space.contains(start), "start must satisfy the bounds");
    let dim = space.dim();
    let mut budget = Budget {
        objective,
        run: OptimizationRun::new("powell", 0),
        evals: 0,
        max: config.max_evaluations,
    };

    let mut x = start.to_vec();
    let mut fx = budget.eval(&x);
    budget.run.push_trace(fx, &x);

    let axis_directions = |space: &ParameterSpace| -> Vec<Vec<f64>> {
        (0..dim)
            .map(|i| {
                let mut d = vec![0.0; dim];
                d[i] = space.hi[i] - space.lo[i];
                d
            })
            .collect()
    };
    // Direction set: coordinate axes scaled by the bound ranges. The set is
    // reset whenever a cycle converges; restarts continue while they still
    // improve the cost (standard practice for curved valleys).
    let mut directions = axis_directions(space);
    let mut f_at_restart = fx;

    while !budget.exhausted() {
        let x_old = x.clone();
        let f_old = fx;
        let mut biggest_drop = 0.0;
        let mut biggest_idx = 0;
        for (di, dir) in directions.iter().enumerate() {
            let (t, f) = line_minimize(&x, dir, fx, config.initial_step_fraction, space, &mut budget);
            if fx - f > biggest_drop {
                biggest_drop = fx - f;
                biggest_idx = di;
            }
            if f < fx {
                for i in 0..dim {
                    x[i] += t * dir[i];
                }
                space.clamp(&mut x);
                fx = f;
            }
            if budget.exhausted() {
                break;
            }
        }

        // Powell's direction update: when the standard test allows, minimize
        // along the net displacement of the cycle and adopt it in place of
        // the direction of the largest decrease. This is what lets the
        // method walk along diagonal valleys.
        let net: Vec<f64> = x.iter().zip(&x_old).map(|(a, b)| a - b).collect();
        if net.iter().any(|v| v.abs() > 0.0) && !budget.exhausted() {
            let mut extrapolated: Vec<f64> =
                x.iter().zip(&net).map(|(xi, ni)| xi + ni).collect();
            space.clamp(&mut extrapolated);
            let f_ex = budget.eval(&extrapolated);
            if f_ex < f_old {
                let t1 = f_old - fx - biggest_drop;
                let t2 = f_old - f_ex;
                let test = 2.0 * (f_old - 2.0 * fx + f_ex) * t1 * t1 - biggest_drop * t2 * t2;
                if test < 0.0 {
                    let (t, f) = line_minimize(&x, &net, fx, 1.0, space, &mut budget);
                    if f < fx {
                        for i in 0..dim {
                            x[i] += t * net[i];
                        }
                        space.clamp(&mut x);
                        fx = f;
                    }
                    directions[biggest_idx] = net;
                }
            }
        }
        budget.run.push_trace(fx, &x);

        let max_move = x
            .iter()
            .zip(&x_old)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if max_move < config.step_tolerance {
            if f_at_restart - fx <= 1e-10 * (1.0 + fx.abs()) {
                break;
            }
            directions = axis_directions(space);
            f_at_restart = fx;
        }
    }

    budget.run.finish(x, fx);
    budget.run
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(cost: f64) -> EvalOutcome {
        EvalOutcome { cost, metrics: None }
    }

    #[test]
    fn quadratic_bowl_converges_to_center() {
        let space = ParameterSpace::new(&["a", "b", "c"], vec![-10.0; 3], vec![10.0; 3]);
        let target = [1.5, -2.0, 0.25];
        let config = PowellConfig {
            step_tolerance: 1e-5,
            max_evaluations: 4000,
            ..PowellConfig::default()
        };
        let run = local_refine(
            &|x| {
                plain(
                    x.iter()
                        .zip(&target)
                        .map(|(v, t)| (v - t) * (v - t))
                        .sum(),
                )
            },
            &[8.0, 8.0, -8.0],
            &space,
            &config,
        );
        for (v, t) in run.best_vector.iter().zip(&target) {
            assert!((v - t).abs() < 1e-3, "{:?}", run.best_vector);
        }
    }

    #[test]
    fn start_at_optimum_returns_start() {
        let space = ParameterSpace::new(&["a", "b"], vec![-5.0; 2], vec![5.0; 2]);
        let run = local_refine(
            &|x| plain(x.iter().map(|v| v * v).sum()),
            &[0.0, 0.0],
            &space,
            &PowellConfig::default(),
        );
        assert_eq!(run.best_vector, vec![0.0, 0.0]);
        assert_eq!(run.best_cost, 0.0);
    }

    #[test]
    fn rosenbrock_under_1e_minus_2_within_2000_evals() {
        let rosenbrock =
            |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let space = ParameterSpace::new(&["x", "y"], vec![-5.0, -5.0], vec![5.0, 5.0]);
        let config = PowellConfig {
            step_tolerance: 1e-6,
            max_evaluations: 2000,
            initial_step_fraction: 0.02,
        };
        let run = local_refine(&|x| plain(rosenbrock(x)), &[-1.2, 1.0], &space, &config);
        println!(
            "rosenbrock: f = {:.3e} at {:?} after {} evals",
            run.best_cost,
            run.best_vector,
            run.evaluations.len()
        );
        assert!(run.best_cost < 1e-2, "rosenbrock f {}", run.best_cost);
        assert!(run.evaluations.len() <= 2000);
    }

    #[test]
    fn never_worse_than_start_and_stays_in_bounds() {
        let space = ParameterSpace::new(&["a", "b"], vec![0.0, 0.0], vec![1.0, 1.0]);
        // Adversarial non-smooth objective.
        let obj = |x: &[f64]| plain(((x[0] * 37.0).sin() * (x[1] * 11.0).cos()).abs() + 0.1);
        let start = [0.7, 0.3];
        let f_start = ((start[0] * 37.0f64).sin() * (start[1] * 11.0f64).cos()).abs() + 0.1;
        let run = local_refine(&obj, &start, &space, &PowellConfig::default());
        assert!(run.best_cost <= f_start + 1e-15);
        assert!(space.contains(&run.best_vector));
        for ev in &run.evaluations {
            assert!(space.contains(&ev.vector));
        }
    }
}
