use cbg_core::geometry::presets;
use cbg_core::optimizer::*;

fn main() {
    let weights = CostWeights::standard(930.0);
    let s = SurrogateObjective::for_design(&presets::cbg930(), weights);
    let space = s.full_space();
    let start = vec![421.86765472865943, 344.2841595842264, 86.53159402103941, 159.04976926141478, 200.0];
    let cfg = PowellConfig { step_tolerance: 0.5, max_evaluations: 12000, initial_step_fraction: 0.1 };
    let run = local_refine(&|x: &[f64]| s.evaluate(Stage::FullStack, x), &start, &space, &cfg);
    println!("final cost {:.6} at {:?} after {} evals, {} cycles",
        run.best_cost, run.best_vector, run.evaluations.len(), run.best_cost_trace.len());
    for (i, (c, v)) in run.best_cost_trace.iter().zip(&run.best_vector_trace).enumerate() {
        println!("cycle {i:3}: cost {c:.8} at [{:.3} {:.3} {:.3} {:.3} {:.3}]", v[0], v[1], v[2], v[3], v[4]);
        if i > 25 { println!("..."); break; }
    }
    println!("cost at star: {:.6}", s.evaluate(Stage::FullStack, &[405.0, 357.0, 80.0, 153.0, 200.0]).cost);
}
