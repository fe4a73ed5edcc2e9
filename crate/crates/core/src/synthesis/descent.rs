//! Coordinate search on `ρ(Â(K))` with a shrinking step.

use super::{GroupProblem, SynthesisConfig};

pub(crate) struct DescentOutcome {
    pub k: Vec<f64>,
    pub evaluations: usize,
}

pub(crate) fn run(prob: &GroupProblem, cfg: &SynthesisConfig, target: f64, start: Vec<f64>) -> DescentOutcome {
    let mut k = start;
    let mut best = prob.radius(&k);
    let mut evaluations = 1;
    let mut step = cfg.descent_initial_step;
    // Keep improving past the target until the step collapses, but stop
    // spending evaluations once well inside it.
    let comfortable = target - 0.02;
    while step >= cfg.descent_min_step && evaluations < cfg.descent_max_evals && best >= comfortable {
        let mut improved = false;
        for e in 0..k.len() {
            for dir in [1.0, -1.0] {
                let old = k[e];
                k[e] = old + dir * step;
                let r = prob.radius(&k);
                evaluations += 1;
                if r < best {
                    best = r;
                    improved = true;
                    break;
                }
                k[e] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    DescentOutcome { k, evaluations }
}
