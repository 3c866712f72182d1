//! Exhaustive enumeration of all `2^N` outcome sequences of a noiseless
//! feedback run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{adjust, FilterState};
use crate::measurement::{build_ops, MeasurementOps, MeasurementSetup, Outcome};
use crate::simulator::Controller;
use crate::{CavityState, Complex64, Displacer, Ket};

pub const MAX_TREE_DEPTH: usize = 20;
/// Branches less likely than this are dropped and their mass recorded.
pub const PRUNE_PROBABILITY: f64 = 1e-12;
/// Levels below this depth expand their two branches in parallel.
const PARALLEL_LEVELS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLeaf {
    /// Outcome string such as `"gge"`, first measurement first.
    pub outcomes: String,
    /// α of the adjustment followed by one α per measurement cycle.
    pub alphas: Vec<Complex64>,
    /// Conditional probability of each outcome given its prefix.
    pub step_probabilities: Vec<f64>,
    /// Fidelity after the adjustment and after each measurement.
    pub fidelities: Vec<f64>,
    pub probability: f64,
}

impl TreeLeaf {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelities.last().expect("fidelities are never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedBranch {
    pub outcomes: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTree {
    pub depth: usize,
    pub leaves: Vec<TreeLeaf>,
    pub pruned: Vec<PrunedBranch>,
}

impl TrajectoryTree {
    pub fn total_probability(&self) -> f64 {
        self.leaves.iter().map(|l| l.probability).sum()
    }

    pub fn pruned_mass(&self) -> f64 {
        self.pruned.iter().fold(0.0, |acc, p| acc + p.probability)
    }

    /// Probability-weighted mean of the fidelity after `step` measurements
    /// (0 is the post-adjustment value).
    pub fn mean_fidelity(&self, step: usize) -> f64 {
        self.weighted(|l| l.fidelities[step])
    }

    /// Probability-weighted expectation of any per-leaf quantity.
    pub fn weighted(&self, f: impl Fn(&TreeLeaf) -> f64) -> f64 {
        let total = self.total_probability();
        self.leaves.iter().map(|l| l.probability * f(l)).sum::<f64>() / total
    }
}

struct Ctx<'a> {
    target: &'a Ket,
    controller: &'a Controller,
    setup: &'a MeasurementSetup,
    ops: MeasurementOps<f64>,
    displacer: Displacer,
    depth: usize,
}

#[derive(Clone)]
struct Path {
    outcomes: String,
    alphas: Vec<Complex64>,
    step_probabilities: Vec<f64>,
    fidelities: Vec<f64>,
    probability: f64,
}

type Expansion = (Vec<TreeLeaf>, Vec<PrunedBranch>);

/// Noiseless expansion from `initial`: one adjustment displacement, then
/// `depth` measurement cycles with both outcomes followed at every node.
pub fn enumerate_tree(
    initial: &CavityState,
    target: &Ket,
    controller: &Controller,
    setup: &MeasurementSetup,
    depth: usize,
) -> Result<TrajectoryTree> {
    if depth > MAX_TREE_DEPTH {
        return Err(Error::DepthLimit {
            depth,
            max: MAX_TREE_DEPTH,
        });
    }
    let space = target.space();
    space.check(initial.dim())?;
    let ctx = Ctx {
        target,
        controller,
        setup,
        ops: build_ops(setup, space),
        displacer: Displacer::new(space),
        depth,
    };
    let start = FilterState::new(initial.clone());
    let alpha = controller.decide(&start, setup, 0)?.alpha;
    let node = adjust(&start, alpha, &ctx.displacer)?;
    let path = Path {
        outcomes: String::with_capacity(depth),
        alphas: vec![alpha],
        step_probabilities: Vec::with_capacity(depth),
        fidelities: vec![node.fidelity(target, setup)],
        probability: 1.0,
    };
    let (leaves, pruned) = expand(&ctx, node, path)?;
    Ok(TrajectoryTree { depth, leaves, pruned })
}

fn expand(ctx: &Ctx, node: FilterState<f64>, path: Path) -> Result<Expansion> {
    let level = path.step_probabilities.len();
    if level == ctx.depth {
        return Ok((
            vec![TreeLeaf {
                outcomes: path.outcomes,
                alphas: path.alphas,
                step_probabilities: path.step_probabilities,
                fidelities: path.fidelities,
                probability: path.probability,
            }],
            Vec::new(),
        ));
    }
    let alpha = ctx.controller.decide(&node, ctx.setup, level + 1)?.alpha;
    let displaced = ctx.displacer.apply(node.state(), alpha)?;
    let (p_g, p_e) = ctx.ops.probs(&displaced);
    let branch = |outcome: Outcome, p: f64| -> Result<Expansion> {
        let mut outcomes = path.outcomes.clone();
        outcomes.push(outcome.as_char());
        let probability = path.probability * p;
        if p < PRUNE_PROBABILITY {
            return Ok((Vec::new(), vec![PrunedBranch { outcomes, probability }]));
        }
        let child = FilterState::from_parts(ctx.ops.collapse(&displaced, outcome)?, node.step_index() + 1);
        let mut next = Path {
            outcomes,
            alphas: path.alphas.clone(),
            step_probabilities: path.step_probabilities.clone(),
            fidelities: path.fidelities.clone(),
            probability,
        };
        next.alphas.push(alpha);
        next.step_probabilities.push(p);
        next.fidelities.push(child.fidelity(ctx.target, ctx.setup));
        expand(ctx, child, next)
    };
    let (g, e) = if level < PARALLEL_LEVELS {
        rayon::join(|| branch(Outcome::G, p_g), || branch(Outcome::E, p_e))
    } else {
        (branch(Outcome::G, p_g), branch(Outcome::E, p_e))
    };
    let (mut leaves, mut pruned) = g?;
    let (le, pe) = e?;
    leaves.extend(le);
    pruned.extend(pe);
    Ok((leaves, pruned))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRow {
    pub outcomes: String,
    pub probability: f64,
    pub log10_probability: f64,
    pub fidelities: Vec<f64>,
    pub alphas: Vec<Complex64>,
}

/// One row per surviving trajectory, in outcome-string order.
pub fn tree_report(tree: &TrajectoryTree) -> Vec<TreeRow> {
    tree.leaves
        .iter()
        .map(|l| TreeRow {
            outcomes: l.outcomes.clone(),
            probability: l.probability,
            log10_probability: l.probability.log10(),
            fidelities: l.fidelities.clone(),
            alphas: l.alphas.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cr;
    use crate::states::Preset;
    use crate::FockSpace;

    fn setup_for(target: &Ket) -> MeasurementSetup {
        MeasurementSetup::for_target(target, None, None).unwrap()
    }

    fn benchmark() -> Ket {
        Preset::Benchmark.build(FockSpace::new(20).unwrap()).unwrap()
    }

    #[test]
    fn depth_one_zeno() {
        let t = benchmark();
        let s = setup_for(&t);
        let tree = enumerate_tree(&CavityState::Pure(t.clone()), &t, &Controller::Zero, &s, 1).unwrap();
        assert_eq!(tree.leaves.len(), 2);
        for l in &tree.leaves {
            assert!((l.final_fidelity() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn report_rows_and_probability_products() {
        let t = benchmark();
        let s = setup_for(&t);
        let ctl = Controller::lyapunov(&t, &s).unwrap();
        let vac = CavityState::Pure(Ket::basis(t.space(), 0).unwrap());
        let tree = enumerate_tree(&vac, &t, &ctl, &s, 2).unwrap();
        let rows = tree_report(&tree);
        let names: Vec<&str> = rows.iter().map(|r| r.outcomes.as_str()).collect();
        assert_eq!(names, ["gg", "ge", "eg", "ee"]);
        for (r, l) in rows.iter().zip(&tree.leaves) {
            let prod: f64 = l.step_probabilities.iter().product();
            assert!((r.probability - prod).abs() < 1e-12);
        }
        assert!((tree.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_subspace_start_never_gains_fidelity() {
        let t = benchmark();
        let s = setup_for(&t);
        let h = 0.5f64.sqrt();
        let start = Ket::from_components(t.space(), &[(0, cr(h)), (3, cr(h))]).unwrap();
        let tree = enumerate_tree(&CavityState::Pure(start), &t, &Controller::Zero, &s, 6).unwrap();
        assert!(!tree.leaves.is_empty());
        for l in &tree.leaves {
            assert!(l.fidelities.iter().all(|f| f.abs() < 1e-14));
        }
        assert!((tree.total_probability() + tree.pruned_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depth_guard() {
        let t = benchmark();
        let s = setup_for(&t);
        let r = enumerate_tree(&CavityState::Pure(t.clone()), &t, &Controller::Zero, &s, 21);
        assert!(matches!(r, Err(Error::DepthLimit { depth: 21, .. })));
    }
}
