//! Branch-and-bound MILP solver on top of the LP solver.
//!
//! Deterministic search: branch on the most fractional variable (ties by
//! lowest column index), push the <= branch first, explore best-first on the
//! LP bound with FIFO tie-breaks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::simplex::{solve_lp_with, Basis, SimplexOptions};

pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
    /// 0 at proven optimality.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub node_limit: usize,
    /// Known upper bound on the optimum, used only for pruning; the solver
    /// still proves optimality itself.
    pub incumbent_hint: Option<f64>,
    pub lp: SimplexOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            node_limit: 1_000_000,
            incumbent_hint: None,
            lp: SimplexOptions::default(),
        }
    }
}

struct Node {
    bound: f64,
    seq: usize,
    bounds: Vec<(f64, f64)>,
    x: Vec<f64>,
    basis: Basis,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the lowest bound pops first,
        // then FIFO on the sequence number.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn most_fractional(model: &LinearModel, x: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut best_frac = INT_TOL;
    for (j, v) in model.vars.iter().enumerate() {
        if v.integer {
            let f = (x[j] - x[j].round()).abs();
            if f > best_frac {
                best_frac = f;
                best = Some(j);
            }
        }
    }
    best
}

fn with_bounds(model: &LinearModel, bounds: &[(f64, f64)]) -> LinearModel {
    let mut relaxed = model.lp_relaxation();
    for (v, &(lb, ub)) in relaxed.vars.iter_mut().zip(bounds) {
        v.lb = lb;
        v.ub = ub;
    }
    relaxed
}

pub fn solve_milp(model: &LinearModel) -> Result<MilpSolution> {
    solve_milp_with(model, &BnbOptions::default())
}

pub fn solve_milp_with(model: &LinearModel, opts: &BnbOptions) -> Result<MilpSolution> {
    let root_bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lb, v.ub)).collect();
    let mut nodes_solved = 0usize;
    let mut seq = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut cutoff = opts.incumbent_hint.unwrap_or(f64::INFINITY);

    let root_lp = with_bounds(model, &root_bounds);
    nodes_solved += 1;
    let root_sol = match solve_lp_with(&root_lp, None, &opts.lp) {
        Ok(s) => s,
        Err(Error::Infeasible(_)) => {
            return Ok(MilpSolution {
                status: MilpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::INFINITY,
                nodes: nodes_solved,
                gap: 0.0,
            })
        }
        Err(e) => return Err(e),
    };

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: root_sol.objective,
        seq,
        bounds: root_bounds,
        x: root_sol.x,
        basis: root_sol.basis,
    });

    while let Some(node) = heap.pop() {
        if node.bound >= cutoff - 1e-9 {
            // Best-first: every remaining node is at least as bad.
            break;
        }
        match most_fractional(model, &node.x) {
            None => {
                // Integer feasible: fix the integers to their rounded values
                // and re-solve for clean continuous values.
                let mut fixed = node.bounds.clone();
                for (j, v) in model.vars.iter().enumerate() {
                    if v.integer {
                        let r = node.x[j].round();
                        fixed[j] = (r, r);
                    }
                }
                let lp = with_bounds(model, &fixed);
                nodes_solved += 1;
                if let Ok(sol) = solve_lp_with(&lp, Some(&node.basis), &opts.lp) {
                    if sol.objective < cutoff - 1e-9 {
                        cutoff = sol.objective;
                        incumbent = Some((sol.objective, sol.x));
                    }
                }
            }
            Some(j) => {
                let xj = node.x[j];
                let floor = xj.floor();
                // <= branch first, then >= branch.
                for (lb, ub) in [(node.bounds[j].0, floor), (floor + 1.0, node.bounds[j].1)] {
                    if lb > ub {
                        continue;
                    }
                    if nodes_solved >= opts.node_limit {
                        return Err(Error::NodeLimit(nodes_solved));
                    }
                    let mut bounds = node.bounds.clone();
                    bounds[j] = (lb, ub);
                    let lp = with_bounds(model, &bounds);
                    nodes_solved += 1;
                    match solve_lp_with(&lp, Some(&node.basis), &opts.lp) {
                        Ok(sol) => {
                            // Child LP bound never drops below the parent's.
                            debug_assert!(
                                sol.objective >= node.bound - 1e-6 * (1.0 + node.bound.abs())
                            );
                            if sol.objective < cutoff - 1e-9 {
                                seq += 1;
                                heap.push(Node {
                                    bound: sol.objective,
                                    seq,
                                    bounds,
                                    x: sol.x,
                                    basis: sol.basis,
                                });
                            }
                        }
                        Err(Error::Infeasible(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }

    match incumbent {
        Some((obj, x)) => {
            let mut x = x;
            for (j, v) in model.vars.iter().enumerate() {
                if v.integer {
                    x[j] = x[j].round();
                }
            }
            Ok(MilpSolution {
                status: MilpStatus::Optimal,
                x,
                objective: obj,
                nodes: nodes_solved,
                gap: 0.0,
            })
        }
        None => Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            x: Vec::new(),
            objective: f64::INFINITY,
            nodes: nodes_solved,
            gap: 0.0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RowTag, Sense, VarKind};

    #[test]
    fn integral_relaxation_solves_at_root() {
        // min -x s.t. x <= 1, x binary: LP optimum already integral.
        let mut m = LinearModel::new();
        m.add_var(VarKind::Generic, 0.0, 1.0, true, -1.0);
        let sol = solve_milp(&m).unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert_eq!(sol.x[0], 1.0);
        // root LP + the clean-up resolve
        assert!(sol.nodes <= 2);
    }

    #[test]
    fn knapsack_small() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, binaries.
        // Optimal: a = 1, c = 1 (value 8) vs a+b (9, weight 5 ok!) -> a=1,b=1 weight 5, value 9.
        let mut m = LinearModel::new();
        let a = m.add_var(VarKind::Generic, 0.0, 1.0, true, -5.0);
        let b = m.add_var(VarKind::Generic, 0.0, 1.0, true, -4.0);
        let c = m.add_var(VarKind::Generic, 0.0, 1.0, true, -3.0);
        m.add_row(
            vec![(a, 2.0), (b, 3.0), (c, 1.0)],
            Sense::Le,
            5.0,
            RowTag::Generic,
        );
        let sol = solve_milp(&m).unwrap();
        assert!((sol.objective + 9.0).abs() < 1e-9);
        assert_eq!((sol.x[0], sol.x[1], sol.x[2]), (1.0, 1.0, 0.0));
    }

    #[test]
    fn infeasible_integer_program() {
        // x binary, 0.4 <= x <= 0.6 impossible.
        let mut m = LinearModel::new();
        let x = m.add_var(VarKind::Generic, 0.0, 1.0, true, 1.0);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 0.4, RowTag::Generic);
        m.add_row(vec![(x, 1.0)], Sense::Le, 0.6, RowTag::Generic);
        let sol = solve_milp(&m).unwrap();
        assert_eq!(sol.status, MilpStatus::Infeasible);
    }

    #[test]
    fn node_limit_is_an_error() {
        let mut m = LinearModel::new();
        let a = m.add_var(VarKind::Generic, 0.0, 1.0, true, -1.0);
        let b = m.add_var(VarKind::Generic, 0.0, 1.0, true, -1.0);
        // LP vertex a = 1, b = 0.5 is fractional, so branching is required.
        m.add_row(vec![(a, 2.0), (b, 2.0)], Sense::Le, 3.0, RowTag::Generic);
        let opts = BnbOptions {
            node_limit: 1,
            ..Default::default()
        };
        assert!(matches!(
            solve_milp_with(&m, &opts),
            Err(Error::NodeLimit(_))
        ));
    }
}
