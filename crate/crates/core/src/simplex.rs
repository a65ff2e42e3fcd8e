//! Bounded-variable revised primal simplex with two phases and dual values
//! from the final basis.
//!
//! Rows a'x {<=,>=,=} b become a'x + s = b with a bounded slack per row
//! (<=: s in [0, inf), >=: s in (-inf, 0], =: s fixed at 0), so the dual of a
//! >= row is nonnegative when minimizing. Phase 1 starts from the slack basis
//! with artificial columns only on rows whose residual does not fit the slack
//! bounds, and minimizes the artificial sum. Pivoting is deterministic:
//! Dantzig pricing with lowest-index tie-breaks, Bland's rule as the
//! anti-cycling fallback.

use crate::error::{Error, Result};
use crate::lu::LuFactors;
use crate::model::{LinearModel, Sense};

pub const TOL_FEAS: f64 = 1e-7;
pub const TOL_GAP: f64 = 1e-7;
pub const TOL_CS: f64 = 1e-6;
const TOL_DJ: f64 = 1e-9;
const TOL_PIV: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const BLAND_TRIGGER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

/// Final basis snapshot, reusable as a warm start for a model with the same
/// shape (e.g. a new right-hand side between allocation rounds).
#[derive(Debug, Clone)]
pub struct Basis {
    /// Column occupying each basis position (structurals then slacks).
    pub cols: Vec<usize>,
    /// State per column.
    pub states: Vec<VarState>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values of the structural variables.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual value per constraint row.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 1_000_000,
        }
    }
}

struct StdForm {
    m: usize,
    n_struct: usize,
    /// structural + slack columns; artificials are appended by the solver.
    cols: Vec<Vec<(usize, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
}

fn standard_form(model: &LinearModel) -> Result<StdForm> {
    let m = model.num_rows();
    let n = model.num_vars();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
    let mut lb = Vec::with_capacity(n + m);
    let mut ub = Vec::with_capacity(n + m);
    let mut cost = vec![0.0; n + m];
    for (j, v) in model.vars.iter().enumerate() {
        if v.integer {
            return Err(Error::Model(
                "LP solver given a model with integrality flags".into(),
            ));
        }
        if !v.lb.is_finite() && !v.ub.is_finite() {
            return Err(Error::Model("free variables are not supported".into()));
        }
        lb.push(v.lb);
        ub.push(v.ub);
        cost[j] = v.obj;
    }
    let mut b = Vec::with_capacity(m);
    for (r, row) in model.rows.iter().enumerate() {
        for &(c, a) in &row.coeffs {
            if a != 0.0 {
                cols[c].push((r, a));
            }
        }
        cols[n + r].push((r, 1.0));
        let (slb, sub) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lb.push(slb);
        ub.push(sub);
        b.push(row.rhs);
    }
    // Merge duplicate coefficients within a column deterministically.
    for col in cols.iter_mut() {
        col.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for &(r, v) in col.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += v,
                _ => merged.push((r, v)),
            }
        }
        *col = merged;
    }
    Ok(StdForm {
        m,
        n_struct: n,
        cols,
        lb,
        ub,
        cost,
        b,
    })
}

struct Solver {
    f: StdForm,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    lu: LuFactors,
    iterations: usize,
    max_iterations: usize,
    bland: bool,
    degen_count: usize,
}

impl Solver {
    fn refactorize(&mut self) -> Result<()> {
        let cols = &self.f.cols;
        self.lu = LuFactors::factorize(self.f.m, &self.basis, |j: usize| cols[j].as_slice())?;
        Ok(())
    }

    /// Recomputes basic variable values from the nonbasic bounds.
    fn compute_basic_values(&mut self) {
        let mut r = self.f.b.clone();
        for j in 0..self.f.cols.len() {
            if self.state[j] != VarState::Basic {
                let xj = self.x[j];
                if xj != 0.0 {
                    for &(row, a) in &self.f.cols[j] {
                        r[row] -= a * xj;
                    }
                }
            }
        }
        let xb = self.lu.ftran(&r);
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[k];
        }
    }

    fn primal_feasible(&self, tol: f64) -> bool {
        self.basis
            .iter()
            .all(|&j| self.x[j] >= self.f.lb[j] - tol && self.x[j] <= self.f.ub[j] + tol)
    }

    /// One simplex phase with the given cost vector. Returns false if the
    /// phase hit optimality, true if unbounded.
    fn run_phase(&mut self, cost: &[f64]) -> Result<bool> {
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::IterationLimit(self.iterations));
            }
            if self.lu.num_etas() >= REFACTOR_EVERY {
                self.refactorize()?;
                self.compute_basic_values();
            }
            // Duals for the current costs.
            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let y = self.lu.btran(&cb);
            // Pricing.
            let mut enter = usize::MAX;
            let mut best = 0.0_f64;
            for j in 0..self.f.cols.len() {
                let st = self.state[j];
                if st == VarState::Basic || self.f.lb[j] == self.f.ub[j] {
                    continue;
                }
                let mut dj = cost[j];
                for &(r, a) in &self.f.cols[j] {
                    dj -= y[r] * a;
                }
                let attractive = match st {
                    VarState::AtLower => -dj,
                    VarState::AtUpper => dj,
                    VarState::Basic => unreachable!(),
                };
                if attractive > TOL_DJ {
                    if self.bland {
                        enter = j;
                        break;
                    }
                    if attractive > best {
                        best = attractive;
                        enter = j;
                    }
                }
            }
            if enter == usize::MAX {
                return Ok(false); // optimal for this phase
            }
            let q = enter;
            let s: f64 = if self.state[q] == VarState::AtLower {
                1.0
            } else {
                -1.0
            };
            // FTRAN of the entering column.
            let mut aq = vec![0.0; self.f.m];
            for &(r, a) in &self.f.cols[q] {
                aq[r] = a;
            }
            let w = self.lu.ftran(&aq);

            // Ratio test: x_B moves by -s*w per unit of t.
            let own_limit = self.f.ub[q] - self.f.lb[q];
            let mut t_min = own_limit;
            let mut leave_pos = usize::MAX; // MAX = bound flip
            let mut leave_to_upper = false;
            let mut best_piv = 0.0_f64;
            for (k, &wj) in w.iter().enumerate() {
                let g = -s * wj;
                if g.abs() <= TOL_PIV {
                    continue;
                }
                let j = self.basis[k];
                let (limit, to_upper) = if g > 0.0 {
                    if self.f.ub[j].is_finite() {
                        ((self.f.ub[j] - self.x[j]) / g, true)
                    } else {
                        continue;
                    }
                } else if self.f.lb[j].is_finite() {
                    ((self.f.lb[j] - self.x[j]) / g, false)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = if self.bland {
                    limit < t_min - 1e-12
                        || (limit < t_min + 1e-12
                            && (leave_pos == usize::MAX || j < self.basis[leave_pos]))
                } else {
                    limit < t_min - 1e-12 || (limit < t_min + 1e-12 && wj.abs() > best_piv)
                };
                if better {
                    t_min = limit.min(t_min);
                    leave_pos = k;
                    leave_to_upper = to_upper;
                    best_piv = wj.abs();
                }
            }
            if !t_min.is_finite() {
                return Ok(true); // unbounded ray
            }
            let t = t_min.max(0.0);
            self.iterations += 1;
            if t <= 1e-10 {
                self.degen_count += 1;
                if self.degen_count > BLAND_TRIGGER {
                    self.bland = true;
                }
            } else {
                self.degen_count = 0;
                self.bland = false;
            }

            // Move the entering variable and update basics.
            for (k, &wj) in w.iter().enumerate() {
                let g = -s * wj;
                if g != 0.0 {
                    let j = self.basis[k];
                    self.x[j] += g * t;
                }
            }
            if leave_pos == usize::MAX {
                // Bound flip: entering travels to its opposite bound.
                self.state[q] = if s > 0.0 {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.x[q] = if s > 0.0 { self.f.ub[q] } else { self.f.lb[q] };
            } else {
                let leaving = self.basis[leave_pos];
                self.x[q] = self.x[q] + s * t;
                self.x[leaving] = if leave_to_upper {
                    self.f.ub[leaving]
                } else {
                    self.f.lb[leaving]
                };
                self.state[leaving] = if leave_to_upper {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.state[q] = VarState::Basic;
                self.basis[leave_pos] = q;
                if self.lu.update(leave_pos, &w).is_err() {
                    self.refactorize()?;
                    self.compute_basic_values();
                }
            }
        }
    }
}

/// Solves a pure LP to optimality, returning primal values, objective and a
/// dual value per row. Deterministic for a fixed model.
pub fn solve_lp(model: &LinearModel) -> Result<LpSolution> {
    solve_lp_with(model, None, &SimplexOptions::default())
}

/// As [`solve_lp`], optionally warm-starting from a previous basis of a model
/// with identical shape. Falls back to a cold start whenever the warm basis
/// is singular or primal-infeasible.
pub fn solve_lp_with(
    model: &LinearModel,
    warm: Option<&Basis>,
    opts: &SimplexOptions,
) -> Result<LpSolution> {
    let f = standard_form(model)?;
    if let Some(basis) = warm {
        if basis.cols.len() == f.m && basis.states.len() == f.cols.len() {
            if let Some(sol) = try_warm(model, &f, basis, opts)? {
                return Ok(sol);
            }
        }
    }
    cold_solve(model, standard_form(model)?, opts)
}

fn try_warm(
    model: &LinearModel,
    f: &StdForm,
    warm: &Basis,
    opts: &SimplexOptions,
) -> Result<Option<LpSolution>> {
    let n_real = f.cols.len();
    let mut x = vec![0.0; n_real];
    let mut state = warm.states.clone();
    for j in 0..n_real {
        match state[j] {
            VarState::Basic => {}
            VarState::AtLower => {
                x[j] = if f.lb[j].is_finite() {
                    f.lb[j]
                } else {
                    f.ub[j]
                };
                state[j] = if f.lb[j].is_finite() {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
            }
            VarState::AtUpper => {
                x[j] = if f.ub[j].is_finite() {
                    f.ub[j]
                } else {
                    f.lb[j]
                };
                state[j] = if f.ub[j].is_finite() {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
            }
        }
    }
    let cols = &f.cols;
    let lu = match LuFactors::factorize(f.m, &warm.cols, |j: usize| cols[j].as_slice()) {
        Ok(lu) => lu,
        Err(_) => return Ok(None),
    };
    let mut solver = Solver {
        basis: warm.cols.clone(),
        state,
        x,
        lu,
        iterations: 0,
        max_iterations: opts.max_iterations,
        bland: false,
        degen_count: 0,
        f: StdForm {
            m: f.m,
            n_struct: f.n_struct,
            cols: f.cols.clone(),
            lb: f.lb.clone(),
            ub: f.ub.clone(),
            cost: f.cost.clone(),
            b: f.b.clone(),
        },
    };
    solver.compute_basic_values();
    if !solver.primal_feasible(TOL_FEAS) {
        return Ok(None);
    }
    let cost = solver.f.cost.clone();
    if solver.run_phase(&cost)? {
        return Err(Error::Unbounded);
    }
    Ok(Some(finish(model, solver)))
}

fn cold_solve(model: &LinearModel, mut f: StdForm, opts: &SimplexOptions) -> Result<LpSolution> {
    let m = f.m;
    let n_real = f.cols.len();
    let mut state = Vec::with_capacity(n_real);
    let mut x = vec![0.0; n_real];
    for j in 0..n_real {
        if f.lb[j].is_finite() {
            state.push(VarState::AtLower);
            x[j] = f.lb[j];
        } else {
            state.push(VarState::AtUpper);
            x[j] = f.ub[j];
        }
    }
    // Residuals with every column nonbasic at a bound.
    let mut resid = f.b.clone();
    for j in 0..n_real {
        if x[j] != 0.0 {
            for &(r, a) in &f.cols[j] {
                resid[r] -= a * x[j];
            }
        }
    }
    // Slack basis where the residual fits the slack bounds, artificials elsewhere.
    let mut basis = Vec::with_capacity(m);
    let mut phase1_needed = false;
    for r in 0..m {
        let s = f.n_struct + r;
        // Residual as seen by the slack: it must absorb resid[r] + x[s]
        // (the slack was provisionally set at a bound above).
        let want = resid[r] + x[s];
        if want >= f.lb[s] && want <= f.ub[s] {
            state[s] = VarState::Basic;
            basis.push(s);
        } else {
            phase1_needed = true;
            let clamped = want.clamp(f.lb[s], f.ub[s].min(f64::MAX));
            let leftover = want - clamped;
            x[s] = clamped;
            state[s] = if clamped == f.lb[s] {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            let sign = if leftover >= 0.0 { 1.0 } else { -1.0 };
            let art = f.cols.len();
            f.cols.push(vec![(r, sign)]);
            f.lb.push(0.0);
            f.ub.push(f64::INFINITY);
            f.cost.push(0.0);
            state.push(VarState::Basic);
            x.push(leftover.abs());
            basis.push(art);
        }
    }

    let cols = &f.cols;
    let lu = LuFactors::factorize(m, &basis, |j: usize| cols[j].as_slice())?;
    let mut solver = Solver {
        basis,
        state,
        x,
        lu,
        iterations: 0,
        max_iterations: opts.max_iterations,
        bland: false,
        degen_count: 0,
        f,
    };
    solver.compute_basic_values();

    if phase1_needed {
        let mut p1_cost = vec![0.0; solver.f.cols.len()];
        for j in n_real..solver.f.cols.len() {
            p1_cost[j] = 1.0;
        }
        if solver.run_phase(&p1_cost)? {
            return Err(Error::Internal("phase-1 unbounded".into()));
        }
        let infeas: f64 = (n_real..solver.f.cols.len()).map(|j| solver.x[j]).sum();
        if infeas > TOL_FEAS * 10.0 {
            return Err(Error::Infeasible(format!("phase-1 residual {infeas:.3e}")));
        }
        // Swap any basic artificial for its row's slack (the columns differ
        // only by sign, so the basis stays nonsingular), then drop artificials.
        for k in 0..m {
            let j = solver.basis[k];
            if j >= n_real {
                let row = solver.f.cols[j][0].0;
                let s = solver.f.n_struct + row;
                debug_assert!(solver.state[s] != VarState::Basic);
                solver.basis[k] = s;
                solver.state[s] = VarState::Basic;
                solver.x[s] = if solver.f.cols[j][0].1 >= 0.0 {
                    solver.x[j]
                } else {
                    -solver.x[j]
                };
            }
        }
        solver.f.cols.truncate(n_real);
        solver.f.lb.truncate(n_real);
        solver.f.ub.truncate(n_real);
        solver.f.cost.truncate(n_real);
        solver.state.truncate(n_real);
        solver.x.truncate(n_real);
        solver.refactorize()?;
        solver.compute_basic_values();
        solver.bland = false;
        solver.degen_count = 0;
    }

    let cost = solver.f.cost.clone();
    if solver.run_phase(&cost)? {
        return Err(Error::Unbounded);
    }
    Ok(finish(model, solver))
}

fn finish(model: &LinearModel, mut solver: Solver) -> LpSolution {
    // Clean final values against a fresh factorization.
    if solver.lu.num_etas() > 0 {
        if solver.refactorize().is_ok() {
            solver.compute_basic_values();
        }
    }
    let cb: Vec<f64> = solver.basis.iter().map(|&j| solver.f.cost[j]).collect();
    let y = solver.lu.btran(&cb);
    let n = solver.f.n_struct;
    let x: Vec<f64> = solver.x[..n].to_vec();
    let objective = model.objective_value(&x);
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals: y,
        iterations: solver.iterations,
        basis: Basis {
            cols: solver.basis,
            states: solver.state,
        },
    }
}
