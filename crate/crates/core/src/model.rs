//! Generic linear model: variables with bounds and integrality flags, sparse
//! constraint rows, and a minimization objective. Construction order is
//! deterministic so that two builds of the same instance are byte-identical.

use crate::instance::Node;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// What a column stands for, for debugging and for reading solutions back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarKind {
    /// Binary arc variable x_i^{jk}.
    Arc {
        agent: usize,
        from: Node,
        to: Node,
    },
    /// Begin-of-service time B_i^j.
    Begin {
        agent: usize,
        node: Node,
    },
    /// Load Q_i^j.
    Load {
        agent: usize,
        node: Node,
    },
    /// Penalty slack v_i of the allocation subproblem.
    PenaltySlack {
        agent: usize,
    },
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub integer: bool,
    pub obj: f64,
}

/// Which rule a row encodes; coupling rows are tagged with their request so
/// the LP solver's duals can be read back as multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowTag {
    Start { agent: usize },
    End { agent: usize },
    Flow { agent: usize, request: usize },
    Pairing { agent: usize, pickup: usize },
    Precedence { agent: usize, pickup: usize },
    TimeProp { agent: usize, edge: usize },
    LoadLower { agent: usize, edge: usize },
    LoadUpper { agent: usize, edge: usize },
    Coupling { request: usize },
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: RowTag,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearModel {
    pub vars: Vec<VarDef>,
    pub rows: Vec<Row>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind, lb: f64, ub: f64, integer: bool, obj: f64) -> usize {
        debug_assert!(lb <= ub, "variable with empty bound interval");
        self.vars.push(VarDef {
            kind,
            lb,
            ub,
            integer,
            obj,
        });
        self.vars.len() - 1
    }

    pub fn add_row(
        &mut self,
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
        tag: RowTag,
    ) -> usize {
        debug_assert!(coeffs.iter().all(|&(c, _)| c < self.vars.len()));
        self.rows.push(Row {
            coeffs,
            sense,
            rhs,
            tag,
        });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.integer)
    }

    /// LP relaxation: integrality flags dropped, bounds untouched (binary
    /// variables are already declared with bounds [0, 1]).
    pub fn lp_relaxation(&self) -> LinearModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.integer = false;
        }
        m
    }

    /// Row activity at a point.
    pub fn row_activity(&self, row: &Row, x: &[f64]) -> f64 {
        row.coeffs.iter().map(|&(c, a)| a * x[c]).sum()
    }

    /// Signed violation of a row at a point (0 when satisfied).
    pub fn row_violation(&self, row: &Row, x: &[f64]) -> f64 {
        let act = self.row_activity(row, x);
        match row.sense {
            Sense::Le => (act - row.rhs).max(0.0),
            Sense::Ge => (row.rhs - act).max(0.0),
            Sense::Eq => (act - row.rhs).abs(),
        }
    }

    /// Max violation over rows and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let row_v = self
            .rows
            .iter()
            .map(|r| self.row_violation(r, x))
            .fold(0.0_f64, f64::max);
        let bound_v = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lb - xi).max(xi - v.ub).max(0.0))
            .fold(0.0_f64, f64::max);
        row_v.max(bound_v)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, &xi)| v.obj * xi).sum()
    }

    /// Writes the model in CPLEX LP text format for external cross-checks.
    /// Numbers are printed with fixed 12-decimal precision.
    pub fn write_lp_format(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        let name = |c: usize| format!("c{c}");
        writeln!(w, "Minimize")?;
        write!(w, " obj:")?;
        let mut first = true;
        for (c, v) in self.vars.iter().enumerate() {
            if v.obj != 0.0 {
                write!(
                    w,
                    " {} {:.12} {}",
                    if v.obj >= 0.0 && !first { "+" } else { "" },
                    v.obj,
                    name(c)
                )?;
                first = false;
            }
        }
        if first {
            write!(w, " 0 c0")?;
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        for (r, row) in self.rows.iter().enumerate() {
            write!(w, " r{r}:")?;
            for (idx, &(c, a)) in row.coeffs.iter().enumerate() {
                write!(
                    w,
                    " {}{:.12} {}",
                    if a >= 0.0 && idx > 0 { "+" } else { "" },
                    a,
                    name(c)
                )?;
            }
            let sense = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            writeln!(w, " {} {:.12}", sense, row.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for (c, v) in self.vars.iter().enumerate() {
            let lb = if v.lb.is_finite() {
                format!("{:.12}", v.lb)
            } else {
                "-inf".into()
            };
            let ub = if v.ub.is_finite() {
                format!("{:.12}", v.ub)
            } else {
                "+inf".into()
            };
            writeln!(w, " {} <= {} <= {}", lb, name(c), ub)?;
        }
        let ints: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integer)
            .map(|(c, _)| name(c))
            .collect();
        if !ints.is_empty() {
            writeln!(w, "Binaries")?;
            writeln!(w, " {}", ints.join(" "))?;
        }
        writeln!(w, "End")
    }
}
