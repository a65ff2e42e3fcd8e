//! Sparse LU factorization of simplex basis matrices, with a product-form
//! eta file for cheap updates between refactorizations.
//!
//! Columns are factored left-looking in ascending-nnz order (slack columns
//! first), with partial pivoting by magnitude. Solves use dense work vectors;
//! the matrices here are small enough (a few thousand rows) that the O(m)
//! passes are not a bottleneck.

use crate::error::{Error, Result};

/// One product-form update: basis position `pos` was replaced by a column
/// whose FTRAN image is `col` (sparse, over basis positions).
#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    diag: f64,
    col: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    m: usize,
    /// Column order used during factorization: q[k] = basis position.
    q: Vec<usize>,
    /// pinv[original_row] = pivot index.
    pinv: Vec<usize>,
    /// prow[pivot index] = original row.
    prow: Vec<usize>,
    /// L columns in pivot order; entries (original_row, multiplier), unit diagonal implicit.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// U columns in pivot order; entries (pivot_index < k, value); diagonal stored separately.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
}

const DROP_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-10;

impl LuFactors {
    /// Factorizes the basis matrix given by `cols[basis[k]]` for each basis
    /// position k. `col_of` fetches a column's sparse entries.
    pub fn factorize<'a, F>(m: usize, basis: &[usize], col_of: F) -> Result<Self>
    where
        F: Fn(usize) -> &'a [(usize, f64)],
    {
        assert_eq!(basis.len(), m);
        // Order columns by nnz ascending; ties by basis position for determinism.
        let mut q: Vec<usize> = (0..m).collect();
        q.sort_by_key(|&k| (col_of(basis[k]).len(), k));

        let mut pinv = vec![usize::MAX; m];
        let mut prow = vec![usize::MAX; m];
        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut u_diag = Vec::with_capacity(m);

        let mut work = vec![0.0_f64; m];
        let mut mark = vec![false; m];
        let mut touched: Vec<usize> = Vec::with_capacity(64);

        for t in 0..m {
            let col = col_of(basis[q[t]]);
            for &(r, v) in col {
                work[r] = v;
                if !mark[r] {
                    mark[r] = true;
                    touched.push(r);
                }
            }
            // Eliminate with existing pivots, in pivot order. Gather the
            // pivot indices present in the work vector first.
            let mut upd: Vec<usize> = touched
                .iter()
                .filter(|&&r| pinv[r] != usize::MAX)
                .map(|&r| pinv[r])
                .collect();
            upd.sort_unstable();
            let mut u_entries: Vec<(usize, f64)> = Vec::with_capacity(upd.len());
            let mut i = 0;
            while i < upd.len() {
                let k = upd[i];
                i += 1;
                let r_k = prow[k];
                let u_val = work[r_k];
                if u_val.abs() <= DROP_TOL {
                    continue;
                }
                u_entries.push((k, u_val));
                for &(r, l) in &l_cols[k] {
                    if !mark[r] {
                        mark[r] = true;
                        touched.push(r);
                        if pinv[r] != usize::MAX {
                            // New fill in an already-pivoted row: its pivot
                            // index is always > k, so schedule it ahead.
                            let kk = pinv[r];
                            let pos = upd[i..].partition_point(|&x| x < kk) + i;
                            if pos == upd.len() || upd[pos] != kk {
                                upd.insert(pos, kk);
                            }
                        }
                    }
                    work[r] -= u_val * l;
                }
            }
            // Pivot: largest magnitude among unpivoted rows, lowest row on ties.
            let mut piv_row = usize::MAX;
            let mut piv_val = 0.0_f64;
            let mut sorted_touch: Vec<usize> = touched
                .iter()
                .copied()
                .filter(|&r| pinv[r] == usize::MAX)
                .collect();
            sorted_touch.sort_unstable();
            for &r in &sorted_touch {
                let v = work[r];
                if v.abs() > piv_val.abs() {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_row == usize::MAX || piv_val.abs() < PIVOT_TOL {
                return Err(Error::Internal(format!("singular basis at pivot {t}")));
            }
            let mut l_entries: Vec<(usize, f64)> = Vec::new();
            for &r in &sorted_touch {
                if r != piv_row && work[r].abs() > DROP_TOL {
                    l_entries.push((r, work[r] / piv_val));
                }
            }
            pinv[piv_row] = t;
            prow[t] = piv_row;
            u_diag.push(piv_val);
            u_cols.push(u_entries);
            l_cols.push(l_entries);
            for &r in &touched {
                work[r] = 0.0;
                mark[r] = false;
            }
            touched.clear();
        }

        Ok(LuFactors {
            m,
            q,
            pinv,
            prow,
            l_cols,
            u_cols,
            u_diag,
            etas: Vec::new(),
        })
    }

    pub fn num_etas(&self) -> usize {
        self.etas.len()
    }

    /// Solves B z = b. `b` is over original rows; result over basis positions.
    pub fn ftran(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x = b.to_vec();
        // L^{-1} P b
        let mut y = vec![0.0; m];
        for t in 0..m {
            let v = x[self.prow[t]];
            y[t] = v;
            if v != 0.0 {
                for &(r, l) in &self.l_cols[t] {
                    x[r] -= v * l;
                }
            }
        }
        // U^{-1}
        let mut w = y;
        for k in (0..m).rev() {
            let v = w[k] / self.u_diag[k];
            w[k] = v;
            if v != 0.0 {
                for &(t, u) in &self.u_cols[k] {
                    w[t] -= u * v;
                }
            }
        }
        // Undo the column ordering: z[q[k]] = w[k].
        let mut z = vec![0.0; m];
        for k in 0..m {
            z[self.q[k]] = w[k];
        }
        // Apply etas in creation order.
        for eta in &self.etas {
            let zp = z[eta.pos] / eta.diag;
            z[eta.pos] = zp;
            if zp != 0.0 {
                for &(i, w_i) in &eta.col {
                    z[i] -= w_i * zp;
                }
            }
        }
        z
    }

    /// Solves B^T y = c. `c` is over basis positions; result over original rows.
    pub fn btran(&self, c: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut cv = c.to_vec();
        // Apply eta transposes in reverse creation order.
        for eta in self.etas.iter().rev() {
            let mut acc = cv[eta.pos];
            for &(i, w_i) in &eta.col {
                acc -= w_i * cv[i];
            }
            cv[eta.pos] = acc / eta.diag;
        }
        // Permute into factorization column order.
        let mut cq = vec![0.0; m];
        for k in 0..m {
            cq[k] = cv[self.q[k]];
        }
        // U^T a = cq (forward).
        let mut a = vec![0.0; m];
        for k in 0..m {
            let mut acc = cq[k];
            for &(t, u) in &self.u_cols[k] {
                acc -= u * a[t];
            }
            a[k] = acc / self.u_diag[k];
        }
        // L^T g = a (backward), g in pivot coords.
        let mut g = a;
        for t in (0..m).rev() {
            let mut acc = g[t];
            for &(r, l) in &self.l_cols[t] {
                acc -= l * g[self.pinv[r]];
            }
            g[t] = acc;
        }
        // y[r] = g[pinv[r]].
        let mut y = vec![0.0; m];
        for r in 0..m {
            y[r] = g[self.pinv[r]];
        }
        y
    }

    /// Registers a basis change: position `pos` now holds a column whose
    /// FTRAN image (before this update) is `w`. Fails if the pivot element is
    /// too small, signaling that a refactorization is needed.
    pub fn update(&mut self, pos: usize, w: &[f64]) -> Result<()> {
        let diag = w[pos];
        if diag.abs() < PIVOT_TOL {
            return Err(Error::Internal("eta pivot too small".into()));
        }
        let col: Vec<(usize, f64)> = w
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != pos && v.abs() > DROP_TOL)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta { pos, diag, col });
        Ok(())
    }
}
