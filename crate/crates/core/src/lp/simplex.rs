//! Dense two-phase tableau simplex with dual extraction.
//!
//! Problems here are small (at most a few thousand rows) and heavily
//! degenerate, so the solver uses Dantzig pricing with a fallback to Bland's
//! rule after a run of degenerate pivots. The optimal basis is re-solved with
//! an LU factorization of the original columns to clean up drift accumulated
//! in the tableau; primal values and duals both come from that refinement.
//!
//! Pivoting is fully deterministic: identical programs produce identical
//! bases and bit-identical outputs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

/// `maximize c.x  s.t.  A x (<=|>=|=) b,  x >= 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    n_vars: usize,
    objective: Vec<f64>,
    coeffs: Vec<f64>,
    kinds: Vec<RowKind>,
    rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row: the rate of change of the optimum in the row's
    /// right-hand side. Nonnegative for binding `<=` rows of a maximization.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            coeffs: Vec::new(),
            kinds: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.kinds.len()
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n_vars);
        self.objective = c;
    }

    pub fn add_row(&mut self, coeffs: &[f64], kind: RowKind, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.n_vars);
        self.coeffs.extend_from_slice(coeffs);
        self.kinds.push(kind);
        self.rhs.push(rhs);
        self.kinds.len() - 1
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.rhs[row] = rhs;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Coefficients, sense and right-hand side of row `i`.
    pub fn row(&self, i: usize) -> (&[f64], RowKind, f64) {
        (
            &self.coeffs[i * self.n_vars..(i + 1) * self.n_vars],
            self.kinds[i],
            self.rhs[i],
        )
    }

    fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.n_vars + j]
    }

    /// Solves and reports row duals.
    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self).run(self, true)
    }

    /// Solves without computing duals (`duals` is left empty).
    pub fn solve_primal(&self) -> Result<LpOutcome> {
        Tableau::build(self).run(self, false)
    }

    /// Writes the program in CPLEX LP text format, for cross-checking with
    /// external solvers.
    pub fn to_lp_format(&self) -> String {
        let mut s = String::from("\\ generated by rmab-mpc\nMaximize\n obj:");
        write_expr(&mut s, &self.objective);
        s.push_str("\nSubject To\n");
        for i in 0..self.n_rows() {
            let _ = write!(s, " c{i}:");
            let row = &self.coeffs[i * self.n_vars..(i + 1) * self.n_vars];
            write_expr(&mut s, row);
            let op = match self.kinds[i] {
                RowKind::Le => "<=",
                RowKind::Ge => ">=",
                RowKind::Eq => "=",
            };
            let _ = writeln!(s, " {op} {:e}", self.rhs[i]);
        }
        s.push_str("End\n");
        s
    }
}

fn write_expr(s: &mut String, coeffs: &[f64]) {
    let mut any = false;
    for (j, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            let sign = if c < 0.0 { '-' } else { '+' };
            let _ = write!(s, " {sign} {:e} x{j}", c.abs());
            any = true;
        }
    }
    if !any {
        s.push_str(" 0 x0");
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    width: usize,
    /// m rows of `width = n_cols + 1` entries; the last entry is the rhs.
    t: Vec<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    col_kind: Vec<ColKind>,
    /// Original row and sign (+1 / -1) of each slack or artificial column.
    col_row: Vec<(usize, f64)>,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.n_rows();
        let n = lp.n_vars;
        // Orientation making every rhs nonnegative.
        let flip: Vec<f64> = lp
            .rhs
            .iter()
            .map(|&b| if b < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let mut col_kind = vec![ColKind::Structural; n];
        let mut col_row = vec![(usize::MAX, 0.0); n];
        let mut slack_of = vec![None; m];
        let mut art_of = vec![None; m];
        for (i, slack) in slack_of.iter_mut().enumerate() {
            if lp.kinds[i] != RowKind::Eq {
                *slack = Some(col_kind.len());
                col_kind.push(ColKind::Slack);
                let sign = if lp.kinds[i] == RowKind::Le {
                    1.0
                } else {
                    -1.0
                };
                col_row.push((i, sign));
            }
        }
        for i in 0..m {
            // After flipping, a row needs an artificial unless its slack
            // enters with +1.
            let slack_positive = match lp.kinds[i] {
                RowKind::Le => flip[i] > 0.0,
                RowKind::Ge => flip[i] < 0.0,
                RowKind::Eq => false,
            };
            if !slack_positive {
                art_of[i] = Some(col_kind.len());
                col_kind.push(ColKind::Artificial);
                col_row.push((i, flip[i]));
            }
        }
        let n_cols = col_kind.len();
        let width = n_cols + 1;
        let mut t = vec![0.0; m * width];
        let mut basis = vec![0; m];
        for i in 0..m {
            let f = flip[i];
            let row = &mut t[i * width..(i + 1) * width];
            for (j, cell) in row[..n].iter_mut().enumerate() {
                *cell = f * lp.coeff(i, j);
            }
            if let Some(s) = slack_of[i] {
                row[s] = f * col_row[s].1;
            }
            if let Some(a) = art_of[i] {
                row[a] = 1.0;
                basis[i] = a;
            } else {
                basis[i] = slack_of[i].expect("row has a slack or an artificial");
            }
            row[n_cols] = f * lp.rhs[i];
        }
        Self {
            m,
            width,
            t,
            reduced: vec![0.0; width],
            basis,
            col_kind,
            col_row,
            pivots: 0,
        }
    }

    fn n_cols(&self) -> usize {
        self.width - 1
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.n_cols()]
    }

    /// Recomputes the reduced-cost row for column costs `c`.
    fn price(&mut self, c: &[f64]) {
        let w = self.width;
        self.reduced[..].fill(0.0);
        self.reduced[..c.len()].copy_from_slice(c);
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for (d, &a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.t[r * w + q];
        let inv = 1.0 / p;
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.t[r * w + q] = 1.0;
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (v, &pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.reduced[q] = 0.0;
        }
        self.basis[r] = q;
        self.pivots += 1;
    }

    /// Runs simplex iterations until no improving column remains.
    fn optimize(&mut self, allow_artificial: bool, limit: usize) -> Result<()> {
        let w = self.width;
        let n_cols = self.n_cols();
        let mut streak = 0usize;
        loop {
            if self.pivots > limit {
                return Err(Error::LpIterationLimit(limit));
            }
            let bland = streak >= DEGENERATE_STREAK;
            let mut entering = None;
            let mut best = PRICE_TOL;
            for j in 0..n_cols {
                if !allow_artificial && self.col_kind[j] == ColKind::Artificial {
                    continue;
                }
                let d = self.reduced[j];
                if d > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * w + q];
                if a > PIVOT_TOL {
                    let ratio = self.t[i * w + n_cols].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best_ratio)) => {
                            if ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::LpUnbounded);
            };
            if ratio <= 1e-12 {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, q);
        }
    }

    fn run(mut self, lp: &LinearProgram, with_duals: bool) -> Result<LpOutcome> {
        let n_cols = self.n_cols();
        let limit = 50 * (self.m + n_cols) + 1000;
        let has_artificial = self.col_kind.contains(&ColKind::Artificial);

        if has_artificial {
            let phase1: Vec<f64> = self
                .col_kind
                .iter()
                .map(|k| if *k == ColKind::Artificial { -1.0 } else { 0.0 })
                .collect();
            self.price(&phase1);
            self.optimize(true, limit)?;
            let infeasibility: f64 = (0..self.m)
                .filter(|&i| self.col_kind[self.basis[i]] == ColKind::Artificial)
                .map(|i| self.rhs(i))
                .sum();
            let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeasibility > 1e-7 * scale {
                return Err(Error::LpInfeasible);
            }
            self.evict_artificials();
        }

        let mut c = vec![0.0; n_cols];
        c[..lp.n_vars].copy_from_slice(&lp.objective);
        self.price(&c);
        self.optimize(false, limit)?;
        self.refine(lp, &c, with_duals)
    }

    /// Pivots zero-level artificials out of the basis where possible. Rows
    /// where that fails are redundant; their artificial stays basic at zero.
    fn evict_artificials(&mut self) {
        let w = self.width;
        for i in 0..self.m {
            if self.col_kind[self.basis[i]] != ColKind::Artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n_cols() {
                if self.col_kind[j] == ColKind::Artificial {
                    continue;
                }
                let a = self.t[i * w + j].abs();
                if a > PIVOT_TOL && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(i, j);
            }
        }
    }

    fn column(&self, lp: &LinearProgram, j: usize) -> DVector<f64> {
        let mut col = DVector::zeros(self.m);
        match self.col_kind[j] {
            ColKind::Structural => {
                for i in 0..self.m {
                    col[i] = lp.coeff(i, j);
                }
            }
            _ => {
                let (row, sign) = self.col_row[j];
                col[row] = sign;
            }
        }
        col
    }

    fn refine(&self, lp: &LinearProgram, c: &[f64], with_duals: bool) -> Result<LpOutcome> {
        let m = self.m;
        let mut x = vec![0.0; lp.n_vars];
        if m == 0 {
            return Ok(LpOutcome {
                x,
                objective: 0.0,
                duals: Vec::new(),
                pivots: self.pivots,
            });
        }
        let mut b_mat = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            b_mat.set_column(k, &self.column(lp, j));
        }
        let duals = if with_duals {
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| c[j]));
            let y = b_mat
                .transpose()
                .lu()
                .solve(&cb)
                .ok_or(Error::SingularBasis)?;
            y.iter().copied().collect()
        } else {
            Vec::new()
        };
        let rhs = DVector::from_vec(lp.rhs.clone());
        let xb = b_mat.lu().solve(&rhs).ok_or(Error::SingularBasis)?;
        for (k, &j) in self.basis.iter().enumerate() {
            if j < lp.n_vars {
                let v = xb[k];
                // Fall back to the tableau value if the refined solve is off.
                x[j] = if v.is_finite() && (v - self.rhs(k)).abs() < 1e-6 {
                    v.max(0.0)
                } else {
                    self.rhs(k).max(0.0)
                };
            }
        }
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpOutcome {
            x,
            objective,
            duals,
            pivots: self.pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximum_and_duals() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36,
        // duals (0, 3/2, 1).
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![3.0, 5.0]);
        lp.add_row(&[1.0, 0.0], RowKind::Le, 4.0);
        lp.add_row(&[0.0, 2.0], RowKind::Le, 12.0);
        lp.add_row(&[3.0, 2.0], RowKind::Le, 18.0);
        let out = lp.solve().unwrap();
        assert!((out.objective - 36.0).abs() < 1e-12);
        assert!((out.x[0] - 2.0).abs() < 1e-12 && (out.x[1] - 6.0).abs() < 1e-12);
        for (d, e) in out.duals.iter().zip([0.0, 1.5, 1.0]) {
            assert!((d - e).abs() < 1e-12, "{d} vs {e}");
        }
    }

    #[test]
    fn equality_and_ge_rows_need_phase_one() {
        // max -x - y  s.t. x + y = 2, x >= 0.5, y - x >= -3 -> value -2.
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![-1.0, -2.0]);
        lp.add_row(&[1.0, 1.0], RowKind::Eq, 2.0);
        lp.add_row(&[1.0, 0.0], RowKind::Ge, 0.5);
        lp.add_row(&[-1.0, 1.0], RowKind::Ge, -3.0);
        let out = lp.solve().unwrap();
        // Optimum puts all mass on x: (2, 0), value -2.
        assert!((out.objective + 2.0).abs() < 1e-12);
        assert!((out.x[0] - 2.0).abs() < 1e-12);
        // The equality row's dual equals the cost of x.
        assert!((out.duals[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 0.0]);
        lp.add_row(&[1.0, 1.0], RowKind::Eq, 1.0);
        lp.add_row(&[2.0, 2.0], RowKind::Eq, 2.0);
        lp.add_row(&[1.0, 0.0], RowKind::Le, 0.7);
        let out = lp.solve().unwrap();
        assert!((out.objective - 0.7).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(&[1.0], RowKind::Ge, 2.0);
        lp.add_row(&[1.0], RowKind::Le, 1.0);
        assert!(matches!(lp.solve(), Err(Error::LpInfeasible)));

        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 0.0]);
        lp.add_row(&[-1.0, 1.0], RowKind::Le, 1.0);
        assert!(matches!(lp.solve(), Err(Error::LpUnbounded)));
    }

    #[test]
    fn lp_text_dump_lists_every_row() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, -2.0]);
        lp.add_row(&[1.0, 1.0], RowKind::Eq, 1.0);
        lp.add_row(&[0.0, 1.0], RowKind::Le, 0.5);
        let text = lp.to_lp_format();
        assert!(text.contains("Maximize"));
        assert!(text.contains(" c0:") && text.contains(" c1:"));
        assert!(text.trim_end().ends_with("End"));
    }
}
