//! Two-phase primal simplex over exact rationals with Bland's rule.
//!
//! The program is brought into standard form `A x = b, x >= 0, b >= 0`:
//! free variables are split into a positive and a negative part and `>=`
//! rows receive a surplus column. Phase one minimises the sum of one
//! artificial column per row; phase two, when requested, minimises the
//! original objective from the feasible basis phase one leaves behind.

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, RowKind};
use crate::numeric::Rational;
use crate::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    FeasibilityOnly,
    MinimizeObjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Feasible,
    Infeasible,
    OptimalFound,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub status: Status,
    /// One value per program variable; empty when infeasible.
    pub assignment: Vec<Rational>,
    /// Objective at `assignment`; `None` when infeasible.
    pub objective_value: Option<Rational>,
    pub pivots: usize,
}

impl Solution {
    pub fn is_feasible(&self) -> bool {
        self.status != Status::Infeasible
    }
}

pub fn solve(lp: &LinearProgram, mode: SolveMode) -> Result<Solution> {
    solve_with(lp, mode, None)
}

/// As [`solve`], optionally with a deliberately corrupted engine.
pub fn solve_with(lp: &LinearProgram, mode: SolveMode, fault: Option<Fault>) -> Result<Solution> {
    let used: Vec<usize> = (0..lp.constraints.len())
        .filter(|&i| {
            !(fault == Some(Fault::IgnoreBalancing)
                && matches!(lp.constraints[i].kind, RowKind::Balancing(_)))
        })
        .collect();

    // Column layout: one column per variable, a second (negated) one per
    // free variable, then one surplus column per `>=` row.
    let n = lp.num_vars();
    let mut neg_col = vec![None; n];
    let mut ncols = n;
    for (j, nn) in lp.nonneg.iter().enumerate() {
        if !nn {
            neg_col[j] = Some(ncols);
            ncols += 1;
        }
    }
    let mut surplus = Vec::new();
    for &i in &used {
        if lp.constraints[i].relation == Relation::Ge {
            surplus.push((i, ncols));
            ncols += 1;
        }
    }
    let structural = ncols;
    let m = used.len();
    let width = structural + m + 1;

    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(m);
    for (r, &i) in used.iter().enumerate() {
        let c = &lp.constraints[i];
        let mut row = vec![Rational::zero(); width];
        for (j, a) in &c.coeffs {
            row[*j] = a.clone();
            if let Some(k) = neg_col[*j] {
                row[k] = -a;
            }
        }
        if let Some((_, k)) = surplus.iter().find(|(ci, _)| *ci == i) {
            row[*k] = -Rational::one();
        }
        row[width - 1] = c.rhs.clone();
        if c.rhs.is_negative() {
            for v in row.iter_mut() {
                if !v.is_zero() {
                    *v = -&*v;
                }
            }
        }
        row[structural + r] = Rational::one();
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        basis: (structural..structural + m).collect(),
        cost: vec![Rational::zero(); width],
        pivots: 0,
        allowed: structural + m,
    };
    // Phase one: reduced costs of the artificial objective.
    for row in &tab.rows {
        for j in (0..structural).chain(std::iter::once(width - 1)) {
            if !row[j].is_zero() {
                tab.cost[j] -= &row[j];
            }
        }
    }
    tab.run()?;
    if !tab.cost[width - 1].is_zero() {
        return Ok(Solution {
            status: Status::Infeasible,
            assignment: Vec::new(),
            objective_value: None,
            pivots: tab.pivots,
        });
    }
    tab.allowed = structural;

    let status = match mode {
        SolveMode::FeasibilityOnly => Status::Feasible,
        SolveMode::MinimizeObjective => {
            tab.evict_artificials(structural);
            let mut cost = vec![Rational::zero(); width];
            for (j, c) in &lp.objective {
                cost[*j] = c.clone();
                if let Some(k) = neg_col[*j] {
                    cost[k] = -c;
                }
            }
            for (r, &b) in tab.basis.iter().enumerate() {
                let cb = cost[b].clone();
                if cb.is_zero() {
                    continue;
                }
                for (c, x) in cost.iter_mut().zip(&tab.rows[r]) {
                    if !x.is_zero() {
                        *c -= &cb * x;
                    }
                }
            }
            tab.cost = cost;
            tab.run()?;
            Status::OptimalFound
        }
    };

    let mut column_value = vec![Rational::zero(); structural];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < structural {
            column_value[b] = tab.rows[r][width - 1].clone();
        }
    }
    let assignment: Vec<Rational> = (0..n)
        .map(|j| match neg_col[j] {
            Some(k) => &column_value[j] - &column_value[k],
            None => column_value[j].clone(),
        })
        .collect();

    let sign_ok = lp
        .nonneg
        .iter()
        .zip(&assignment)
        .all(|(nn, v)| !nn || !v.is_negative());
    if !sign_ok || !used.iter().all(|&i| lp.constraints[i].holds(&assignment)) {
        return Err(Error::Soundness(
            "simplex returned a point that violates the program".into(),
        ));
    }
    Ok(Solution {
        status,
        objective_value: Some(lp.objective_value(&assignment)),
        assignment,
        pivots: tab.pivots,
    })
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    /// Reduced costs; the last entry is minus the current objective value.
    cost: Vec<Rational>,
    pivots: usize,
    /// Columns at or beyond this index may not enter the basis.
    allowed: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.cost.len() - 1
    }

    /// Bland's rule: lowest-index improving column, ties in the ratio test
    /// broken by the lowest basic column index.
    fn run(&mut self) -> Result<()> {
        let rhs = self.rhs();
        loop {
            let Some(enter) = (0..self.allowed).find(|&j| self.cost[j].is_negative()) else {
                return Ok(());
            };
            let mut best: Option<(usize, Rational)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if !row[enter].is_positive() {
                    continue;
                }
                let ratio = row[rhs].checked_div(&row[enter])?;
                let better = match &best {
                    None => true,
                    Some((br, b)) => ratio < *b || (ratio == *b && self.basis[r] < self.basis[*br]),
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            let Some((leave, _)) = best else {
                return Err(Error::Soundness(
                    "objective unbounded below on a program with non-negative flows".into(),
                ));
            };
            self.pivot(leave, enter)?;
        }
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<()> {
        self.pivots += 1;
        let inv = self.rows[r][c].recip()?;
        let mut nz = Vec::new();
        for (j, v) in self.rows[r].iter_mut().enumerate() {
            if !v.is_zero() {
                *v = &*v * &inv;
                nz.push(j);
            }
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for &j in &nz {
                let d = &factor * &pivot_row[j];
                row[j] -= d;
            }
        }
        if !self.cost[c].is_zero() {
            let factor = self.cost[c].clone();
            for &j in &nz {
                let d = &factor * &pivot_row[j];
                self.cost[j] -= d;
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
        Ok(())
    }

    /// Pivots zero-valued artificials out of the basis after phase one and
    /// drops rows that turn out to be redundant.
    fn evict_artificials(&mut self, structural: usize) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= structural {
                match (0..structural).find(|&j| !self.rows[r][j].is_zero()) {
                    Some(j) => {
                        self.pivot(r, j).expect("pivot element is nonzero");
                    }
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }
}
