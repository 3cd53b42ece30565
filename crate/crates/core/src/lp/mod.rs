//! Linear programs over flow networks.
//!
//! [`build_lp`] turns a [`FlowNetwork`] into one variable per arc with
//! source, class-mass, conservation and balancing rows and the objective
//! "minimise total flow". [`apply_optimizations`] drops rows and sign
//! constraints that are implied by the others. [`build_joint_lp`] couples
//! two programs through shared class-mass variables.

mod simplex;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use simplex::{solve, solve_with, Solution, SolveMode, Status};

use crate::automata::{Partition, StateId};
use crate::error::{Error, Result};
use crate::network::{FlowNetwork, GadgetKind, Vertex};
use crate::numeric::Rational;
use crate::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ge,
}

/// Where a row comes from; optimisations and the joint construction key on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `f(src, t) = 1`.
    Source,
    /// `f(C, snk) = mu(C)` for the class with this index.
    ClassMass(usize),
    /// Flow conservation at the vertex with this index.
    Conservation(usize),
    /// `f(exit) - rho(v') * f(entry) = 0` for a gadget of this kind.
    Balancing(GadgetKind),
    /// `sum_C p_C = 1` in a joint program.
    MassSum,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: BTreeMap<usize, Rational>,
    pub relation: Relation,
    pub rhs: Rational,
    pub kind: RowKind,
}

impl Constraint {
    pub fn eval(&self, x: &[Rational]) -> Rational {
        self.coeffs.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    pub fn holds(&self, x: &[Rational]) -> bool {
        let lhs = self.eval(x);
        match self.relation {
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

/// `minimize objective · x` subject to `constraints`, with `x_j >= 0`
/// wherever `nonneg[j]` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub nonneg: Vec<bool>,
    pub constraints: Vec<Constraint>,
    pub objective: BTreeMap<usize, Rational>,
    /// Blocks of the partition the class-mass rows refer to.
    pub classes: Vec<Vec<StateId>>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Explicit rows plus one sign row per non-negative variable.
    pub fn num_rows(&self) -> usize {
        self.constraints.len() + self.nonneg.iter().filter(|b| **b).count()
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    /// Whether `x` satisfies every row and sign constraint exactly.
    pub fn is_satisfied_by(&self, x: &[Rational]) -> bool {
        x.len() == self.num_vars()
            && self
                .nonneg
                .iter()
                .zip(x)
                .all(|(nn, v)| !nn || !v.is_negative())
            && self.constraints.iter().all(|c| c.holds(x))
    }

    /// Objective line first, then one row per line, then sign constraints.
    pub fn dump(&self) -> String {
        let term = |j: usize, c: &Rational| {
            let sign = if c.is_negative() { "-" } else { "+" };
            format!("{sign}{}*{}", c.abs(), self.var_names[j])
        };
        let mut out = String::new();
        let obj: Vec<String> = self.objective.iter().map(|(j, c)| term(*j, c)).collect();
        let _ = writeln!(out, "min: {}", obj.join(" "));
        for row in &self.constraints {
            let lhs: Vec<String> = row.coeffs.iter().map(|(j, c)| term(*j, c)).collect();
            let rel = match row.relation {
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, "{} {rel} {}", lhs.join(" "), row.rhs);
        }
        for (j, nn) in self.nonneg.iter().enumerate() {
            if *nn {
                let _ = writeln!(out, "+1*{} >= 0", self.var_names[j]);
            }
        }
        out
    }
}

fn vertex_tag(v: Vertex) -> String {
    match v {
        Vertex::Source => "src".into(),
        Vertex::Sink => "snk".into(),
        Vertex::State(s) => format!("S{}", s.0),
        Vertex::TrState(s, tr) => format!("T{}.{}", s.0, tr.0),
        Vertex::StateAfter(s) => format!("Sa{}", s.0),
        Vertex::TrStateAfter(s, tr) => format!("Ta{}.{}", s.0, tr.0),
        Vertex::Class(c) => format!("C{c}"),
    }
}

/// The program whose feasible points are exactly the flows realising the
/// network's query.
pub fn build_lp(net: &FlowNetwork) -> LinearProgram {
    let n = net.num_arcs();
    let var_names = (0..n)
        .map(|i| {
            let (u, v) = net.arc(i);
            format!("f[{},{}]", vertex_tag(u), vertex_tag(v))
        })
        .collect();
    let mut constraints = Vec::new();
    let eq = |coeffs: BTreeMap<usize, Rational>, rhs: Rational, kind: RowKind| Constraint {
        coeffs,
        relation: Relation::Eq,
        rhs,
        kind,
    };

    let query = net.query();
    let source = net
        .arc_id(Vertex::Source, Vertex::State(query.source))
        .expect("source arc exists");
    constraints.push(eq(
        BTreeMap::from([(source, Rational::one())]),
        Rational::one(),
        RowKind::Source,
    ));
    for (c, mass) in net.class_mass().iter().enumerate() {
        let arc = net
            .arc_id(Vertex::Class(c), Vertex::Sink)
            .expect("class arc exists");
        constraints.push(eq(
            BTreeMap::from([(arc, Rational::one())]),
            mass.clone(),
            RowKind::ClassMass(c),
        ));
    }
    for (v, vertex) in net.vertices().iter().enumerate() {
        if matches!(vertex, Vertex::Source | Vertex::Sink) {
            continue;
        }
        let mut coeffs = BTreeMap::new();
        for &i in net.in_arcs(v) {
            *coeffs.entry(i).or_insert_with(Rational::zero) += Rational::one();
        }
        for &i in net.out_arcs(v) {
            *coeffs.entry(i).or_insert_with(Rational::zero) -= Rational::one();
        }
        coeffs.retain(|_, c| !c.is_zero());
        if coeffs.is_empty() {
            continue;
        }
        constraints.push(eq(coeffs, Rational::zero(), RowKind::Conservation(v)));
    }
    for g in net.gadgets() {
        for (_, p, exit) in &g.exits {
            constraints.push(eq(
                BTreeMap::from([(*exit, Rational::one()), (g.entry, -p)]),
                Rational::zero(),
                RowKind::Balancing(g.kind),
            ));
        }
    }
    LinearProgram {
        var_names,
        nonneg: vec![true; n],
        constraints,
        objective: (0..n).map(|j| (j, Rational::one())).collect(),
        classes: net.query().partition.blocks().to_vec(),
    }
}

/// Removes constraints implied by the rest of `lp`: sign constraints on
/// gadget exits (balancing plus a non-negative entry implies them), on class
/// drains (fixed by their mass row), and conservation at transition vertices
/// (a single entry arc plus balancing implies it).
pub fn apply_optimizations(lp: &LinearProgram, net: &FlowNetwork) -> LinearProgram {
    debug_assert_eq!(lp.num_vars(), net.num_arcs());
    let mut out = lp.clone();
    for g in net.gadgets() {
        for (_, _, exit) in &g.exits {
            out.nonneg[*exit] = false;
        }
    }
    for c in 0..net.class_mass().len() {
        if let Some(arc) = net.arc_id(Vertex::Class(c), Vertex::Sink) {
            out.nonneg[arc] = false;
        }
    }
    out.constraints.retain(|row| match row.kind {
        RowKind::Conservation(v) => !matches!(
            net.vertices()[v],
            Vertex::TrState(..) | Vertex::TrStateAfter(..)
        ),
        _ => true,
    });
    out
}

/// Couples two programs built over `part` (possibly extended by fresh
/// singleton classes outside its carrier): variables of `lp2` are shifted
/// past those of `lp1`, one variable `p_C >= 0` per block of `part` is
/// appended (in block order, after all others), every class-mass row for a
/// block of `part` becomes `f(C, snk) - p_C = 0`, and `sum_C p_C = 1`.
pub fn build_joint_lp(
    lp1: &LinearProgram,
    lp2: &LinearProgram,
    part: &Partition,
) -> Result<LinearProgram> {
    let class_map = |lp: &LinearProgram| -> Result<Vec<Option<usize>>> {
        let mut map = Vec::with_capacity(lp.classes.len());
        for block in &lp.classes {
            if let Some(j) = part.blocks().iter().position(|b| b == block) {
                map.push(Some(j));
            } else if block.iter().all(|s| s.0 >= part.carrier_len()) {
                map.push(None);
            } else {
                return Err(Error::Domain(format!(
                    "class {block:?} of a subproblem is not a block of the shared partition"
                )));
            }
        }
        let matched = map.iter().flatten().count();
        if matched != part.num_blocks() {
            return Err(Error::Domain(
                "subproblem was built over a different partition".into(),
            ));
        }
        Ok(map)
    };
    let maps = [class_map(lp1)?, class_map(lp2)?];
    let offsets = [0, lp1.num_vars()];
    let p0 = lp1.num_vars() + lp2.num_vars();

    let mut var_names = Vec::with_capacity(p0 + part.num_blocks());
    var_names.extend(lp1.var_names.iter().map(|n| format!("l.{n}")));
    var_names.extend(lp2.var_names.iter().map(|n| format!("r.{n}")));
    var_names.extend((0..part.num_blocks()).map(|c| format!("p[C{c}]")));
    let mut nonneg = Vec::with_capacity(var_names.len());
    nonneg.extend_from_slice(&lp1.nonneg);
    nonneg.extend_from_slice(&lp2.nonneg);
    nonneg.extend(std::iter::repeat_n(true, part.num_blocks()));

    let mut constraints = Vec::new();
    let mut objective = BTreeMap::new();
    for (side, lp) in [lp1, lp2].into_iter().enumerate() {
        let off = offsets[side];
        for row in &lp.constraints {
            let mut coeffs: BTreeMap<usize, Rational> = row
                .coeffs
                .iter()
                .map(|(j, c)| (j + off, c.clone()))
                .collect();
            let mut rhs = row.rhs.clone();
            if let RowKind::ClassMass(c) = row.kind {
                if let Some(j) = maps[side][c] {
                    coeffs.insert(p0 + j, -Rational::one());
                    rhs = Rational::zero();
                }
            }
            constraints.push(Constraint {
                coeffs,
                relation: row.relation,
                rhs,
                kind: row.kind,
            });
        }
        for (j, c) in &lp.objective {
            objective.insert(j + off, c.clone());
        }
    }
    constraints.push(Constraint {
        coeffs: (0..part.num_blocks())
            .map(|c| (p0 + c, Rational::one()))
            .collect(),
        relation: Relation::Eq,
        rhs: Rational::one(),
        kind: RowKind::MassSum,
    });
    Ok(LinearProgram {
        var_names,
        nonneg,
        constraints,
        objective,
        classes: part.blocks().to_vec(),
    })
}

/// Solves `lp` with every variable outside `keep` fixed to zero. Before the
/// simplex runs, rows fixing a single variable are applied and rows of the
/// form `a x + c y = 0` that determine `x` from `y` without losing its sign
/// constraint are substituted away. The returned assignment covers all
/// variables of `lp`.
pub fn solve_restricted(
    lp: &LinearProgram,
    keep: &[bool],
    mode: SolveMode,
    fault: Option<Fault>,
) -> Result<Solution> {
    let infeasible = Solution {
        status: Status::Infeasible,
        assignment: Vec::new(),
        objective_value: None,
        pivots: 0,
    };
    let n = lp.num_vars();
    let mut rows: Vec<Constraint> = lp
        .constraints
        .iter()
        .filter(|r| {
            !(fault == Some(Fault::IgnoreBalancing) && matches!(r.kind, RowKind::Balancing(_)))
        })
        .map(|r| {
            let mut r = r.clone();
            r.coeffs.retain(|j, _| keep[*j]);
            r
        })
        .collect();
    let mut objective: BTreeMap<usize, Rational> = lp
        .objective
        .iter()
        .filter(|(j, _)| keep[**j])
        .map(|(j, c)| (*j, c.clone()))
        .collect();

    // Eliminated variables in order: either a constant or a multiple of
    // another variable.
    enum Elim {
        Fixed(Rational),
        Scaled(usize, Rational),
    }
    let mut elims: Vec<(usize, Elim)> = Vec::new();
    // Occurrences of each variable among the live rows.
    let mut occurs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, r) in rows.iter().enumerate() {
        for j in r.coeffs.keys() {
            occurs[*j].push(i);
        }
    }
    let mut alive = vec![true; rows.len()];
    let mut queue: Vec<usize> = (0..rows.len()).collect();
    while let Some(i) = queue.pop() {
        if !alive[i] || rows[i].relation != Relation::Eq {
            continue;
        }
        let row = &rows[i];
        let elim = match row.coeffs.len() {
            0 => {
                if !row.rhs.is_zero() {
                    return Ok(infeasible);
                }
                alive[i] = false;
                continue;
            }
            1 => {
                let (&k, a) = row.coeffs.iter().next().unwrap();
                let v = row.rhs.checked_div(a)?;
                if lp.nonneg[k] && v.is_negative() {
                    return Ok(infeasible);
                }
                Some((k, Elim::Fixed(v)))
            }
            2 if row.rhs.is_zero() => {
                let mut it = row.coeffs.iter();
                let (&j1, a1) = it.next().unwrap();
                let (&j2, a2) = it.next().unwrap();
                // x_k = f * x_j keeps x_k's sign constraint when x_k is free
                // or when x_j is non-negative and f is too.
                let pick =
                    |k: usize, ak: &Rational, j: usize, aj: &Rational| -> Option<(usize, Elim)> {
                        let f = -(aj.checked_div(ak).ok()?);
                        (!lp.nonneg[k] || (lp.nonneg[j] && !f.is_negative()))
                            .then_some((k, Elim::Scaled(j, f)))
                    };
                pick(j1, a1, j2, a2).or_else(|| pick(j2, a2, j1, a1))
            }
            _ => None,
        };
        let Some((k, e)) = elim else { continue };
        alive[i] = false;
        for &r in &occurs[k].clone() {
            if !alive[r] {
                continue;
            }
            let Some(c) = rows[r].coeffs.remove(&k) else {
                continue;
            };
            match &e {
                Elim::Fixed(v) => rows[r].rhs -= &c * v,
                Elim::Scaled(j, f) => {
                    let entry = rows[r].coeffs.entry(*j).or_insert_with(Rational::zero);
                    *entry += &c * f;
                    if entry.is_zero() {
                        rows[r].coeffs.remove(j);
                    } else if !occurs[*j].contains(&r) {
                        occurs[*j].push(r);
                    }
                }
            }
            queue.push(r);
        }
        if let Some(c) = objective.remove(&k) {
            if let Elim::Scaled(j, f) = &e {
                let entry = objective.entry(*j).or_insert_with(Rational::zero);
                *entry += &c * f;
                if entry.is_zero() {
                    objective.remove(j);
                }
            }
        }
        elims.push((k, e));
    }

    let eliminated: Vec<bool> = {
        let mut v = vec![false; n];
        for (k, _) in &elims {
            v[*k] = true;
        }
        v
    };
    let mut index = vec![None; n];
    let mut kept = Vec::new();
    for j in 0..n {
        if keep[j] && !eliminated[j] {
            index[j] = Some(kept.len());
            kept.push(j);
        }
    }
    let mut constraints = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if !alive[i] {
            continue;
        }
        if row.coeffs.is_empty() {
            let holds = match row.relation {
                Relation::Eq => row.rhs.is_zero(),
                Relation::Ge => !row.rhs.is_positive(),
            };
            if !holds {
                return Ok(infeasible);
            }
            continue;
        }
        constraints.push(Constraint {
            coeffs: row
                .coeffs
                .iter()
                .map(|(j, c)| (index[*j].unwrap(), c.clone()))
                .collect(),
            relation: row.relation,
            rhs: row.rhs.clone(),
            kind: row.kind,
        });
    }
    let reduced = LinearProgram {
        var_names: kept.iter().map(|j| lp.var_names[*j].clone()).collect(),
        nonneg: kept.iter().map(|j| lp.nonneg[*j]).collect(),
        constraints,
        objective: objective
            .iter()
            .map(|(j, c)| (index[*j].unwrap(), c.clone()))
            .collect(),
        classes: lp.classes.clone(),
    };
    let sol = solve_with(&reduced, mode, None)?;
    if !sol.is_feasible() {
        return Ok(Solution {
            pivots: sol.pivots,
            ..infeasible
        });
    }
    let mut x = vec![Rational::zero(); n];
    for (k, j) in kept.iter().enumerate() {
        x[*j] = sol.assignment[k].clone();
    }
    for (k, e) in elims.iter().rev() {
        x[*k] = match e {
            Elim::Fixed(v) => v.clone(),
            Elim::Scaled(j, f) => f * &x[*j],
        };
    }
    let sign_ok = lp
        .nonneg
        .iter()
        .zip(&x)
        .all(|(nn, v)| !nn || !v.is_negative());
    let rows_ok = lp
        .constraints
        .iter()
        .filter(|r| {
            !(fault == Some(Fault::IgnoreBalancing) && matches!(r.kind, RowKind::Balancing(_)))
        })
        .all(|r| r.holds(&x));
    if !sign_ok || !rows_ok {
        return Err(Error::Soundness(
            "presolved program returned a point that violates the original".into(),
        ));
    }
    Ok(Solution {
        status: sol.status,
        objective_value: Some(lp.objective_value(&x)),
        assignment: x,
        pivots: sol.pivots,
    })
}

#[cfg(test)]
mod tests;
