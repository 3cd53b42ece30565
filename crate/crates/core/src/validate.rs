//! Independent check of witness schedulers.
//!
//! A determinate scheduler turns the automaton into a finite Markov chain
//! over `(state, stage)` pairs plus absorbing stop nodes. The distribution
//! the scheduler induces is the vector of absorption probabilities, found by
//! exact Gaussian elimination.

use crate::automata::{
    lift_equiv, Action, Distribution, Partition, ProbAutomaton, StateId, TransitionId,
};
use crate::error::{Error, Result};
use crate::lp::SolveMode;
use crate::numeric::Rational;
use crate::wtrans::{extract_scheduler, solve_query, DeterminateScheduler, Source, Stage, Stats};
use crate::Options;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Live(StateId, Stage),
    Stop(StateId),
    /// Stopping before the visible action, or performing a wrong action.
    Bad,
}

/// The chain a scheduler induces. Live nodes are laid out state-major,
/// followed by one stop node per state and the bad node.
#[derive(Debug, Clone)]
pub struct StagedChain {
    nodes: Vec<Node>,
    /// Successors of every live node; absorbing nodes have none.
    step: Vec<Vec<(usize, Rational)>>,
}

impl StagedChain {
    pub fn new(pa: &ProbAutomaton, sched: &DeterminateScheduler, a: Action) -> Result<Self> {
        if sched.action() != a {
            return Err(Error::Domain(
                "scheduler was built for a different action".into(),
            ));
        }
        let stages = sched.stages();
        let n = pa.num_states();
        let ns = stages.len();
        let live = |s: StateId, st: Stage| s.0 * ns + stages.iter().position(|x| *x == st).unwrap();
        let stop = |s: StateId| n * ns + s.0;
        let bad = n * ns + n;

        let mut nodes = Vec::with_capacity(bad + 1);
        for s in pa.state_ids() {
            for st in stages {
                nodes.push(Node::Live(s, *st));
            }
        }
        nodes.extend(pa.state_ids().map(Node::Stop));
        nodes.push(Node::Bad);

        for (s, _) in sched.choices().keys() {
            pa.check_state(*s)?;
        }
        let mut step = vec![Vec::new(); nodes.len()];
        for s in pa.state_ids() {
            for &st in stages {
                let from = live(s, st);
                let mut out: Vec<(usize, Rational)> = Vec::new();
                if let Some(d) = sched.choice(s, st) {
                    for (tr, p) in d.iter() {
                        if tr.0 >= pa.num_transitions() || pa.transition(tr).source != s {
                            return Err(Error::Consistency(format!(
                                "scheduler picks {tr} at {} which does not leave that state",
                                pa.state_name(s)
                            )));
                        }
                        let t = pa.transition(tr);
                        for (w, pw) in t.target.iter() {
                            let next = if t.action.is_tau() {
                                live(w, st)
                            } else if t.action == a && st == Stage::PreA {
                                live(w, Stage::PostA)
                            } else {
                                bad
                            };
                            out.push((next, p * pw));
                        }
                    }
                }
                let r = sched.stop_mass(s, st);
                if !r.is_zero() {
                    let at_end = a.is_tau() || st == Stage::PostA;
                    out.push((if at_end { stop(s) } else { bad }, r));
                }
                out.sort_by_key(|(j, _)| *j);
                let mut merged: Vec<(usize, Rational)> = Vec::with_capacity(out.len());
                for (j, p) in out {
                    match merged.last_mut() {
                        Some((k, q)) if *k == j => *q += p,
                        _ => merged.push((j, p)),
                    }
                }
                step[from] = merged;
            }
        }
        Ok(StagedChain { nodes, step })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn step(&self, i: usize) -> &[(usize, Rational)] {
        &self.step[i]
    }

    pub fn index(&self, node: Node) -> Option<usize> {
        self.nodes.iter().position(|n| *n == node)
    }

    fn is_absorbing(&self, i: usize) -> bool {
        !matches!(self.nodes[i], Node::Live(..))
    }

    /// Probability of ending in each absorbing node when started in
    /// `start`, indexed like [`nodes`](Self::nodes); live entries are zero.
    pub fn absorption(&self, start: usize) -> Result<Vec<Rational>> {
        let n = self.nodes.len();
        let mut result = vec![Rational::zero(); n];
        if self.is_absorbing(start) {
            result[start] = Rational::one();
            return Ok(result);
        }
        // Live nodes reachable from the start...
        let mut reach = vec![false; n];
        let mut stack = vec![start];
        reach[start] = true;
        while let Some(i) = stack.pop() {
            for (j, _) in &self.step[i] {
                if !reach[*j] {
                    reach[*j] = true;
                    stack.push(*j);
                }
            }
        }
        // ...that can still reach an absorbing node. The rest never absorb.
        let mut absorbs = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                if reach[i]
                    && !absorbs[i]
                    && (self.is_absorbing(i) || self.step[i].iter().any(|(j, _)| absorbs[*j]))
                {
                    absorbs[i] = true;
                    changed = true;
                }
            }
        }
        if !absorbs[start] {
            return Ok(result);
        }
        let transient: Vec<usize> = (0..n)
            .filter(|&i| absorbs[i] && !self.is_absorbing(i))
            .collect();
        let sinks: Vec<usize> = (0..n)
            .filter(|&i| reach[i] && self.is_absorbing(i))
            .collect();
        let pos = |i: usize| transient.binary_search(&i).ok();
        let sink_pos = |i: usize| sinks.binary_search(&i).ok();

        // (I - P) x = B, one right-hand side column per absorbing node.
        let m = transient.len();
        let k = sinks.len();
        let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(m);
        for &i in &transient {
            let mut row = vec![Rational::zero(); m + k];
            row[pos(i).unwrap()] = Rational::one();
            for (j, p) in &self.step[i] {
                if let Some(c) = pos(*j) {
                    row[c] -= p;
                } else if let Some(c) = sink_pos(*j) {
                    row[m + c] += p;
                }
            }
            rows.push(row);
        }
        let system = rows.clone();
        gauss_jordan(&mut rows, m)?;

        // Substituting back must reproduce every equation exactly.
        for (r, eq) in system.iter().enumerate() {
            for c in 0..k {
                let lhs: Rational = (0..m)
                    .filter(|&j| !eq[j].is_zero())
                    .map(|j| &eq[j] * &rows[j][m + c])
                    .sum();
                if lhs != eq[m + c] {
                    return Err(Error::Soundness(format!(
                        "absorption solution fails equation {r} on substitution"
                    )));
                }
            }
        }
        let row = pos(start).unwrap();
        for (c, &j) in sinks.iter().enumerate() {
            result[j] = rows[row][m + c].clone();
        }
        Ok(result)
    }
}

/// Reduces the leading `m` columns of `rows` to the identity.
fn gauss_jordan(rows: &mut [Vec<Rational>], m: usize) -> Result<()> {
    for col in 0..m {
        let Some(p) = (col..m).find(|&r| !rows[r][col].is_zero()) else {
            return Err(Error::Soundness("absorption system is singular".into()));
        };
        rows.swap(col, p);
        let inv = rows[col][col].recip()?;
        for v in rows[col].iter_mut() {
            if !v.is_zero() {
                *v = &*v * &inv;
            }
        }
        let pivot = rows[col].clone();
        let nz: Vec<usize> = (0..pivot.len()).filter(|&j| !pivot[j].is_zero()).collect();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for &j in &nz {
                let d = &f * &pivot[j];
                row[j] -= d;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Induced {
    Distribution(Distribution),
    /// The scheduler fails to stop with probability 1 after exactly one
    /// visible action.
    Divergent,
}

/// The distribution `sched` induces from `t`, or `Divergent` when mass is
/// lost to infinite runs or to stopping at the wrong stage.
pub fn induced_distribution(
    pa: &ProbAutomaton,
    sched: &DeterminateScheduler,
    t: StateId,
    a: Action,
) -> Result<Induced> {
    pa.check_state(t)?;
    let chain = StagedChain::new(pa, sched, a)?;
    let start = chain.index(Node::Live(t, Stage::PreA)).unwrap();
    let absorbed = chain.absorption(start)?;
    let mut entries = Vec::new();
    let mut total = Rational::zero();
    for (i, node) in chain.nodes().iter().enumerate() {
        match node {
            Node::Bad if !absorbed[i].is_zero() => return Ok(Induced::Divergent),
            Node::Stop(s) if !absorbed[i].is_zero() => {
                total += &absorbed[i];
                entries.push((*s, absorbed[i].clone()));
            }
            _ => {}
        }
    }
    if !total.is_one() {
        return Ok(Induced::Divergent);
    }
    Ok(Induced::Distribution(Distribution::new(entries)?))
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub answer: bool,
    /// Automaton the scheduler ranges over (extended by a fresh state for
    /// distribution sources).
    pub automaton: ProbAutomaton,
    pub start: StateId,
    pub scheduler: Option<DeterminateScheduler>,
    pub induced: Option<Distribution>,
    pub stats: Stats,
}

/// Decides the query and, when it holds, extracts a scheduler and checks it
/// by recomputing the distribution it induces.
#[allow(clippy::too_many_arguments)]
pub fn certify(
    pa: &ProbAutomaton,
    source: &Source,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
    opts: &Options,
) -> Result<Certificate> {
    let o = solve_query(
        pa,
        source,
        a,
        mu,
        allowed,
        part,
        SolveMode::MinimizeObjective,
        opts,
    )?;
    let stats = o.stats();
    if !o.feasible() {
        return Ok(Certificate {
            answer: false,
            automaton: o.automaton,
            start: o.start,
            scheduler: None,
            induced: None,
            stats,
        });
    }
    let soundness = |what: String| Error::Soundness(format!("program feasible but {what}"));
    let sched = extract_scheduler(&o.network, &o.solution)
        .map_err(|e| soundness(format!("extraction failed: {e}")))?;
    if let Some(tr) = sched
        .used_transitions()
        .into_iter()
        .find(|tr| !o.allowed.contains(tr))
    {
        return Err(soundness(format!(
            "the witness uses {tr} outside the allowed set"
        )));
    }
    let induced = match induced_distribution(&o.automaton, &sched, o.start, a)? {
        Induced::Distribution(d) => d,
        Induced::Divergent => return Err(soundness("the witness scheduler diverges".into())),
    };
    let ext_part = &o.network.query().partition;
    if !lift_equiv(&induced, mu, ext_part)? {
        return Err(soundness(
            "the witness induces a distribution outside the target class".into(),
        ));
    }
    Ok(Certificate {
        answer: true,
        automaton: o.automaton,
        start: o.start,
        scheduler: Some(sched),
        induced: Some(induced),
        stats,
    })
}
