//! Weak transition queries and witness schedulers.
//!
//! Every query is answered by building the flow network for it, turning the
//! network into a linear program and solving that exactly. Hyper-transitions
//! (queries from a distribution) are reduced to ordinary ones by adding a
//! fresh state `#h` with a single `tau` transition to the source
//! distribution.

use std::collections::BTreeMap;
use std::fmt;

use crate::automata::{
    Action, Distribution, Partition, ProbAutomaton, StateId, SubDistribution, TransitionId,
};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, Solution, SolveMode};
use crate::network::{build_network, FlowNetwork, GadgetKind, Vertex};
use crate::numeric::Rational;
use crate::Options;

/// Name of the fresh state added for hyper-transition queries.
pub const FRESH_STATE: &str = "#h";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    State(StateId),
    Dist(Distribution),
}

/// Sizes reported by `--stats`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    pub vertices: usize,
    pub arcs: usize,
    pub vars: usize,
    pub rows: usize,
    pub pivots: usize,
}

/// Everything produced while answering one query.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// The automaton the network was built over; for distribution sources
    /// this is the extension by [`FRESH_STATE`].
    pub automaton: ProbAutomaton,
    pub start: StateId,
    pub allowed: Vec<TransitionId>,
    pub network: FlowNetwork,
    pub program: LinearProgram,
    pub solution: Solution,
}

impl Outcome {
    pub fn feasible(&self) -> bool {
        self.solution.is_feasible()
    }

    pub fn stats(&self) -> Stats {
        Stats {
            vertices: self.network.num_vertices(),
            arcs: self.network.num_arcs(),
            vars: self.program.num_vars(),
            rows: self.program.num_rows(),
            pivots: self.solution.pivots,
        }
    }
}

struct Prepared {
    automaton: ProbAutomaton,
    start: StateId,
    allowed: Vec<TransitionId>,
    partition: Partition,
}

fn prepare(
    pa: &ProbAutomaton,
    source: &Source,
    allowed: &[TransitionId],
    part: &Partition,
) -> Result<Prepared> {
    if let Some(tr) = allowed.iter().find(|tr| tr.0 >= pa.num_transitions()) {
        return Err(Error::Domain(format!(
            "allowed transition {tr} does not exist"
        )));
    }
    if part.carrier_len() != pa.num_states() {
        return Err(Error::Domain(format!(
            "partition covers {} states but the automaton has {}",
            part.carrier_len(),
            pa.num_states()
        )));
    }
    match source {
        Source::State(t) => {
            pa.check_state(*t)?;
            Ok(Prepared {
                automaton: pa.clone(),
                start: *t,
                allowed: allowed.to_vec(),
                partition: part.clone(),
            })
        }
        Source::Dist(gamma) => {
            let (ext, h, tr) = pa.with_fresh_source(FRESH_STATE, gamma)?;
            let mut allowed = allowed.to_vec();
            allowed.push(tr);
            Ok(Prepared {
                automaton: ext,
                start: h,
                allowed,
                partition: part.with_fresh_singleton(),
            })
        }
    }
}

fn program_for(net: &FlowNetwork, opts: &Options) -> LinearProgram {
    let lp = lp::build_lp(net);
    if opts.optimize_lp {
        lp::apply_optimizations(&lp, net)
    } else {
        lp
    }
}

/// Solves `L(source, a, mu, allowed, part)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_query(
    pa: &ProbAutomaton,
    source: &Source,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
    mode: SolveMode,
    opts: &Options,
) -> Result<Outcome> {
    let p = prepare(pa, source, allowed, part)?;
    pa.check_distribution(mu)?;
    let network = build_network(&p.automaton, p.start, a, mu, &p.allowed, &p.partition)?;
    let program = program_for(&network, opts);
    let solution = lp::solve_restricted(&program, &network.live_arcs(), mode, opts.fault)?;
    Ok(Outcome {
        automaton: p.automaton,
        start: p.start,
        allowed: p.allowed,
        network,
        program,
        solution,
    })
}

/// Feasibility of `L(source, a, mu, allowed, part)`.
pub fn query(
    pa: &ProbAutomaton,
    source: &Source,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
    opts: &Options,
) -> Result<bool> {
    solve_query(
        pa,
        source,
        a,
        mu,
        allowed,
        part,
        SolveMode::FeasibilityOnly,
        opts,
    )
    .map(|o| o.feasible())
}

/// Whether `t` enables a weak combined `a`-transition to a distribution
/// equivalent to `mu` under `part`.
pub fn has_weak_combined(
    pa: &ProbAutomaton,
    t: StateId,
    a: Action,
    mu: &Distribution,
    part: &Partition,
) -> Result<bool> {
    has_allowed_weak(pa, t, a, mu, &pa.all_transition_ids(), part)
}

/// As [`has_weak_combined`], using only transitions in `allowed`.
pub fn has_allowed_weak(
    pa: &ProbAutomaton,
    t: StateId,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
) -> Result<bool> {
    query(
        pa,
        &Source::State(t),
        a,
        mu,
        allowed,
        part,
        &Options::default(),
    )
}

/// Whether the distribution `gamma` enables a weak hyper-transition.
pub fn has_hyper(
    pa: &ProbAutomaton,
    gamma: &Distribution,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
) -> Result<bool> {
    query(
        pa,
        &Source::Dist(gamma.clone()),
        a,
        mu,
        allowed,
        part,
        &Options::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    /// The visible action has not happened yet.
    PreA,
    /// The visible action has happened.
    PostA,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::PreA => "PreA",
            Stage::PostA => "PostA",
        })
    }
}

/// A scheduler whose choice depends only on the current state and on
/// whether the visible action has been performed. Keys without an entry
/// stop with probability 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterminateScheduler {
    action: Action,
    choices: BTreeMap<(StateId, Stage), SubDistribution<TransitionId>>,
}

impl DeterminateScheduler {
    pub fn new(
        action: Action,
        choices: BTreeMap<(StateId, Stage), SubDistribution<TransitionId>>,
    ) -> Result<Self> {
        if action.is_tau() && choices.keys().any(|(_, st)| *st == Stage::PostA) {
            return Err(Error::Domain(
                "a scheduler for an internal move has no PostA stage".into(),
            ));
        }
        Ok(DeterminateScheduler { action, choices })
    }

    pub fn action(&self) -> Action {
        self.action
    }

    pub fn stages(&self) -> &'static [Stage] {
        if self.action.is_tau() {
            &[Stage::PreA]
        } else {
            &[Stage::PreA, Stage::PostA]
        }
    }

    pub fn choice(&self, s: StateId, stage: Stage) -> Option<&SubDistribution<TransitionId>> {
        self.choices.get(&(s, stage))
    }

    pub fn stop_mass(&self, s: StateId, stage: Stage) -> Rational {
        self.choice(s, stage)
            .map_or_else(Rational::one, |d| d.stop_mass())
    }

    pub fn choices(&self) -> &BTreeMap<(StateId, Stage), SubDistribution<TransitionId>> {
        &self.choices
    }

    /// Every transition the scheduler ever picks.
    pub fn used_transitions(&self) -> Vec<TransitionId> {
        let mut used: Vec<TransitionId> = self.choices.values().flat_map(|d| d.support()).collect();
        used.sort();
        used.dedup();
        used
    }

    /// One `state stage -> tr#i:p, ... | stop:r` line per stored key.
    pub fn render(&self, pa: &ProbAutomaton) -> String {
        let mut out = String::new();
        for ((s, stage), d) in &self.choices {
            let picks: Vec<String> = d.iter().map(|(tr, p)| format!("{tr}:{p}")).collect();
            out.push_str(&format!("{} {stage} -> ", pa.state_name(*s)));
            if picks.is_empty() {
                out.push_str(&format!("stop:{}\n", d.stop_mass()));
            } else {
                out.push_str(&format!("{} | stop:{}\n", picks.join(", "), d.stop_mass()));
            }
        }
        out
    }
}

/// Reads a determinate scheduler off a feasible flow: at every state copy
/// with positive inflow, each transition is chosen with the share of the
/// inflow its gadget receives, and the share drained into the class is the
/// stop mass. States without inflow are left to stop.
pub fn extract_scheduler(net: &FlowNetwork, sol: &Solution) -> Result<DeterminateScheduler> {
    let full = lp::build_lp(net);
    if !sol.is_feasible() || !full.is_satisfied_by(&sol.assignment) {
        return Err(Error::Consistency(
            "solution does not satisfy the network's program".into(),
        ));
    }
    let f = &sol.assignment;
    let query = net.query();
    let inflow = |v: Vertex| -> Rational {
        net.vertex_id(v)
            .map(|i| net.in_arcs(i).iter().map(|a| &f[*a]).sum())
            .unwrap_or_else(Rational::zero)
    };

    let mut entries: BTreeMap<(StateId, Stage), Vec<(TransitionId, Rational)>> = BTreeMap::new();
    for g in net.gadgets() {
        if f[g.entry].is_zero() {
            continue;
        }
        let (v, _) = net.arc(g.entry);
        let (s, stage) = match (v, g.kind) {
            (Vertex::State(s), GadgetKind::Internal | GadgetKind::Crossing) => (s, Stage::PreA),
            (Vertex::StateAfter(s), GadgetKind::InternalAfter) => (s, Stage::PostA),
            _ => unreachable!("gadget entries leave a state vertex"),
        };
        entries
            .entry((s, stage))
            .or_default()
            .push((g.transition, f[g.entry].clone()));
    }

    let mut choices = BTreeMap::new();
    for ((s, stage), picks) in entries {
        let total = inflow(match stage {
            Stage::PreA => Vertex::State(s),
            Stage::PostA => Vertex::StateAfter(s),
        });
        let scaled = picks
            .into_iter()
            .map(|(tr, x)| Ok((tr, x.checked_div(&total)?)))
            .collect::<Result<Vec<_>>>()?;
        choices.insert((s, stage), SubDistribution::new(scaled)?);
    }
    DeterminateScheduler::new(query.action, choices)
}

/// One side of an equivalence-matching query.
#[derive(Debug, Clone)]
pub struct Side {
    pub source: Source,
    pub action: Action,
    pub allowed: Vec<TransitionId>,
}

/// Looks for weak (hyper-)transitions from both sides whose targets are
/// equivalent under `part`. Returns the common class masses, one per block.
pub fn match_equiv(
    pa: &ProbAutomaton,
    left: &Side,
    right: &Side,
    part: &Partition,
    opts: &Options,
) -> Result<Option<Vec<Rational>>> {
    // The class-mass rows are replaced in the joint program, so the target
    // used to build each side is irrelevant.
    let placeholder = Distribution::dirac(pa.start());
    let side_program = |side: &Side| -> Result<LinearProgram> {
        let p = prepare(pa, &side.source, &side.allowed, part)?;
        let net = build_network(
            &p.automaton,
            p.start,
            side.action,
            &placeholder,
            &p.allowed,
            &p.partition,
        )?;
        Ok(program_for(&net, opts))
    };
    let lp1 = side_program(left)?;
    let lp2 = side_program(right)?;
    let joint = lp::build_joint_lp(&lp1, &lp2, part)?;
    let sol = lp::solve_with(&joint, SolveMode::MinimizeObjective, opts.fault)?;
    if !sol.is_feasible() {
        return Ok(None);
    }
    let p0 = lp1.num_vars() + lp2.num_vars();
    Ok(Some(sol.assignment[p0..].to_vec()))
}
