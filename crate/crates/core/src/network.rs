//! The flow network behind a weak transition query.
//!
//! For a query `(t, a, mu, A, R)` the network has a source feeding `t`, one
//! plain copy of the states for the part of the run before `a`, an
//! `a`-subscripted copy for the part after it, one vertex per allowed
//! transition in each copy, and one vertex per class of `R` draining into
//! the sink. For `a = tau` only the plain copy exists and states stop
//! directly into their class.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::automata::{Action, Distribution, Partition, ProbAutomaton, StateId, TransitionId};
use crate::error::{Error, Result};
use crate::numeric::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Source,
    Sink,
    State(StateId),
    TrState(StateId, TransitionId),
    StateAfter(StateId),
    TrStateAfter(StateId, TransitionId),
    Class(usize),
}

/// Which copy a transition gadget lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadgetKind {
    /// `tau` transition before the visible action (or the only copy for `a = tau`).
    Internal,
    /// `tau` transition after the visible action.
    InternalAfter,
    /// The visible `a` transition, entering from the plain copy and exiting
    /// into the subscripted one.
    Crossing,
}

/// Arcs modelling one transition: a single entry arc into the transition
/// vertex and one exit arc per support state, weighted by the target.
#[derive(Debug, Clone)]
pub struct Gadget {
    pub transition: TransitionId,
    pub kind: GadgetKind,
    pub entry: usize,
    pub exits: Vec<(StateId, Rational, usize)>,
}

#[derive(Debug, Clone)]
pub struct NetworkQuery {
    pub source: StateId,
    pub action: Action,
    pub target: Distribution,
    pub allowed: Vec<TransitionId>,
    pub partition: Partition,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    vertices: Vec<Vertex>,
    vertex_index: HashMap<Vertex, usize>,
    arcs: Vec<(usize, usize)>,
    arc_index: HashMap<(usize, usize), usize>,
    in_arcs: Vec<Vec<usize>>,
    out_arcs: Vec<Vec<usize>>,
    gadgets: Vec<Gadget>,
    class_mass: Vec<Rational>,
    isolated: Vec<usize>,
    query: NetworkQuery,
}

impl FlowNetwork {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex_id(&self, v: Vertex) -> Option<usize> {
        self.vertex_index.get(&v).copied()
    }

    /// Arcs as pairs of vertex indices, in lexicographic order.
    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn arc(&self, i: usize) -> (Vertex, Vertex) {
        let (u, v) = self.arcs[i];
        (self.vertices[u], self.vertices[v])
    }

    pub fn arc_id(&self, from: Vertex, to: Vertex) -> Option<usize> {
        let key = (self.vertex_id(from)?, self.vertex_id(to)?);
        self.arc_index.get(&key).copied()
    }

    pub fn in_arcs(&self, v: usize) -> &[usize] {
        &self.in_arcs[v]
    }

    pub fn out_arcs(&self, v: usize) -> &[usize] {
        &self.out_arcs[v]
    }

    pub fn gadgets(&self) -> &[Gadget] {
        &self.gadgets
    }

    /// `mu(C)` for every class, in partition order.
    pub fn class_mass(&self) -> &[Rational] {
        &self.class_mass
    }

    /// Vertices without any incident arc.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    pub fn query(&self) -> &NetworkQuery {
        &self.query
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Arcs that lie on some path from the source to the sink. Every other
    /// arc carries zero flow in some optimal solution, and any feasible flow
    /// stays feasible with those arcs zeroed.
    pub fn live_arcs(&self) -> Vec<bool> {
        let n = self.vertices.len();
        let walk = |start: usize, next: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for w in next(v) {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen
        };
        let fwd = walk(self.vertex_index[&Vertex::Source], &|v| {
            self.out_arcs[v].iter().map(|a| self.arcs[*a].1).collect()
        });
        let bwd = walk(self.vertex_index[&Vertex::Sink], &|v| {
            self.in_arcs[v].iter().map(|a| self.arcs[*a].0).collect()
        });
        self.arcs.iter().map(|(u, v)| fwd[*u] && bwd[*v]).collect()
    }

    pub fn vertex_label(&self, pa: &ProbAutomaton, v: Vertex) -> String {
        match v {
            Vertex::Source => "src".into(),
            Vertex::Sink => "snk".into(),
            Vertex::State(s) => format!("S({})", pa.state_name(s)),
            Vertex::TrState(s, tr) => format!("T({},#{})", pa.state_name(s), tr.0),
            Vertex::StateAfter(s) => format!("Sa({})", pa.state_name(s)),
            Vertex::TrStateAfter(s, tr) => format!("Ta({},#{})", pa.state_name(s), tr.0),
            Vertex::Class(c) => format!("C(#{c})"),
        }
    }

    pub fn arc_label(&self, pa: &ProbAutomaton, i: usize) -> String {
        let (u, v) = self.arc(i);
        format!(
            "{} -> {}",
            self.vertex_label(pa, u),
            self.vertex_label(pa, v)
        )
    }

    /// One `FROM -> TO` line per arc.
    pub fn dump(&self, pa: &ProbAutomaton) -> String {
        let mut out = String::new();
        for i in 0..self.arcs.len() {
            let _ = writeln!(out, "{}", self.arc_label(pa, i));
        }
        out
    }
}

/// Builds the network for "can `t` weakly perform `a` using only `allowed`
/// and reach a distribution equivalent to `mu` under `part`".
pub fn build_network(
    pa: &ProbAutomaton,
    t: StateId,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
) -> Result<FlowNetwork> {
    pa.check_state(t)?;
    pa.check_distribution(mu)?;
    if part.carrier_len() != pa.num_states() {
        return Err(Error::Domain(format!(
            "partition covers {} states but the automaton has {}",
            part.carrier_len(),
            pa.num_states()
        )));
    }
    if let Some(tr) = allowed.iter().find(|tr| tr.0 >= pa.num_transitions()) {
        return Err(Error::Domain(format!(
            "allowed transition {tr} does not exist"
        )));
    }
    if let Action::External(k) = a {
        if k >= pa.external_actions().len() {
            return Err(Error::Domain(format!("action index {k} out of range")));
        }
    }
    let allowed: Vec<TransitionId> = allowed
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let after = !a.is_tau();

    let mut vertices: BTreeSet<Vertex> = BTreeSet::from([Vertex::Source, Vertex::Sink]);
    let mut arcs: BTreeSet<(Vertex, Vertex)> = BTreeSet::new();
    // (transition, kind, entry arc, exit arcs)
    type Pending = (
        TransitionId,
        GadgetKind,
        (Vertex, Vertex),
        Vec<(StateId, Rational, (Vertex, Vertex))>,
    );
    let mut gadget_arcs: Vec<Pending> = Vec::new();

    for s in pa.state_ids() {
        vertices.insert(Vertex::State(s));
        if after {
            vertices.insert(Vertex::StateAfter(s));
        }
    }
    for c in 0..part.num_blocks() {
        vertices.insert(Vertex::Class(c));
    }
    arcs.insert((Vertex::Source, Vertex::State(t)));
    for (c, block) in part.blocks().iter().enumerate() {
        for &v in block {
            let from = if after {
                Vertex::StateAfter(v)
            } else {
                Vertex::State(v)
            };
            arcs.insert((from, Vertex::Class(c)));
        }
        arcs.insert((Vertex::Class(c), Vertex::Sink));
    }

    let mut gadget = |tr: TransitionId,
                      kind: GadgetKind,
                      from: Vertex,
                      mid: Vertex,
                      exit: &dyn Fn(StateId) -> Vertex,
                      target: &Distribution,
                      arcs: &mut BTreeSet<(Vertex, Vertex)>| {
        arcs.insert((from, mid));
        let exits = target
            .iter()
            .map(|(w, p)| {
                let arc = (mid, exit(w));
                arcs.insert(arc);
                (w, p.clone(), arc)
            })
            .collect();
        gadget_arcs.push((tr, kind, (from, mid), exits));
    };

    for &id in &allowed {
        let tr = pa.transition(id);
        let v = tr.source;
        if tr.action.is_tau() {
            vertices.insert(Vertex::TrState(v, id));
            gadget(
                id,
                GadgetKind::Internal,
                Vertex::State(v),
                Vertex::TrState(v, id),
                &Vertex::State,
                &tr.target,
                &mut arcs,
            );
            if after {
                vertices.insert(Vertex::TrStateAfter(v, id));
                gadget(
                    id,
                    GadgetKind::InternalAfter,
                    Vertex::StateAfter(v),
                    Vertex::TrStateAfter(v, id),
                    &Vertex::StateAfter,
                    &tr.target,
                    &mut arcs,
                );
            }
        } else if tr.action == a {
            vertices.insert(Vertex::TrState(v, id));
            vertices.insert(Vertex::TrStateAfter(v, id));
            gadget(
                id,
                GadgetKind::Crossing,
                Vertex::State(v),
                Vertex::TrStateAfter(v, id),
                &Vertex::StateAfter,
                &tr.target,
                &mut arcs,
            );
        }
    }

    let vertices: Vec<Vertex> = vertices.into_iter().collect();
    let vertex_index: HashMap<Vertex, usize> =
        vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let arcs: Vec<(usize, usize)> = arcs
        .into_iter()
        .map(|(u, v)| (vertex_index[&u], vertex_index[&v]))
        .collect();
    let arc_index: HashMap<(usize, usize), usize> =
        arcs.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut in_arcs = vec![Vec::new(); vertices.len()];
    let mut out_arcs = vec![Vec::new(); vertices.len()];
    for (i, (u, v)) in arcs.iter().enumerate() {
        out_arcs[*u].push(i);
        in_arcs[*v].push(i);
    }
    let isolated = (0..vertices.len())
        .filter(|v| in_arcs[*v].is_empty() && out_arcs[*v].is_empty())
        .collect();
    let lookup = |(u, v): (Vertex, Vertex)| arc_index[&(vertex_index[&u], vertex_index[&v])];
    let gadgets = gadget_arcs
        .into_iter()
        .map(|(transition, kind, entry, exits)| Gadget {
            transition,
            kind,
            entry: lookup(entry),
            exits: exits
                .into_iter()
                .map(|(w, p, arc)| (w, p, lookup(arc)))
                .collect(),
        })
        .collect();

    Ok(FlowNetwork {
        vertices,
        vertex_index,
        arcs,
        arc_index,
        in_arcs,
        out_arcs,
        gadgets,
        class_mass: part.class_masses(mu)?,
        isolated,
        query: NetworkQuery {
            source: t,
            action: a,
            target: mu.clone(),
            allowed,
            partition: part.clone(),
        },
    })
}
