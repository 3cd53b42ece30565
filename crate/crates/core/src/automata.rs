//! Probabilistic automata, distributions and partitions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::numeric::Rational;

/// Name of the internal action in files and printed output.
pub const TAU: &str = "tau";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TransitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tr#{}", self.0)
    }
}

/// A transition label: the internal action or an index into the automaton's
/// external actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Tau,
    External(usize),
}

impl Action {
    pub fn is_tau(self) -> bool {
        self == Action::Tau
    }
}

/// A finite sub-probability measure. The missing mass `1 - total()` is the
/// stop (⊥) probability.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubDistribution<K: Ord> {
    entries: BTreeMap<K, Rational>,
}

impl<K: Ord + Copy + fmt::Debug> SubDistribution<K> {
    pub fn empty() -> Self {
        SubDistribution {
            entries: BTreeMap::new(),
        }
    }

    /// Rejects non-positive masses, repeated keys and total mass above one.
    pub fn new(entries: impl IntoIterator<Item = (K, Rational)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, p) in entries {
            if !p.is_positive() {
                return Err(Error::Format(format!(
                    "probability {p} for {k:?} must be positive"
                )));
            }
            if map.insert(k, p).is_some() {
                return Err(Error::Format(format!("{k:?} listed twice")));
            }
        }
        let sub = SubDistribution { entries: map };
        if sub.total() > Rational::one() {
            return Err(Error::Format(format!(
                "sub-distribution mass {} exceeds 1",
                sub.total()
            )));
        }
        Ok(sub)
    }

    pub fn prob(&self, k: K) -> Rational {
        self.entries.get(&k).cloned().unwrap_or_default()
    }

    pub fn total(&self) -> Rational {
        self.entries.values().sum()
    }

    pub fn stop_mass(&self) -> Rational {
        Rational::one() - self.total()
    }

    pub fn support(&self) -> impl Iterator<Item = K> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (K, &Rational)> + '_ {
        self.entries.iter().map(|(k, p)| (*k, p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A probability distribution over states: positive masses summing to one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Distribution(SubDistribution<StateId>);

impl Distribution {
    pub fn new(entries: impl IntoIterator<Item = (StateId, Rational)>) -> Result<Self> {
        let sub = SubDistribution::new(entries)?;
        let total = sub.total();
        if !total.is_one() {
            return Err(Error::Format(format!(
                "distribution sums to {total}, expected 1"
            )));
        }
        Ok(Distribution(sub))
    }

    pub fn dirac(s: StateId) -> Self {
        Distribution(SubDistribution {
            entries: BTreeMap::from([(s, Rational::one())]),
        })
    }

    pub fn prob(&self, s: StateId) -> Rational {
        self.0.prob(s)
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.0.support()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, &Rational)> + '_ {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mass_of(&self, states: &[StateId]) -> Rational {
        states.iter().map(|s| self.prob(*s)).sum()
    }

    /// Renames every support state through `f`, merging masses that collide.
    pub fn map_states(&self, mut f: impl FnMut(StateId) -> StateId) -> Distribution {
        let mut entries: BTreeMap<StateId, Rational> = BTreeMap::new();
        for (s, p) in self.iter() {
            *entries.entry(f(s)).or_default() += p;
        }
        Distribution(SubDistribution { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub id: TransitionId,
    pub source: StateId,
    pub action: Action,
    pub target: Distribution,
}

/// A finite probabilistic automaton `(S, s̄, Σ, D)`. States, actions and
/// transitions are addressed by dense indices in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbAutomaton {
    name: String,
    states: Vec<String>,
    start: StateId,
    external_actions: Vec<String>,
    transitions: Vec<Transition>,
    outgoing: Vec<Vec<TransitionId>>,
}

impl ProbAutomaton {
    /// `transitions` are `(source, action, target)`; ids are assigned in order.
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        start: StateId,
        external_actions: Vec<String>,
        transitions: Vec<(StateId, Action, Distribution)>,
    ) -> Result<Self> {
        let n = states.len();
        if start.0 >= n {
            return Err(Error::Domain(format!("start state {start} out of range")));
        }
        if external_actions.iter().any(|a| a == TAU) {
            return Err(Error::Format(format!(
                "`{TAU}` cannot be declared as an external action"
            )));
        }
        let mut outgoing = vec![Vec::new(); n];
        let mut list = Vec::with_capacity(transitions.len());
        for (i, (source, action, target)) in transitions.into_iter().enumerate() {
            if source.0 >= n {
                return Err(Error::Domain(format!(
                    "transition source {source} out of range"
                )));
            }
            if let Action::External(k) = action {
                if k >= external_actions.len() {
                    return Err(Error::Domain(format!("action index {k} out of range")));
                }
            }
            if let Some(s) = target.support().find(|s| s.0 >= n) {
                return Err(Error::Domain(format!("target state {s} out of range")));
            }
            let id = TransitionId(i);
            outgoing[source.0].push(id);
            list.push(Transition {
                id,
                source,
                action,
                target,
            });
        }
        Ok(ProbAutomaton {
            name: name.into(),
            states,
            start,
            external_actions,
            transitions: list,
            outgoing,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|n| n == name).map(StateId)
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn external_actions(&self) -> &[String] {
        &self.external_actions
    }

    pub fn action_by_name(&self, name: &str) -> Option<Action> {
        if name == TAU {
            return Some(Action::Tau);
        }
        self.external_actions
            .iter()
            .position(|a| a == name)
            .map(Action::External)
    }

    pub fn action_name(&self, a: Action) -> &str {
        match a {
            Action::Tau => TAU,
            Action::External(k) => &self.external_actions[k],
        }
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, id: TransitionId) -> &Transition {
        &self.transitions[id.0]
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn outgoing(&self, s: StateId) -> &[TransitionId] {
        &self.outgoing[s.0]
    }

    pub fn contains_state(&self, s: StateId) -> bool {
        s.0 < self.states.len()
    }

    pub fn check_state(&self, s: StateId) -> Result<()> {
        if self.contains_state(s) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "state {s} is not a state of `{}`",
                self.name
            )))
        }
    }

    pub fn check_distribution(&self, mu: &Distribution) -> Result<()> {
        mu.support().try_for_each(|s| self.check_state(s))
    }

    pub fn all_transition_ids(&self) -> Vec<TransitionId> {
        (0..self.transitions.len()).map(TransitionId).collect()
    }

    /// The automaton extended with a fresh state `h` and a transition
    /// `h -tau-> gamma`. Returns the extension, `h` and the new transition.
    pub fn with_fresh_source(
        &self,
        fresh_name: &str,
        gamma: &Distribution,
    ) -> Result<(ProbAutomaton, StateId, TransitionId)> {
        self.check_distribution(gamma)?;
        if self.state_by_name(fresh_name).is_some() {
            return Err(Error::Domain(format!(
                "fresh state `{fresh_name}` already exists"
            )));
        }
        let h = StateId(self.num_states());
        let mut states = self.states.clone();
        states.push(fresh_name.to_owned());
        let mut transitions: Vec<_> = self
            .transitions
            .iter()
            .map(|t| (t.source, t.action, t.target.clone()))
            .collect();
        transitions.push((h, Action::Tau, gamma.clone()));
        let id = TransitionId(transitions.len() - 1);
        let ext = ProbAutomaton::new(
            self.name.clone(),
            states,
            self.start,
            self.external_actions.clone(),
            transitions,
        )?;
        Ok((ext, h, id))
    }
}

/// Disjoint blocks covering the states `0..n`; also read as the induced
/// equivalence relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<StateId>>,
    block_of: Vec<usize>,
}

impl Partition {
    /// Blocks keep their given order; members are sorted within a block.
    pub fn new(blocks: Vec<Vec<StateId>>, num_states: usize) -> Result<Self> {
        let mut block_of = vec![usize::MAX; num_states];
        let mut duplicated = BTreeSet::new();
        let mut sorted = Vec::with_capacity(blocks.len());
        for (i, mut block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Format(format!("block {i} is empty")));
            }
            block.sort();
            for s in &block {
                if s.0 >= num_states {
                    return Err(Error::Domain(format!("state {s} outside the carrier")));
                }
                if block_of[s.0] != usize::MAX {
                    duplicated.insert(s.0);
                }
                block_of[s.0] = i;
            }
            sorted.push(block);
        }
        if !duplicated.is_empty() {
            return Err(Error::Format(format!(
                "states in more than one block: {duplicated:?}"
            )));
        }
        let missing: Vec<usize> = (0..num_states)
            .filter(|s| block_of[*s] == usize::MAX)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Format(format!("states not covered: {missing:?}")));
        }
        Ok(Partition {
            blocks: sorted,
            block_of,
        })
    }

    /// The one-block partition `{S}`.
    pub fn single_block(num_states: usize) -> Self {
        Partition {
            blocks: if num_states == 0 {
                Vec::new()
            } else {
                vec![(0..num_states).map(StateId).collect()]
            },
            block_of: vec![0; num_states],
        }
    }

    /// The identity relation: every state in its own block.
    pub fn discrete(num_states: usize) -> Self {
        Partition {
            blocks: (0..num_states).map(|s| vec![StateId(s)]).collect(),
            block_of: (0..num_states).collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<StateId>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[StateId] {
        &self.blocks[i]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn carrier_len(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_of(&self, s: StateId) -> Result<usize> {
        self.block_of
            .get(s.0)
            .copied()
            .ok_or_else(|| Error::Domain(format!("state {s} outside the partition carrier")))
    }

    pub fn same_block(&self, s: StateId, t: StateId) -> bool {
        matches!((self.block_of.get(s.0), self.block_of.get(t.0)), (Some(a), Some(b)) if a == b)
    }

    /// Mass that `mu` assigns to each block, in block order.
    pub fn class_masses(&self, mu: &Distribution) -> Result<Vec<Rational>> {
        let mut masses = vec![Rational::zero(); self.blocks.len()];
        for (s, p) in mu.iter() {
            masses[self.block_of(s)?] += p;
        }
        Ok(masses)
    }

    /// Appends a singleton block for a new state `num_states()`.
    pub fn with_fresh_singleton(&self) -> Partition {
        let h = self.block_of.len();
        let mut blocks = self.blocks.clone();
        blocks.push(vec![StateId(h)]);
        let mut block_of = self.block_of.clone();
        block_of.push(blocks.len() - 1);
        Partition { blocks, block_of }
    }

    /// Replaces block `i` by `keep` in place and appends `split_off`.
    pub(crate) fn split_block(
        &self,
        i: usize,
        keep: Vec<StateId>,
        split_off: Vec<StateId>,
    ) -> Partition {
        let mut blocks = self.blocks.clone();
        blocks[i] = keep;
        blocks.push(split_off);
        Partition::new(blocks, self.block_of.len()).expect("splitting preserves a partition")
    }
}

/// `mu1 L(R) mu2` for the equivalence relation `part`: every block receives
/// the same mass from both distributions.
pub fn lift_equiv(mu1: &Distribution, mu2: &Distribution, part: &Partition) -> Result<bool> {
    Ok(part.class_masses(mu1)? == part.class_masses(mu2)?)
}

/// Result of [`disjoint_union`]: the union automaton plus the renamings of
/// both operands into it.
#[derive(Debug, Clone)]
pub struct DisjointUnion {
    pub automaton: ProbAutomaton,
    pub left_states: Vec<StateId>,
    pub right_states: Vec<StateId>,
    pub left_transitions: Vec<TransitionId>,
    pub right_transitions: Vec<TransitionId>,
}

/// `a1 ⊎ a2`: states of `a2` follow those of `a1`, transitions are
/// concatenated and external actions merged by name. Right-hand state names
/// that clash get primes appended. The start state is `a1`'s.
pub fn disjoint_union(a1: &ProbAutomaton, a2: &ProbAutomaton) -> Result<DisjointUnion> {
    let offset = a1.num_states();
    let mut actions = a1.external_actions.clone();
    for a in &a2.external_actions {
        if a == TAU {
            return Err(Error::Format(format!(
                "action `{a}` is external in `{}` but internal in `{}`",
                a2.name, a1.name
            )));
        }
        if !actions.contains(a) {
            actions.push(a.clone());
        }
    }
    let remap_action = |pa: &ProbAutomaton, a: Action| match a {
        Action::Tau => Action::Tau,
        Action::External(k) => Action::External(
            actions
                .iter()
                .position(|x| *x == pa.external_actions[k])
                .expect("merged action set contains every action"),
        ),
    };
    let mut names = a1.states.clone();
    let mut taken: BTreeSet<String> = names.iter().cloned().collect();
    for n in &a2.states {
        let mut name = n.clone();
        while taken.contains(&name) {
            name.push('\'');
        }
        taken.insert(name.clone());
        names.push(name);
    }
    let mut transitions = Vec::with_capacity(a1.num_transitions() + a2.num_transitions());
    for t in &a1.transitions {
        transitions.push((t.source, remap_action(a1, t.action), t.target.clone()));
    }
    for t in &a2.transitions {
        transitions.push((
            StateId(t.source.0 + offset),
            remap_action(a2, t.action),
            t.target.map_states(|s| StateId(s.0 + offset)),
        ));
    }
    let automaton = ProbAutomaton::new(
        format!("{}+{}", a1.name, a2.name),
        names,
        a1.start,
        actions,
        transitions,
    )?;
    let n1 = a1.num_transitions();
    Ok(DisjointUnion {
        automaton,
        left_states: a1.state_ids().collect(),
        right_states: a2.state_ids().map(|s| StateId(s.0 + offset)).collect(),
        left_transitions: (0..n1).map(TransitionId).collect(),
        right_transitions: (0..a2.num_transitions())
            .map(|i| TransitionId(i + n1))
            .collect(),
    })
}

/// Transitions labelled `tau` or `a` leaving states reachable from `t`
/// through such transitions, in ascending id order.
pub fn restrict_relevant(pa: &ProbAutomaton, t: StateId, a: Action) -> Result<Vec<TransitionId>> {
    pa.check_state(t)?;
    let mut seen = vec![false; pa.num_states()];
    let mut queue = VecDeque::from([t]);
    seen[t.0] = true;
    let mut relevant = Vec::new();
    while let Some(v) = queue.pop_front() {
        for &id in pa.outgoing(v) {
            let tr = pa.transition(id);
            if tr.action != Action::Tau && tr.action != a {
                continue;
            }
            relevant.push(id);
            for w in tr.target.support() {
                if !seen[w.0] {
                    seen[w.0] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    relevant.sort();
    Ok(relevant)
}
