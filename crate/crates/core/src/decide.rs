//! Partition refinement for weak probabilistic bisimilarity.
//!
//! Starting from a single block, [`find_split`] looks for a transition
//! `s -a-> mu` and a state `t` in the block of `s` that cannot weakly match
//! it, and [`refine`] splits that block by which members can. The loop ends
//! when every transition is matched by every state in its block.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::automata::{
    disjoint_union, restrict_relevant, Action, DisjointUnion, Distribution, Partition,
    ProbAutomaton, StateId, TransitionId,
};
use crate::error::{Error, Result};
use crate::format::format_distribution;
use crate::wtrans::{self, Source};
use crate::Options;

/// Discriminating evidence found by [`find_split`]. The sentinel has no
/// block and an empty class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitInfo {
    pub block: Option<usize>,
    pub class: Vec<StateId>,
    pub action: Action,
    pub target: Distribution,
    /// The challenging transition.
    pub transition: Option<TransitionId>,
}

impl SplitInfo {
    pub fn is_sentinel(&self) -> bool {
        self.block.is_none()
    }
}

/// Answers "does `t` weakly match transition `tr` under the partition"
/// and remembers the verdicts. A verdict depends on the partition only
/// through the blocks of the states the query can touch (those reachable
/// from `t` by internal or `a` steps, plus the support of the target), and
/// block indices are stable under refinement, so the block labels of those
/// states are a sound cache key.
type Query = (StateId, TransitionId);

struct Matcher<'a> {
    pa: &'a ProbAutomaton,
    opts: Options,
    touched: Mutex<HashMap<Query, Arc<Vec<StateId>>>>,
    verdicts: Mutex<HashMap<(Query, Vec<usize>), bool>>,
}

impl<'a> Matcher<'a> {
    fn new(pa: &'a ProbAutomaton, opts: &Options) -> Self {
        Matcher {
            pa,
            opts: *opts,
            touched: Mutex::new(HashMap::new()),
            verdicts: Mutex::new(HashMap::new()),
        }
    }

    fn touched(&self, t: StateId, tr: TransitionId) -> Result<Arc<Vec<StateId>>> {
        if let Some(v) = self.touched.lock().unwrap().get(&(t, tr)) {
            return Ok(v.clone());
        }
        let transition = self.pa.transition(tr);
        let mut states: Vec<StateId> = vec![t];
        for id in restrict_relevant(self.pa, t, transition.action)? {
            states.extend(self.pa.transition(id).target.support());
        }
        states.extend(transition.target.support());
        states.sort();
        states.dedup();
        let states = Arc::new(states);
        self.touched.lock().unwrap().insert((t, tr), states.clone());
        Ok(states)
    }

    fn matches(&self, t: StateId, tr: TransitionId, part: &Partition) -> Result<bool> {
        let labels = self
            .touched(t, tr)?
            .iter()
            .map(|s| part.block_of(*s))
            .collect::<Result<Vec<usize>>>()?;
        let key = ((t, tr), labels);
        if let Some(v) = self.verdicts.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let transition = self.pa.transition(tr);
        let allowed = if self.opts.restrict_relevant {
            restrict_relevant(self.pa, t, transition.action)?
        } else {
            self.pa.all_transition_ids()
        };
        let v = wtrans::query(
            self.pa,
            &Source::State(t),
            transition.action,
            &transition.target,
            &allowed,
            part,
            &self.opts,
        )?;
        self.verdicts.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Verdicts for every state in `members`, in order.
    fn sweep(&self, members: &[StateId], tr: TransitionId, part: &Partition) -> Result<Vec<bool>> {
        if self.opts.parallel {
            members
                .par_iter()
                .map(|t| self.matches(*t, tr, part))
                .collect()
        } else {
            members.iter().map(|t| self.matches(*t, tr, part)).collect()
        }
    }

    fn find_split(&self, part: &Partition) -> Result<SplitInfo> {
        let pa = self.pa;
        if part.carrier_len() != pa.num_states() {
            return Err(Error::Domain(
                "partition does not cover the automaton".into(),
            ));
        }
        for tr in pa.transitions() {
            let block = part.block_of(tr.source)?;
            // The source always matches its own transition.
            let challengers: Vec<StateId> = part
                .block(block)
                .iter()
                .copied()
                .filter(|t| *t != tr.source)
                .collect();
            if challengers.is_empty() {
                continue;
            }
            if self.sweep(&challengers, tr.id, part)?.contains(&false) {
                return Ok(SplitInfo {
                    block: Some(block),
                    class: part.block(block).to_vec(),
                    action: tr.action,
                    target: tr.target.clone(),
                    transition: Some(tr.id),
                });
            }
        }
        Ok(SplitInfo {
            block: None,
            class: Vec::new(),
            action: Action::Tau,
            target: Distribution::dirac(pa.start()),
            transition: None,
        })
    }

    fn refine(&self, part: &Partition, split: &SplitInfo) -> Result<Partition> {
        let (Some(block), Some(tr)) = (split.block, split.transition) else {
            return Err(Error::Consistency(
                "cannot refine on the sentinel split".into(),
            ));
        };
        if part.block(block) != split.class.as_slice() {
            return Err(Error::Consistency(
                "split class is not a block of the partition".into(),
            ));
        }
        let ok = self.sweep(&split.class, tr, part)?;
        let mut keep = Vec::new();
        let mut off = Vec::new();
        for (s, f) in split.class.iter().zip(ok) {
            if f {
                keep.push(*s);
            } else {
                off.push(*s);
            }
        }
        if keep.is_empty() || off.is_empty() {
            return Err(Error::Soundness(format!(
                "degenerate split of block {block}: {} matching, {} not",
                keep.len(),
                off.len()
            )));
        }
        if !keep.contains(&self.pa.transition(tr).source) {
            return Err(Error::Soundness(format!(
                "the source of {tr} fails to match its own transition"
            )));
        }
        Ok(part.split_block(block, keep, off))
    }
}

/// The first transition, in id order, that some member of its source's
/// block cannot match; the sentinel when there is none.
pub fn find_split(pa: &ProbAutomaton, part: &Partition, opts: &Options) -> Result<SplitInfo> {
    Matcher::new(pa, opts).find_split(part)
}

/// Splits the block named by `split` into the members that match its
/// evidence, which keep the block's index, and those that do not, which
/// form a new last block.
pub fn refine(
    pa: &ProbAutomaton,
    part: &Partition,
    split: &SplitInfo,
    opts: &Options,
) -> Result<Partition> {
    Matcher::new(pa, opts).refine(part, split)
}

/// One refinement step, for trace output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRecord {
    pub block: usize,
    pub new_block: usize,
    pub transition: TransitionId,
}

impl SplitRecord {
    /// `split C#k on (s -a-> mu) -> C#k, C#k2`.
    pub fn render(&self, pa: &ProbAutomaton) -> String {
        let tr = pa.transition(self.transition);
        format!(
            "split C#{} on ({} -{}-> {}) -> C#{}, C#{}",
            self.block,
            pa.state_name(tr.source),
            pa.action_name(tr.action),
            format_distribution(pa, &tr.target),
            self.block,
            self.new_block
        )
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub partition: Partition,
    pub trace: Vec<SplitRecord>,
}

/// The coarsest weak probabilistic bisimulation on `pa`, starting from
/// `initial`.
pub fn refine_from(pa: &ProbAutomaton, initial: Partition, opts: &Options) -> Result<Refinement> {
    let matcher = Matcher::new(pa, opts);
    let mut part = initial;
    let mut trace = Vec::new();
    loop {
        let split = matcher.find_split(&part)?;
        if split.is_sentinel() {
            return Ok(Refinement {
                partition: part,
                trace,
            });
        }
        if trace.len() >= pa.num_states() {
            return Err(Error::Soundness(format!(
                "refinement did not stabilise within {} rounds",
                pa.num_states()
            )));
        }
        let next = matcher.refine(&part, &split)?;
        if next.num_blocks() != part.num_blocks() + 1 {
            return Err(Error::Soundness(
                "refinement did not add exactly one block".into(),
            ));
        }
        trace.push(SplitRecord {
            block: split.block.unwrap(),
            new_block: part.num_blocks(),
            transition: split.transition.unwrap(),
        });
        part = next;
    }
}

/// Coarsest bisimulation partition of a single automaton.
pub fn coarsest(pa: &ProbAutomaton, opts: &Options) -> Result<Refinement> {
    refine_from(pa, Partition::single_block(pa.num_states()), opts)
}

#[derive(Debug, Clone)]
pub struct Quotient {
    pub union: DisjointUnion,
    /// Start state of the right operand inside the union.
    pub right_start: StateId,
    pub partition: Partition,
    pub trace: Vec<SplitRecord>,
}

impl Quotient {
    pub fn left_start(&self) -> StateId {
        self.union.automaton.start()
    }

    pub fn start_states_related(&self) -> bool {
        self.partition
            .same_block(self.left_start(), self.right_start)
    }
}

/// Bisimilarity classes of `pa1 ⊎ pa2`.
pub fn quotient(pa1: &ProbAutomaton, pa2: &ProbAutomaton, opts: &Options) -> Result<Quotient> {
    let union = disjoint_union(pa1, pa2)?;
    let r = coarsest(&union.automaton, opts)?;
    Ok(Quotient {
        right_start: union.right_states[pa2.start().0],
        union,
        partition: r.partition,
        trace: r.trace,
    })
}

pub fn bisimilar(pa1: &ProbAutomaton, pa2: &ProbAutomaton, opts: &Options) -> Result<bool> {
    Ok(quotient(pa1, pa2, opts)?.start_states_related())
}

/// The quotient automaton: one state per bisimilarity class, named after
/// its first member, and every transition projected onto classes, keeping
/// one copy of each distinct projection.
pub fn minimize(pa: &ProbAutomaton, opts: &Options) -> Result<ProbAutomaton> {
    let part = coarsest(pa, opts)?.partition;
    project(pa, &part)
}

/// Projects `pa` onto the blocks of `part`.
pub fn project(pa: &ProbAutomaton, part: &Partition) -> Result<ProbAutomaton> {
    let names: Vec<String> = part
        .blocks()
        .iter()
        .map(|b| pa.state_name(b[0]).to_owned())
        .collect();
    let block = |s: StateId| StateId(part.block_of(s).expect("partition covers the automaton"));
    let mut transitions: Vec<(StateId, Action, Distribution)> = Vec::new();
    for tr in pa.transitions() {
        let masses = part.class_masses(&tr.target)?;
        let target = Distribution::new(
            masses
                .into_iter()
                .enumerate()
                .filter(|(_, p)| !p.is_zero())
                .map(|(c, p)| (StateId(c), p)),
        )?;
        let t = (block(tr.source), tr.action, target);
        if !transitions.contains(&t) {
            transitions.push(t);
        }
    }
    ProbAutomaton::new(
        pa.name(),
        names,
        block(pa.start()),
        pa.external_actions().to_vec(),
        transitions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{parse_pa, parse_partition};
    use crate::harness::{gen_pa, GenConfig};
    use crate::test_support::example_e;
    use proptest::prelude::*;

    const EMITTER: &str =
        "pa A1\nstates: s0 s1\nstart: s0\nexternal: a\ntransitions:\n  s0 a -> s1:1\n";
    const DEAD: &str = "pa A2\nstates: t0\nstart: t0\nexternal:\ntransitions:\n";
    const SPINNER: &str = "pa L\nstates: x\nstart: x\nexternal:\ntransitions:\n  x tau -> x:1\n";

    fn sequential() -> Options {
        Options {
            parallel: false,
            ..Options::default()
        }
    }

    #[test]
    fn split_and_refine_on_a_dead_challenger() {
        let u = disjoint_union(&parse_pa(EMITTER).unwrap(), &parse_pa(DEAD).unwrap()).unwrap();
        let pa = u.automaton;
        let part = Partition::single_block(3);
        let split = find_split(&pa, &part, &sequential()).unwrap();
        assert_eq!(split.class, vec![StateId(0), StateId(1), StateId(2)]);
        assert_eq!(split.action, pa.action_by_name("a").unwrap());
        assert_eq!(split.target, Distribution::dirac(StateId(1)));
        let next = refine(&pa, &part, &split, &sequential()).unwrap();
        assert_eq!(
            next.blocks(),
            &[vec![StateId(0)], vec![StateId(1), StateId(2)]]
        );
        let r = coarsest(&pa, &sequential()).unwrap();
        assert_eq!(r.partition, next);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(
            r.trace[0].render(&pa),
            "split C#0 on (s0 -a-> s1:1) -> C#0, C#1"
        );
    }

    #[test]
    fn stable_partitions_yield_the_sentinel() {
        let e = example_e();
        let part = parse_partition("{sbar,t,u,v | g,b,r}", &e).unwrap();
        let split = find_split(&e, &part, &sequential()).unwrap();
        assert!(split.is_sentinel());
        assert!(split.class.is_empty());
        assert_eq!(split.action, Action::Tau);
        assert_eq!(split.target, Distribution::dirac(e.start()));
        assert!(find_split(&e, &Partition::discrete(7), &sequential())
            .unwrap()
            .is_sentinel());
        assert!(refine(&e, &part, &split, &sequential()).is_err());
    }

    #[test]
    fn single_block_tau_challenge_is_matched_by_stopping() {
        let e = example_e();
        let part = Partition::single_block(7);
        let m = Matcher::new(&e, &sequential());
        for t in e.state_ids() {
            assert!(m.matches(t, TransitionId(0), &part).unwrap());
        }
    }

    #[test]
    fn example_quotient() {
        let e = example_e();
        let q = quotient(&e, &e, &sequential()).unwrap();
        let pa = &q.union.automaton;
        let names: Vec<Vec<&str>> = q
            .partition
            .blocks()
            .iter()
            .map(|b| b.iter().map(|s| pa.state_name(*s)).collect())
            .collect();
        assert_eq!(
            names,
            [
                vec!["sbar", "t", "u", "v", "sbar'", "t'", "u'", "v'"],
                vec!["g", "b", "r", "g'", "b'", "r'"],
            ]
        );
        assert!(q.start_states_related());
        assert!(q.trace.len() <= pa.num_states());
    }

    #[test]
    fn small_decisions() {
        let emitter = parse_pa(EMITTER).unwrap();
        let dead = parse_pa(DEAD).unwrap();
        let spinner = parse_pa(SPINNER).unwrap();
        let opts = sequential();
        assert!(bisimilar(&spinner, &dead, &opts).unwrap());
        let q = quotient(&spinner, &dead, &opts).unwrap();
        assert_eq!(q.partition.num_blocks(), 1);
        assert!(!bisimilar(&emitter, &dead, &opts).unwrap());
        assert!(!bisimilar(&dead, &emitter, &opts).unwrap());
        assert!(bisimilar(&example_e(), &example_e(), &opts).unwrap());
    }

    #[test]
    fn minimize_example() {
        let e = example_e();
        let m = minimize(&e, &sequential()).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.state_names(), ["sbar", "g"]);
        let b0 = StateId(0);
        let b1 = StateId(1);
        let trs: Vec<(StateId, &str, Distribution)> = m
            .transitions()
            .iter()
            .map(|t| (t.source, m.action_name(t.action), t.target.clone()))
            .collect();
        assert_eq!(
            trs,
            [
                (b0, "tau", Distribution::dirac(b0)),
                (b0, "a", Distribution::dirac(b1)),
            ]
        );
        assert!(bisimilar(&e, &m, &sequential()).unwrap());
        // Minimising again only renames.
        let again = minimize(&m, &sequential()).unwrap();
        assert_eq!(again, m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn coarsest_agrees_with_self_quotient(seed in 0u64..10_000) {
            let pa = gen_pa(&GenConfig { seed, max_states: 5, max_transitions: 6, ..GenConfig::default() });
            let opts = sequential();
            let single = coarsest(&pa, &opts).unwrap();
            let q = quotient(&pa, &pa, &opts).unwrap();
            for s in pa.state_ids() {
                prop_assert!(q.partition.same_block(q.union.left_states[s.0], q.union.right_states[s.0]));
                for t in pa.state_ids() {
                    prop_assert_eq!(
                        single.partition.same_block(s, t),
                        q.partition.same_block(q.union.left_states[s.0], q.union.left_states[t.0])
                    );
                }
            }
            prop_assert!(single.trace.len() < pa.num_states().max(1));
            for (i, rec) in single.trace.iter().enumerate() {
                prop_assert_eq!(rec.new_block, i + 1);
            }
        }

        #[test]
        fn switches_do_not_change_the_outcome(seed in 0u64..10_000) {
            let pa = gen_pa(&GenConfig { seed, ..GenConfig::default() });
            let base = coarsest(&pa, &sequential()).unwrap();
            for opts in [
                Options::default(),
                Options { restrict_relevant: false, ..sequential() },
                Options { optimize_lp: false, ..sequential() },
            ] {
                let other = coarsest(&pa, &opts).unwrap();
                prop_assert_eq!(&other.partition, &base.partition);
                prop_assert_eq!(&other.trace, &base.trace);
            }
        }

        #[test]
        fn bisimilarity_is_symmetric(s1 in 0u64..10_000, s2 in 0u64..10_000) {
            let cfg = GenConfig { max_states: 4, max_transitions: 5, external_action_count: 1, ..GenConfig::default() };
            let a = gen_pa(&GenConfig { seed: s1, ..cfg.clone() });
            let b = gen_pa(&GenConfig { seed: s2, ..cfg });
            let opts = sequential();
            prop_assert_eq!(bisimilar(&a, &b, &opts).unwrap(), bisimilar(&b, &a, &opts).unwrap());
            let m = minimize(&a, &opts).unwrap();
            prop_assert!(bisimilar(&a, &m, &opts).unwrap());
        }
    }
}
