//! Random automata and the cross-check suites run over them.
//!
//! Each instance is generated from its own seed, so every counterexample
//! in a [`Report`] can be reproduced with [`gen_pa`] alone.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automata::{Action, Distribution, Partition, ProbAutomaton, StateId, TransitionId};
use crate::decide::{bisimilar, coarsest, find_split, minimize};
use crate::error::{Error, Result};
use crate::lp::{self, Constraint, LinearProgram, Relation, RowKind, SolveMode};
use crate::network::build_network;
use crate::numeric::Rational;
use crate::validate::certify;
use crate::wtrans::{self, match_equiv, solve_query, Side, Source};
use crate::{Fault, Options};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    pub min_states: usize,
    pub max_states: usize,
    pub min_transitions: usize,
    pub max_transitions: usize,
    pub max_support: usize,
    pub external_action_count: usize,
    /// Largest integer weight; probabilities are weights over their sum.
    pub max_weight: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            min_states: 1,
            max_states: 6,
            min_transitions: 0,
            max_transitions: 8,
            max_support: 3,
            external_action_count: 2,
            max_weight: 4,
        }
    }
}

fn random_distribution(
    rng: &mut impl Rng,
    n: usize,
    max_support: usize,
    max_weight: u32,
) -> Distribution {
    let k = rng.gen_range(1..=max_support.clamp(1, n));
    let mut states: Vec<usize> = (0..n).collect();
    states.shuffle(rng);
    states.truncate(k);
    let weights: Vec<i64> = (0..k)
        .map(|_| rng.gen_range(1..=max_weight.max(1)) as i64)
        .collect();
    let total: i64 = weights.iter().sum();
    Distribution::new(
        states
            .into_iter()
            .zip(weights)
            .map(|(s, w)| (StateId(s), Rational::new(w, total).expect("positive total"))),
    )
    .expect("weights normalise to 1")
}

/// A random automaton, fully determined by `cfg`. The start state is the
/// first state; roughly half the transitions are internal.
pub fn gen_pa(cfg: &GenConfig) -> ProbAutomaton {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = rng.gen_range(cfg.min_states.max(1)..=cfg.max_states.max(cfg.min_states).max(1));
    let m = rng.gen_range(cfg.min_transitions..=cfg.max_transitions.max(cfg.min_transitions));
    let actions: Vec<String> = (0..cfg.external_action_count)
        .map(|i| ((b'a' + (i % 26) as u8) as char).to_string() + &"'".repeat(i / 26))
        .collect();
    let mut transitions = Vec::with_capacity(m);
    for _ in 0..m {
        let source = StateId(rng.gen_range(0..n));
        let action = if actions.is_empty() || rng.gen_bool(0.5) {
            Action::Tau
        } else {
            Action::External(rng.gen_range(0..actions.len()))
        };
        let target = random_distribution(&mut rng, n, cfg.max_support, cfg.max_weight);
        transitions.push((source, action, target));
    }
    ProbAutomaton::new(
        format!("Gen{}", cfg.seed),
        (0..n).map(|i| format!("s{i}")).collect(),
        StateId(0),
        actions,
        transitions,
    )
    .expect("generated automata are well formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    /// Feasible queries yield a scheduler that validates.
    Certify,
    /// Dropping implied rows changes neither verdict nor optimum.
    LpOptimizations,
    /// Restricting refinement programs to relevant transitions leaves the
    /// quotient unchanged.
    RelevantRestriction,
    /// Allowing every transition is the plain query; shrinking the allowed
    /// set never creates new answers.
    AllowedSets,
    /// The fresh-state reduction for hyper-transitions agrees with an
    /// explicit per-state composition.
    Hyper,
    /// The final partition is stable and was reached within the loop bound.
    QuotientSoundness,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Certify,
        Suite::LpOptimizations,
        Suite::RelevantRestriction,
        Suite::AllowedSets,
        Suite::Hyper,
        Suite::QuotientSoundness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Certify => "certify",
            Suite::LpOptimizations => "lp-optimizations",
            Suite::RelevantRestriction => "relevant-restriction",
            Suite::AllowedSets => "allowed-sets",
            Suite::Hyper => "hyper",
            Suite::QuotientSoundness => "quotient-soundness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub suite: Suite,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuiteStats {
    pub instances: usize,
    pub checks: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub stats: BTreeMap<Suite, SuiteStats>,
    pub counterexamples: Vec<Counterexample>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    fn merge(&mut self, other: Report) {
        for (s, st) in other.stats {
            let e = self.stats.entry(s).or_default();
            e.instances += st.instances;
            e.checks += st.checks;
        }
        self.counterexamples.extend(other.counterexamples);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in Suite::ALL {
            let st = self.stats.get(&s).cloned().unwrap_or_default();
            let bad = self.counterexamples.iter().filter(|c| c.suite == s).count();
            writeln!(
                f,
                "{:<22} instances {:>4}  checks {:>6}  counterexamples {}",
                s.name(),
                st.instances,
                st.checks,
                bad
            )?;
        }
        for c in &self.counterexamples {
            writeln!(
                f,
                "counterexample [{}] seed {}: {}",
                c.suite.name(),
                c.seed,
                c.message
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub count: usize,
    pub first_seed: u64,
    pub generator: GenConfig,
    pub fault: Option<Fault>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            count: 200,
            first_seed: 0,
            generator: GenConfig::default(),
            fault: None,
        }
    }
}

/// Runs every suite on `cfg.count` instances with consecutive seeds.
pub fn run_suites(cfg: &SuiteConfig) -> Report {
    use rayon::prelude::*;
    let reports: Vec<Report> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.first_seed.wrapping_add(i);
            let gen = GenConfig {
                seed,
                ..cfg.generator.clone()
            };
            run_instance(&gen_pa(&gen), seed, cfg.fault)
        })
        .collect();
    let mut report = Report::default();
    for r in reports {
        report.merge(r);
    }
    report
}

/// A query drawn for one instance.
struct Query {
    t: StateId,
    action: Action,
    target: Distribution,
}

struct Ctx<'a> {
    pa: &'a ProbAutomaton,
    seed: u64,
    opts: Options,
    report: Report,
}

impl Ctx<'_> {
    /// Records one check; errors count as counterexamples.
    fn check(&mut self, suite: Suite, outcome: Result<std::result::Result<(), String>>) {
        self.report.stats.entry(suite).or_default().checks += 1;
        let message = match outcome {
            Ok(Ok(())) => return,
            Ok(Err(m)) => m,
            Err(e) => format!("error: {e}"),
        };
        self.report.counterexamples.push(Counterexample {
            suite,
            seed: self.seed,
            message,
        });
    }
}

fn expect(cond: bool, what: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

/// All suites on one automaton.
pub fn run_instance(pa: &ProbAutomaton, seed: u64, fault: Option<Fault>) -> Report {
    let opts = Options {
        fault,
        parallel: false,
        ..Options::default()
    };
    let mut ctx = Ctx {
        pa,
        seed,
        opts,
        report: Report::default(),
    };
    for s in Suite::ALL {
        ctx.report.stats.entry(s).or_default().instances += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = pa.num_states();

    let quotient = coarsest(pa, &opts);
    let mut partitions = vec![Partition::single_block(n), Partition::discrete(n)];
    if let Ok(r) = &quotient {
        partitions.push(r.partition.clone());
    }

    // Queries: every transition challenged from a random state, plus a
    // random internal target.
    let mut queries: Vec<Query> = pa
        .transitions()
        .iter()
        .map(|tr| Query {
            t: StateId(rng.gen_range(0..n)),
            action: tr.action,
            target: tr.target.clone(),
        })
        .collect();
    queries.push(Query {
        t: StateId(rng.gen_range(0..n)),
        action: Action::Tau,
        target: random_distribution(&mut rng, n, 2, 3),
    });

    for q in &queries {
        let part = &partitions[rng.gen_range(0..partitions.len())];
        suite_certify(&mut ctx, q, part);
        suite_lp_optimizations(&mut ctx, q, part);
        let subset: Vec<TransitionId> = pa
            .all_transition_ids()
            .into_iter()
            .filter(|_| rng.gen_bool(0.6))
            .collect();
        suite_allowed(&mut ctx, q, part, &subset);
    }

    for part in &partitions {
        let gamma = random_distribution(&mut rng, n, 3, 3);
        let actions: Vec<Action> = std::iter::once(Action::Tau)
            .chain((0..pa.external_actions().len()).map(Action::External))
            .collect();
        let a = actions[rng.gen_range(0..actions.len())];
        let allowed: Vec<TransitionId> = if rng.gen_bool(0.5) {
            pa.all_transition_ids()
        } else {
            pa.all_transition_ids()
                .into_iter()
                .filter(|_| rng.gen_bool(0.7))
                .collect()
        };
        let composed = compose_target(pa, &gamma, a, &allowed);
        let random = random_distribution(&mut rng, n, 3, 3);
        for mu in composed.iter().chain(std::iter::once(&random)) {
            suite_hyper(&mut ctx, &gamma, a, mu, &allowed, part);
        }
    }

    suite_relevant_restriction(&mut ctx);
    suite_quotient_soundness(&mut ctx, quotient.map(|r| (r.partition, r.trace.len())));
    ctx.report
}

fn suite_certify(ctx: &mut Ctx, q: &Query, part: &Partition) {
    let all = ctx.pa.all_transition_ids();
    let outcome = certify(
        ctx.pa,
        &Source::State(q.t),
        q.action,
        &q.target,
        &all,
        part,
        &ctx.opts,
    )
    .and_then(|c| {
        let direct = wtrans::query(
            ctx.pa,
            &Source::State(q.t),
            q.action,
            &q.target,
            &all,
            part,
            &ctx.opts,
        )?;
        Ok(expect(c.answer == direct, || {
            format!("certificate answer {} but feasibility {direct}", c.answer)
        }))
    });
    ctx.check(Suite::Certify, outcome);
}

fn suite_lp_optimizations(ctx: &mut Ctx, q: &Query, part: &Partition) {
    let all = ctx.pa.all_transition_ids();
    let run = |optimize_lp: bool| {
        let opts = Options {
            optimize_lp,
            ..ctx.opts
        };
        solve_query(
            ctx.pa,
            &Source::State(q.t),
            q.action,
            &q.target,
            &all,
            part,
            SolveMode::MinimizeObjective,
            &opts,
        )
    };
    let outcome = run(true).and_then(|on| {
        let off = run(false)?;
        let full = lp::build_lp(&on.network);
        Ok(expect(on.solution.status == off.solution.status, || {
            format!(
                "status {:?} with optimisations, {:?} without",
                on.solution.status, off.solution.status
            )
        })
        .and_then(|_| {
            expect(
                on.solution.objective_value == off.solution.objective_value,
                || {
                    format!(
                        "optimum {:?} with optimisations, {:?} without",
                        on.solution.objective_value, off.solution.objective_value
                    )
                },
            )
        })
        .and_then(|_| {
            expect(
                !on.feasible() || full.is_satisfied_by(&on.solution.assignment),
                || "optimised optimum violates the full program".into(),
            )
        }))
    });
    ctx.check(Suite::LpOptimizations, outcome);
}

fn suite_allowed(ctx: &mut Ctx, q: &Query, part: &Partition, subset: &[TransitionId]) {
    let pa = ctx.pa;
    let opts = ctx.opts;
    let src = Source::State(q.t);
    let outcome = (|| {
        let plain = wtrans::query(
            pa,
            &src,
            q.action,
            &q.target,
            &pa.all_transition_ids(),
            part,
            &opts,
        )?;
        let relevant = crate::automata::restrict_relevant(pa, q.t, q.action)?;
        let restricted = wtrans::query(pa, &src, q.action, &q.target, &relevant, part, &opts)?;
        let sub = wtrans::query(pa, &src, q.action, &q.target, subset, part, &opts)?;
        Ok(expect(plain == restricted, || {
            format!("all transitions {plain}, relevant transitions {restricted}")
        })
        .and_then(|_| {
            expect(!sub || plain, || {
                format!("subset {subset:?} feasible but the full set is not")
            })
        }))
    })();
    ctx.check(Suite::AllowedSets, outcome);
}

/// A target reachable by letting every support state of `gamma` fire one
/// allowed `a`-transition (or stop, for `tau`), if each one can.
fn compose_target(
    pa: &ProbAutomaton,
    gamma: &Distribution,
    a: Action,
    allowed: &[TransitionId],
) -> Option<Distribution> {
    let mut mass: BTreeMap<StateId, Rational> = BTreeMap::new();
    for (s, p) in gamma.iter() {
        let own = pa
            .outgoing(s)
            .iter()
            .find(|tr| allowed.contains(tr) && pa.transition(**tr).action == a);
        let step = match own {
            Some(tr) => pa.transition(*tr).target.clone(),
            None if a.is_tau() => Distribution::dirac(s),
            None => return None,
        };
        for (w, x) in step.iter() {
            *mass.entry(w).or_insert_with(Rational::zero) += p * x;
        }
    }
    Distribution::new(mass).ok()
}

/// Independent composition check: one flow program per support state of
/// `gamma`, each draining into its own class-mass variables `q_{s,C}`, tied
/// together by `sum_s gamma(s) q_{s,C} = mu(C)`.
pub fn composed_hyper_oracle(
    pa: &ProbAutomaton,
    gamma: &Distribution,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
) -> Result<bool> {
    let k = part.num_blocks();
    let target = part.class_masses(mu)?;
    let mut var_names = Vec::new();
    let mut nonneg = Vec::new();
    let mut constraints = Vec::new();
    let mut q_vars: Vec<(Rational, Vec<usize>)> = Vec::new();
    for (s, p) in gamma.iter() {
        let net = build_network(pa, s, a, mu, allowed, part)?;
        let sub = lp::build_lp(&net);
        let off = var_names.len();
        var_names.extend(sub.var_names.iter().map(|v| format!("{}.{v}", s.0)));
        nonneg.extend(sub.nonneg.iter().copied());
        let q0 = var_names.len();
        var_names.extend((0..k).map(|c| format!("q[{},{c}]", s.0)));
        nonneg.extend(std::iter::repeat_n(true, k));
        for row in &sub.constraints {
            let mut coeffs: BTreeMap<usize, Rational> = row
                .coeffs
                .iter()
                .map(|(j, c)| (j + off, c.clone()))
                .collect();
            let mut rhs = row.rhs.clone();
            if let RowKind::ClassMass(c) = row.kind {
                coeffs.insert(q0 + c, -Rational::one());
                rhs = Rational::zero();
            }
            constraints.push(Constraint {
                coeffs,
                relation: row.relation,
                rhs,
                kind: RowKind::Other,
            });
        }
        q_vars.push((p.clone(), (q0..q0 + k).collect()));
    }
    for (c, m) in target.iter().enumerate() {
        constraints.push(Constraint {
            coeffs: q_vars
                .iter()
                .map(|(p, vars)| (vars[c], p.clone()))
                .collect(),
            relation: Relation::Eq,
            rhs: m.clone(),
            kind: RowKind::Other,
        });
    }
    let lp = LinearProgram {
        objective: BTreeMap::new(),
        var_names,
        nonneg,
        constraints,
        classes: part.blocks().to_vec(),
    };
    Ok(lp::solve(&lp, SolveMode::FeasibilityOnly)?.is_feasible())
}

fn suite_hyper(
    ctx: &mut Ctx,
    gamma: &Distribution,
    a: Action,
    mu: &Distribution,
    allowed: &[TransitionId],
    part: &Partition,
) {
    let pa = ctx.pa;
    let opts = ctx.opts;
    let outcome = (|| {
        let src = Source::Dist(gamma.clone());
        let fresh = wtrans::query(pa, &src, a, mu, allowed, part, &opts)?;
        let oracle = composed_hyper_oracle(pa, gamma, a, mu, allowed, part)?;
        if fresh != oracle {
            return Ok(Err(format!(
                "fresh-state answer {fresh}, composition {oracle}"
            )));
        }
        if fresh {
            let c = certify(pa, &src, a, mu, allowed, part, &opts)?;
            if !c.answer {
                return Ok(Err("hyper query feasible but certificate negative".into()));
            }
        }
        // Matching the hyper side against itself finds a common target
        // exactly when it enables some move at all.
        let side = Side {
            source: src,
            action: a,
            allowed: allowed.to_vec(),
        };
        let m = match_equiv(pa, &side, &side, part, &opts)?;
        if fresh && m.is_none() {
            return Ok(Err(
                "self-match failed although a target is reachable".into()
            ));
        }
        if let Some(p) = m {
            let total: Rational = p.iter().sum();
            if !total.is_one() || p.iter().any(|x| x.is_negative()) {
                return Ok(Err(format!("match returned masses {p:?}")));
            }
            // The masses describe a target both sides reach.
            let witness = Distribution::new(
                p.iter()
                    .enumerate()
                    .filter(|(_, x)| !x.is_zero())
                    .map(|(c, x)| (part.block(c)[0], x.clone())),
            )?;
            if !composed_hyper_oracle(pa, gamma, a, &witness, allowed, part)? {
                return Ok(Err(format!("match masses {p:?} are not reachable")));
            }
        }
        Ok(Ok(()))
    })();
    ctx.check(Suite::Hyper, outcome);
}

fn suite_relevant_restriction(ctx: &mut Ctx) {
    let pa = ctx.pa;
    let outcome = (|| {
        let on = coarsest(
            pa,
            &Options {
                restrict_relevant: true,
                ..ctx.opts
            },
        )?;
        let off = coarsest(
            pa,
            &Options {
                restrict_relevant: false,
                ..ctx.opts
            },
        )?;
        Ok(expect(on.partition == off.partition, || {
            format!(
                "partitions differ: {:?} vs {:?}",
                on.partition.blocks(),
                off.partition.blocks()
            )
        }))
    })();
    ctx.check(Suite::RelevantRestriction, outcome);
}

fn suite_quotient_soundness(ctx: &mut Ctx, quotient: Result<(Partition, usize)>) {
    let pa = ctx.pa;
    let opts = ctx.opts;
    let outcome = quotient.and_then(|(part, rounds)| {
        if rounds > pa.num_states() {
            return Ok(Err(format!(
                "{rounds} refinement rounds for {} states",
                pa.num_states()
            )));
        }
        if !find_split(pa, &part, &opts)?.is_sentinel() {
            return Ok(Err("final partition still splits".into()));
        }
        for tr in pa.transitions() {
            let all = pa.all_transition_ids();
            if !wtrans::query(
                pa,
                &Source::State(tr.source),
                tr.action,
                &tr.target,
                &all,
                &part,
                &opts,
            )? {
                return Ok(Err(format!("{} cannot match its own transition", tr.id)));
            }
        }
        let min = minimize(pa, &opts)?;
        if min.num_states() != part.num_blocks() {
            return Err(Error::Soundness(
                "minimised automaton has the wrong size".into(),
            ));
        }
        if !bisimilar(pa, &min, &opts)? || !bisimilar(&min, pa, &opts)? {
            return Ok(Err("automaton not bisimilar to its minimisation".into()));
        }
        Ok(Ok(()))
    });
    ctx.check(Suite::QuotientSoundness, outcome);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for seed in 0..20 {
            let cfg = GenConfig {
                seed,
                ..GenConfig::default()
            };
            assert_eq!(gen_pa(&cfg), gen_pa(&cfg));
        }
        let a = gen_pa(&GenConfig {
            seed: 1,
            ..GenConfig::default()
        });
        let differs = (2..20).any(|s| {
            gen_pa(&GenConfig {
                seed: s,
                ..GenConfig::default()
            }) != a
        });
        assert!(differs);
    }

    #[test]
    fn trivial_configuration() {
        let cfg = GenConfig {
            max_states: 1,
            max_transitions: 0,
            ..GenConfig::default()
        };
        let pa = gen_pa(&cfg);
        assert_eq!(pa.num_states(), 1);
        assert_eq!(pa.num_transitions(), 0);
    }

    #[test]
    fn generated_automata_respect_bounds() {
        for seed in 0..100 {
            let cfg = GenConfig {
                seed,
                ..GenConfig::default()
            };
            let pa = gen_pa(&cfg);
            assert!(pa.num_states() <= cfg.max_states);
            assert!(pa.num_transitions() <= cfg.max_transitions);
            for tr in pa.transitions() {
                assert!(tr.target.len() <= cfg.max_support);
                let total: Rational = tr.target.iter().map(|(_, p)| p.clone()).sum();
                assert!(total.is_one());
                for (_, p) in tr.target.iter() {
                    assert!(p.denom() <= 12.into());
                }
            }
        }
    }

    #[test]
    fn small_batch_is_clean() {
        let report = run_suites(&SuiteConfig {
            count: 20,
            ..SuiteConfig::default()
        });
        assert!(report.passed(), "{report}");
        for s in Suite::ALL {
            assert_eq!(report.stats[&s].instances, 20);
            assert!(report.stats[&s].checks >= 20);
        }
    }

    #[test]
    fn corrupted_solver_is_noticed() {
        let report = run_suites(&SuiteConfig {
            count: 30,
            fault: Some(Fault::IgnoreBalancing),
            ..SuiteConfig::default()
        });
        assert!(!report.passed());
        let text = report.to_string();
        assert!(text.contains("counterexample ["), "{text}");
    }

    #[test]
    fn oracle_on_example() {
        let e = crate::test_support::example_e();
        let part = crate::format::parse_partition("{sbar,t,u,v | g | b | r}", &e).unwrap();
        let a = e.action_by_name("a").unwrap();
        let gamma = crate::format::parse_distribution("t:1/4, u:1/4, v:1/2", &e).unwrap();
        let mu = crate::format::parse_distribution("g:1/4, b:1/4, r:1/2", &e).unwrap();
        let allowed: Vec<TransitionId> = (1..5).map(TransitionId).collect();
        assert!(composed_hyper_oracle(&e, &gamma, a, &mu, &allowed, &part).unwrap());
        let skewed = crate::format::parse_distribution("g:1/2, b:1/4, r:1/4", &e).unwrap();
        assert!(!composed_hyper_oracle(&e, &gamma, a, &skewed, &allowed, &part).unwrap());
    }
}
