//! Weak probabilistic bisimulation for probabilistic automata.
//!
//! Weak combined transitions are encoded as flow networks with balancing
//! constraints, turned into linear programs and solved exactly over the
//! rationals. On top of that oracle sit a partition-refinement decision
//! procedure, witness scheduler extraction and an independent validator
//! that recomputes the distribution a scheduler induces.

pub mod automata;
pub mod decide;
pub mod error;
pub mod format;
pub mod harness;
pub mod lp;
pub mod network;
pub mod numeric;
pub mod validate;
pub mod wtrans;

#[cfg(test)]
mod test_support;

pub use automata::{
    disjoint_union, lift_equiv, restrict_relevant, Action, Distribution, Partition, ProbAutomaton,
    StateId, SubDistribution, Transition, TransitionId,
};
pub use error::{Error, Result};
pub use numeric::Rational;

/// Switches shared by the query and decision layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// Restrict each refinement LP to transitions relevant to its query.
    pub restrict_relevant: bool,
    /// Drop implied rows and sign constraints before solving.
    pub optimize_lp: bool,
    /// Solve the independent programs of one refinement sweep on the rayon
    /// thread pool.
    pub parallel: bool,
    /// Deliberate solver corruption, used to check that the property
    /// suites notice a broken engine.
    pub fault: Option<Fault>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            restrict_relevant: true,
            optimize_lp: true,
            parallel: true,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The solver silently ignores balancing rows.
    IgnoreBalancing,
}
