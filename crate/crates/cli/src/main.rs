use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weakbisim::decide::{bisimilar, minimize, quotient};
use weakbisim::format::{
    format_distribution, format_partition, parse_distribution, parse_pa, parse_partition, print_pa,
};
use weakbisim::harness::{run_suites, GenConfig, SuiteConfig};
use weakbisim::validate::certify;
use weakbisim::wtrans::{match_equiv, Side, Source};
use weakbisim::{Error, Options, Partition, ProbAutomaton, TransitionId};

#[derive(Parser)]
#[command(
    name = "weakbisim",
    version,
    about = "Weak probabilistic bisimulation for probabilistic automata"
)]
struct Cli {
    /// Use every transition in refinement programs, not just the relevant ones.
    #[arg(long, global = true)]
    no_dprime: bool,
    /// Keep implied rows and sign constraints in every program.
    #[arg(long, global = true)]
    no_lp_opt: bool,
    /// Print network and program sizes.
    #[arg(long, global = true)]
    stats: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether two automata are weakly probabilistic bisimilar.
    Check {
        a: PathBuf,
        b: PathBuf,
        /// Print every refinement step.
        #[arg(long)]
        trace: bool,
    },
    /// Print the bisimilarity classes of the disjoint union.
    Quotient {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        trace: bool,
    },
    /// Collapse every bisimilarity class into one state.
    Minimize {
        a: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Decide a single weak transition query.
    Weaktrans(WeakArgs),
    /// Look for equivalent targets reachable from two sources.
    Match(MatchArgs),
    /// Run the randomized cross-check suites.
    Selftest {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct WeakArgs {
    a: PathBuf,
    /// Source state.
    #[arg(
        long,
        conflicts_with = "from_dist",
        required_unless_present = "from_dist"
    )]
    from: Option<String>,
    /// Source distribution, as `s:p, t:q`.
    #[arg(long)]
    from_dist: Option<String>,
    #[arg(long)]
    label: String,
    #[arg(long)]
    target: String,
    /// Allowed transition indices (0-based, in declaration order).
    #[arg(long)]
    allowed: Option<String>,
    /// Equivalence on states, as `{s,t | u}`; defaults to identity.
    #[arg(long)]
    partition: Option<String>,
    /// Print the witness scheduler and the distribution it induces.
    #[arg(long)]
    scheduler: bool,
    /// Treat a state source as a Dirac hyper-transition source.
    #[arg(long)]
    hyper: bool,
}

#[derive(Args)]
struct MatchArgs {
    a: PathBuf,
    /// A state name or a distribution `s:p, t:q`.
    #[arg(long)]
    left: String,
    #[arg(long)]
    left_label: String,
    #[arg(long)]
    left_allowed: Option<String>,
    #[arg(long)]
    right: String,
    #[arg(long)]
    right_label: String,
    #[arg(long)]
    right_allowed: Option<String>,
    #[arg(long)]
    partition: Option<String>,
}

/// Why a command did not finish with an answer.
enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Soundness(_) => Failure::Internal(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn load(path: &Path) -> Result<ProbAutomaton, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_pa(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn parse_allowed(pa: &ProbAutomaton, text: Option<&str>) -> Result<Vec<TransitionId>, Failure> {
    let Some(text) = text else {
        return Ok(pa.all_transition_ids());
    };
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map(TransitionId)
                .map_err(|_| Failure::Input(format!("bad transition index `{s}`")))
        })
        .collect()
}

fn partition_or_identity(pa: &ProbAutomaton, text: Option<&str>) -> Result<Partition, Failure> {
    match text {
        Some(s) => Ok(parse_partition(s, pa)?),
        None => Ok(Partition::discrete(pa.num_states())),
    }
}

fn action(pa: &ProbAutomaton, name: &str) -> Result<weakbisim::Action, Failure> {
    pa.action_by_name(name)
        .ok_or_else(|| Failure::Input(format!("unknown action `{name}`")))
}

fn source(pa: &ProbAutomaton, text: &str) -> Result<Source, Failure> {
    if text.contains(':') {
        Ok(Source::Dist(parse_distribution(text, pa)?))
    } else {
        pa.state_by_name(text.trim())
            .map(Source::State)
            .ok_or_else(|| Failure::Input(format!("unknown state `{text}`")))
    }
}

fn run(cli: &Cli) -> Outcome {
    let opts = Options {
        restrict_relevant: !cli.no_dprime,
        optimize_lp: !cli.no_lp_opt,
        ..Options::default()
    };
    match &cli.command {
        Command::Check { a, b, trace } => {
            let (pa, pb) = (load(a)?, load(b)?);
            let q = quotient(&pa, &pb, &opts)?;
            if *trace {
                for rec in &q.trace {
                    println!("{}", rec.render(&q.union.automaton));
                }
            }
            let same = q.start_states_related();
            println!("{}", if same { "BISIMILAR" } else { "NOT BISIMILAR" });
            if cli.stats {
                println!(
                    "stats: states={} transitions={} blocks={} splits={}",
                    q.union.automaton.num_states(),
                    q.union.automaton.num_transitions(),
                    q.partition.num_blocks(),
                    q.trace.len()
                );
            }
            Ok(same)
        }
        Command::Quotient { a, b, trace } => {
            let (pa, pb) = (load(a)?, load(b)?);
            let q = quotient(&pa, &pb, &opts)?;
            if *trace {
                for rec in &q.trace {
                    println!("{}", rec.render(&q.union.automaton));
                }
            }
            println!("{}", format_partition(&q.union.automaton, &q.partition));
            if cli.stats {
                println!(
                    "stats: blocks={} splits={}",
                    q.partition.num_blocks(),
                    q.trace.len()
                );
            }
            Ok(true)
        }
        Command::Minimize { a, output } => {
            let pa = load(a)?;
            let m = minimize(&pa, &opts)?;
            if !bisimilar(&pa, &m, &opts)? {
                return Err(Failure::Internal(
                    "minimised automaton is not bisimilar to the input".into(),
                ));
            }
            let text = print_pa(&m);
            match output {
                Some(path) => fs::write(path, text)
                    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            if cli.stats {
                eprintln!("stats: states {} -> {}", pa.num_states(), m.num_states());
            }
            Ok(true)
        }
        Command::Weaktrans(w) => weaktrans(cli, w, &opts),
        Command::Match(m) => matching(m, &opts),
        Command::Selftest { count, seed } => {
            let report = run_suites(&SuiteConfig {
                count: *count,
                first_seed: *seed,
                generator: GenConfig::default(),
                fault: None,
            });
            print!("{report}");
            if report.passed() {
                println!("PASS");
                Ok(true)
            } else {
                Err(Failure::Internal(format!(
                    "{} counterexamples",
                    report.counterexamples.len()
                )))
            }
        }
    }
}

fn weaktrans(cli: &Cli, w: &WeakArgs, opts: &Options) -> Outcome {
    let pa = load(&w.a)?;
    let src = match (&w.from, &w.from_dist) {
        (Some(s), _) => {
            let s = pa
                .state_by_name(s)
                .ok_or_else(|| Failure::Input(format!("unknown state `{s}`")))?;
            if w.hyper {
                Source::Dist(weakbisim::Distribution::dirac(s))
            } else {
                Source::State(s)
            }
        }
        (None, Some(d)) => Source::Dist(parse_distribution(d, &pa)?),
        (None, None) => {
            return Err(Failure::Input(
                "one of --from and --from-dist is required".into(),
            ))
        }
    };
    let a = action(&pa, &w.label)?;
    let mu = parse_distribution(&w.target, &pa)?;
    let allowed = parse_allowed(&pa, w.allowed.as_deref())?;
    let part = partition_or_identity(&pa, w.partition.as_deref())?;
    let cert = certify(&pa, &src, a, &mu, &allowed, &part, opts)?;
    println!(
        "{}",
        if cert.answer {
            "FEASIBLE"
        } else {
            "INFEASIBLE"
        }
    );
    if w.scheduler {
        if let (Some(s), Some(d)) = (&cert.scheduler, &cert.induced) {
            print!("{}", s.render(&cert.automaton));
            println!("induced: {}", format_distribution(&cert.automaton, d));
        }
    }
    if cli.stats {
        let s = cert.stats;
        println!(
            "stats: vertices={} arcs={} vars={} rows={} pivots={}",
            s.vertices, s.arcs, s.vars, s.rows, s.pivots
        );
    }
    Ok(cert.answer)
}

fn matching(m: &MatchArgs, opts: &Options) -> Outcome {
    let pa = load(&m.a)?;
    let part = partition_or_identity(&pa, m.partition.as_deref())?;
    let left = Side {
        source: source(&pa, &m.left)?,
        action: action(&pa, &m.left_label)?,
        allowed: parse_allowed(&pa, m.left_allowed.as_deref())?,
    };
    let right = Side {
        source: source(&pa, &m.right)?,
        action: action(&pa, &m.right_label)?,
        allowed: parse_allowed(&pa, m.right_allowed.as_deref())?,
    };
    match match_equiv(&pa, &left, &right, &part, opts)? {
        Some(p) => {
            println!("MATCH");
            for (block, mass) in part.blocks().iter().zip(&p) {
                let names: Vec<&str> = block.iter().map(|s| pa.state_name(*s)).collect();
                println!("{{{}}}: {mass}", names.join(", "));
            }
            Ok(true)
        }
        None => {
            println!("NO MATCH");
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}
