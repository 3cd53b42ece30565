//! Text format for automata, partitions and distributions.
//!
//! ```text
//! pa ExampleE
//! states: sbar t u v g b r
//! start: sbar
//! external: a
//! transitions:
//!   sbar tau -> t:1/4, u:1/4, v:1/2
//!   t a -> g:1
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::automata::{Action, Distribution, Partition, ProbAutomaton, StateId, TAU};
use crate::error::{Error, Result};
use crate::numeric::Rational;

const RESERVED_CHARS: &[char] = &['#', ':', ',', '|', '{', '}'];

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn check_identifier(name: &str, line: usize, column: usize) -> Result<()> {
    if name.is_empty() || name == "->" || name.contains(RESERVED_CHARS) {
        return Err(parse_err(
            line,
            column,
            format!("invalid identifier `{name}`"),
        ));
    }
    Ok(())
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out.into_iter()
        .map(|(byte, tok)| (text[..byte].chars().count() + 1, tok))
        .collect()
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

/// Parses the automaton description documented at the module level.
pub fn parse_pa(text: &str) -> Result<ProbAutomaton> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| Line {
            number: i + 1,
            text: l.split('#').next().unwrap_or(""),
        })
        .filter(|l| !l.text.trim().is_empty());
    let last_line = text.lines().count().max(1);

    let mut header = |key: &str| -> Result<(usize, Vec<(usize, &str)>)> {
        let line = lines
            .next()
            .ok_or_else(|| parse_err(last_line, 0, format!("missing `{key}` section")))?;
        let rest = if key == "pa" {
            let toks = tokens(line.text);
            match toks.first() {
                Some((_, "pa")) => Some(toks[1..].to_vec()),
                _ => None,
            }
        } else {
            let trimmed = line.text.trim_start();
            let indent = line.text.len() - trimmed.len();
            trimmed
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(':'))
                .map(|r| {
                    let offset = indent + key.len() + 1;
                    tokens(r)
                        .into_iter()
                        .map(|(c, t)| (c + offset, t))
                        .collect()
                })
        };
        match rest {
            Some(toks) => Ok((line.number, toks)),
            None => Err(parse_err(
                line.number,
                1,
                format!(
                    "expected `{key}{}`",
                    if key == "pa" { " <name>" } else { ":" }
                ),
            )),
        }
    };

    let (ln, name) = header("pa")?;
    let name = match name.as_slice() {
        [(col, n)] => {
            check_identifier(n, ln, *col)?;
            n.to_string()
        }
        _ => {
            return Err(parse_err(
                ln,
                1,
                "expected exactly one automaton name after `pa`",
            ))
        }
    };

    let (ln, state_toks) = header("states")?;
    let mut states: Vec<String> = Vec::new();
    let mut index: BTreeMap<&str, StateId> = BTreeMap::new();
    for (col, s) in &state_toks {
        check_identifier(s, ln, *col)?;
        if s.starts_with('#') {
            return Err(parse_err(ln, *col, format!("state name `{s}` is reserved")));
        }
        if index.insert(s, StateId(states.len())).is_some() {
            return Err(parse_err(ln, *col, format!("duplicate state `{s}`")));
        }
        states.push(s.to_string());
    }
    if states.is_empty() {
        return Err(parse_err(ln, 0, "at least one state is required"));
    }

    let (ln, start_toks) = header("start")?;
    let start = match start_toks.as_slice() {
        [(col, s)] => *index
            .get(s)
            .ok_or_else(|| parse_err(ln, *col, format!("unknown start state `{s}`")))?,
        _ => return Err(parse_err(ln, 0, "expected exactly one start state")),
    };

    let (ln, ext_toks) = header("external")?;
    let mut external: Vec<String> = Vec::new();
    for (col, a) in &ext_toks {
        check_identifier(a, ln, *col)?;
        if *a == TAU {
            return Err(parse_err(
                ln,
                *col,
                format!("`{TAU}` is the internal action and cannot be declared external"),
            ));
        }
        if external.iter().any(|x| x == a) {
            return Err(parse_err(ln, *col, format!("duplicate action `{a}`")));
        }
        external.push(a.to_string());
    }

    let (ln, rest) = header("transitions")?;
    if let Some((col, tok)) = rest.first() {
        return Err(parse_err(
            ln,
            *col,
            format!("unexpected `{tok}` after `transitions:`"),
        ));
    }

    let mut transitions = Vec::new();
    for line in lines {
        let ln = line.number;
        let (lhs, rhs) = line
            .text
            .split_once("->")
            .ok_or_else(|| parse_err(ln, 1, "expected `<state> <action> -> <targets>`"))?;
        let lhs_toks = tokens(lhs);
        let (source, action) = match lhs_toks.as_slice() {
            [(c1, s), (c2, a)] => {
                let source = *index
                    .get(s)
                    .ok_or_else(|| parse_err(ln, *c1, format!("unknown state `{s}`")))?;
                let action = if *a == TAU {
                    Action::Tau
                } else {
                    let k = external
                        .iter()
                        .position(|x| x == a)
                        .ok_or_else(|| parse_err(ln, *c2, format!("undeclared action `{a}`")))?;
                    Action::External(k)
                };
                (source, action)
            }
            _ => return Err(parse_err(ln, 1, "expected `<state> <action>` before `->`")),
        };
        let rhs_col = lhs.chars().count() + 3;
        let target = parse_entries(rhs, &index, ln, rhs_col)?;
        transitions.push((source, action, target));
    }

    ProbAutomaton::new(name, states, start, external, transitions)
}

/// Parses `s:p, s:p, ...` into a distribution; `col0` is the column of the
/// first character of `text`.
fn parse_entries(
    text: &str,
    index: &BTreeMap<&str, StateId>,
    line: usize,
    col0: usize,
) -> Result<Distribution> {
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    let mut offset = 0;
    for part in text.split(',') {
        let col = col0 + offset + (part.len() - part.trim_start().len());
        offset += part.chars().count() + 1;
        let part = part.trim();
        let (s, p) = part.split_once(':').ok_or_else(|| {
            parse_err(
                line,
                col,
                format!("expected `state:probability`, found `{part}`"),
            )
        })?;
        let (s, p) = (s.trim(), p.trim());
        let state = *index
            .get(s)
            .ok_or_else(|| parse_err(line, col, format!("unknown state `{s}` in target")))?;
        if !seen.insert(state) {
            return Err(parse_err(
                line,
                col,
                format!("state `{s}` repeated in target"),
            ));
        }
        let p = Rational::parse(p).map_err(|e| e.at(line, col))?;
        if !p.is_positive() {
            return Err(parse_err(
                line,
                col,
                format!("probability {p} of `{s}` must be positive"),
            ));
        }
        entries.push((state, p));
    }
    let total: Rational = entries.iter().map(|(_, p)| p).sum();
    if !total.is_one() {
        return Err(parse_err(
            line,
            col0,
            format!("distribution sums to {total}, expected 1"),
        ));
    }
    Distribution::new(entries).map_err(|e| parse_err(line, col0, e.to_string()))
}

fn name_index(pa: &ProbAutomaton) -> BTreeMap<&str, StateId> {
    pa.state_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), StateId(i)))
        .collect()
}

/// Parses a distribution written as `s:p, s:p, ...` over `pa`'s states.
pub fn parse_distribution(text: &str, pa: &ProbAutomaton) -> Result<Distribution> {
    parse_entries(text, &name_index(pa), 0, 0)
}

/// Parses `{s,t | u,v | w}`; braces are optional, states may be separated
/// by commas or whitespace.
pub fn parse_partition(text: &str, pa: &ProbAutomaton) -> Result<Partition> {
    let t = text.trim();
    let inner = match (t.strip_prefix('{'), t.ends_with('}')) {
        (Some(rest), true) => &rest[..rest.len() - 1],
        (None, false) => t,
        _ => return Err(Error::Format(format!("unbalanced braces in `{text}`"))),
    };
    let index = name_index(pa);
    let mut blocks = Vec::new();
    let mut unknown = Vec::new();
    let mut count: BTreeMap<StateId, usize> = BTreeMap::new();
    for block in inner.split('|') {
        let mut members = Vec::new();
        for name in block
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|n| !n.is_empty())
        {
            match index.get(name) {
                Some(s) => {
                    *count.entry(*s).or_default() += 1;
                    members.push(*s);
                }
                None => unknown.push(name.to_string()),
            }
        }
        if members.is_empty() && unknown.is_empty() {
            return Err(Error::Format(format!("empty block in `{text}`")));
        }
        blocks.push(members);
    }
    if !unknown.is_empty() {
        return Err(Error::Format(format!(
            "unknown states: {}",
            unknown.join(", ")
        )));
    }
    let duplicated: Vec<&str> = count
        .iter()
        .filter(|(_, c)| **c > 1)
        .map(|(s, _)| pa.state_name(*s))
        .collect();
    if !duplicated.is_empty() {
        return Err(Error::Format(format!(
            "states listed more than once: {}",
            duplicated.join(", ")
        )));
    }
    let missing: Vec<&str> = pa
        .state_ids()
        .filter(|s| !count.contains_key(s))
        .map(|s| pa.state_name(s))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "states missing: {}",
            missing.join(", ")
        )));
    }
    Partition::new(blocks, pa.num_states())
}

pub fn format_distribution(pa: &ProbAutomaton, mu: &Distribution) -> String {
    mu.iter()
        .map(|(s, p)| format!("{}:{p}", pa.state_name(s)))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn format_partition(pa: &ProbAutomaton, part: &Partition) -> String {
    let blocks: Vec<String> = part
        .blocks()
        .iter()
        .map(|b| {
            b.iter()
                .map(|s| pa.state_name(*s))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    format!("{{{}}}", blocks.join(" | "))
}

/// Canonical text form; parsing it yields an identical automaton.
pub fn print_pa(pa: &ProbAutomaton) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pa {}", pa.name());
    let _ = writeln!(out, "states: {}", pa.state_names().join(" "));
    let _ = writeln!(out, "start: {}", pa.state_name(pa.start()));
    let ext = pa.external_actions().join(" ");
    let _ = writeln!(out, "{}", format!("external: {ext}").trim_end());
    let _ = writeln!(out, "transitions:");
    for t in pa.transitions() {
        let _ = writeln!(
            out,
            "  {} {} -> {}",
            pa.state_name(t.source),
            pa.action_name(t.action),
            format_distribution(pa, &t.target)
        );
    }
    out
}
