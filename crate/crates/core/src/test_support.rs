use crate::automata::ProbAutomaton;
use crate::format::parse_pa;
use crate::numeric::Rational;

pub const EXAMPLE_E: &str = "\
pa ExampleE
states: sbar t u v g b r
start: sbar
external: a
transitions:
  sbar tau -> t:1/4, u:1/4, v:1/2
  t a -> g:1
  u a -> b:1
  v a -> r:1
  t tau -> sbar:1
";

pub fn example_e() -> ProbAutomaton {
    parse_pa(EXAMPLE_E).unwrap()
}

pub fn q(s: &str) -> Rational {
    s.parse().unwrap()
}
