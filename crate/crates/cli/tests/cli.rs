use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakbisim"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tmp(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("weakbisim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const COIN: &str = "pa Coin\nstates: s h t\nstart: s\nexternal: heads tails\ntransitions:\n  s tau -> h:1/2, t:1/2\n  h heads -> h:1\n  t tails -> t:1\n";
const BIASED: &str = "pa Biased\nstates: s h t\nstart: s\nexternal: heads tails\ntransitions:\n  s tau -> h:1/3, t:2/3\n  h heads -> h:1\n  t tails -> t:1\n";
const DELAYED: &str = "pa Delayed\nstates: s0 s h t\nstart: s0\nexternal: heads tails\ntransitions:\n  s0 tau -> s:1\n  s tau -> h:1/2, t:1/2\n  h heads -> h:1\n  t tails -> t:1\n";

const WEAK: &[&str] = &[
    "--from",
    "sbar",
    "--label",
    "a",
    "--partition",
    "{sbar,t,u,v|g|b|r}",
];

fn weaktrans(extra: &[&str]) -> Output {
    let e = data("e.pa");
    let mut args = vec!["weaktrans", e.as_str()];
    args.extend_from_slice(WEAK);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn check_trace_and_verdict() {
    let e = data("e.pa");
    let o = run(&["check", &e, &e, "--trace"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("split C#0 on "));
    assert_eq!(out.lines().last(), Some("BISIMILAR"));
}

#[test]
fn check_distinguishes_biased_coin() {
    let (a, b, c) = (
        tmp("coin.pa", COIN),
        tmp("biased.pa", BIASED),
        tmp("delayed.pa", DELAYED),
    );
    let o = run(&["check", &a, &b]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "NOT BISIMILAR");
    let o = run(&["check", &a, &c]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "BISIMILAR");
}

#[test]
fn check_with_stats_and_all_flags() {
    let e = data("e.pa");
    let o = run(&["--no-dprime", "--no-lp-opt", "--stats", "check", &e, &e]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("stats: states=14 "));
}

#[test]
fn quotient_prints_classes() {
    let (a, c) = (tmp("coin.pa", COIN), tmp("delayed.pa", DELAYED));
    let o = run(&["quotient", &a, &c]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with('{'));
    assert_eq!(out.matches('|').count(), 2, "{out}");
}

#[test]
fn minimize_to_file() {
    let dir = std::env::temp_dir().join(format!("weakbisim-min-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("m.pa");
    let o = run(&["minimize", &data("e.pa"), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("states: sbar g\n"));
    let o = run(&["check", &data("e.pa"), out.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "BISIMILAR");
}

#[test]
fn weaktrans_feasible_with_scheduler() {
    let o = weaktrans(&[
        "--target",
        "g:1/16, b:5/16, r:10/16",
        "--scheduler",
        "--stats",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("FEASIBLE\n"));
    assert!(out.contains("sbar PreA -> tr#0:1 | stop:0\n"), "{out}");
    assert!(
        out.contains("t PreA -> tr#1:1/5, tr#4:4/5 | stop:0\n"),
        "{out}"
    );
    assert!(out.contains("induced: g:1/16, b:5/16, r:5/8\n"), "{out}");
    assert!(out.contains("stats: vertices="));
}

#[test]
fn weaktrans_allowed_subset() {
    let o = weaktrans(&[
        "--target",
        "g:1/16, b:5/16, r:10/16",
        "--allowed",
        "0,1,2,3",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "INFEASIBLE");
    let o = weaktrans(&["--target", "g:1/4, b:1/4, r:1/2", "--allowed", "0,1,2,3"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn weaktrans_hyper_and_distribution_source() {
    let e = data("e.pa");
    let o = run(&[
        "weaktrans",
        &e,
        "--from",
        "sbar",
        "--hyper",
        "--label",
        "a",
        "--target",
        "g:1/16, b:5/16, r:10/16",
        "--partition",
        "{sbar,t,u,v|g|b|r}",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&[
        "weaktrans",
        &e,
        "--from-dist",
        "u:1/2, v:1/2",
        "--label",
        "a",
        "--target",
        "b:1/2, r:1/2",
        "--scheduler",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("#h PreA -> "));
    let o = run(&[
        "weaktrans",
        &e,
        "--from-dist",
        "u:1/2, v:1/2",
        "--label",
        "a",
        "--target",
        "b:1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn match_reports_masses() {
    let e = data("e.pa");
    let o = run(&[
        "match",
        &e,
        "--left",
        "t",
        "--left-label",
        "a",
        "--right",
        "sbar",
        "--right-label",
        "a",
        "--partition",
        "{sbar,t,u,v|g|b|r}",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("MATCH\n"));
    assert_eq!(out.lines().count(), 5);
    let o = run(&[
        "match",
        &e,
        "--left",
        "g",
        "--left-label",
        "a",
        "--right",
        "sbar",
        "--right-label",
        "a",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "NO MATCH");
}

#[test]
fn input_errors_exit_two() {
    let e = data("e.pa");
    let cases = [
        "weaktrans E --from nowhere --label a --target g:1",
        "weaktrans E --from sbar --label zzz --target g:1",
        "weaktrans E --from sbar --label a --target g:1/2",
        "weaktrans E --from sbar --label a --target g:1 --allowed 0,x",
        "weaktrans E --from sbar --label a --target g:1 --allowed 99",
        "weaktrans E --from sbar --label a --target g:1 --partition {sbar|g}",
        "check E /nonexistent/file.pa",
    ];
    for case in cases {
        let args: Vec<&str> = case
            .split_whitespace()
            .map(|w| if w == "E" { e.as_str() } else { w })
            .collect();
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{case}: {}", stdout(&o));
        assert!(stderr(&o).starts_with("error: "), "{case}: {}", stderr(&o));
    }
}

#[test]
fn parse_error_names_the_file() {
    let bad = tmp(
        "bad.pa",
        "pa Bad\nstates: s\nstart: q\nexternal:\ntransitions:\n",
    );
    let o = run(&["minimize", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.pa"));
}

#[test]
fn selftest_small_batch() {
    let o = run(&["selftest", "--count", "5", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().last(), Some("PASS"));
}
