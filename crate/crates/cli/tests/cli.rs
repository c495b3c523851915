use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uhat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uhat")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_trace(dir: &Path, name: &str, lines: &[&str]) -> String {
    let f = dir.join(name);
    fs::write(&f, lines.join("\n") + "\n").unwrap();
    f.to_str().unwrap().to_string()
}

#[test]
fn synth_writes_generators_and_types() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("gens");
    let o = uhat(&["synth", "--spec", "stack", "--property", "pop_any", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let gen = fs::read_to_string(out.join("gen_1.gen")).unwrap();
    assert!(gen.starts_with("# property pop_any"));
    assert!(gen.contains("generator"));
    let ty = fs::read_to_string(out.join("gen_1.type")).unwrap();
    for key in ["context:", "claimed:", "source:"] {
        assert!(ty.lines().any(|l| l.starts_with(key)), "{key}");
    }
    assert!(stdout(&o).contains("candidate(s)"));
}

#[test]
fn run_finds_the_bug_and_writes_the_trace() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("gens");
    assert!(uhat(&["synth", "--spec", "stack", "--property", "pop_any", "--out", p(&out)]).status.success());
    let gen = out.join("gen_1.gen");
    let trace = d.path().join("trace.txt");
    let o = uhat(&[
        "run", "--gen", p(&gen), "--handler", "stack_buggy", "--max-runs", "200", "--seed", "1", "--trace-out", p(&trace),
        "--expect-violation",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("assert-violated"));
    let t = fs::read_to_string(&trace).unwrap();
    assert!(t.lines().all(|l| l.starts_with("op=")));
    let clean = uhat(&["run", "--gen", p(&gen), "--handler", "stack_ok", "--max-runs", "20", "--expect-violation"]);
    assert_eq!(clean.status.code(), Some(1));
}

#[test]
fn check_accepts_and_rejects() {
    let d = tempfile::tempdir().unwrap();
    let pushpop = write_trace(d.path(), "a.txt", &["op=push args=[1] ret=() ghost=0", "op=pop args=[] ret=1 ghost=0"]);
    let push = write_trace(d.path(), "b.txt", &["op=push args=[1] ret=() ghost=0"]);
    let o = uhat(&["check", "--trace", &pushpop, "--spec", "stack", "--property", "pop_any"]);
    assert_eq!((o.status.code(), stdout(&o).trim()), (Some(0), "accepted"));
    let o = uhat(&["check", "--trace", &push, "--spec", "stack", "--property", "pop_any"]);
    assert_eq!((o.status.code(), stdout(&o).trim()), (Some(1), "rejected"));
    let o = uhat(&["check", "--trace", &pushpop, "--spec", "stack", "--property", "lost_push"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_prints_both_strategies() {
    let d = tempfile::tempdir().unwrap();
    let table = d.path().join("t.tsv");
    let o = uhat(&[
        "bench", "--spec", "stack", "--property", "pop_any", "--handler", "stack_buggy", "--runs", "200", "--out", p(&table),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("handler\tstrategy"));
    assert!(rows.iter().any(|r| r.starts_with("stack_buggy\tsynthesized\t")));
    assert!(rows.iter().any(|r| r.starts_with("stack_buggy\trandom\t")));
    assert_eq!(fs::read_to_string(&table).unwrap(), text);
    let o = uhat(&[
        "bench", "--spec", "stack", "--property", "pop_any", "--handler", "stack_buggy", "--runs", "50", "--baseline", "none",
    ]);
    assert!(!stdout(&o).contains("random"));
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.cfg");
    fs::write(&cfg, "max-candidates = 1\n").unwrap();
    let one = uhat(&["synth", "--spec", "stack", "--property", "pop_any", "--out", p(&d.path().join("a")), "--config", p(&cfg)]);
    assert!(stdout(&one).contains("1 candidate(s)"), "{}", stdout(&one));
    let two = uhat(&[
        "synth", "--spec", "stack", "--property", "pop_any", "--out", p(&d.path().join("b")), "--config", p(&cfg), "--max-candidates",
        "2",
    ]);
    assert!(stdout(&two).contains("2 candidate(s)"), "{}", stdout(&two));
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(uhat(&["bogus"]).status.code(), Some(2));
    assert_eq!(uhat(&["synth", "--spec", "stack"]).status.code(), Some(2));
    let d = tempfile::tempdir().unwrap();
    let o = uhat(&["synth", "--spec", "stack", "--property", "nope", "--out", p(d.path())]);
    assert_ne!(o.status.code(), Some(0));
    let o = uhat(&["run", "--gen", p(&d.path().join("missing.gen")), "--handler", "stack_ok"]);
    assert_eq!(o.status.code(), Some(1));
}
