use std::path::PathBuf;
use std::process::{Command, Output};

fn glp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glp")).args(args).env_remove("GLP_SEED").output().expect("glp runs")
}

fn corpus(file: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "corpus", file].iter().collect();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_clean_module() {
    let o = glp(&["check", &corpus("merge.glp")]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn check_flags_shared_writer() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.glp");
    std::fs::write(&f, "p(X, X).\n").unwrap();
    let o = glp(&["check", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_merge() {
    let o = glp(&["run", &corpus("merge.glp"), "-g", "merge([1,2],[a,b],Zs)"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "Zs=[1,a,2,b]");
}

#[test]
fn run_with_failed_goal() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.glp");
    std::fs::write(&f, "p(a).\n").unwrap();
    let o = glp(&["run", f.to_str().unwrap(), "-g", "p(b)"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors() {
    assert_eq!(glp(&[]).status.code(), Some(2));
    assert_eq!(glp(&["run", &corpus("merge.glp")]).status.code(), Some(2));
    assert_eq!(glp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_planted_trace() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.trace");
    let o = glp(&["run", &corpus("merge.glp"), "-g", "merge([1,2],[a,b],Zs)", "--trace", t.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let good = glp(&["verify", t.to_str().unwrap(), "--checks", "srsw,deduction"]);
    assert_eq!(good.status.code(), Some(0), "{}", stdout(&good));

    // forge the first binding of the first reduction
    let text = std::fs::read_to_string(&t).unwrap();
    let mut done = false;
    let forged: Vec<String> = text
        .lines()
        .map(|l| {
            if done || !l.contains("kind=reduce") || l.contains("sigma=[]") {
                return l.to_string();
            }
            done = true;
            let at = l.find("sigma=[bind(").unwrap() + "sigma=[bind(".len();
            let comma = at + l[at..].find(',').unwrap() + 1;
            let end = comma + l[comma..].find(")]").unwrap();
            format!("{}forged{}", &l[..comma], &l[end..])
        })
        .collect();
    assert!(done);
    std::fs::write(&t, forged.join("\n") + "\n").unwrap();
    let bad = glp(&["verify", t.to_str().unwrap(), "--checks", "srsw,deduction"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("deduction FAIL step=1"), "{}", stdout(&bad));
}

#[test]
fn sim_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.trace");
    let b = dir.path().join("b.trace");
    let sc = corpus("scenarios/cold_call_yes.json");
    assert_eq!(glp(&["sim", &sc, "--trace", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(glp(&["sim", &sc, "--trace", b.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_env_overrides_flag() {
    let sc = corpus("scenarios/intro.json");
    let run = |flag: &str, env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_glp"));
        c.args(["sim", &sc, "--seed", flag]).env_remove("GLP_SEED");
        if let Some(e) = env {
            c.env("GLP_SEED", e);
        }
        c.output().unwrap().stdout
    };
    assert_eq!(run("1", Some("5")), run("5", None));
    assert!(String::from_utf8(run("1", Some("5"))).unwrap().contains("# seed 5"));
}

#[test]
fn corpus_test_passes() {
    let o = glp(&["corpus-test"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
