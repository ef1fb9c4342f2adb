use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hball_cli::RunConfig;
use tempfile::TempDir;

fn hball(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hball"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL_WEAKTYPE: &str = r#"
[dyadic]
max_level = 4
[family]
name = "conc"
members = [
  { kind = "concentrating", center = [0.9, 0.0], epsilon = 0.1 },
  { kind = "concentrating", center = [0.9, 0.0], epsilon = 0.03 },
]
[weaktype]
outer = 256
pipeline_outer = 128
inner = { kind = "monte-carlo", samples = 512 }
t_grid = { t0 = 0.25, steps_per_octave = 1, count = 10 }
pipeline_thresholds = [4.0]
decompose_samples = 1024
measure_samples = 8192
cube_samples = 512
hormander_samples = 1024
hormander_cubes = 4
gradient_pairs = 2000
"#;

#[test]
fn emitted_config_reproduces_itself() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.toml"), SMALL_WEAKTYPE).unwrap();
    let o = hball(
        &["weaktype", "--config", "a.toml", "--seed", "9", "--emit-config"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.dyadic.eta, Some(0.5));
    fs::write(dir.path().join("b.toml"), &text).unwrap();
    let again = hball(&["weaktype", "--config", "b.toml", "--emit-config"], dir.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn weaktype_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL_WEAKTYPE).unwrap();
    let first = hball(&["weaktype", "--config", "run.toml", "--out", "one"], dir.path());
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    // rerun from the archived configuration, on a different worker count
    let second = hball(
        &[
            "weaktype",
            "--config",
            "one/config.toml",
            "--out",
            "two",
            "--workers",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(code(&second), 0);
    for name in [
        "weaktype.json",
        "weaktype_profiles.csv",
        "weaktype_members.csv",
        "pipeline_stages.csv",
    ] {
        let a = fs::read(dir.path().join("one").join(name)).unwrap();
        let b = fs::read(dir.path().join("two").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("one/weaktype.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["passed"], true);
}

#[test]
fn corrupted_snapshot_fails_nesting() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("d.toml"),
        "[dyadic]\nmax_level = 3\ncheck_points = 4000\n",
    )
    .unwrap();
    let o = hball(&["dyadic", "--config", "d.toml", "--out", "good"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snap = fs::read_to_string(dir.path().join("good/dyadic.snapshot")).unwrap();

    // reattach the first level-2 cube to a different level-1 parent
    let mut lines: Vec<String> = snap.lines().map(str::to_string).collect();
    let at = lines.iter().position(|l| l.starts_with("level 2 ")).unwrap() + 1;
    let mut tok: Vec<String> = lines[at].split_whitespace().map(str::to_string).collect();
    let parent: u32 = tok[1].parse().unwrap();
    tok[1] = if parent == 1 { "2".into() } else { "1".into() };
    lines[at] = tok.join(" ");
    fs::write(dir.path().join("bad.snapshot"), lines.join("\n")).unwrap();
    fs::write(
        dir.path().join("e.toml"),
        "[dyadic]\nmax_level = 3\ncheck_points = 4000\nsnapshot = \"bad.snapshot\"\n",
    )
    .unwrap();
    let o = hball(&["dyadic", "--config", "e.toml", "--out", "bad"], dir.path());
    assert_eq!(code(&o), 1);
    let table = fs::read_to_string(dir.path().join("bad/dyadic_suites.csv")).unwrap();
    assert!(
        table.lines().any(|l| l.contains(",nesting,") && l.contains(",false,")),
        "{table}"
    );

    // unreadable snapshots are rejected too
    fs::write(dir.path().join("bad.snapshot"), &snap[..snap.len() / 2]).unwrap();
    assert_eq!(
        code(&hball(&["dyadic", "--config", "e.toml", "--out", "bad2"], dir.path())),
        1
    );
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    for (name, text) in [
        ("unknown.toml", "colour = 1\n"),
        ("eta.toml", "[dyadic]\neta = 2.0\n"),
        ("dim.toml", "dimension = 3\n"),
        ("kernel.toml", "[kernel]\nname = \"h-harmonic-series\"\n"),
        ("grid.toml", "[czd]\nthresholds = [-1.0]\n"),
    ] {
        fs::write(dir.path().join(name), text).unwrap();
        let o = hball(&["czd", "--config", name], dir.path());
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&hball(&["czd", "--config", "missing.toml"], dir.path())), 2);
}

#[test]
fn czd_records_thresholds_below_the_norm() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        r#"
[dyadic]
max_level = 4
[family]
members = [{ kind = "spike", center = [0.3, -0.2], radius = 0.2, height = 25.0 }]
[czd]
thresholds = [0.5, 4.0]
samples = 1024
max_samples = 4096
clause_samples = 10000
measure_samples = 8192
"#,
    )
    .unwrap();
    let o = hball(&["czd", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("o/czd_checks.csv")).unwrap();
    assert!(table.lines().any(|l| l.contains("below-norm") && l.contains(",0.5,")));
    assert!(table.lines().filter(|l| l.contains(",4.0,")).count() >= 7);
}

#[test]
fn trivial_families_pass_weaktype() {
    let dir = TempDir::new().unwrap();
    for (name, member) in [
        ("one", r#"{ kind = "constant", value = 1.0 }"#),
        ("zero", r#"{ kind = "zero" }"#),
    ] {
        let text = SMALL_WEAKTYPE.replace(
            "members = [\n  { kind = \"concentrating\", center = [0.9, 0.0], epsilon = 0.1 },\n  { kind = \"concentrating\", center = [0.9, 0.0], epsilon = 0.03 },\n]",
            &format!("members = [{member}]"),
        );
        assert_ne!(text, SMALL_WEAKTYPE);
        fs::write(dir.path().join(format!("{name}.toml")), text.replace("[4.0]", "[2.0]")).unwrap();
        let o = hball(
            &["weaktype", "--config", &format!("{name}.toml"), "--out", name],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn kernel_bounds_for_the_constant_kernel_are_zero() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("k.toml"),
        "[kernel]\nname = \"constant\"\n[kernel_bounds]\npairs = 2000\nhormander_cubes = 3\nhormander_samples = 512\n",
    )
    .unwrap();
    let o = hball(&["kernel-bounds", "--config", "k.toml", "--out", "o"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("o/kernel_bounds.csv")).unwrap();
    let grad = table.lines().find(|l| l.contains(",gradient,")).unwrap();
    assert!(grad.contains(",gradient,0.0,"), "{grad}");
    let hormander = fs::read_to_string(dir.path().join("o/hormander.csv")).unwrap();
    assert_eq!(hormander.lines().count(), 4);
}
