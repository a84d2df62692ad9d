use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vortexlab_cli::config::{RunConfig, SCHEMA};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vortexlab"));
    c.env_remove("VORTEXLAB_THREADS");
    c
}

fn run_config(dir: &Path, body: &str) -> Output {
    let out = dir.join("out");
    let text = format!("{body}\n").replace("@OUT@", &out.display().to_string());
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    bin().arg("run").arg(&path).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SPHERE_STABLE: &str = r#"
[run]
experiment = "stability"
output = "@OUT@"
[surface]
genus = 0
volume = 50.0
resolution = 16
[divisor]
points = ["0 0 1", "1 0 1", "-1 0 1"]
"#;

const TORUS_VORTEX: &str = r#"
[run]
experiment = "solve-vortex"
output = "@OUT@"
seed = 7
[surface]
genus = 1
volume = 30.0
resolution = 32
[divisor]
points = ["0.7 1.3 1"]
[options]
kpot_amplitude = 0.1
"#;

#[test]
fn schema_is_a_valid_config() {
    let cfg = RunConfig::parse(SCHEMA).unwrap();
    assert_eq!(cfg.run.seed, 0);
    let o = bin().arg("schema").output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o), SCHEMA);
}

#[test]
fn unknown_keys_are_rejected() {
    let bad = TORUS_VORTEX.replace("seed = 7", "seed = 7\nsede = 8");
    assert!(RunConfig::parse(&bad.replace("@OUT@", "x")).is_err());
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), &bad);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));
}

#[test]
fn modulus_not_allowed_on_sphere() {
    let bad = SPHERE_STABLE.replace("resolution = 16", "resolution = 16\nmodulus = [0.0, 1.0]");
    assert!(RunConfig::parse(&bad).is_err());
}

#[test]
fn stability_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), SPHERE_STABLE);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("verdict = stable"), "{s}");
    assert!(dir.path().join("out/resolved.toml").exists());
    assert!(dir.path().join("out/report.txt").exists());

    let unstable =
        SPHERE_STABLE.replace(r#"["0 0 1", "1 0 1", "-1 0 1"]"#, r#"["0 0 2", "1 0 1"]"#);
    let o = run_config(dir.path(), &unstable);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict = unstable"));
}

#[test]
fn vortex_run_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), TORUS_VORTEX);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("status = ok"));
    assert!(dir.path().join("out/f.field").exists());
}

#[test]
fn bradlow_violation_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        &TORUS_VORTEX
            .replace("volume = 30.0", "volume = 10.0")
            .replace("kpot_amplitude = 0.1", "kpot_amplitude = 0.0"),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Bradlow"), "{err}");
    assert!(stdout(&o).contains("status = error"));
}

#[test]
fn unstable_sphere_stalls() {
    let dir = tempfile::tempdir().unwrap();
    let body = SPHERE_STABLE
        .replace("\"stability\"", "\"solve-gravitating\"")
        .replace(r#"["0 0 1", "1 0 1", "-1 0 1"]"#, r#"["0 0 2", "1 0 1"]"#)
        .replace("resolution = 16", "resolution = 24")
        + "[physics]\nalpha = 0.1\n";
    let o = run_config(dir.path(), &body);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("status = stalled"));
}

#[test]
fn reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    // same output path text so the echoed config matches
    let body = TORUS_VORTEX.replace("@OUT@", "out");
    let run = |d: &Path, threads: &str| {
        fs::write(d.join("run.toml"), &body).unwrap();
        let o = bin()
            .current_dir(d)
            .env("VORTEXLAB_THREADS", threads)
            .args(["run", "run.toml"])
            .output()
            .unwrap();
        assert!(o.status.success());
        (stdout(&o), fs::read(d.join("out/f.field")).unwrap())
    };
    assert_eq!(run(a.path(), "1"), run(b.path(), "0"));
}

#[test]
fn bad_thread_count_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, TORUS_VORTEX.replace("@OUT@", "out")).unwrap();
    let o = bin()
        .env("VORTEXLAB_THREADS", "many")
        .arg("run")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_experiment_runs_small() {
    let torus = |exp: &str, extra: &str| {
        format!(
            "[run]\nexperiment = \"{exp}\"\noutput = \"@OUT@\"\n[surface]\ngenus = 1\nvolume = 30.0\nresolution = 32\n\
             [divisor]\npoints = [\"0.7 1.3 1\"]\n{extra}"
        )
    };
    let sphere = |exp: &str, extra: &str| {
        format!(
            "[run]\nexperiment = \"{exp}\"\noutput = \"@OUT@\"\n[surface]\ngenus = 0\nvolume = 50.0\nresolution = 16\n\
             [divisor]\npoints = [\"0 0 1\", \"inf 1\", \"1 0 1\"]\n{extra}"
        )
    };
    let cases = [
        (
            torus("solve-gravitating", "[physics]\nalpha = 0.2\n"),
            "trace.csv",
        ),
        (
            torus("solve-twisted", "[physics]\nalpha = 0.2\nlambda = 0.1\n"),
            "xi.field",
        ),
        (
            torus("convexity-scan", "[options]\nsegments = 4\nsamples = 5\n"),
            "convexity.csv",
        ),
        (
            torus(
                "energy-report",
                "[physics]\nalpha = 0.1\n[options]\nkpot_amplitude = 0.1\n",
            ),
            "kpot.field",
        ),
        (
            sphere(
                "ray-slope",
                "[physics]\nalpha = 0.05\n[options]\nprofile_steps = 6\n",
            ),
            "ray_profile.csv",
        ),
        (
            sphere(
                "epsilon-geodesic",
                "[physics]\nalpha = 0.05\n[options]\nnodes = 9\n",
            ),
            "epsilon_geodesic.csv",
        ),
    ];
    for (body, artifact) in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = run_config(dir.path(), &body);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{body}\n{}\n{}",
            stdout(&o),
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(dir.path().join("out").join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn selftest_passes_and_catches_mutation() {
    let o = bin().arg("selftest").output().unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    let o = bin()
        .args(["selftest", "--mutation", "flip-curvature-sign"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL gradient-consistency"));
}
