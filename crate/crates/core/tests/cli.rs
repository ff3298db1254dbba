//! End-to-end runs of the `specrecon` binary.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_specrecon");

fn run(args: &[&str], threads: &str) -> (i32, String) {
    let out = Command::new(BIN).args(args).env("SPECRECON_THREADS", threads).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let v = read_json(&path);
    jsonschema::JSONSchema::compile(&v).unwrap()
}

fn assert_valid(schema: &jsonschema::JSONSchema, doc: &Value) {
    if let Err(errs) = schema.validate(doc) {
        let msgs: Vec<String> = errs.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:?}");
    }
}

fn header(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

fn small(dir: &Path, command: &str, extra: &[&str]) -> Vec<String> {
    let mut v = vec![command.to_string(), "--out".into(), dir.display().to_string()];
    for s in ["p=24", "trials=3", "c_values=[2,4]"] {
        v.push("--set".into());
        v.push(s.into());
    }
    for s in extra {
        v.push("--set".into());
        v.push(s.to_string());
    }
    v
}

#[test]
fn every_command_emits_schema_valid_artifacts() {
    let manifest_schema = schema("manifest.schema.json");
    let summary_schema = schema("summary.schema.json");
    let cases: [(&str, &[&str], &str); 6] = [
        ("simulate", &[], "index,truth,sample_median,sample_q05,sample_q95"),
        ("reconstruct", &[], "index,sample,estimate,truth,raw_rel_err,recon_rel_err,valid"),
        ("validate", &[], "check,value,threshold,pass"),
        ("scaling", &[], "c,n,mean_abs_err,mean_abs_err_reconstructed,median_a"),
        ("mp-compare", &["model=identity", "c=0.5"], "trial,ks,near_zero"),
        ("insert", &["c=8"], "index,full,restricted,ratio,h"),
    ];
    for (cmd, extra, want_header) in cases {
        let dir = tempfile::tempdir().unwrap();
        let args = small(dir.path(), cmd, extra);
        let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        let (code, out) = run(&args, "2");
        assert_eq!(code, 0, "{cmd}: {out}");
        let manifest = read_json(&dir.path().join("manifest.json"));
        assert_valid(&manifest_schema, &manifest);
        let summary = read_json(&dir.path().join("summary.json"));
        assert_valid(&summary_schema, &summary);
        assert_eq!(summary["command"], cmd);
        assert_eq!(header(&dir.path().join("report.csv")), want_header, "{cmd}");
        for f in manifest["files"].as_array().unwrap() {
            let name = f["path"].as_str().unwrap();
            assert!(dir.path().join(name).exists());
            if name.ends_with(".svg") {
                let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
                roxmltree::Document::parse(&text).unwrap();
            }
        }
        if cmd == "mp-compare" {
            assert_eq!(header(&dir.path().join("density.csv")), "x,density");
            let zeros = summary["results"]["near_zero"].as_array().unwrap();
            assert!(zeros.iter().all(|z| z.as_u64() == Some(12)), "{zeros:?}");
        }
    }
}

#[test]
fn identical_runs_identical_hashes_across_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let args = small(dir.path(), "reconstruct", &["p=60", "trials=6", "seed=42"]);
        let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        assert_eq!(run(&args, threads).0, 0);
    }
    let ma = std::fs::read(a.path().join("manifest.json")).unwrap();
    let mb = std::fs::read(b.path().join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    for name in ["report.csv", "summary.json", "spectrum_overlay.svg"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "p = 50\nc = -1\n").unwrap();
    let (code, out) = run(&["reconstruct", "--config", cfg.to_str().unwrap()], "1");
    assert_eq!(code, 2);
    assert!(out.contains("`c`"), "{out}");

    let (code, _) = run(&["explode"], "1");
    assert_eq!(code, 2);
    let (code, _) = run(&["validate", "--set", "typo=1"], "1");
    assert_eq!(code, 2);
    let (code, _) = run(&["validate", "--config", "/nonexistent/x.toml"], "1");
    assert_eq!(code, 4);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out_dir = blocker.join("sub");
    let (code, _) = run(&["simulate", "--set", "p=10", "--set", "trials=1", "--out", out_dir.to_str().unwrap()], "1");
    assert_eq!(code, 4);

    // explicit model of the wrong length is a numeric/shape failure
    let (code, _) = run(
        &["simulate", "--set", "p=4", "--set", "model=\"explicit(3,2,1)\"", "--out", dir.path().to_str().unwrap()],
        "1",
    );
    assert_eq!(code, 3);

    let (code, _) = run(&["validate", "--out", dir.path().join("v").to_str().unwrap()], "x");
    assert_eq!(code, 2);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("command = \"simulate\"\np = 30\ntrials = 2\nmodel = \"geometric(1,50)\"\noutput_dir = \"{}\"\n", dir.path().join("o").display()),
    )
    .unwrap();
    let (code, out) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "seed=5"], "1");
    assert_eq!(code, 0, "{out}");
    let summary = read_json(&dir.path().join("o/summary.json"));
    assert_eq!(summary["config"]["seed"], 5);
    assert_eq!(summary["config"]["model"], "geometric(1.0,50.0)");
}

#[test]
fn reconstruct_example_linear_p200() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let (code, text) = run(&["reconstruct", "--set", "p=200", "--set", "trials=50", "--out", &out], "1");
    assert_eq!(code, 0, "{text}");
    let r = &read_json(&dir.path().join("summary.json"))["results"];
    let raw = r["interior_median_raw_rel_err"].as_f64().unwrap();
    let rec = r["interior_median_recon_rel_err"].as_f64().unwrap();
    assert!(rec < raw, "{rec} vs {raw}");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn mp_compare_example_identity_p400() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let args = ["mp-compare", "--set", "model=identity", "--set", "p=400", "--set", "trials=4", "--out", &out];
    assert_eq!(run(&args, "1").0, 0);
    let r = &read_json(&dir.path().join("summary.json"))["results"];
    assert_eq!(r["reference"], "marchenko_pastur");
    assert!(r["ks_max"].as_f64().unwrap() < 0.05);
}

#[test]
fn scaling_plot_slope_near_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let args = ["scaling", "--set", "p=200", "--set", "trials=6", "--out", &out];
    assert_eq!(run(&args, "1").0, 0);
    let svg = std::fs::read_to_string(dir.path().join("error_vs_c.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let slope: f64 = doc
        .descendants()
        .find(|n| n.attribute("class") == Some("slope"))
        .and_then(|n| n.attribute("data-slope"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 1.0).abs() <= 0.3, "{slope}");
}
