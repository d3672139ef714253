use std::path::Path;
use std::process::{Command, Output};

fn phi4lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phi4lab"))
        .args(args)
        .env("PHI4LAB_OUT", dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn report(dir: &Path, stem: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap()).unwrap()
}

#[test]
fn groundstate_config_gives_closed_form_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gs.toml",
        "version = \"phi4lab-config/1\"\nname = \"gs\"\n[groundstate]\nd = 1.0\nn = 1024\nhalf_length = 80.0\n",
    );
    let out = phi4lab(dir.path(), &["run_experiment", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "gs");
    let lambda = r["results"]["lambda"].as_f64().unwrap();
    assert!((lambda / 0.0625 - 1.0).abs() < 0.01, "{lambda}");
    assert_eq!(r["version"], "phi4lab-report/1");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("gs_profile.csv")).unwrap();
    assert!(csv.starts_with("x,q\n"));
    assert_eq!(csv.lines().count(), 1025);
}

#[test]
fn report_reruns_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = phi4lab(
        dir.path(),
        &["--name", "s", "sample", "--l", "3", "--d", "1", "--n", "24", "--steps", "300", "--burn-in", "100"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(dir.path().join("s.json")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let rep = dir.path().join("s.json").display().to_string();
    let out = phi4lab(again.path(), &["run_experiment", &rep]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let second = std::fs::read_to_string(again.path().join("s.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let neg = write(
        dir.path(),
        "neg.toml",
        "version = \"phi4lab-config/1\"\n[groundstate]\nd = -1.0\nn = 256\nhalf_length = 20.0\n",
    );
    let out = phi4lab(dir.path(), &["run_experiment", &neg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let dup = write(
        dir.path(),
        "dup.toml",
        "version = \"phi4lab-config/1\"\n[sample]\nl = 4.0\nd = 1.0\nn = 32\n[sample.chain]\nchains = 2\nseeds = [11, 11]\n",
    );
    let out = phi4lab(dir.path(), &["run_experiment", &dup]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gs.toml",
        "version = \"phi4lab-config/1\"\n[groundstate]\nd = 1.0\nn = 1024\nhalf_length = 80.0\ntolerance = 1e-12\nmax_iters = 3\n",
    );
    let out = phi4lab(dir.path(), &["run_experiment", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

fn final_hash(r: &serde_json::Value) -> String {
    r["results"]["chains"][0]["final_field_hash"].as_str().unwrap().to_string()
}

#[test]
fn resume_is_bit_identical_and_checks_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["sample", "--l", "4", "--d", "1", "--n", "32", "--steps", "1000", "--burn-in", "200", "--seed", "17"];
    let mut a: Vec<&str> = vec!["--name", "full"];
    a.extend_from_slice(&common);
    assert!(phi4lab(d, &a).status.success());
    let mut b: Vec<&str> = vec!["--name", "part"];
    b.extend_from_slice(&common);
    b.extend_from_slice(&["--checkpoint-every", "500"]);
    assert!(phi4lab(d, &b).status.success());
    let ck = d.join("part_chain0_step500.ckpt");
    let out = phi4lab(d, &["resume", &ck.display().to_string()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let full = report(d, "full");
    let resumed = report(d, "part_chain0_step500_resumed");
    assert_eq!(final_hash(&full), final_hash(&resumed));
    let f1 = std::fs::read(d.join("full_chain0_step1000.ckpt")).unwrap();
    let f2 = std::fs::read(d.join("part_chain0_step500_resumed_step1000.ckpt")).unwrap();
    assert_eq!(f1, f2);

    let bytes = std::fs::read(&ck).unwrap();
    let cut = d.join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() - 16]).unwrap();
    assert_eq!(phi4lab(d, &["resume", &cut.display().to_string()]).status.code(), Some(5));

    let text = String::from_utf8_lossy(&bytes).into_owned();
    let nl = bytes.iter().position(|c| *c == b'\n').unwrap();
    let mut wrong = text[..nl].replace("phi4lab-checkpoint/1", "phi4lab-checkpoint/7").into_bytes();
    wrong.extend_from_slice(&bytes[nl..]);
    let wv = d.join("wrong.ckpt");
    std::fs::write(&wv, wrong).unwrap();
    assert_eq!(phi4lab(d, &["resume", &wv.display().to_string()]).status.code(), Some(4));
}
