use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 5
map = "rational1d: num=[1,0,-2] den=[0,0,1]"
observables = ["dist_to([0.5,1])", "chordal_re(0,1)"]
tasks = ["degrees", "sample", "norms", "correlate", "transfer", "clt"]

[sampler]
n = 1500
start = "[0.3+0.2j, 1]"

[norms]
grid_n = 2000
lip_pairs = 200

[correlate]
n_max = 4

[transfer]
nodes = 200
n_trunc = 3

[clt]
n_block = 40
trajectories = 200
"#;

fn eqd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqd")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn degrees_prints_json() {
    let out = eqd(&["degrees", "monomial2d: A=[[3,1],[1,2]]"]);
    assert!(out.status.success());
    let j: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(j["d_t"], 5);
    assert_eq!(j["hypothesis"], true);
    assert!((j["d_list"][1].as_f64().unwrap() - 3.618).abs() < 1e-3);
}

#[test]
fn bad_mapspec_is_a_config_error() {
    let out = eqd(&["degrees", "rational1d: num=[1,0,x] den=[0,0,1]"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at 1:22"));
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = eqd(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = eqd(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "3", "--verbose"]);
    assert!(out.status.success());
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert_eq!(fa.len(), 9);
    assert!(fa == fb);
    assert!(a.join("manifest.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // malformed config
    let cfg = write_config(dir.path(), "seed = 1\nmap = 3\ntasks = []\n");
    let out = eqd(&["run", "--config", &cfg, "--out", dir.path().join("o1").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at 2:7"));
    // hypothesis violated: the margin is printed
    let cfg = write_config(dir.path(), "seed = 1\nmap = \"monomial2d: A=[[2,1],[1,1]]\"\ntasks = [\"degrees\"]\n");
    let out = eqd(&["run", "--config", &cfg, "--out", dir.path().join("o2").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("margin"));
    assert!(dir.path().join("o2/degrees.json").exists());
    // numerical failure: every backward walk from 0 collapses under z^2
    let cfg = write_config(
        dir.path(),
        "seed = 1\nmap = \"rational1d: num=[1,0,0] den=[0,0,1]\"\ntasks = [\"sample\"]\n[sampler]\nn = 50\nstart = \"[0, 1]\"\n",
    );
    let out = eqd(&["sample", "--config", &cfg, "--out", dir.path().join("o3").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn transfer_subcommand_writes_only_its_task() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("t");
    let out = eqd(&["transfer", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = csv_files(&out_dir).into_iter().map(|f| f.0).collect();
    assert_eq!(names, ["transfer_0.csv", "transfer_1.csv"]);
    let t = std::fs::read_to_string(out_dir.join("transfer_0.csv")).unwrap();
    assert!(t.starts_with("n,c_n,b_n,phi_tail_L2,phi_tail_sup,stderr\n"));
}
