use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn pesin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pesin")).current_dir(dir).args(args).output().expect("spawn pesin")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn fixed_point_config(dir: &Path) -> String {
    write_config(dir, "fp.toml", "max_period = 1\nrandom_windows = 0\n")
}

#[test]
fn verify_default_config_passes() {
    let dir = TempDir::new().unwrap();
    let o = pesin(dir.path(), &["verify", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    for s in pesin_core::suite::SUITES {
        assert!(dir.path().join(format!("out/{s}.csv")).exists(), "{s}");
    }
}

#[test]
fn gamma_violation_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "gamma = 15.0\n");
    let o = pesin(dir.path(), &["--config", &cfg, "verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma must exceed 20/beta"));
    let cfg = write_config(dir.path(), "typo.toml", "sead = 3\n");
    assert_eq!(pesin(dir.path(), &["--config", &cfg, "graph"]).status.code(), Some(2));
    assert_eq!(pesin(dir.path(), &["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn verify_csv_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let suites = ["--suite", "telescoping", "--suite", "contraction", "--suite", "shadowing", "--suite", "coding"];
    for out in ["a", "b"] {
        let mut args = vec!["verify", "--seed", "7", "--out", out];
        args.extend(suites);
        assert_eq!(pesin(dir.path(), &args).status.code(), Some(0));
    }
    for s in ["telescoping", "contraction", "shadowing", "coding"] {
        let a = std::fs::read(dir.path().join(format!("a/{s}.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b/{s}.csv"))).unwrap();
        assert_eq!(a, b, "{s}");
    }
}

#[test]
fn fixed_point_graph_has_a_self_loop() {
    let dir = TempDir::new().unwrap();
    let cfg = fixed_point_config(dir.path());
    assert_eq!(pesin(dir.path(), &["--config", &cfg, "graph", "--out", "g"]).status.code(), Some(0));
    let g: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g/graph.json")).unwrap()).unwrap();
    assert_eq!(g["edges"], serde_json::json!([[0, 0]]));
    assert!(std::fs::read_to_string(dir.path().join("g/graph.dot")).unwrap().contains("v0 -> v0;"));
}

fn printed(o: &Output, key: &str) -> Vec<f64> {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no '{key}' line in {}", stdout(o)))
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect()
}

#[test]
fn shadow_of_constant_chain_and_of_shifted_chain() {
    let dir = TempDir::new().unwrap();
    let cfg = fixed_point_config(dir.path());
    std::fs::write(dir.path().join("c.json"), "[0,0,0,0,0,0,0]").unwrap();
    let o = pesin(dir.path(), &["--config", &cfg, "shadow", "--chain", "c.json", "--out", "s"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(printed(&o, "semiconjugacy defect")[0] < 1e-10);

    let cfg = write_config(dir.path(), "p2.toml", "max_period = 2\nrandom_windows = 0\n");
    assert_eq!(pesin(dir.path(), &["--config", &cfg, "graph", "--out", "g"]).status.code(), Some(0));
    let g: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g/graph.json")).unwrap()).unwrap();
    let succ = |v: u64| g["successors"][v as usize][0].as_u64().unwrap();
    let mut path = vec![1u64];
    while path.len() < 10 {
        path.push(succ(*path.last().unwrap()));
    }
    std::fs::write(dir.path().join("c9.json"), serde_json::to_string(&path[..9]).unwrap()).unwrap();
    std::fs::write(dir.path().join("c9s.json"), serde_json::to_string(&path[1..10]).unwrap()).unwrap();
    let a = printed(&pesin(dir.path(), &["--config", &cfg, "shadow", "--chain", "c9.json", "--out", "s1"]), "point");
    let b = printed(&pesin(dir.path(), &["--config", &cfg, "shadow", "--chain", "c9s.json", "--out", "s2"]), "point");
    let image = [(3.0 * a[0] + a[1]).rem_euclid(1.0), (a[0] + a[1]).rem_euclid(1.0)];
    let d = |u: f64, v: f64| ((u - v).rem_euclid(1.0)).min((v - u).rem_euclid(1.0));
    assert!(d(image[0], b[0]) < 1e-12 && d(image[1], b[1]) < 1e-12, "{a:?} -> {b:?}");
}

#[test]
fn malformed_chain_files_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = fixed_point_config(dir.path());
    for (name, body) in [("a.json", "[0,0,"), ("b.json", "[0,0,0,0,9]"), ("c.json", "[0,0,0,0]"), ("d.json", "{}")] {
        std::fs::write(dir.path().join(name), body).unwrap();
        let o = pesin(dir.path(), &["--config", &cfg, "shadow", "--chain", name]);
        assert_eq!(o.status.code(), Some(2), "{name}");
    }
}

#[test]
fn linear_manifolds_are_flat() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p3.toml", "max_period = 3\n");
    let o = pesin(dir.path(), &["--config", &cfg, "manifold", "--out", "m"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(printed(&o, "max |G|")[0] < 1e-10);
    let csv = std::fs::read_to_string(dir.path().join("m/manifold_stable.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,value,slope"));
    assert_eq!(csv.lines().count(), 66);
}

#[test]
fn single_vertex_partition_has_one_atom() {
    let dir = TempDir::new().unwrap();
    let cfg = fixed_point_config(dir.path());
    assert_eq!(pesin(dir.path(), &["--config", &cfg, "partition", "--out", "p"]).status.code(), Some(0));
    let p: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p/partition.json")).unwrap()).unwrap();
    assert_eq!(p["atoms"].as_array().unwrap().len(), 1);
    assert_eq!(p["successors"], serde_json::json!([[1]]));
}

#[test]
fn lattice_csv_starts_at_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(pesin(dir.path(), &["lattice", "--depth", "4", "--out", "l"]).status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("l/lattice.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[1], "0,0.0000000000000000e0,1.0000000000000000e0");
}
