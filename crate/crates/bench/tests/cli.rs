use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dram-bench")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Drops the named column from every CSV line.
fn without_column(text: &str, column: &str) -> Vec<String> {
    let skip = text.lines().next().unwrap().split(',').position(|h| h == column).unwrap();
    text.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != skip).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

fn table(dir: &Path) -> Output {
    bench(&["table", "--trials", "6", "--seed", "9", "--out-dir", dir.to_str().unwrap()])
}

#[test]
fn table_outputs_are_reproducible_apart_from_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = table(a.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&table(b.path())), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("A. exact data") && stdout.contains("B. sigma = 0.1"));
    for name in ["records_enp.csv", "records_onp.csv"] {
        let (x, y) = (read(&a.path().join(name)), read(&b.path().join(name)));
        assert!(x.starts_with("trial_id,method,corrected,sigma,k,n,loss,angle_deg,defect,wall_time_ns,seed\n"));
        assert_eq!(without_column(&x, "wall_time_ns"), without_column(&y, "wall_time_ns"), "{name}");
    }
    let (x, y) = (read(&a.path().join("table.csv")), read(&b.path().join("table.csv")));
    assert_eq!(without_column(&x, "total_time_ns"), without_column(&y, "total_time_ns"));
    assert!(a.path().join("table.json").exists() && a.path().join("table.txt").exists());
}

#[test]
fn replay_reproduces_batch_records() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&table(dir.path())), 0);
    let batch = without_column(&read(&dir.path().join("records_onp.csv")), "wall_time_ns");
    let out = bench(&["replay", "--trial-id", "4", "--seed", "9", "--sigma", "0.1", "--problem", "onp"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let replayed = without_column(&String::from_utf8(out.stdout).unwrap(), "wall_time_ns");
    assert_eq!(replayed.len(), 12);
    for line in &replayed[1..] {
        assert!(batch.contains(line), "{line} not in batch");
    }
    let json = bench(&["replay", "--trial-id", "4", "--seed", "9", "--out", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 11);
}

#[test]
fn sweep_sorted_and_time_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let sweep = bench(&["sweep", "--trials", "5", "--sigma-grid", "0:0.2:0.1", "--problem", "onp", "--out-dir", d]);
    assert_eq!(code(&sweep), 0, "{}", String::from_utf8_lossy(&sweep.stderr));
    for f in ["sweep_onp.csv", "sweep_onp.json", "sweep_onp.svg", "records_onp.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let sorted = bench(&["sorted", "--trials", "10", "--correct", "bar-itzhack", "--out-dir", d]);
    assert_eq!(code(&sorted), 0, "{}", String::from_utf8_lossy(&sorted.stderr));
    assert_eq!(read(&dir.path().join("sorted_enp.csv")).lines().count(), 11);
    assert!(read(&dir.path().join("sorted_enp.svg")).contains("</svg>"));
    let time = bench(&["time", "--reps", "20", "--methods", "dram,svd", "--out-dir", d]);
    assert_eq!(code(&time), 0, "{}", String::from_utf8_lossy(&time.stderr));
    assert!(String::from_utf8(time.stdout).unwrap().contains("pinv"));
    assert!(dir.path().join("timing_enp.csv").exists());
}

#[test]
fn nd_mode_runs_dram_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&["table", "--dim", "5", "--k", "12", "--trials", "4", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let records = read(&dir.path().join("records_enp.csv"));
    assert!(records.lines().skip(1).all(|l| l.contains(",dram,") && l.contains(",12,5,")));
    let bad = bench(&["table", "--dim", "5", "--k", "12", "--methods", "svd", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn solve_reads_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    // 90° about z, shifted by (1, 2, 3)
    let cloud = "x,y,z\n1,0,0\n0,2,0\n0,0,3\n-1,-1,-1\n2,-1,0.5\n";
    let target = "x,y,z\n1,3,3\n-1,2,3\n1,2,6\n2,1,2\n2,4,3.5\n";
    let image = "u,v\n1,3\n-1,2\n1,2\n2,1\n2,4\n";
    let c = dir.path().join("cloud.csv");
    let t = dir.path().join("target.csv");
    let u = dir.path().join("image.csv");
    fs::write(&c, cloud).unwrap();
    fs::write(&t, target).unwrap();
    fs::write(&u, image).unwrap();
    let (c, t, u) = (c.to_str().unwrap(), t.to_str().unwrap(), u.to_str().unwrap());
    let out = bench(&["solve", "--cloud", c, "--target", t]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let m: Vec<Vec<f64>> = serde_json::from_value(v["matrix"].clone()).unwrap();
    let want = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((m[i][j] - want[i][j]).abs() < 1e-12, "{m:?}");
        }
    }
    let csv = bench(&["solve", "--problem", "onp", "--cloud", c, "--target", u, "--method", "qr", "--out", "csv"]);
    assert_eq!(code(&csv), 0, "{}", String::from_utf8_lossy(&csv.stderr));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("problem,method,correction,dim,points,loss,defect,m_1_1,"));
    assert!(text.contains("m_3_3"));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&bench(&["table", "--k", "2", "--out-dir", d])), 2);
    assert_eq!(code(&bench(&["sweep", "--sigma-grid", "0:1:0.3", "--out-dir", d])), 2);
    assert_eq!(code(&bench(&["table", "--methods", "dram,polar", "--out-dir", d])), 2);
    assert_eq!(code(&bench(&["sorted", "--correct", "none", "--out-dir", d])), 2);
    assert_eq!(code(&bench(&["frobnicate"])), 2);
    assert_eq!(code(&bench(&["solve", "--cloud", "/nonexistent.csv", "--target", "/nonexistent.csv"])), 2);

    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "x,y,z\n0,0,0\n1,0,0\n0,1,0\n1,1,0\n2,1,0\n").unwrap();
    let f = flat.to_str().unwrap();
    let out = bench(&["solve", "--cloud", f, "--target", f]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
}
