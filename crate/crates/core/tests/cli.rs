use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn minhold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minhold"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        let prices = ws.path("prices.csv");
        let out = minhold(&["gen-data", "--seed", "3", "--assets", "5", "--days", "120", "--out", prices.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, body).unwrap();
        path
    }
}

fn config_body(out_dir: &str, hold: usize, extra: &str) -> String {
    format!(
        r#"input = "prices.csv"
output_dir = "{out_dir}"
seed = 9
window = 30
hold = {hold}
bundles = 5
bit_depth = 2
baseline_count = 50
{extra}
[sampler]
n_reads = 32
sweeps = 100

[[packages]]
label = "cautious"
vol_cap = 0.3
gamma = 4.0

[[packages]]
label = "bold"
vol_cap = 2.0
gamma = 0.5
"#
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn optimize_writes_feasible_artifacts() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", &config_body("out", 4, ""));
    let out = minhold(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["cautious", "bold"] {
        let traj = ws.path(&format!("out/{label}.trajectory.csv"));
        let text = fs::read_to_string(&traj).unwrap();
        assert!(text.starts_with("date,asset_id,weight\n"));
        let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path(&format!("out/{label}.metrics.json"))).unwrap()).unwrap();
        for key in ["total_return", "volatility", "sharpe", "annualized_return", "annualized_volatility", "fallback_count"] {
            assert!(metrics.get(key).is_some(), "missing {key}");
        }
        let v = minhold(&["verify", "--trajectory", traj.to_str().unwrap(), "--hold", "4"]);
        assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
    }
    let frontier = fs::read_to_string(ws.path("out/frontier.csv")).unwrap();
    assert!(frontier.starts_with("label,annualized_volatility,annualized_return,sharpe\n"));
    assert_eq!(frontier.lines().filter(|l| l.starts_with("baseline,")).count(), 50);

    let report = minhold(&["report", "--frontier", ws.path("out/frontier.csv").to_str().unwrap()]);
    assert_eq!(code(&report), 0);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("cautious") && text.contains("bold") && text.contains("50 baseline"));
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new();
    let a = ws.config("a.toml", &config_body("a", 3, ""));
    let b = ws.config("b.toml", &config_body("b", 3, ""));
    assert_eq!(code(&minhold(&["optimize", "--config", a.to_str().unwrap(), "--threads", "1"])), 0);
    assert_eq!(code(&minhold(&["optimize", "--config", b.to_str().unwrap(), "--threads", "3"])), 0);
    assert_eq!(read_dir_bytes(&ws.path("a")), read_dir_bytes(&ws.path("b")));
}

#[test]
fn bad_configs_exit_with_usage_code() {
    let ws = Workspace::new();
    let zero_hold = ws.config("h0.toml", &config_body("o", 0, ""));
    let out = minhold(&["optimize", "--config", zero_hold.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hold"));

    let unknown = ws.config("u.toml", &config_body("o", 2, "colour = \"red\""));
    assert_eq!(code(&minhold(&["optimize", "--config", unknown.to_str().unwrap()])), 2);
    assert_eq!(code(&minhold(&["optimize", "--config", ws.path("missing.toml").to_str().unwrap()])), 2);
    assert_eq!(code(&minhold(&["optimize"])), 2);
    assert_eq!(code(&minhold(&["frobnicate"])), 2);
}

#[test]
fn empty_universe_exits_with_code_three() {
    let ws = Workspace::new();
    let body = config_body("o", 2, "").replace("vol_cap = 0.3", "vol_cap = 0.000001");
    let cfg = ws.config("tiny.toml", &body);
    let out = minhold(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cautious"));
}

#[test]
fn verify_flags_the_first_early_sale() {
    let ws = Workspace::new();
    let path = ws.path("t.csv");
    fs::write(
        &path,
        "date,asset_id,weight\n\
         2020-01-01,A,0.6\n2020-01-01,B,0.4\n\
         2020-01-02,A,0.6\n2020-01-02,B,0.4\n\
         2020-01-03,A,0.2\n2020-01-03,B,0.8\n\
         2020-01-04,A,0.2\n2020-01-04,B,0.2\n",
    )
    .unwrap();
    let out = minhold(&["verify", "--trajectory", path.to_str().unwrap(), "--hold", "3"]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("2020-01-03") && text.contains(" A "), "{text}");
    assert_eq!(code(&minhold(&["verify", "--trajectory", path.to_str().unwrap(), "--hold", "2"])), 1);
    let ok = minhold(&["verify", "--trajectory", path.to_str().unwrap(), "--hold", "1"]);
    assert_eq!(code(&ok), 0);

    let empty = ws.path("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&minhold(&["verify", "--trajectory", empty.to_str().unwrap(), "--hold", "3"])), 2);
    assert_eq!(code(&minhold(&["verify", "--trajectory", path.to_str().unwrap(), "--hold", "0"])), 2);
}

#[test]
fn tampered_optimizer_output_fails_verification() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", &config_body("out", 5, ""));
    assert_eq!(code(&minhold(&["optimize", "--config", cfg.to_str().unwrap()])), 0);
    let traj = ws.path("out/bold.trajectory.csv");
    let text = fs::read_to_string(&traj).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let assets = lines[1..].iter().take_while(|l| l.split(',').next() == lines[1].split(',').next()).count();
    // step 0 buys something; zero it out at step 1 to force an early sale
    let bought = (1..=assets)
        .find(|&i| lines[i].split(',').nth(2).unwrap().parse::<f64>().unwrap() > 0.0)
        .expect("opening portfolio holds something");
    let mut cells: Vec<String> = lines[bought + assets].split(',').map(str::to_owned).collect();
    cells[2] = "0".into();
    lines[bought + assets] = cells.join(",");
    fs::write(&traj, lines.join("\n") + "\n").unwrap();
    let out = minhold(&["verify", "--trajectory", traj.to_str().unwrap(), "--hold", "5"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn report_percentiles() {
    let ws = Workspace::new();
    let path = ws.path("f.csv");
    fs::write(
        &path,
        "label,annualized_volatility,annualized_return,sharpe\n\
         star,0.1,0.5,9.0\nmid,0.1,0.2,2.0\n\
         baseline,0.1,0.1,1.0\nbaseline,0.1,0.2,2.0\nbaseline,0.1,0.3,3.0\n",
    )
    .unwrap();
    let out = minhold(&["report", "--frontier", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = |label: &str| text.lines().find(|l| l.starts_with(label)).unwrap().to_owned();
    assert!(line("star").ends_with("100.0"));
    assert!(line("mid").ends_with("50.0"));
    assert_eq!(code(&minhold(&["report", "--frontier", ws.path("nope.csv").to_str().unwrap()])), 2);
}
