use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[generate]
n_units = 12
repetitions = 3

[sweep]
algorithms = ["kmeans", "dbscan"]
k_values = [2, 3]
eps_percentiles = [5.0, 20.0]
min_pts = [4]
k_restarts = 2

[classify]
classifiers = ["knn", "linear_svm"]
knn_k = [1, 3]
svm_c = [1.0]
n_splits = 2
control_schemes = ["luminosity"]

[embed]
iterations = 40
exaggeration_iterations = 10
momentum_switch = 10
"#;

fn popvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popvec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn config_hash(cfg: &Path) -> String {
    let o = popvec(&["config", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("# config_hash = "))
        .expect("hash line")
        .to_string()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn print_defaults_round_trips_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = popvec(&["--print-defaults"]);
    assert!(o.status.success());
    let cfg = write_config(dir.path(), &stdout(&o));
    let default_hash = {
        let o = popvec(&["config"]);
        assert!(o.status.success());
        stdout(&o)
            .lines()
            .find_map(|l| l.strip_prefix("# config_hash = ").map(String::from))
            .unwrap()
    };
    assert_eq!(config_hash(&cfg), default_hash);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\nnot_a_key = 3\n");
    let o = popvec(&["config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not_a_key"), "{}", stderr(&o));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[classify]\nclassifiers = [\"forest\"]\n");
    let o = popvec(&["config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = popvec(&["config", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_prerequisite_names_the_producing_command() {
    let dir = tempfile::tempdir().unwrap();
    let wd = dir.path().join("empty");
    for (cmd, producer) in [("preprocess", "generate"), ("sweep", "preprocess"), ("report", "")] {
        let o = popvec(&[cmd, "--workdir", wd.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{cmd}: {}", stderr(&o));
        assert!(
            stderr(&o).contains(&format!("run `popvec {producer}")),
            "{cmd}: {}",
            stderr(&o)
        );
    }
}

#[test]
fn workdir_does_not_change_the_hash() {
    let a = stdout(&popvec(&["config", "--workdir", "/tmp/a"]));
    let b = stdout(&popvec(&["config", "--workdir", "/tmp/b"]));
    assert_eq!(a, b);
    let c = stdout(&popvec(&["config", "--seed", "8"]));
    assert_ne!(a, c);
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let wd = dir.path().join("work");
    let (cfg_s, wd_s) = (cfg.to_str().unwrap(), wd.to_str().unwrap());
    let o = popvec(&["all", "--config", cfg_s, "--workdir", wd_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("luminosity"), "report printed to stdout");

    let hash = config_hash(&cfg);
    for f in files_under(&wd) {
        let ext = f.extension().and_then(|e| e.to_str()).unwrap_or("");
        let first = match ext {
            "csv" | "txt" | "svg" | "pgm" => {
                let bytes = fs::read(&f).unwrap();
                let end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
                let mut line = String::from_utf8_lossy(&bytes[..end]).into_owned();
                if ext == "pgm" {
                    // magic number precedes the comment line
                    let rest = &bytes[end + 1..];
                    let e2 = rest.iter().position(|&b| b == b'\n').unwrap();
                    line = String::from_utf8_lossy(&rest[..e2]).into_owned();
                }
                line
            }
            "json" => fs::read_to_string(&f).unwrap(),
            _ => continue,
        };
        assert!(first.contains(&hash), "{} lacks the config hash: {first}", f.display());
    }

    let table = |rel: &str| -> Vec<String> {
        fs::read_to_string(wd.join(rel))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect()
    };
    assert_eq!(
        table("sweep/sweep_position.csv")[0],
        "algorithm,params,k,noise,sil,ari,ami,purity,winner_internal,winner_external"
    );
    assert_eq!(
        table("classify/eval.csv")[0],
        "scheme,classifier,metric,mean,std,chosen_params_mode"
    );
    let emb = table("embed/embedding.csv");
    assert_eq!(emb[0], "stimulus_id,x,y");
    assert_eq!(emb.len(), 1441);
    let eval = table("classify/eval.csv");
    // 3 schemes x 2 classifiers x 4 metrics
    assert_eq!(eval.len(), 1 + 24);
    assert!(wd.join("report/artifacts.tar").exists());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(wd.join("classify/eval.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], hash.as_str());

    // a rerun in another directory reproduces every artifact byte for byte
    let wd2 = dir.path().join("again");
    let o = popvec(&[
        "all",
        "--config",
        cfg_s,
        "--workdir",
        wd2.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (a, b) = (files_under(&wd), files_under(&wd2));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.strip_prefix(&wd).unwrap(), y.strip_prefix(&wd2).unwrap());
        assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
    }

    // a corrupt cell is reported with its line and column
    let responses = wd.join("preprocess/responses.csv");
    let text = fs::read_to_string(&responses).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| !l.starts_with('#')).unwrap() + 3;
    let mut cells: Vec<String> = lines[row].split(',').map(String::from).collect();
    cells[2] = "oops".into();
    lines[row] = cells.join(",");
    fs::write(&responses, lines.join("\n") + "\n").unwrap();
    let o = popvec(&["classify", "--config", cfg_s, "--workdir", wd_s]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains(&format!("responses.csv:{}:3", row + 1)), "{msg}");
}

#[test]
fn strict_turns_non_convergence_into_exit_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace("k_restarts = 2", "k_restarts = 1\nk_max_iter = 1"),
    );
    let wd = dir.path().join("work");
    let (cfg_s, wd_s) = (cfg.to_str().unwrap(), wd.to_str().unwrap());
    for cmd in ["generate", "preprocess", "features"] {
        let o = popvec(&[cmd, "--config", cfg_s, "--workdir", wd_s]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let o = popvec(&["sweep", "--config", cfg_s, "--workdir", wd_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = popvec(&["sweep", "--strict", "--config", cfg_s, "--workdir", wd_s]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
