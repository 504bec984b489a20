use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seeds = [0]
[dataset.synthetic]
n_source = 60
n_target = 45
[model]
feature_hidden = [6]
feature_dim = 4
discriminator_hidden = [4]
[training]
batch_size = 16
phases = [{ epochs = 1, learning_rate = 1e-2 }]
[active]
budgets = [2]
max_round = 2
"#;

fn aada(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aada"))
        .args(args)
        .current_dir(dir)
        .env_remove("AADA_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_with_zero_rounds_logs_a_single_round() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let config = std::fs::read_to_string(&config).unwrap().replace("max_round = 2", "max_round = 0");
    std::fs::write(dir.path().join("config.toml"), config).unwrap();
    let out = aada(&["run", "--config", "config.toml", "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = dir.path().join("out/adversarial__importance_weight/seed_0/run_log.json");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(log).unwrap()).unwrap();
    let rounds = doc["log"]["rounds"].as_array().unwrap();
    assert_eq!(rounds.len(), 1);
    assert_eq!(rounds[0]["n_labeled"], 0);
    assert!(rounds[0]["test_accuracy"].is_f64());
}

#[test]
fn grid_over_schemes_and_two_strategies_gives_eight_groups() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "[grid]\nschemes = [\"adversarial\", \"joint\", \"fine_tune\", \"target_only\"]\nstrategies = [\"importance_weight\", \"random\"]\n",
    );
    let out = aada(&["grid", "--config", "config.toml", "--out", "out", "--workers", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = std::fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,n_labeled,scheme,strategy,mean_acc,sd_acc,n_seeds"
    );
    let mut groups: Vec<(String, String)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[3].to_string())
        })
        .collect();
    groups.sort();
    groups.dedup();
    assert_eq!(groups.len(), 8);

    // re-aggregating the written logs reproduces the table
    let out = aada(&["curves", "out", "--out", "again.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("again.csv")).unwrap(), curves);
}

#[test]
fn negative_budget_is_rejected_with_its_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("budgets = [2]\nmax_round = 2", "budgets = [2, -3]");
    std::fs::write(&config, text).unwrap();
    let out = aada(&["run", "--config", "config.toml", "--out", "out"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("active.budgets[1]"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "[output]\ndirectory = \"x\"\n");
    let out = aada(&["run", "--config", "config.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("directory"));
}

#[test]
fn inspect_scores_sorts_descending() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    let out = aada(&["run", "--config", "config.toml", "--out", "out", "--seed", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = aada(
        &["inspect-scores", "out/adversarial__importance_weight/seed_4", "--round", "1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let scores: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 30);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    let out = Command::new(env!("CARGO_BIN_EXE_aada"))
        .args(["run", "--config", "config.toml"])
        .current_dir(dir.path())
        .env("AADA_OUT_DIR", dir.path().join("from_env"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("from_env/curves.csv").exists());
}
