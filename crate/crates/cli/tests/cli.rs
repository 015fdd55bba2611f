use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgc_core::eval::MetricsReport;
use tempfile::TempDir;

fn kgc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgc"))
        .args(args)
        .current_dir(dir)
        .env("KGC_THREADS", "2")
        .output()
        .expect("kgc runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_split(dir: &Path, name: &str, triples: &[(usize, &str, usize)]) {
    let text: String = triples.iter().map(|(h, r, t)| format!("e{h}\t{r}\te{t}\n")).collect();
    fs::write(dir.join(name), text).unwrap();
}

/// Twelve entities on a ring with `next` and `skip` edges.
fn toy_dataset(root: &Path, name: &str) -> PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    let n = 12;
    let mut all: Vec<(usize, &str, usize)> = (0..n).map(|i| (i, "next", (i + 1) % n)).collect();
    all.extend((0..n).map(|i| (i, "skip", (i + 2) % n)));
    write_split(&dir, "valid.txt", &all[..2]);
    write_split(&dir, "test.txt", &all[12..14]);
    let train: Vec<_> = all.iter().enumerate().filter(|(i, _)| !matches!(i, 0 | 1 | 12 | 13)).map(|(_, t)| *t).collect();
    write_split(&dir, "train.txt", &train);
    dir
}

fn write_config(root: &Path, file: &str, dataset: &str, loss: &str, out: &str) -> PathBuf {
    let path = root.join(file);
    fs::write(
        &path,
        format!(
            r#"{{"dataset":"{dataset}","encoder":{{"kind":"mlp","layers":1,"dim":8}},"scorer":{{"kind":"distmult"}},
"loss":{loss},"train":{{"epochs":4,"batch_size":8,"lr":0.01,"eval_every":2}},"seeds":[0,1,2],"out":"{out}"}}"#
        ),
    )
    .unwrap();
    path
}

const UNSAMPLED: &str = r#"{"regime":"without_sampling"}"#;

fn trained(root: &Path) -> PathBuf {
    toy_dataset(root, "data");
    write_config(root, "cfg.json", "data", UNSAMPLED, "runs/a");
    let out = kgc(root, &["train", "cfg.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    root.join("runs/a")
}

#[test]
fn train_writes_one_checkpoint_per_seed() {
    let tmp = TempDir::new().unwrap();
    let run = trained(tmp.path());
    for seed in 0..3 {
        let dir = run.join(format!("seed-{seed}"));
        for f in ["checkpoint.kgc", "history.json", "report.json", "valid_report.json"] {
            assert!(dir.join(f).is_file(), "missing {f} for seed {seed}");
        }
    }
    for f in ["config.json", "manifest.json", "report.json", "valid_report.json", "report.txt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let report: MetricsReport = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seeds, vec![0, 1, 2]);
    assert!(report.is_consistent());
}

#[test]
fn missing_dataset_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "cfg.json", "nowhere", UNSAMPLED, "runs/a");
    let out = kgc(tmp.path(), &["train", "cfg.json"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(!tmp.path().join("runs/a").exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = kgc(tmp.path(), &["train", "--config", "absent.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn too_many_negatives_names_the_loss_section() {
    let tmp = TempDir::new().unwrap();
    toy_dataset(tmp.path(), "data");
    write_config(tmp.path(), "cfg.json", "data", r#"{"regime":"with_sampling","k":12}"#, "runs/a");
    let out = kgc(tmp.path(), &["train", "cfg.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("loss"), "{}", stderr(&out));
    assert!(!tmp.path().join("runs/a/seed-0").exists());
}

#[test]
fn eval_reproduces_the_training_report_and_round_trips_json() {
    let tmp = TempDir::new().unwrap();
    let run = trained(tmp.path());
    let out = kgc(tmp.path(), &["eval", "runs/a/seed-1/checkpoint.kgc", "--dataset", "data", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed: MetricsReport = serde_json::from_str(&stdout(&out)).unwrap();
    let stored: MetricsReport =
        serde_json::from_str(&fs::read_to_string(run.join("seed-1/report.json")).unwrap()).unwrap();
    assert_eq!(printed, stored);
    let again: MetricsReport = serde_json::from_str(&printed.to_json()).unwrap();
    assert_eq!(again, printed);
    let keys: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["mrr", "hits1", "hits3", "hits10", "per_seed", "config_hash", "dataset", "direction_split"] {
        assert!(keys.get(key).is_some(), "missing key {key}");
    }
}

#[test]
fn eval_on_a_different_vocabulary_is_rejected() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    let other = tmp.path().join("other");
    fs::create_dir_all(&other).unwrap();
    write_split(&other, "train.txt", &[(0, "likes", 1), (1, "likes", 2)]);
    write_split(&other, "valid.txt", &[(2, "likes", 0)]);
    write_split(&other, "test.txt", &[(0, "likes", 2)]);
    let out = kgc(tmp.path(), &["eval", "runs/a/seed-0/checkpoint.kgc", "--dataset", "other"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("vocabulary"));
}

#[test]
fn singleton_ensemble_matches_its_member() {
    let tmp = TempDir::new().unwrap();
    let run = trained(tmp.path());
    fs::write(tmp.path().join("one.ensemble"), "dataset = data\nmember = runs/a/seed-{seed}/checkpoint.kgc\n").unwrap();
    let out = kgc(tmp.path(), &["ensemble", "one.ensemble", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["MLP+DistMult w/o sampling", "MLP-best", "MLP-ensemble"]);
    let stored: MetricsReport = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    for row in rows {
        let report: MetricsReport = serde_json::from_value(row["report"].clone()).unwrap();
        assert_eq!(report.per_seed, stored.per_seed);
        assert_eq!(report.mrr, stored.mrr);
    }
}

#[test]
fn missing_ensemble_member_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    fs::write(
        tmp.path().join("two.ensemble"),
        "dataset = data\nmember = runs/a/seed-{seed}/checkpoint.kgc\nmember = runs/b/seed-{seed}/checkpoint.kgc\n",
    )
    .unwrap();
    let out = kgc(tmp.path(), &["ensemble", "two.ensemble"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("runs/b"), "{}", stderr(&out));
}

#[test]
fn ablate_tables_have_the_expected_rows() {
    let tmp = TempDir::new().unwrap();
    toy_dataset(tmp.path(), "data");
    write_config(tmp.path(), "cfg.json", "data", UNSAMPLED, "runs/abl");
    let out = kgc(tmp.path(), &["ablate", "cfg.json", "--mode", "neg_sweep", "--seeds", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(labels, ["10", "50", "200", "0.5N", "N"]);
    // Twelve entities leave only k = 10, 0.5N and N feasible.
    assert!(table.lines().nth(2).unwrap().contains('-'));
    assert!(tmp.path().join("runs/abl/ablation.json").is_file());

    let out = kgc(tmp.path(), &["ablate", "cfg.json", "--mode", "random_graph", "--seeds", "0", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let labels: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["Original", "Random"]);

    // An MLP base has nothing to swap out.
    let out = kgc(tmp.path(), &["ablate", "cfg.json", "--mode", "mlp_swap"]);
    assert_eq!(code(&out), 2);
    let out = kgc(tmp.path(), &["ablate", "cfg.json", "--mode", "sideways"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_passes_and_catches_an_injected_fault() {
    let tmp = TempDir::new().unwrap();
    let out = kgc(tmp.path(), &["gradcheck", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 8);
    let out = kgc(tmp.path(), &["gradcheck", "--inject-sign-flip", "matmul"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kgc"))
        .args(["gradcheck"])
        .env("KGC_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn presets_parse_and_list_the_expected_members() {
    let presets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    for (name, count) in [("fb15k237", 9), ("wn18rr", 3), ("nell995", 6)] {
        let spec = kgc_core::ensemble::EnsembleSpec::load(presets.join(format!("{name}.ensemble"))).unwrap();
        assert_eq!(spec.members.len(), count, "{name}");
        for member in spec.member_paths(0) {
            let run = member.parent().unwrap().parent().unwrap();
            let slug = run.file_name().unwrap().to_string_lossy().into_owned();
            let cfg = kgc_core::run::RunConfig::load(presets.join(name).join(format!("{slug}.json"))).unwrap();
            cfg.validate().unwrap();
            assert!(cfg.out.ends_with(format!("runs/{name}/{slug}")));
        }
    }
}
