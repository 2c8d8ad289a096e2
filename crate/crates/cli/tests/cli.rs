//! End-to-end runs of the four binaries over temp directories.

use std::path::Path;
use std::process::{Command, Output};

use fedpredi_core::corpus::{read_manifest, write_manifest};
use fedpredi_core::learners::load_checkpoint;
use fedpredi_core::partition::AssignmentMatrix;
use fedpredi_core::Real;

fn run(bin: &str, args: &[&str], cwd: &Path) -> Output {
    let path = match bin {
        "corpus" => env!("CARGO_BIN_EXE_corpus"),
        "partition" => env!("CARGO_BIN_EXE_partition"),
        "fed" => env!("CARGO_BIN_EXE_fed"),
        "fedpredi" => env!("CARGO_BIN_EXE_fedpredi"),
        _ => panic!("unknown binary {bin}"),
    };
    Command::new(path)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SPEC_TOML: &str = r#"
class_count = 6
per_class = 60
feature_dim = 8
mean_separation = 2.0
noise_scale = 0.8
seed = 5
"#;

const FED_TOML: &str = r#"
client_count = 4
encoder_dim = 4
mask_patches = 4
mask_ratio = 0.75
seed = 11

[pretrain]
rounds = 2
[pretrain.optimizer]
kind = "adam"
beta1 = 0.9
beta2 = 0.95
epsilon = 1e-8
learning_rate = 0.01
batch_size = 32
local_epochs = 1

[finetune]
rounds = 2
[finetune.optimizer]
kind = "adam"
beta1 = 0.9
beta2 = 0.95
epsilon = 1e-8
learning_rate = 0.02
batch_size = 16
local_epochs = 1
"#;

#[test]
fn corpus_synth_and_split_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), SPEC_TOML).unwrap();

    let out = run(
        "corpus",
        &["synth", "--spec", "spec.toml", "--out", "all.manifest"],
        dir.path(),
    );
    assert_ok(&out);
    let manifest = read_manifest::<Real>(dir.path().join("all.manifest")).unwrap();
    assert_eq!(manifest.len(), 360);

    let out = run(
        "corpus",
        &[
            "split",
            "--in",
            "all.manifest",
            "--test-frac",
            "0.2",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let train = read_manifest::<Real>(dir.path().join("train.manifest")).unwrap();
    let test = read_manifest::<Real>(dir.path().join("test.manifest")).unwrap();
    assert_eq!(train.len(), 288);
    assert_eq!(test.len(), 72);
}

#[test]
fn partition_unlabeled_prints_reference_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "partition",
        &[
            "unlabeled", "--n", "72461", "--k", "4", "--iid", "--seed", "0",
        ],
        dir.path(),
    );
    assert_ok(&out);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "18115 18115 18115 18116"
    );

    let out = run(
        "partition",
        &[
            "unlabeled", "--n", "1000", "--k", "4", "--alpha", "0.2", "--seed", "9",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let total: usize = String::from_utf8_lossy(&out.stdout)
        .split_whitespace()
        .map(|t| t.parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 1000);

    // exactly one of --alpha / --iid
    let out = run(
        "partition",
        &["unlabeled", "--n", "10", "--k", "2", "--seed", "0"],
        dir.path(),
    );
    assert!(!out.status.success());
}

fn write_subsets(dir: &Path) {
    use fedpredi_core::corpus::{generate_synthetic, sample_labeled_subsets, SyntheticSpec};
    let spec = SyntheticSpec::uniform(6, 60, 8, 2.0, 0.8, 5);
    let corpus = generate_synthetic::<Real>(&spec).unwrap();
    let subsets = sample_labeled_subsets(&corpus.manifest, 4, 3, 2).unwrap();
    for (k, subset) in subsets.iter().enumerate() {
        write_manifest(dir.join(format!("subset_{k}.manifest")), subset).unwrap();
    }
}

#[test]
fn partition_predi_writes_matrix_and_clients() {
    let dir = tempfile::tempdir().unwrap();
    let subsets_dir = dir.path().join("subsets");
    std::fs::create_dir(&subsets_dir).unwrap();
    write_subsets(&subsets_dir);

    let out = run(
        "partition",
        &[
            "predi",
            "--rho",
            "2.0",
            "--sigma",
            "1.0",
            "--seed",
            "4",
            "--subsets",
            "subsets",
            "--samples-per-class",
            "3",
            "--out-dir",
            "split",
        ],
        dir.path(),
    );
    assert_ok(&out);

    let matrix_text = std::fs::read_to_string(dir.path().join("split/matrix.txt")).unwrap();
    let matrix = AssignmentMatrix::from_text(&matrix_text).unwrap();
    assert_eq!((matrix.class_count(), matrix.client_count()), (6, 4));
    for k in 0..4 {
        let m = read_manifest::<Real>(dir.path().join(format!("split/client_{k}.manifest")))
            .unwrap();
        assert_eq!(m.len(), 3 * matrix.stats().class_counts[k]);
    }
}

#[test]
fn fed_pretrain_then_finetune_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("fed.toml"), FED_TOML).unwrap();

    // corpus, pools, subsets, matrix, test set
    use fedpredi_core::corpus::{
        build_unlabeled_pool, generate_synthetic, sample_labeled_subsets, train_test_split,
        CorpusManifest, SyntheticSpec,
    };
    use fedpredi_core::partition::{materialize_volume_split, partition_unlabeled, VolumeMode};
    let spec = SyntheticSpec::uniform(6, 60, 8, 2.0, 0.8, 5);
    let corpus = generate_synthetic::<Real>(&spec).unwrap();
    let (train, test) = train_test_split(&corpus.manifest, 0.2, 1).unwrap();
    let empty = CorpusManifest::<Real>::new(Vec::new(), Vec::new(), "none", 8).unwrap();
    let pool = build_unlabeled_pool(&train, &empty).unwrap();
    let split = partition_unlabeled(pool.len(), 4, VolumeMode::Iid, 0).unwrap();

    let pools_dir = dir.path().join("pools");
    std::fs::create_dir(&pools_dir).unwrap();
    for (k, shard) in materialize_volume_split(&pool, &split)
        .unwrap()
        .iter()
        .enumerate()
    {
        write_manifest(pools_dir.join(format!("pool_{k}.manifest")), shard).unwrap();
    }

    let labeled_dir = dir.path().join("labeled");
    std::fs::create_dir(&labeled_dir).unwrap();
    for (k, subset) in sample_labeled_subsets(&train, 4, 3, 2)
        .unwrap()
        .iter()
        .enumerate()
    {
        write_manifest(labeled_dir.join(format!("client_{k}.manifest")), subset).unwrap();
    }
    let matrix = AssignmentMatrix::all_ones(6, 4);
    std::fs::write(dir.path().join("matrix.txt"), matrix.to_text()).unwrap();
    write_manifest(dir.path().join("test.manifest"), &test).unwrap();

    let out = run(
        "fed",
        &[
            "pretrain",
            "--splits",
            "pools",
            "--config",
            "fed.toml",
            "--out",
            "encoder.ckpt",
            "--log",
            "pretrain.log",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let encoder = load_checkpoint(dir.path().join("encoder.ckpt")).unwrap();
    assert!(encoder.layout().spec("encoder").is_some());
    let log = std::fs::read_to_string(dir.path().join("pretrain.log")).unwrap();
    assert_eq!(log.lines().count(), 2 * 4); // rounds x clients
    assert!(log.starts_with("pretrain 1 0 "));

    for prep in ["on", "off"] {
        let out = run(
            "fed",
            &[
                "finetune",
                "--splits",
                "labeled",
                "--matrix",
                "matrix.txt",
                "--init",
                "encoder.ckpt",
                "--config",
                "fed.toml",
                "--prep",
                prep,
                "--out",
                "model.ckpt",
                "--eval",
                "test.manifest",
            ],
            dir.path(),
        );
        assert_ok(&out);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("test macro accuracy"), "{stdout}");
    }
}

const PLAN_TOML: &str = r#"
seeds = [1]
methods = ["baseline", "prep"]

[corpus]
test_fraction = 0.2
split_seed = 2

[corpus.synthetic]
class_count = 6
per_class = 40
feature_dim = 8
mean_separation = 2.0
noise_scale = 0.9
seed = 3

[labeled]
iid = true
prevalence_targets = [2.0]
disparity_targets = [0.0]
samples_per_class = 3

[federation]
client_count = 4
encoder_dim = 4

[federation.pretrain]
rounds = 2
[federation.pretrain.optimizer]
kind = "adam"
beta1 = 0.9
beta2 = 0.95
epsilon = 1e-8
learning_rate = 0.01
batch_size = 32
local_epochs = 1

[federation.finetune]
rounds = 2
[federation.finetune.optimizer]
kind = "adam"
beta1 = 0.9
beta2 = 0.95
epsilon = 1e-8
learning_rate = 0.02
batch_size = 16
local_epochs = 1
"#;

#[test]
fn fedpredi_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plan.toml"), PLAN_TOML).unwrap();

    let out = run(
        "fedpredi",
        &["run", "--plan", "plan.toml", "--out-dir", "run"],
        dir.path(),
    );
    assert_ok(&out);
    let results = std::fs::read_to_string(dir.path().join("run/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 3); // iid + 2 grid methods

    let out = run(
        "fedpredi",
        &["report", "--results", "run/results.jsonl"],
        dir.path(),
    );
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("cell summaries"), "{text}");
    assert!(text.contains("pairs=1"), "{text}");

    let out = run(
        "fedpredi",
        &[
            "report",
            "--results",
            "run/results.jsonl",
            "--format",
            "csv",
        ],
        dir.path(),
    );
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("kind,alpha"));
}

#[test]
fn fedpredi_run_exits_nonzero_when_a_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    // prevalence target larger than the client count: that cell must fail
    let plan = PLAN_TOML.replace("prevalence_targets = [2.0]", "prevalence_targets = [9.0]");
    std::fs::write(dir.path().join("plan.toml"), plan).unwrap();
    let out = run(
        "fedpredi",
        &["run", "--plan", "plan.toml", "--out-dir", "run"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed"));
}

#[test]
fn shipped_plan_file_is_valid() {
    let plan_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../plans/paper_grid.toml");
    let text = std::fs::read_to_string(plan_path).unwrap();
    let plan = fedpredi_core::harness::ExperimentPlan::from_toml(&text).unwrap();
    // the full study shape: IID + 4 skew levels + 5x4 grid x 2 methods, 3 seeds
    assert_eq!(plan.enumerate_cells().len(), (1 + 4 + 5 * 4 * 2) * 3);
}
