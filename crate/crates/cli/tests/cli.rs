use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relpretrain::corpus::{load_corpus, Split};
use relpretrain::eval::build_tasks;
use relpretrain::recsys::EmbeddingTable;
use relpretrain::trainer::Checkpoint;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relpretrain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL: &str = r#"
stages = [1]
[corpus.synthetic]
n_genres = 4
train_tracks = 160
validation_tracks = 40
test_tracks = 40
train_playlists = 32
validation_playlists = 8
test_playlists = 8
tracks_per_playlist = 10
d_audio = 6
d_text = 6
seed = 7
[encoder]
hidden = [12]
d_embed = 8
queue_capacity = 32
[train]
max_epochs = 2
patience = 1
batch_size = 20
lr = 1e-3
val_seeds = 3
[eval]
q = 3
ks = [5, 10]
"#;

/// Writes `body` as a config whose output directory is `dir/out_name`.
fn config(dir: &Path, out_name: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{out_name}.toml"));
    fs::write(&path, format!("output_dir = \"{out_name}\"\n{body}")).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_is_repeatable() {
    let d = TempDir::new().unwrap();
    let a = config(d.path(), "a", SMALL);
    let b = config(d.path(), "b", SMALL);
    ok(&["gen-data", "--config", s(&a)]);
    ok(&["gen-data", "--config", s(&b)]);
    for f in ["corpus.jsonl", "genres.tsv"] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(d.path().join("a/gen-data.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["corpus"]["synthetic"]["seed"], 7);
    assert!(manifest["outputs"]["corpus.jsonl"]["sha256"].is_string());
}

#[test]
fn config_errors_exit_with_two() {
    let d = TempDir::new().unwrap();

    let missing = d.path().join("missing.toml");
    fs::write(&missing, SMALL).unwrap();
    let out = run(&["gen-data", "--config", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("output_dir"));

    let unknown_key = config(d.path(), "u", &format!("{SMALL}bogus = 1\n"));
    assert_eq!(
        run(&["gen-data", "--config", s(&unknown_key)])
            .status
            .code(),
        Some(2)
    );

    let no_corpus = config(d.path(), "n", "[corpus]\npath = \"nope.jsonl\"\n");
    let out = run(&["train", "--config", s(&no_corpus)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));

    let cfg = config(d.path(), "r", SMALL);
    ok(&["train", "--config", s(&cfg)]);
    let ckpt = d.path().join("r/checkpoint-stage-1.json");
    let out = run(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ckpt),
        "--recommender",
        "knn",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("knn"));

    let bad_stages = config(
        d.path(),
        "st",
        &SMALL.replace("stages = [1]", "stages = [2, 3]"),
    );
    assert_eq!(
        run(&["train", "--config", s(&bad_stages)]).status.code(),
        Some(2)
    );

    assert_eq!(
        run(&["train", "--config", s(&d.path().join("absent.toml"))])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn interaction_log_source_yields_a_valid_corpus() {
    let d = TempDir::new().unwrap();
    let mut catalog = String::new();
    for i in 0..60 {
        let f = i as f64;
        catalog.push_str(&format!(
            "{{\"id\":\"t{i:02}\",\"audio_feat\":[{},{}],\"text_feat\":[{},{},{}]}}\n",
            f.sin(),
            f.cos(),
            f * 0.1,
            1.0,
            -f * 0.05
        ));
    }
    fs::write(d.path().join("catalog.jsonl"), catalog).unwrap();
    let mut log = String::from("user\ttrack\ttimestamp\n");
    for u in 0..30 {
        for j in 0..8 {
            log.push_str(&format!(
                "u{u:02}\tt{:02}\t{}\n",
                (u * 7 + j * 3) % 60,
                u * 100 + j
            ));
        }
    }
    fs::write(d.path().join("log.tsv"), log).unwrap();
    let cfg = config(
        d.path(),
        "out",
        "[corpus.interactions]\nlog = \"log.tsv\"\ncatalog = \"catalog.jsonl\"\n\
         [corpus.interactions.conversion]\nmin_len = 2\nmax_len = 20\nseed = 3\n",
    );
    ok(&["gen-data", "--config", s(&cfg)]);

    let corpus = load_corpus(d.path().join("out/corpus.jsonl")).unwrap();
    let mut seen = HashSet::new();
    for split in Split::ALL {
        let pool = corpus.pool(split);
        let ids: HashSet<String> = pool.track_ids().into_iter().collect();
        for p in pool.playlists() {
            assert!(!p.is_empty());
            assert!(
                p.track_ids.iter().all(|t| ids.contains(t)),
                "{split} playlist leaves its pool"
            );
        }
        for t in pool.tracks() {
            assert!(seen.insert(t.id.clone()), "track {} in two splits", t.id);
            assert_eq!((t.audio_feat.len(), t.text_feat.len()), (2, 3));
        }
    }
    assert!(!corpus.train().playlists().is_empty());
    let manifest = fs::read_to_string(d.path().join("out/gen-data.manifest.json")).unwrap();
    assert!(manifest.contains("\"interaction_log\"") && manifest.contains("\"conversion\""));
}

#[test]
fn train_embed_and_eval_are_deterministic() {
    let d = TempDir::new().unwrap();
    let a = config(d.path(), "a", SMALL);
    let b = config(d.path(), "b", SMALL);
    for c in [&a, &b] {
        ok(&["train", "--config", s(c)]);
        let ckpt = c.with_extension("").join("checkpoint-stage-1.json");
        ok(&[
            "embed",
            "--config",
            s(c),
            "--checkpoint",
            s(&ckpt),
            "--split",
            "test",
        ]);
        ok(&[
            "embed",
            "--config",
            s(c),
            "--checkpoint",
            s(&ckpt),
            "--split",
            "train",
        ]);
        ok(&["eval", "--config", s(c), "--checkpoint", s(&ckpt)]);
    }
    let ckpt = Checkpoint::load(d.path().join("a/checkpoint-stage-1.json")).unwrap();
    assert_eq!(ckpt.stage.map(u8::from), Some(1));
    for f in [
        "checkpoint-stage-1.json",
        "train_log.tsv",
        "embeddings-test.tsv",
        "embeddings-train.tsv",
        "metrics-itemknn.tsv",
        "metrics-itemknn.txt",
        "metrics-itemknn-per-task.tsv",
    ] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
    let corpus = load_corpus_from_config(d.path(), "a");
    let test = EmbeddingTable::load(d.path().join("a/embeddings-test.tsv")).unwrap();
    let train = EmbeddingTable::load(d.path().join("a/embeddings-train.tsv")).unwrap();
    assert_eq!(test.len(), corpus.test().tracks().len());
    assert_eq!(train.len(), corpus.train().tracks().len());
    let test_ids: HashSet<_> = test.ids().iter().collect();
    assert!(train.ids().iter().all(|id| !test_ids.contains(id)));
}

fn load_corpus_from_config(dir: &Path, out: &str) -> relpretrain::corpus::Corpus {
    let cfg = config(dir, &format!("{out}-gen"), SMALL);
    ok(&["gen-data", "--config", s(&cfg)]);
    load_corpus(dir.join(format!("{out}-gen/corpus.jsonl"))).unwrap()
}

#[test]
fn resumed_stage_three_matches_a_full_run() {
    let d = TempDir::new().unwrap();
    let full = config(
        d.path(),
        "full",
        &SMALL.replace("stages = [1]", "stages = [1, 2, 3]"),
    );
    let head = config(
        d.path(),
        "head",
        &SMALL.replace("stages = [1]", "stages = [1, 2]"),
    );
    let tail = config(d.path(), "tail", SMALL);
    ok(&["train", "--config", s(&full)]);
    ok(&["train", "--config", s(&head)]);
    let stage2 = d.path().join("head/checkpoint-stage-2.json");
    ok(&[
        "train",
        "--config",
        s(&tail),
        "--resume",
        s(&stage2),
        "--stages",
        "3",
    ]);
    assert_eq!(
        fs::read(d.path().join("full/checkpoint-stage-3.json")).unwrap(),
        fs::read(d.path().join("tail/checkpoint-stage-3.json")).unwrap()
    );
    let stage3_rows = |name: &str| -> Vec<String> {
        fs::read_to_string(d.path().join(name).join("train_log.tsv"))
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("3\t") || l.starts_with("# stage 3"))
            .map(String::from)
            .collect()
    };
    assert!(!stage3_rows("tail").is_empty());
    assert_eq!(stage3_rows("full"), stage3_rows("tail"));

    // A stage-1 checkpoint cannot feed stage 3.
    let stage1 = d.path().join("head/checkpoint-stage-1.json");
    let out = run(&[
        "train",
        "--config",
        s(&tail),
        "--resume",
        s(&stage1),
        "--stages",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three_with_a_diagnostic() {
    let d = TempDir::new().unwrap();
    let cfg = config(
        d.path(),
        "nan",
        &SMALL.replace("lr = 1e-3", "lr = 1e-3\ntau = 1e-310"),
    );
    let out = run(&["train", "--config", s(&cfg)]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let diag: serde_json::Value =
        serde_json::from_slice(&fs::read(d.path().join("nan/diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["stage"], 1);
    assert!(diag["reason"].is_string());
}

/// Embeddings that are one-hot in the genre; scored against a brute-force
/// re-implementation of the ranking on the generated instance.
#[test]
fn oracle_embeddings_reach_near_perfect_recall() {
    let d = TempDir::new().unwrap();
    let body = SMALL
        .replace("test_tracks = 40", "test_tracks = 48")
        .replace("[corpus.synthetic]", "[corpus.synthetic]\npurity = 1.0")
        .replace("q = 3", "q = 2");
    let cfg = config(d.path(), "o", &body);
    ok(&["gen-data", "--config", s(&cfg)]);
    let corpus = load_corpus(d.path().join("o/corpus.jsonl")).unwrap();
    let genres: BTreeMap<String, usize> = fs::read_to_string(d.path().join("o/genres.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (id, g) = l.split_once('\t').unwrap();
            (id.to_string(), g.parse().unwrap())
        })
        .collect();
    let mut table = format!("{} 4\n", corpus.test().tracks().len());
    for t in corpus.test().tracks() {
        let g = genres[&t.id];
        let row: Vec<String> = (0..4)
            .map(|i| if i == g { "1" } else { "0" }.to_string())
            .collect();
        table.push_str(&format!("{}\t{}\n", t.id, row.join("\t")));
    }
    let table_path = d.path().join("oracle.tsv");
    fs::write(&table_path, table).unwrap();
    ok(&["eval", "--config", s(&cfg), "--embeddings", s(&table_path)]);

    let tasks = build_tasks(corpus.test(), 2, 1).unwrap().tasks;
    let mut total = 0.0;
    for task in &tasks {
        let home = genres[&task.seeds[0]];
        let mut cands: Vec<(bool, &String)> = corpus
            .test()
            .tracks()
            .iter()
            .filter(|t| !task.seeds.contains(&t.id))
            .map(|t| (genres[&t.id] != home, &t.id))
            .collect();
        cands.sort();
        let hits = cands[..10]
            .iter()
            .filter(|(_, id)| task.relevant.contains(id))
            .count();
        total += hits as f64 / task.relevant.len() as f64;
    }
    let expected = total / tasks.len() as f64;
    assert!(expected >= 0.9, "oracle bound {expected}");

    let tsv = fs::read_to_string(d.path().join("o/metrics-itemknn.tsv")).unwrap();
    let got: f64 = tsv
        .lines()
        .find_map(|l| l.strip_prefix("recall\t10\t"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn checkpoint_generalizes_to_another_corpus() {
    let d = TempDir::new().unwrap();
    let src = config(d.path(), "src", SMALL);
    let other = config(d.path(), "other", &SMALL.replace("seed = 7", "seed = 8"));
    ok(&["train", "--config", s(&src)]);
    let ckpt = d.path().join("src/checkpoint-stage-1.json");
    let out = ok(&["eval", "--config", s(&other), "--checkpoint", s(&ckpt)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Recall"));
    assert!(d.path().join("other/metrics-itemknn.tsv").is_file());
}

#[test]
fn single_variant_ablation_equals_eval() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "x", SMALL);
    ok(&["train", "--config", s(&cfg)]);
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&d.path().join("x/checkpoint-stage-1.json")),
    ]);
    ok(&["ablate", "--config", s(&cfg), "--variants", "stage-1"]);
    let eval: Vec<String> = fs::read_to_string(d.path().join("x/metrics-itemknn.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    let ablation = fs::read_to_string(d.path().join("x/ablation.tsv")).unwrap();
    let rows: Vec<&str> = ablation.lines().skip(1).collect();
    assert_eq!(rows.len(), eval.len());
    for line in &eval {
        assert!(
            rows.contains(&format!("stage-1\t{line}").as_str()),
            "missing {line}"
        );
    }
}

#[test]
fn recommend_sweep_and_project_write_outputs() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "w", SMALL);
    ok(&["train", "--config", s(&cfg), "--stages", "1,2"]);
    let stage2 = d.path().join("w/checkpoint-stage-2.json");
    ok(&["embed", "--config", s(&cfg), "--checkpoint", s(&stage2)]);
    let table = d.path().join("w/embeddings-test.tsv");
    let out = ok(&[
        "recommend",
        "--config",
        s(&cfg),
        "--embeddings",
        s(&table),
        "--seeds",
        "te-s00000,te-s00004",
        "-k",
        "5",
    ]);
    let listed = String::from_utf8_lossy(&out.stdout).lines().count();
    assert_eq!(listed, 5);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("te-s00000"));

    ok(&[
        "sweep-j",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&stage2),
        "--js",
        "2,1",
    ]);
    let sweep = fs::read_to_string(d.path().join("w/sweep.tsv")).unwrap();
    assert!(sweep.lines().nth(1).unwrap().starts_with("1\t"));

    ok(&[
        "project",
        "--embeddings",
        s(&table),
        "--out-dir",
        s(&d.path().join("p")),
    ]);
    let proj = fs::read_to_string(d.path().join("p/projection.tsv")).unwrap();
    assert_eq!(proj.lines().count(), 41);
    assert!(d.path().join("p/project.manifest.json").is_file());

    let stage1 = d.path().join("w/checkpoint-stage-1.json");
    let out = run(&["sweep-j", "--config", s(&cfg), "--checkpoint", s(&stage1)]);
    assert_eq!(out.status.code(), Some(2));
}
