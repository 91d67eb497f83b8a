use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use relpretrain::corpus::{save_corpus, Corpus, Split};
use relpretrain::eval::{
    evaluate_test, fit_recommender, project_2d, run_ablation, sensitivity_sweep, MetricReport,
    Variant,
};
use relpretrain::losses::Stage;
use relpretrain::recsys::{pool_playlist_with, rank_top_k, EmbeddingTable};
use relpretrain::trainer::{initial_checkpoint, run_stage, run_stages, Checkpoint, TrainLog};

use crate::config::{parse_stages, ExperimentConfig, LoadedCorpus};
use crate::manifest::RunDir;
use crate::{Common, ConfigError, Tables};

struct Session {
    cfg: ExperimentConfig,
    data: LoadedCorpus,
    run: RunDir,
}

impl Session {
    fn open(common: &Common, command: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::load(&common.config)?;
        if let Some(d) = &common.out_dir {
            cfg.output_dir = d.clone();
        }
        let data = cfg.load_corpus()?;
        cfg.encoder = cfg.encoder_for(data.corpus.d_audio(), data.corpus.d_text());
        let mut run = RunDir::create(&cfg.output_dir, command, &cfg)?;
        run.input("config", &common.config)?;
        for (role, path) in &data.inputs {
            run.input(role, path)?;
        }
        Ok(Self { cfg, data, run })
    }

    fn corpus(&self) -> &Corpus {
        &self.data.corpus
    }

    /// Writes `diagnostic.json` when training diverged, then passes the
    /// error through.
    fn guard<T>(&self, r: relpretrain::Result<T>) -> Result<T> {
        if let Err(relpretrain::Error::Diverged(snapshot)) = &r {
            let path = self.run.path("diagnostic.json");
            std::fs::write(&path, format!("{snapshot}\n"))
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("diagnostic written to {}", path.display());
        }
        Ok(r?)
    }

    fn write_logs(&mut self, prefix: &str, log: &TrainLog) -> Result<()> {
        self.run.write(
            &format!("{prefix}train_log.tsv"),
            log.without_timing().to_tsv(),
        )?;
        let mut timing = String::from("stage\tepoch\twall_ms\n");
        for e in &log.epochs {
            let _ = writeln!(timing, "{}\t{}\t{}", e.stage, e.epoch, e.wall_ms);
        }
        // Wall-clock times differ between runs, so they stay out of the manifest.
        let path = self.run.path(&format!("{prefix}timing.tsv"));
        std::fs::write(&path, timing).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn write_report(&mut self, stem: &str, report: &MetricReport) -> Result<()> {
        self.run.write(&format!("{stem}.tsv"), report.to_tsv())?;
        self.run.write(&format!("{stem}.txt"), report.to_table())?;
        let mut per_task = String::from("playlist");
        for k in &report.ks {
            let _ = write!(per_task, "\trecall@{k}");
        }
        for k in &report.ks {
            let _ = write!(per_task, "\tndcg@{k}");
        }
        per_task.push('\n');
        for t in &report.per_task {
            per_task.push_str(&t.playlist_id);
            for v in t.recall.iter().chain(&t.ndcg) {
                let _ = write!(per_task, "\t{v}");
            }
            per_task.push('\n');
        }
        self.run.write(&format!("{stem}-per-task.tsv"), per_task)?;
        Ok(())
    }

    fn load_checkpoint(&mut self, path: &Path) -> Result<Checkpoint> {
        if !path.is_file() {
            return Err(
                ConfigError(format!("checkpoint `{}` does not exist", path.display())).into(),
            );
        }
        self.run.input("checkpoint", path)?;
        Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
    }

    fn load_table(&mut self, role: &str, path: &Path, split: Split) -> Result<EmbeddingTable> {
        if !path.is_file() {
            return Err(ConfigError(format!(
                "embedding table `{}` does not exist",
                path.display()
            ))
            .into());
        }
        self.run.input(role, path)?;
        let table =
            EmbeddingTable::load(path).with_context(|| format!("loading {}", path.display()))?;
        let ids = self.corpus().pool(split).track_ids();
        table
            .subset(&ids)
            .with_context(|| format!("{} does not cover the {split} split", path.display()))
    }

    /// Test table, plus the train table when `need_train`.
    fn tables(
        &mut self,
        t: &Tables,
        need_train: bool,
    ) -> Result<(EmbeddingTable, Option<EmbeddingTable>)> {
        let pooling = self.cfg.eval.pooling;
        if let Some(c) = &t.checkpoint {
            let ckpt = self.load_checkpoint(c)?;
            let test = EmbeddingTable::from_encoder(
                &ckpt.encoder,
                self.corpus().test().tracks(),
                pooling,
            )?;
            let train = if need_train {
                Some(EmbeddingTable::from_encoder(
                    &ckpt.encoder,
                    self.corpus().train().tracks(),
                    pooling,
                )?)
            } else {
                None
            };
            return Ok((test, train));
        }
        let Some(test_path) = &t.embeddings else {
            return Err(ConfigError("pass --checkpoint or --embeddings".into()).into());
        };
        let test = self.load_table("embeddings", test_path, Split::Test)?;
        let train = match (&t.train_embeddings, need_train) {
            (Some(p), true) => Some(self.load_table("train_embeddings", p, Split::Train)?),
            (None, true) => {
                return Err(ConfigError("this recommender needs --train-embeddings".into()).into());
            }
            (_, false) => None,
        };
        Ok((test, train))
    }
}

pub fn gen_data(common: &Common) -> Result<()> {
    let mut s = Session::open(common, "gen-data")?;
    if s.cfg.corpus.path.is_some() {
        return Err(ConfigError(
            "gen-data needs a `synthetic` or `interactions` corpus source".into(),
        )
        .into());
    }
    save_corpus(s.corpus(), s.run.path("corpus.jsonl"))?;
    s.run.record("corpus.jsonl")?;
    if let Some(labels) = &s.data.labels {
        let mut rows: Vec<_> = labels.iter().collect();
        rows.sort();
        let mut text = String::from("track\tgenre\n");
        for (id, g) in rows {
            let _ = writeln!(text, "{id}\t{g}");
        }
        s.run.write("genres.tsv", text)?;
    }
    if let Some(stats) = s.data.stats.clone() {
        s.run.note("conversion", stats)?;
    }
    let counts: Vec<_> = Split::ALL
        .iter()
        .map(|&sp| {
            (
                sp.as_str(),
                s.corpus().pool(sp).tracks().len(),
                s.corpus().pool(sp).playlists().len(),
            )
        })
        .collect();
    s.run.note("tracks_playlists_per_split", &counts)?;
    for (split, t, p) in &counts {
        eprintln!("{split}: {t} tracks, {p} playlists");
    }
    s.run.finish()?;
    Ok(())
}

pub fn train(common: &Common, resume: Option<&Path>, stages: Option<Vec<u8>>) -> Result<()> {
    let mut s = Session::open(common, "train")?;
    let start = match resume {
        Some(p) => s.load_checkpoint(p)?,
        None => initial_checkpoint(s.corpus(), &s.cfg.encoder, s.cfg.train.seed)?,
    };
    let list = stages.unwrap_or_else(|| s.cfg.stages.clone());
    let stages = parse_stages(&list, resume.map(|_| start.stage))?;
    s.run.note("start_hash", start.hash()?)?;

    let mut ckpt = start;
    let mut log = TrainLog::default();
    for stage in stages {
        eprintln!("training stage {stage}");
        let r = run_stage(stage, ckpt, s.corpus(), &s.cfg.train);
        let (next, l) = s.guard(r)?;
        if let Some(rec) = l.stages.last() {
            eprintln!(
                "stage {stage}: {} epochs, best epoch {}, end hash {}",
                rec.epochs_run, rec.best_epoch, rec.end_hash
            );
        }
        log.extend(l);
        let name = format!("checkpoint-stage-{}.json", u8::from(stage));
        next.save(s.run.path(&name))?;
        s.run.record(&name)?;
        ckpt = next;
        // Keep the log current so a later divergence leaves the completed stages on disk.
        s.write_logs("", &log)?;
    }
    s.run.finish()?;
    Ok(())
}

pub fn embed(common: &Common, checkpoint: &Path, split: Split) -> Result<()> {
    let mut s = Session::open(common, "embed")?;
    let ckpt = s.load_checkpoint(checkpoint)?;
    let table = EmbeddingTable::from_encoder(
        &ckpt.encoder,
        s.corpus().pool(split).tracks(),
        s.cfg.eval.pooling,
    )?;
    let name = format!("embeddings-{split}.tsv");
    table.save(s.run.path(&name))?;
    s.run.record(&name)?;
    s.run.note("split", split)?;
    s.run.note("rows", table.len())?;
    eprintln!(
        "{} rows written to {}",
        table.len(),
        s.run.path(&name).display()
    );
    s.run.finish()?;
    Ok(())
}

pub fn recommend(
    common: &Common,
    tables: &Tables,
    seeds: &[String],
    k: usize,
    recommender: Option<&str>,
) -> Result<()> {
    let mut s = Session::open(common, "recommend")?;
    let kind = s.cfg.recommender_kind(recommender)?;
    let needs_train = !matches!(kind, relpretrain::eval::RecommenderKind::ItemKnn);
    let (test, train) = s.tables(tables, needs_train)?;
    let train = train.unwrap_or_else(|| test.clone());
    let rec = fit_recommender(kind, s.corpus(), &train, &s.cfg.recommender.params())?;
    let pooled = pool_playlist_with(&test, seeds, s.cfg.eval.pooling)?;
    let q = rec.query_vector(pooled.view())?;
    let scores = rec.candidate_matrix(&test)?.dot(&q);
    let exclude = seeds.iter().cloned().collect();
    let ranked = rank_top_k(test.ids(), scores.view(), k, &exclude)?;
    let mut text = String::from("rank\ttrack\n");
    for (i, id) in ranked.iter().enumerate() {
        let _ = writeln!(text, "{}\t{id}", i + 1);
        println!("{}\t{id}", i + 1);
    }
    s.run.note("seeds", seeds)?;
    s.run.note("recommender", rec.name())?;
    s.run.write("recommendations.tsv", text)?;
    s.run.finish()?;
    Ok(())
}

pub fn eval(common: &Common, tables: &Tables, recommender: Option<&str>) -> Result<()> {
    let mut s = Session::open(common, "eval")?;
    let kind = s.cfg.recommender_kind(recommender)?;
    let needs_train = !matches!(kind, relpretrain::eval::RecommenderKind::ItemKnn);
    let (test, train) = s.tables(tables, needs_train)?;
    let train = train.unwrap_or_else(|| test.clone());
    let rec = fit_recommender(kind, s.corpus(), &train, &s.cfg.recommender.params())?;
    let report = evaluate_test(rec.as_ref(), s.corpus(), &test, &s.cfg.eval)?;
    print!("{}", report.to_table());
    s.run.note("recommender", rec.name())?;
    s.write_report(&format!("metrics-{}", rec.name().to_lowercase()), &report)?;
    s.run.finish()?;
    Ok(())
}

pub fn ablate(common: &Common, variants: Option<Vec<String>>) -> Result<()> {
    let mut s = Session::open(common, "ablate")?;
    let variants = match variants {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<Variant>())
            .collect::<relpretrain::Result<Vec<_>>>()?,
        None => s.cfg.ablation.variants.clone(),
    };
    let r = run_ablation(
        s.corpus(),
        &s.cfg.encoder,
        &s.cfg.train,
        &variants,
        &s.cfg.eval,
    );
    let run = s.guard(r)?;
    print!("{}", run.report.to_table());
    s.run.write("ablation.tsv", run.report.to_tsv())?;
    s.run.write("ablation.txt", run.report.to_table())?;
    s.write_logs("ablation-", &run.log)?;
    s.run.finish()?;
    Ok(())
}

pub fn sweep_j(common: &Common, checkpoint: Option<&Path>, js: Option<Vec<usize>>) -> Result<()> {
    let mut s = Session::open(common, "sweep-j")?;
    let stage2 = match checkpoint {
        Some(p) => {
            let c = s.load_checkpoint(p)?;
            if c.stage != Some(Stage::Two) {
                return Err(
                    ConfigError(format!("{} is not a stage-2 checkpoint", p.display())).into(),
                );
            }
            c
        }
        None => {
            let init = initial_checkpoint(s.corpus(), &s.cfg.encoder, s.cfg.train.seed)?;
            let r = run_stages(init, &[Stage::One, Stage::Two], s.corpus(), &s.cfg.train);
            let (mut ckpts, log) = s.guard(r)?;
            s.write_logs("sweep-", &log)?;
            ckpts.pop().expect("two stages")
        }
    };
    let js = js.unwrap_or_else(|| s.cfg.sweep.js.clone());
    let r = sensitivity_sweep(s.corpus(), &stage2, &s.cfg.train, &js, &s.cfg.eval);
    let report = s.guard(r)?;
    print!("{}", report.to_table());
    s.run.write("sweep.tsv", report.to_tsv())?;
    s.run.write("sweep.txt", report.to_table())?;
    s.run.finish()?;
    Ok(())
}

pub fn project(embeddings: &Path, out_dir: &Path, ids: Option<Vec<String>>) -> Result<()> {
    if !embeddings.is_file() {
        return Err(ConfigError(format!(
            "embedding table `{}` does not exist",
            embeddings.display()
        ))
        .into());
    }
    let table = EmbeddingTable::load(embeddings)
        .with_context(|| format!("loading {}", embeddings.display()))?;
    let ids = ids.unwrap_or_else(|| table.ids().to_vec());
    let mut run = RunDir::create(out_dir, "project", &serde_json::json!({ "ids": &ids }))?;
    run.input("embeddings", embeddings)?;
    let p = project_2d(&table, &ids)?;
    if let Some(w) = &p.warning {
        eprintln!("warning: {w}");
        run.note("warning", w)?;
    }
    run.note("explained_variance", p.explained)?;
    run.write("projection.tsv", p.to_tsv())?;
    run.finish()?;
    Ok(())
}
