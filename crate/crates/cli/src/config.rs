//! TOML experiment configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every section except `output_dir` and `corpus` falls back to the
//! library defaults.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use relpretrain::corpus::{
    convert_interaction_log, generate_synthetic, load_corpus, Corpus, GenreLabels, Interaction,
    LogConversionParams, LogConversionStats, SyntheticParams, Track,
};
use relpretrain::encoder::EncoderConfig;
use relpretrain::eval::{EvalParams, RecommenderKind, RecommenderParams, Variant};
use relpretrain::losses::Stage;
use relpretrain::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub corpus: CorpusSource,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "all_stages")]
    pub stages: Vec<u8>,
    #[serde(default)]
    pub recommender: RecommenderSection,
    #[serde(default)]
    pub eval: EvalParams,
    #[serde(default)]
    pub ablation: AblationSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn all_stages() -> Vec<u8> {
    vec![1, 2, 3]
}

/// Exactly one of the three sources must be set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<InteractionSource>,
}

/// A tab-separated `user  track  timestamp` log plus a JSONL track catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSource {
    pub log: PathBuf,
    pub catalog: PathBuf,
    #[serde(default)]
    pub conversion: LogConversionParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderSection {
    pub name: String,
    pub wmf: relpretrain::recsys::WmfConfig,
    pub dropoutnet: relpretrain::recsys::DropoutNetConfig,
    pub clcrec: relpretrain::recsys::ClcrecConfig,
}

impl Default for RecommenderSection {
    fn default() -> Self {
        let p = RecommenderParams::default();
        Self {
            name: "itemknn".into(),
            wmf: p.wmf,
            dropoutnet: p.dropoutnet,
            clcrec: p.clcrec,
        }
    }
}

impl RecommenderSection {
    pub fn params(&self) -> RecommenderParams {
        RecommenderParams {
            wmf: self.wmf.clone(),
            dropoutnet: self.dropoutnet.clone(),
            clcrec: self.clcrec.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub variants: Vec<Variant>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub js: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            js: vec![1, 3, 5, 10, 15, 20],
        }
    }
}

/// A corpus together with what produced it.
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub labels: Option<GenreLabels>,
    pub stats: Option<LogConversionStats>,
    /// Files read, for the manifest.
    pub inputs: Vec<(String, PathBuf)>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(
                ConfigError(format!("config file `{}` does not exist", path.display())).into(),
            );
        }
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            ConfigError(format!("{}: {}", path.display(), e.to_string().trim_end()))
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.corpus.path {
            fix(p);
        }
        if let Some(i) = &mut self.corpus.interactions {
            fix(&mut i.log);
            fix(&mut i.catalog);
        }
    }

    fn check(&self) -> Result<()> {
        let c = &self.corpus;
        let set = [
            c.path.is_some(),
            c.synthetic.is_some(),
            c.interactions.is_some(),
        ];
        if set.iter().filter(|&&b| b).count() != 1 {
            return Err(ConfigError(
                "[corpus] needs exactly one of `path`, `synthetic` or `interactions`".into(),
            )
            .into());
        }
        let mut paths: Vec<&Path> = Vec::new();
        if let Some(p) = &c.path {
            paths.push(p);
        }
        if let Some(i) = &c.interactions {
            paths.push(&i.log);
            paths.push(&i.catalog);
        }
        for p in paths {
            if !p.is_file() {
                return Err(
                    ConfigError(format!("input file `{}` does not exist", p.display())).into(),
                );
            }
        }
        self.recommender_kind(None)?;
        parse_stages(&self.stages, None)?;
        self.encoder_for(1, 1).validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Recommender named by `flag`, else by the config.
    pub fn recommender_kind(&self, flag: Option<&str>) -> Result<RecommenderKind> {
        let name = flag.unwrap_or(&self.recommender.name);
        Ok(name.parse::<RecommenderKind>()?)
    }

    /// Encoder config with input widths taken from the corpus.
    pub fn encoder_for(&self, d_audio: usize, d_text: usize) -> EncoderConfig {
        EncoderConfig {
            d_audio,
            d_text,
            ..self.encoder.clone()
        }
    }

    pub fn load_corpus(&self) -> Result<LoadedCorpus> {
        if let Some(p) = &self.corpus.path {
            let corpus =
                load_corpus(p).with_context(|| format!("loading corpus {}", p.display()))?;
            return Ok(LoadedCorpus {
                corpus,
                labels: None,
                stats: None,
                inputs: vec![("corpus".into(), p.clone())],
            });
        }
        if let Some(params) = &self.corpus.synthetic {
            let (corpus, labels) = generate_synthetic(params)?;
            return Ok(LoadedCorpus {
                corpus,
                labels: Some(labels),
                stats: None,
                inputs: Vec::new(),
            });
        }
        let src = self.corpus.interactions.as_ref().expect("checked in load");
        let log = read_interaction_log(&src.log)?;
        let catalog = read_catalog(&src.catalog)?;
        let (corpus, stats) = convert_interaction_log(&log, &catalog, &src.conversion)?;
        Ok(LoadedCorpus {
            corpus,
            labels: None,
            stats: Some(stats),
            inputs: vec![
                ("interaction_log".into(), src.log.clone()),
                ("catalog".into(), src.catalog.clone()),
            ],
        })
    }
}

/// Validates a stage list. Without a resume checkpoint it must be a prefix
/// of `[1, 2, 3]`; with one it must continue from the checkpoint's stage.
pub fn parse_stages(stages: &[u8], resumed_from: Option<Option<Stage>>) -> Result<Vec<Stage>> {
    if stages.is_empty() {
        return Err(ConfigError("stage list is empty".into()).into());
    }
    let first = match resumed_from {
        None | Some(None) => 1,
        Some(Some(s)) => u8::from(s) + 1,
    };
    let expected: Vec<u8> = (first..first + stages.len() as u8).collect();
    if stages != expected.as_slice() || expected.last().copied().unwrap_or(0) > 3 {
        return Err(ConfigError(format!(
            "stage list {stages:?} must be consecutive stages starting at {first} and ending by 3"
        ))
        .into());
    }
    Ok(stages
        .iter()
        .map(|&s| Stage::try_from(s).expect("range checked"))
        .collect())
}

/// Parses `user<TAB>track<TAB>timestamp` lines. Blank lines, `#` comments
/// and a `user` header line are skipped.
pub fn read_interaction_log(path: &Path) -> Result<Vec<Interaction>> {
    let file =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("user\t"))
        {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || {
            ConfigError(format!(
                "{}:{}: expected user<TAB>track<TAB>timestamp",
                path.display(),
                n + 1
            ))
        };
        if fields.len() != 3 {
            return Err(bad().into());
        }
        let ts: i64 = fields[2].trim().parse().map_err(|_| bad())?;
        out.push(Interaction::new(fields[0], fields[1], ts));
    }
    Ok(out)
}

/// One JSON track record per line.
pub fn read_catalog(path: &Path) -> Result<Vec<Track>> {
    let file =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let track: Track = serde_json::from_str(&line)
            .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(track);
    }
    Ok(out)
}
