use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::FitParams;
use crate::labeler::ProgressionWindow;
use crate::merger::MergePolicy;
use crate::report2vector::{HeaderTable, Lexicon, PatternSet, TextResources};
use crate::resources;
use crate::schema::FeatureSchema;
use crate::scores::DEFAULT_THRESHOLD;
use crate::structured2vector::{CodeMap, StructuredOptions};
use crate::{Date, Error, Result};

/// Resource files; any left unset uses the embedded default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    pub schema: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub code_map: Option<PathBuf>,
    pub headers: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSettings {
    /// Candidates whose first AF code predates this are dropped.
    pub study_start: Option<Date>,
    /// Days around the onset in which a report must confirm AF.
    pub validation_window_days: i64,
}

impl Default for CohortSettings {
    fn default() -> Self {
        CohortSettings {
            study_start: None,
            validation_window_days: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuredSettings {
    pub lab_lookback_days: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSettings {
    pub threshold: u32,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        ScoreSettings {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub train_fraction: f64,
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        let fit = FitParams::default();
        BaselineSettings {
            train_fraction: 0.73,
            l2: fit.l2,
            epochs: fit.epochs,
            learning_rate: fit.learning_rate,
        }
    }
}

/// Everything a pipeline run depends on. Loaded from TOML; relative paths
/// resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input corpus: `reports.jsonl` plus the coded tables.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Worker threads for per-patient work; all cores when unset.
    pub jobs: Option<usize>,
    /// Seeds the train/test shuffle and the weight initialization.
    pub seed: u64,
    pub resources: ResourcePaths,
    pub cohort: CohortSettings,
    pub structured: StructuredSettings,
    pub merge: MergePolicy,
    pub window: ProgressionWindow,
    pub scores: ScoreSettings,
    pub baseline: BaselineSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            jobs: None,
            seed: 42,
            resources: ResourcePaths::default(),
            cohort: CohortSettings::default(),
            structured: StructuredSettings::default(),
            merge: MergePolicy::default(),
            window: ProgressionWindow::default(),
            scores: ScoreSettings::default(),
            baseline: BaselineSettings::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
            Error::parse("pipeline config", line, e.message())
        })
    }

    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.data_dir);
        resolve(base, &mut self.out_dir);
        let r = &mut self.resources;
        for p in [&mut r.schema, &mut r.lexicon, &mut r.patterns, &mut r.code_map, &mut r.headers]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.merge.validate()?;
        self.fit_params().validate()?;
        let f = self.baseline.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!("train_fraction must be in (0, 1), got {f}")));
        }
        if self.cohort.validation_window_days < 0 {
            return Err(Error::InvalidConfig("validation_window_days must be >= 0".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be positive".into()));
        }
        for (_, p) in self.resource_files() {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::MissingFile(p.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn fit_params(&self) -> FitParams {
        FitParams {
            l2: self.baseline.l2,
            epochs: self.baseline.epochs,
            learning_rate: self.baseline.learning_rate,
            seed: self.seed,
        }
    }

    pub fn structured_options(&self) -> StructuredOptions {
        StructuredOptions {
            lab_lookback_days: self.structured.lab_lookback_days,
        }
    }

    fn resource_files(&self) -> [(&'static str, Option<&PathBuf>); 5] {
        let r = &self.resources;
        [
            ("schema", r.schema.as_ref()),
            ("lexicon", r.lexicon.as_ref()),
            ("patterns", r.patterns.as_ref()),
            ("code_map", r.code_map.as_ref()),
            ("headers", r.headers.as_ref()),
        ]
    }

    /// Loads every resource and derives the config hash.
    pub fn load_resources(&self) -> Result<LoadedResources> {
        let read = |p: Option<&PathBuf>, embedded: &str| -> Result<String> {
            match p {
                Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e)),
                None => Ok(embedded.to_string()),
            }
        };
        let texts = [
            read(self.resources.schema.as_ref(), resources::SCHEMA)?,
            read(self.resources.lexicon.as_ref(), resources::LEXICON)?,
            read(self.resources.patterns.as_ref(), resources::PATTERNS)?,
            read(self.resources.code_map.as_ref(), resources::CODE_MAP)?,
            read(self.resources.headers.as_ref(), resources::HEADERS)?,
        ];
        let schema = FeatureSchema::parse(&texts[0])?;
        let text = TextResources {
            lexicon: Lexicon::parse(&texts[1], &schema)?,
            patterns: PatternSet::parse(&texts[2], &schema)?,
            headers: HeaderTable::parse(&texts[4])?,
        };
        let code_map = CodeMap::parse(&texts[3], &schema)?;

        let digests = self
            .resource_files()
            .iter()
            .zip(&texts)
            .map(|((name, _), t)| (name.to_string(), sha256_hex(t.as_bytes())))
            .collect();
        let hashed = HashedConfig {
            seed: self.seed,
            resources: digests,
            cohort: self.cohort,
            structured: self.structured,
            merge: self.merge,
            window: self.window,
            scores: self.scores,
            baseline: self.baseline,
        };
        let canonical = serde_json::to_string_pretty(&hashed).expect("config serializes") + "\n";
        Ok(LoadedResources {
            schema,
            text,
            code_map,
            config_hash: sha256_hex(canonical.as_bytes()),
            canonical_config: canonical,
        })
    }
}

/// The part of the config that determines artifact contents: every
/// setting except locations and thread count, with resources identified by
/// content digest.
#[derive(Serialize)]
struct HashedConfig {
    seed: u64,
    resources: std::collections::BTreeMap<String, String>,
    cohort: CohortSettings,
    structured: StructuredSettings,
    merge: MergePolicy,
    window: ProgressionWindow,
    scores: ScoreSettings,
    baseline: BaselineSettings,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct LoadedResources {
    pub schema: FeatureSchema,
    pub text: TextResources,
    pub code_map: CodeMap,
    pub config_hash: String,
    /// The JSON whose SHA-256 is `config_hash`.
    pub canonical_config: String,
}
