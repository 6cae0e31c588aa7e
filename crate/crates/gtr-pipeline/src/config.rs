//! Pipeline configuration: a flat `key = value` file holding every knob of
//! the two-stage run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use gtr_core::losses::NegativeStrategy;

use crate::error::PipelineError;

/// Which attributes-to-text route generation takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A2tMode {
    Template,
    Lm,
}

impl std::str::FromStr for A2tMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "template" => Ok(A2tMode::Template),
            "lm" => Ok(A2tMode::Lm),
            other => Err(format!("unknown a2t mode {other:?}, expected template or lm")),
        }
    }
}

/// A training objective selectable in `loss_set`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LossKind {
    Itc,
    Itm,
    Sdm,
    Irr,
    Id,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "itc" => Ok(LossKind::Itc),
            "itm" => Ok(LossKind::Itm),
            "sdm" => Ok(LossKind::Sdm),
            "irr" => Ok(LossKind::Irr),
            "id" => Ok(LossKind::Id),
            other => Err(format!(
                "unknown loss {other:?}, expected itc, itm, sdm, irr or id"
            )),
        }
    }
}

/// Every knob of a run. Paths are optional until the stage that needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub vqa_backend: String,
    pub a2t_mode: A2tMode,
    pub beta: f64,
    pub temperature_init: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub embedding_dim: usize,
    pub seed: u64,
    pub loss_set: BTreeSet<LossKind>,
    pub eval_split: String,
    pub itm_negative_strategy: NegativeStrategy,
    pub mock_flip_probability: f64,
    pub mock_confidence_correct: (f64, f64),
    pub mock_confidence_flipped: (f64, f64),
    pub manifest_path: Option<PathBuf>,
    pub captions_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vqa_backend: "mock".to_string(),
            a2t_mode: A2tMode::Template,
            beta: 0.8,
            temperature_init: 0.07,
            batch_size: 25,
            epochs: 50,
            learning_rate: 1.0,
            embedding_dim: 32,
            seed: 0,
            loss_set: BTreeSet::from([LossKind::Itc]),
            eval_split: "test".to_string(),
            itm_negative_strategy: NegativeStrategy::Uniform,
            mock_flip_probability: 0.0,
            mock_confidence_correct: (1.0, 1.0),
            mock_confidence_flipped: (1.0, 1.0),
            manifest_path: None,
            captions_path: None,
            model_path: None,
            report_path: None,
        }
    }
}

fn parse_interval(value: &str, key: &str) -> Result<(f64, f64), PipelineError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(PipelineError::Config(format!(
            "{key} wants \"lo, hi\", got {value:?}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: bad number {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: bad number {:?}", parts[1])))?;
    if !(lo > 0.0 && hi <= 1.0 && lo <= hi) {
        return Err(PipelineError::Config(format!(
            "{key}: interval ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
        )));
    }
    Ok((lo, hi))
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let content = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut config = Self::parse(&content)?;
        // Relative paths resolve against the config file's directory.
        if let Some(base) = path.parent() {
            for p in [
                &mut config.manifest_path,
                &mut config.captions_path,
                &mut config.model_path,
                &mut config.report_path,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn parse(content: &str) -> Result<Self, PipelineError> {
        let mut config = PipelineConfig::default();
        for (index, raw_line) in content.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", index + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |msg: String| PipelineError::Config(format!("{key}: {msg}"));
            match key {
                "vqa_backend" => config.vqa_backend = value.to_string(),
                "a2t_mode" => config.a2t_mode = value.parse().map_err(bad)?,
                "beta" => {
                    config.beta = value.parse().map_err(|e| bad(format!("{e}")))?;
                    if !(config.beta.is_finite() && config.beta >= 0.0) {
                        return Err(bad(format!("beta {} must be >= 0", config.beta)));
                    }
                }
                "temperature_init" => {
                    config.temperature_init = value.parse().map_err(|e| bad(format!("{e}")))?;
                    if !(config.temperature_init > 0.0) {
                        return Err(bad("temperature must be positive".to_string()));
                    }
                }
                "batch_size" => config.batch_size = value.parse().map_err(|e| bad(format!("{e}")))?,
                "epochs" => config.epochs = value.parse().map_err(|e| bad(format!("{e}")))?,
                "learning_rate" => {
                    config.learning_rate = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "embedding_dim" => {
                    config.embedding_dim = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "seed" => config.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "loss_set" => {
                    let mut set = BTreeSet::new();
                    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                        set.insert(part.parse::<LossKind>().map_err(bad)?);
                    }
                    if set.is_empty() {
                        return Err(bad("loss_set must not be empty".to_string()));
                    }
                    config.loss_set = set;
                }
                "eval_split" => config.eval_split = value.to_string(),
                "itm_negative_strategy" => {
                    config.itm_negative_strategy = match value {
                        "uniform" => NegativeStrategy::Uniform,
                        "hard" => NegativeStrategy::Hard,
                        other => return Err(bad(format!("unknown strategy {other:?}"))),
                    }
                }
                "mock_flip_probability" => {
                    config.mock_flip_probability =
                        value.parse().map_err(|e| bad(format!("{e}")))?;
                    if !(0.0..=1.0).contains(&config.mock_flip_probability) {
                        return Err(bad("flip probability must be in [0, 1]".to_string()));
                    }
                }
                "mock_confidence_correct" => {
                    config.mock_confidence_correct = parse_interval(value, key)?
                }
                "mock_confidence_flipped" => {
                    config.mock_confidence_flipped = parse_interval(value, key)?
                }
                "manifest_path" => config.manifest_path = Some(PathBuf::from(value)),
                "captions_path" => config.captions_path = Some(PathBuf::from(value)),
                "model_path" => config.model_path = Some(PathBuf::from(value)),
                "report_path" => config.report_path = Some(PathBuf::from(value)),
                other => {
                    return Err(PipelineError::Config(format!("unknown key {other:?}")));
                }
            }
        }
        if config.batch_size == 0 {
            return Err(PipelineError::Config("batch_size must be >= 1".to_string()));
        }
        if config.embedding_dim == 0 {
            return Err(PipelineError::Config("embedding_dim must be >= 1".to_string()));
        }
        Ok(config)
    }

    pub fn manifest_path(&self) -> Result<&Path, PipelineError> {
        self.manifest_path
            .as_deref()
            .ok_or_else(|| PipelineError::Config("manifest_path is not set".to_string()))
    }

    pub fn captions_path(&self) -> Result<&Path, PipelineError> {
        self.captions_path
            .as_deref()
            .ok_or_else(|| PipelineError::Config("captions_path is not set".to_string()))
    }

    pub fn model_path(&self) -> Result<&Path, PipelineError> {
        self.model_path
            .as_deref()
            .ok_or_else(|| PipelineError::Config("model_path is not set".to_string()))
    }

    pub fn report_path(&self) -> Result<&Path, PipelineError> {
        self.report_path
            .as_deref()
            .ok_or_else(|| PipelineError::Config("report_path is not set".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
# comment
vqa_backend = mock
a2t_mode = lm
beta = 0.5
temperature_init = 0.05
batch_size = 16
epochs = 10
learning_rate = 0.2
embedding_dim = 24
seed = 42
loss_set = itc, itm
eval_split = val
mock_flip_probability = 0.3
mock_confidence_correct = 0.8, 1.0
mock_confidence_flipped = 0.2, 0.6
manifest_path = data/m.jsonl
captions_path = out/c.jsonl
model_path = out/model.json
report_path = out/report.json
";
        let config = PipelineConfig::parse(text).unwrap();
        assert_eq!(config.a2t_mode, A2tMode::Lm);
        assert_eq!(config.beta, 0.5);
        assert_eq!(config.seed, 42);
        assert_eq!(
            config.loss_set,
            BTreeSet::from([LossKind::Itc, LossKind::Itm])
        );
        assert_eq!(config.mock_confidence_flipped, (0.2, 0.6));
    }

    #[test]
    fn defaults_match_the_published_values() {
        let config = PipelineConfig::default();
        assert_eq!(config.beta, 0.8);
        assert_eq!(config.temperature_init, 0.07);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            PipelineConfig::parse("betta = 0.8"),
            Err(PipelineError::Config(_))
        ));
    }

    #[test]
    fn negative_beta_is_rejected() {
        assert!(PipelineConfig::parse("beta = -1").is_err());
    }

    #[test]
    fn empty_loss_set_is_rejected() {
        assert!(PipelineConfig::parse("loss_set = ").is_err());
    }
}
