//! Flat `section.key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use geoembed_core::data::SyntheticSpec;
use geoembed_core::losses::RecipeDefaults;
use geoembed_core::training::{TrainConfig, ValidationCriterion};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Class counts for train / validation / test.
    pub split: (usize, usize, usize),
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub recipe_defaults: RecipeDefaults,
    pub train: TrainConfig,
    pub max_pairs: usize,
    pub recipes: Vec<String>,
    pub seeds: Vec<u64>,
    pub baseline: String,
    pub re_recipe: String,
    pub constrained_recipe: String,
    pub flip_probs: Vec<f64>,
    pub sizes: Vec<usize>,
    pub margins: Vec<f64>,
    pub out_dir: PathBuf,
    /// Record wall-clock runtimes (makes results.csv non-reproducible).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            split: (24, 8, 8),
            embed_dim: 32,
            hidden: vec![128, 64],
            recipe_defaults: RecipeDefaults::default(),
            train: TrainConfig::default(),
            max_pairs: geoembed_core::eval::DEFAULT_MAX_PAIRS,
            recipes: [
                "TL_S",
                "TL_MTL_S",
                "TL_PDM_S",
                "TL_PDP_S",
                "TL_PDM_FBV_E",
                "TL_PDP_FBV_E",
                "CE_S",
                "TL_CE_S",
                "TL_E",
            ]
            .map(String::from)
            .to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            baseline: "TL_S".into(),
            re_recipe: "TL_PDM_FBV_E".into(),
            constrained_recipe: "TL_PDP_FBV_E".into(),
            flip_probs: vec![0.0, 0.1, 0.3, 0.5],
            sizes: vec![1_000, 10_000, 100_000],
            margins: vec![0.1, 0.25, 0.5, 1.0],
            out_dir: PathBuf::from("out"),
            timing: false,
        }
    }
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|message| CliError::Config {
                line: i + 1,
                message,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
        Self::parse(&text)
    }

    fn synthetic_mut(&mut self) -> std::result::Result<&mut SyntheticSpec, String> {
        if let DataSource::File(_) = self.data {
            self.data = DataSource::Synthetic(SyntheticSpec::default());
        }
        match &mut self.data {
            DataSource::Synthetic(s) => Ok(s),
            DataSource::File(_) => unreachable!(),
        }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("'{v}': {e}"))
        }
        match key {
            "data.source" => match value {
                "synthetic" => {
                    self.synthetic_mut()?;
                }
                "file" => {
                    if !matches!(self.data, DataSource::File(_)) {
                        self.data = DataSource::File(PathBuf::new());
                    }
                }
                other => return Err(format!("unknown data source '{other}'")),
            },
            "data.path" => self.data = DataSource::File(PathBuf::from(value)),
            "data.num_classes" => self.synthetic_mut()?.num_classes = p(value)?,
            "data.examples_per_class" => self.synthetic_mut()?.examples_per_class = p(value)?,
            "data.num_aux" => self.synthetic_mut()?.num_aux = p(value)?,
            "data.latent_dim" => self.synthetic_mut()?.latent_dim = p(value)?,
            "data.input_dim" => self.synthetic_mut()?.input_dim = p(value)?,
            "data.class_spread" => self.synthetic_mut()?.class_spread = p(value)?,
            "data.aux_offset_scale" => self.synthetic_mut()?.aux_offset_scale = p(value)?,
            "data.noise_scale" => self.synthetic_mut()?.noise_scale = p(value)?,
            "data.aux_consistency" => self.synthetic_mut()?.aux_consistency = p(value)?,
            "data.mixing_depth" => self.synthetic_mut()?.mixing_depth = p(value)?,
            "data.seed" => self.synthetic_mut()?.seed = p(value)?,
            "split.train" => self.split.0 = p(value)?,
            "split.val" => self.split.1 = p(value)?,
            "split.test" => self.split.2 = p(value)?,
            "model.embed_dim" => self.embed_dim = p(value)?,
            "model.hidden" => self.hidden = list(value)?,
            "space.spherical_margin" => self.recipe_defaults.spherical_margin = p(value)?,
            "space.euclidean_margin" => self.recipe_defaults.euclidean_margin = p(value)?,
            "space.basis_magnitude" => self.recipe_defaults.basis_magnitude = p(value)?,
            "loss.hinge" => self.recipe_defaults.hinge = p(value)?,
            "train.epochs" => self.train.epochs = p(value)?,
            "train.batches_per_epoch" => self.train.batches_per_epoch = p(value)?,
            "train.batch_size" => self.train.batch_size = p(value)?,
            "train.patience" => self.train.patience = p(value)?,
            "train.learning_rate" => self.train.learning_rate = p(value)?,
            "train.max_retries" => self.train.max_retries = p(value)?,
            "train.val_tuples" => self.train.val_tuples = p(value)?,
            "train.validate_on" => {
                self.train.validate_on = match value {
                    "triplet" => ValidationCriterion::Triplet,
                    "composite" => ValidationCriterion::Composite,
                    other => return Err(format!("unknown validation criterion '{other}'")),
                }
            }
            "eval.max_pairs" => self.max_pairs = p(value)?,
            "experiment.recipes" => self.recipes = list(value)?,
            "experiment.seeds" => self.seeds = list(value)?,
            "experiment.baseline" => self.baseline = value.into(),
            "experiment.re_recipe" => self.re_recipe = value.into(),
            "experiment.constrained_recipe" => self.constrained_recipe = value.into(),
            "experiment.flip_probs" => self.flip_probs = list(value)?,
            "experiment.sizes" => self.sizes = list(value)?,
            "experiment.margins" => self.margins = list(value)?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            "output.timing" => self.timing = p(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Invalid(m.to_string()));
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        } else if let DataSource::File(p) = &self.data {
            if p.as_os_str().is_empty() {
                return bad("data.source = file requires data.path");
            }
        }
        if self.seeds.is_empty() {
            return bad("experiment.seeds is empty");
        }
        if self.embed_dim == 0 {
            return bad("model.embed_dim must be positive");
        }
        if self.flip_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("experiment.flip_probs must lie in [0, 1]");
        }
        if self.sizes.contains(&0) || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("experiment.sizes must be positive and increasing");
        }
        self.train.validate()?;
        Ok(())
    }

    /// Every setting, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        match &self.data {
            DataSource::Synthetic(d) => {
                kv("data.source", "synthetic".into());
                kv("data.num_classes", d.num_classes.to_string());
                kv("data.examples_per_class", d.examples_per_class.to_string());
                kv("data.num_aux", d.num_aux.to_string());
                kv("data.latent_dim", d.latent_dim.to_string());
                kv("data.input_dim", d.input_dim.to_string());
                kv("data.class_spread", d.class_spread.to_string());
                kv("data.aux_offset_scale", d.aux_offset_scale.to_string());
                kv("data.noise_scale", d.noise_scale.to_string());
                kv("data.aux_consistency", d.aux_consistency.to_string());
                kv("data.mixing_depth", d.mixing_depth.to_string());
                kv("data.seed", d.seed.to_string());
            }
            DataSource::File(p) => {
                kv("data.source", "file".into());
                kv("data.path", p.display().to_string());
            }
        }
        kv("split.train", self.split.0.to_string());
        kv("split.val", self.split.1.to_string());
        kv("split.test", self.split.2.to_string());
        kv("model.embed_dim", self.embed_dim.to_string());
        kv("model.hidden", join(&self.hidden));
        kv("space.spherical_margin", self.recipe_defaults.spherical_margin.to_string());
        kv("space.euclidean_margin", self.recipe_defaults.euclidean_margin.to_string());
        kv("space.basis_magnitude", self.recipe_defaults.basis_magnitude.to_string());
        kv("loss.hinge", self.recipe_defaults.hinge.to_string());
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.batches_per_epoch", self.train.batches_per_epoch.to_string());
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.patience", self.train.patience.to_string());
        kv("train.learning_rate", self.train.learning_rate.to_string());
        kv("train.max_retries", self.train.max_retries.to_string());
        kv("train.val_tuples", self.train.val_tuples.to_string());
        kv(
            "train.validate_on",
            match self.train.validate_on {
                ValidationCriterion::Triplet => "triplet",
                ValidationCriterion::Composite => "composite",
            }
            .into(),
        );
        kv("eval.max_pairs", self.max_pairs.to_string());
        kv("experiment.recipes", self.recipes.join(","));
        kv("experiment.seeds", join(&self.seeds));
        kv("experiment.baseline", self.baseline.clone());
        kv("experiment.re_recipe", self.re_recipe.clone());
        kv("experiment.constrained_recipe", self.constrained_recipe.clone());
        kv("experiment.flip_probs", join(&self.flip_probs));
        kv("experiment.sizes", join(&self.sizes));
        kv("experiment.margins", join(&self.margins));
        kv("output.dir", self.out_dir.display().to_string());
        kv("output.timing", self.timing.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# comment\ntrain.patience=3\n\ndata.num_classes = 12 # trailing\nexperiment.seeds=7,8\nmodel.hidden=16,8\n",
        )
        .unwrap();
        assert_eq!(cfg.train.patience, 3);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.hidden, vec![16, 8]);
        match cfg.data {
            DataSource::Synthetic(s) => assert_eq!(s.num_classes, 12),
            _ => panic!(),
        }
    }

    #[test]
    fn reports_line_of_bad_entry() {
        match ExperimentConfig::parse("train.patience=3\nbogus.key=1\n") {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("train.patience\n").is_err());
        assert!(ExperimentConfig::parse("train.patience=x\n").is_err());
        assert!(ExperimentConfig::parse("experiment.sizes=10,5\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.learning_rate = 0.0005;
        cfg.flip_probs = vec![0.0, 0.25];
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        let file = ExperimentConfig::parse("data.path=/tmp/x.txt\n").unwrap();
        assert_eq!(ExperimentConfig::parse(&file.to_text()).unwrap(), file);
    }
}
