//! Labelled feature datasets: synthetic generation, class-disjoint splits,
//! auxiliary-label shuffling/corruption, and the plain-text feature format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{self, Mat};
use crate::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    /// One-shot class (identity).
    pub class_id: usize,
    /// Auxiliary label in `[0, num_aux)`.
    pub aux_label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    num_classes: usize,
    num_aux: usize,
}

impl Dataset {
    /// Checks label ranges, finiteness, a common feature dimension, and that
    /// every class that appears has at least two examples.
    pub fn new(examples: Vec<Example>, num_classes: usize, num_aux: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("dataset has no examples".into()));
        }
        if num_aux == 0 {
            return Err(Error::InvalidArgument("num_aux must be positive".into()));
        }
        let dim = examples[0].features.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension is zero".into()));
        }
        let mut counts = BTreeMap::new();
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "example {i} has dimension {}, expected {dim}",
                    ex.features.len()
                )));
            }
            if !math::all_finite(&ex.features) {
                return Err(Error::NonFinite {
                    context: format!("features of example {i}"),
                });
            }
            if ex.class_id >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "example {i}: class {} out of range [0, {num_classes})",
                    ex.class_id
                )));
            }
            if ex.aux_label >= num_aux {
                return Err(Error::InvalidArgument(format!(
                    "example {i}: aux label {} out of range [0, {num_aux})",
                    ex.aux_label
                )));
            }
            *counts.entry(ex.class_id).or_insert(0usize) += 1;
        }
        if let Some((c, _)) = counts.iter().find(|(_, &n)| n < 2) {
            return Err(Error::InvalidArgument(format!(
                "class {c} has a single example; verification pairs need at least two"
            )));
        }
        Ok(Self {
            examples,
            num_classes,
            num_aux,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_aux(&self) -> usize {
        self.num_aux
    }

    pub fn input_dim(&self) -> usize {
        self.examples[0].features.len()
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.examples[i].class_id
    }

    pub fn aux_of(&self, i: usize) -> usize {
        self.examples[i].aux_label
    }

    /// Distinct class ids present, ascending.
    pub fn class_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.examples.iter().map(|e| e.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Example indices grouped by class id.
    pub fn indices_by_class(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.examples.iter().enumerate() {
            map.entry(e.class_id).or_default().push(i);
        }
        map
    }

    /// Per-class histogram of auxiliary labels.
    pub fn aux_histograms(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &self.examples {
            map.entry(e.class_id).or_insert_with(|| vec![0; self.num_aux])[e.aux_label] += 1;
        }
        map
    }

    fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            examples,
            num_classes: self.num_classes,
            num_aux: self.num_aux,
        }
    }

    /// Keep only examples whose class is in `classes`.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let keep: std::collections::BTreeSet<usize> = classes.iter().copied().collect();
        let examples = self
            .examples
            .iter()
            .filter(|e| keep.contains(&e.class_id))
            .cloned()
            .collect();
        Dataset::new(examples, self.num_classes, self.num_aux)
    }
}

/// Parameters of the synthetic generator.
///
/// Each example is `x = M(μ_c + δ_e) + ε`: a per-class latent centre, a
/// per-aux-label latent offset shared by every class, a fixed nonlinear
/// mixing map and isotropic noise. With `aux_consistency < 1` the stored
/// label differs from the label that generated the features.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub examples_per_class: usize,
    pub num_aux: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub class_spread: f64,
    pub aux_offset_scale: f64,
    pub noise_scale: f64,
    pub aux_consistency: f64,
    pub mixing_depth: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 40,
            examples_per_class: 20,
            num_aux: 4,
            latent_dim: 8,
            input_dim: 32,
            class_spread: 3.0,
            aux_offset_scale: 1.0,
            noise_scale: 0.3,
            aux_consistency: 1.0,
            mixing_depth: 1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_classes == 0 || self.num_aux == 0 || self.latent_dim == 0 || self.input_dim == 0 {
            return bad("class, aux and dimension counts must be positive".into());
        }
        if self.examples_per_class < 2 {
            return bad(format!(
                "examples_per_class must be >= 2, got {}",
                self.examples_per_class
            ));
        }
        // noise may be exactly zero (noise-free limit); spreads must be positive
        if !(self.class_spread > 0.0) || !(self.aux_offset_scale > 0.0) || !(self.noise_scale >= 0.0) {
            return bad("class_spread and aux_offset_scale must be > 0, noise_scale >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.aux_consistency) {
            return bad(format!("aux_consistency must be in [0,1], got {}", self.aux_consistency));
        }
        if self.mixing_depth == 0 && self.input_dim != self.latent_dim {
            return bad("mixing_depth = 0 requires input_dim == latent_dim".into());
        }
        Ok(())
    }
}

/// Fixed random `tanh` layers; pre-activations have roughly unit variance.
struct MixingMap {
    layers: Vec<Mat>,
}

impl MixingMap {
    fn new(spec: &SyntheticSpec, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(spec.mixing_depth);
        let mut fan_in = spec.latent_dim;
        let mut input_std = (spec.class_spread.powi(2) + spec.aux_offset_scale.powi(2)).sqrt();
        for _ in 0..spec.mixing_depth {
            let scale = 1.0 / ((fan_in as f64).sqrt() * input_std);
            let data = (0..spec.input_dim * fan_in).map(|_| scale * rng.normal()).collect();
            layers.push(Mat::from_vec(spec.input_dim, fan_in, data).expect("shape"));
            fan_in = spec.input_dim;
            // std of tanh(N(0, 1))
            input_std = 0.63;
        }
        Self { layers }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut h = z.to_vec();
        for w in &self.layers {
            h = w.matvec(&h).expect("shape").into_iter().map(f64::tanh).collect();
        }
        h
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let mut structure = root.derive(0);
    let mut labels = root.derive(1);
    let mut noise = root.derive(2);

    let mixing = MixingMap::new(spec, &mut structure);
    let offsets: Vec<Vec<f64>> = (0..spec.num_aux)
        .map(|_| {
            (0..spec.latent_dim)
                .map(|_| spec.aux_offset_scale * structure.normal())
                .collect()
        })
        .collect();
    let centres: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            (0..spec.latent_dim)
                .map(|_| spec.class_spread * structure.normal())
                .collect()
        })
        .collect();

    let mut examples = Vec::with_capacity(spec.num_classes * spec.examples_per_class);
    for (class_id, centre) in centres.iter().enumerate() {
        for i in 0..spec.examples_per_class {
            let true_aux = i % spec.num_aux;
            let stored_aux = if spec.num_aux > 1 && !labels.bernoulli(spec.aux_consistency) {
                random_other_label(&mut labels, true_aux, spec.num_aux)
            } else {
                true_aux
            };
            let latent: Vec<f64> = centre.iter().zip(&offsets[true_aux]).map(|(m, d)| m + d).collect();
            let mut features = mixing.apply(&latent);
            if spec.noise_scale > 0.0 {
                for f in &mut features {
                    *f += spec.noise_scale * noise.normal();
                }
            }
            examples.push(Example {
                features,
                class_id,
                aux_label: stored_aux,
            });
        }
    }
    Dataset::new(examples, spec.num_classes, spec.num_aux)
}

fn random_other_label(rng: &mut Rng, label: usize, k: usize) -> usize {
    let r = rng.below(k - 1);
    if r >= label {
        r + 1
    } else {
        r
    }
}

/// Class counts for a class-disjoint train/val/test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Counts from fractions of `num_classes`; the test split takes the rounding remainder.
    pub fn from_fractions(num_classes: usize, train: f64, val: f64, seed: u64) -> Result<Self> {
        if !(train >= 0.0 && val >= 0.0 && train + val <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid split fractions train={train} val={val}"
            )));
        }
        let tr = (train * num_classes as f64).round() as usize;
        let va = (val * num_classes as f64).round() as usize;
        let te = num_classes.checked_sub(tr + va).ok_or_else(|| {
            Error::InvalidArgument("split fractions exceed the class count".into())
        })?;
        Ok(Self { train: tr, val: va, test: te, seed })
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn split_by_class(ds: &Dataset, split: &SplitSpec) -> Result<Splits> {
    let mut classes = ds.class_ids();
    let wanted = split.train + split.val + split.test;
    if split.train == 0 || split.val == 0 || split.test == 0 {
        return Err(Error::InvalidArgument("every split needs at least one class".into()));
    }
    if wanted > classes.len() {
        return Err(Error::InvalidArgument(format!(
            "split needs {wanted} classes but the dataset has {}",
            classes.len()
        )));
    }
    Rng::new(split.seed).shuffle(&mut classes);
    let (train, rest) = classes.split_at(split.train);
    let (val, rest) = rest.split_at(split.val);
    let test = &rest[..split.test];
    Ok(Splits {
        train: ds.restrict_to_classes(train)?,
        val: ds.restrict_to_classes(val)?,
        test: ds.restrict_to_classes(test)?,
    })
}

/// Permute auxiliary labels among the examples of each class.
pub fn shuffle_aux_within_class(ds: &Dataset, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let mut examples = ds.examples.clone();
    for idx in ds.indices_by_class().values() {
        let mut labels: Vec<usize> = idx.iter().map(|&i| examples[i].aux_label).collect();
        rng.shuffle(&mut labels);
        for (&i, l) in idx.iter().zip(labels) {
            examples[i].aux_label = l;
        }
    }
    ds.with_examples(examples)
}

/// Replace each auxiliary label, with probability `flip_prob`, by a uniformly
/// chosen different label.
pub fn corrupt_aux(ds: &Dataset, flip_prob: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::InvalidArgument(format!(
            "flip probability must be in [0,1], got {flip_prob}"
        )));
    }
    let mut rng = Rng::new(seed);
    let k = ds.num_aux;
    let mut examples = ds.examples.clone();
    if k > 1 {
        for ex in &mut examples {
            if rng.bernoulli(flip_prob) {
                ex.aux_label = random_other_label(&mut rng, ex.aux_label, k);
            }
        }
    }
    Ok(ds.with_examples(examples))
}

const FEATURE_MAGIC: &str = "#geoembed v1";

/// Decimal with 17 significant digits; parses back to the identical `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_features<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{FEATURE_MAGIC} dim={} classes={} aux={}",
        ds.input_dim(),
        ds.num_classes,
        ds.num_aux
    )?;
    let mut line = String::new();
    for ex in &ds.examples {
        line.clear();
        write!(line, "{},{}", ex.class_id, ex.aux_label).expect("string write");
        for f in &ex.features {
            line.push(',');
            line.push_str(&fmt_f64(*f));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_features(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_features(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn parse_header_fields(rest: &str, line: usize) -> Result<BTreeMap<&str, &str>> {
    let mut fields = BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected key=value in header, got '{tok}'"),
        })?;
        fields.insert(k, v);
    }
    Ok(fields)
}

pub(crate) fn header_usize(fields: &BTreeMap<&str, &str>, key: &str, line: usize) -> Result<usize> {
    fields
        .get(key)
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("header is missing '{key}'"),
        })?
        .parse()
        .map_err(|e| Error::Parse {
            line,
            message: format!("header field '{key}': {e}"),
        })
}

pub fn read_features<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty feature file".into(),
    })?;
    let header = header?;
    let rest = header.strip_prefix(FEATURE_MAGIC).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("expected header starting with '{FEATURE_MAGIC}'"),
    })?;
    let fields = parse_header_fields(rest, 1)?;
    let dim = header_usize(&fields, "dim", 1)?;
    let classes = header_usize(&fields, "classes", 1)?;
    let aux = header_usize(&fields, "aux", 1)?;

    let mut examples = Vec::new();
    for (i, text) in lines {
        let line = i + 1;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = text.split(',').collect();
        if cols.len() != dim + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", dim + 2, cols.len()),
            });
        }
        let parse_label = |s: &str, what: &str, bound: usize| -> Result<usize> {
            let v: usize = s.trim().parse().map_err(|e| Error::Parse {
                line,
                message: format!("{what} '{s}': {e}"),
            })?;
            if v >= bound {
                return Err(Error::Parse {
                    line,
                    message: format!("{what} {v} out of range [0, {bound})"),
                });
            }
            Ok(v)
        };
        let class_id = parse_label(cols[0], "class id", classes)?;
        let aux_label = parse_label(cols[1], "aux label", aux)?;
        let features = cols[2..]
            .iter()
            .map(|s| {
                let v: f64 = s.trim().parse().map_err(|e| Error::Parse {
                    line,
                    message: format!("feature '{s}': {e}"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("non-finite feature '{s}'"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        examples.push(Example {
            features,
            class_id,
            aux_label,
        });
    }
    if examples.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "feature file has a header but no examples".into(),
        });
    }
    Dataset::new(examples, classes, aux)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_features(BufReader::new(file))
}
