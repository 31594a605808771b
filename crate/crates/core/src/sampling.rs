//! Tuple samplers for each loss term, plus an independent constraint checker.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossRecipe};
use crate::Rng;

/// Example indices grouped per loss term.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TupleBatch {
    /// `(anchor, positive, negative)`
    pub triplets: Vec<(usize, usize, usize)>,
    /// Same class, same aux label.
    pub pdm_pairs: Vec<(usize, usize)>,
    /// Same class, different aux labels.
    pub fbv_pairs: Vec<(usize, usize)>,
    /// Same class, different aux labels.
    pub ce_pairs: Vec<(usize, usize)>,
    /// `(x1, x2)` from one class and `(x3, x4)` from another, with
    /// `e(x1) = e(x3) ≠ e(x2) = e(x4)`.
    pub pdp_quads: Vec<(usize, usize, usize, usize)>,
    pub mtl_examples: Vec<usize>,
}

impl TupleBatch {
    pub fn count(&self, kind: LossKind) -> usize {
        match kind {
            LossKind::Tl => self.triplets.len(),
            LossKind::Pdm => self.pdm_pairs.len(),
            LossKind::Pdp => self.pdp_quads.len(),
            LossKind::Fbv => self.fbv_pairs.len(),
            LossKind::Ce => self.ce_pairs.len(),
            LossKind::Mtl => self.mtl_examples.len(),
        }
    }

    /// Visit every example index used by `kind`'s tuples, in tuple order.
    pub fn for_each_index(&self, kind: LossKind, mut f: impl FnMut(usize)) {
        match kind {
            LossKind::Tl => self.triplets.iter().for_each(|&(a, p, n)| {
                f(a);
                f(p);
                f(n);
            }),
            LossKind::Pdm => self.pdm_pairs.iter().for_each(|&(a, b)| {
                f(a);
                f(b);
            }),
            LossKind::Fbv => self.fbv_pairs.iter().for_each(|&(a, b)| {
                f(a);
                f(b);
            }),
            LossKind::Ce => self.ce_pairs.iter().for_each(|&(a, b)| {
                f(a);
                f(b);
            }),
            LossKind::Pdp => self.pdp_quads.iter().for_each(|&(a, b, c, d)| {
                f(a);
                f(b);
                f(c);
                f(d);
            }),
            LossKind::Mtl => self.mtl_examples.iter().copied().for_each(f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Tuples drawn per active term.
    pub batch_size: usize,
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            seed: 0,
            max_retries: 100,
        }
    }
}

/// Precomputed index structures over one dataset.
#[derive(Clone, Debug)]
pub struct TupleSampler<'a> {
    ds: &'a Dataset,
    by_class: BTreeMap<usize, Vec<usize>>,
    by_cell: BTreeMap<(usize, usize), Vec<usize>>,
    /// Sorted distinct aux labels per class.
    aux_of_class: BTreeMap<usize, Vec<usize>>,
    /// Examples with some valid partner, per term.
    triplet_anchors: Vec<usize>,
    pdm_anchors: Vec<usize>,
    cross_aux_anchors: Vec<usize>,
    /// Classes carrying at least two aux labels.
    multi_aux_classes: Vec<usize>,
    pdp_feasible: bool,
}

impl<'a> TupleSampler<'a> {
    pub fn new(ds: &'a Dataset) -> Self {
        let by_class = ds.indices_by_class();
        let mut by_cell: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, e) in ds.examples().iter().enumerate() {
            by_cell.entry((e.class_id, e.aux_label)).or_default().push(i);
        }
        let mut aux_of_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(c, a) in by_cell.keys() {
            aux_of_class.entry(c).or_default().push(a);
        }
        let n = ds.len();
        let triplet_anchors = if by_class.len() >= 2 {
            (0..n).filter(|&i| by_class[&ds.class_of(i)].len() >= 2).collect()
        } else {
            Vec::new()
        };
        let pdm_anchors = (0..n)
            .filter(|&i| by_cell[&(ds.class_of(i), ds.aux_of(i))].len() >= 2)
            .collect();
        let cross_aux_anchors = (0..n)
            .filter(|&i| aux_of_class[&ds.class_of(i)].len() >= 2)
            .collect();
        let multi_aux_classes: Vec<usize> = aux_of_class
            .iter()
            .filter(|(_, a)| a.len() >= 2)
            .map(|(&c, _)| c)
            .collect();
        let pdp_feasible = multi_aux_classes.iter().enumerate().any(|(i, c1)| {
            multi_aux_classes[i + 1..]
                .iter()
                .any(|c3| shared_aux(&aux_of_class[c1], &aux_of_class[c3]).len() >= 2)
        });
        Self {
            ds,
            by_class,
            by_cell,
            aux_of_class,
            triplet_anchors,
            pdm_anchors,
            cross_aux_anchors,
            multi_aux_classes,
            pdp_feasible,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        self.ds
    }

    /// Error if `kind` has no valid tuple in this dataset.
    pub fn check_feasible(&self, kind: LossKind) -> Result<()> {
        let msg = match kind {
            LossKind::Tl | LossKind::Mtl if self.triplet_anchors.is_empty() => {
                "no triplet available: need two classes with a repeated class"
            }
            LossKind::Pdm if self.pdm_anchors.is_empty() => {
                "no same-aux pair available: every (class, aux) cell is a singleton"
            }
            LossKind::Fbv | LossKind::Ce if self.cross_aux_anchors.is_empty() => {
                "no cross-aux pair available: no class carries two aux labels"
            }
            LossKind::Pdp if !self.pdp_feasible => {
                "no PDP quadruple available: no two classes share two aux labels"
            }
            _ => return Ok(()),
        };
        Err(Error::Sampling(format!("{kind}: {msg}")))
    }

    pub fn sample(&self, recipe: &LossRecipe, cfg: &SamplerConfig, rng: &mut Rng) -> Result<TupleBatch> {
        if cfg.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        let mut batch = TupleBatch::default();
        for kind in LossKind::ALL {
            if !recipe.is_active(kind) {
                continue;
            }
            self.check_feasible(kind)?;
            let n = cfg.batch_size;
            let r = cfg.max_retries;
            match kind {
                LossKind::Tl => {
                    batch.triplets = (0..n).map(|_| self.triplet(rng, r)).collect::<Result<_>>()?
                }
                LossKind::Pdm => {
                    batch.pdm_pairs = (0..n).map(|_| self.pdm_pair(rng, r)).collect::<Result<_>>()?
                }
                LossKind::Pdp => {
                    batch.pdp_quads = (0..n).map(|_| self.pdp_quad(rng, r)).collect::<Result<_>>()?
                }
                LossKind::Fbv => {
                    batch.fbv_pairs = (0..n).map(|_| self.cross_aux_pair(rng, r)).collect::<Result<_>>()?
                }
                LossKind::Ce => {
                    batch.ce_pairs = (0..n).map(|_| self.cross_aux_pair(rng, r)).collect::<Result<_>>()?
                }
                LossKind::Mtl => {
                    batch.mtl_examples = if batch.triplets.is_empty() {
                        (0..n).map(|_| self.anchor(&self.triplet_anchors, rng)).collect()
                    } else {
                        batch.triplets.iter().map(|t| t.0).collect()
                    }
                }
            }
        }
        Ok(batch)
    }

    fn anchor(&self, pool: &[usize], rng: &mut Rng) -> usize {
        pool[rng.below(pool.len())]
    }

    fn retry<T>(what: &str, max_retries: usize, mut draw: impl FnMut() -> Option<T>) -> Result<T> {
        for _ in 0..max_retries.max(1) {
            if let Some(t) = draw() {
                return Ok(t);
            }
        }
        Err(Error::Sampling(format!(
            "{what}: no valid partner after {max_retries} retries"
        )))
    }

    pub fn triplet(&self, rng: &mut Rng, max_retries: usize) -> Result<(usize, usize, usize)> {
        let a = self.anchor(&self.triplet_anchors, rng);
        let c = self.ds.class_of(a);
        let same = &self.by_class[&c];
        let p = Self::retry("triplet positive", max_retries, || {
            let p = same[rng.below(same.len())];
            (p != a).then_some(p)
        })?;
        let n_total = self.ds.len();
        let n = Self::retry("triplet negative", max_retries, || {
            let n = rng.below(n_total);
            (self.ds.class_of(n) != c).then_some(n)
        })?;
        Ok((a, p, n))
    }

    pub fn pdm_pair(&self, rng: &mut Rng, max_retries: usize) -> Result<(usize, usize)> {
        let a = self.anchor(&self.pdm_anchors, rng);
        let cell = &self.by_cell[&(self.ds.class_of(a), self.ds.aux_of(a))];
        let b = Self::retry("PDM partner", max_retries, || {
            let b = cell[rng.below(cell.len())];
            (b != a).then_some(b)
        })?;
        Ok((a, b))
    }

    pub fn cross_aux_pair(&self, rng: &mut Rng, max_retries: usize) -> Result<(usize, usize)> {
        let a = self.anchor(&self.cross_aux_anchors, rng);
        let same = &self.by_class[&self.ds.class_of(a)];
        let ea = self.ds.aux_of(a);
        let b = Self::retry("cross-aux partner", max_retries, || {
            let b = same[rng.below(same.len())];
            (self.ds.aux_of(b) != ea).then_some(b)
        })?;
        Ok((a, b))
    }

    pub fn pdp_quad(&self, rng: &mut Rng, max_retries: usize) -> Result<(usize, usize, usize, usize)> {
        let classes = &self.multi_aux_classes;
        let (c1, c3, shared) = Self::retry("PDP class pair", max_retries, || {
            let c1 = classes[rng.below(classes.len())];
            let c3 = classes[rng.below(classes.len())];
            if c1 == c3 {
                return None;
            }
            let shared = shared_aux(&self.aux_of_class[&c1], &self.aux_of_class[&c3]);
            (shared.len() >= 2).then_some((c1, c3, shared))
        })?;
        let i = rng.below(shared.len());
        let mut j = rng.below(shared.len() - 1);
        if j >= i {
            j += 1;
        }
        let (e1, e2) = (shared[i], shared[j]);
        let mut pick = |c: usize, e: usize| {
            let cell = &self.by_cell[&(c, e)];
            cell[rng.below(cell.len())]
        };
        Ok((pick(c1, e1), pick(c1, e2), pick(c3, e1), pick(c3, e2)))
    }
}

fn shared_aux(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
}

/// Draw one batch with `batch_size` tuples for every active term of `recipe`.
pub fn sample_batch(ds: &Dataset, recipe: &LossRecipe, cfg: &SamplerConfig, rng: &mut Rng) -> Result<TupleBatch> {
    TupleSampler::new(ds).sample(recipe, cfg, rng)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: LossKind,
    /// Position of the tuple within its list.
    pub position: usize,
    pub rule: String,
}

/// Re-check every tuple of `batch` against its constraints.
pub fn validate_tuples(ds: &Dataset, batch: &TupleBatch) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = ds.len();
    let c = |i: usize| ds.class_of(i);
    let e = |i: usize| ds.aux_of(i);
    let mut check = |kind: LossKind, position: usize, idx: &[usize], rules: &dyn Fn() -> Vec<(bool, &'static str)>| {
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            out.push(Violation {
                kind,
                position,
                rule: format!("index {bad} out of range"),
            });
            return;
        }
        for (ok, rule) in rules() {
            if !ok {
                out.push(Violation {
                    kind,
                    position,
                    rule: rule.to_string(),
                });
            }
        }
    };
    for (k, &(a, p, ng)) in batch.triplets.iter().enumerate() {
        check(LossKind::Tl, k, &[a, p, ng], &|| {
            vec![
                (c(a) == c(p), "c(a) == c(p)"),
                (c(a) != c(ng), "c(a) != c(n)"),
                (a != p, "a != p"),
            ]
        });
    }
    for (k, &(a, b)) in batch.pdm_pairs.iter().enumerate() {
        check(LossKind::Pdm, k, &[a, b], &|| {
            vec![
                (c(a) == c(b), "c(a) == c(b)"),
                (e(a) == e(b), "e(a) == e(b)"),
                (a != b, "a != b"),
            ]
        });
    }
    for (kind, pairs) in [(LossKind::Fbv, &batch.fbv_pairs), (LossKind::Ce, &batch.ce_pairs)] {
        for (k, &(a, b)) in pairs.iter().enumerate() {
            check(kind, k, &[a, b], &|| {
                vec![(c(a) == c(b), "c(a) == c(b)"), (e(a) != e(b), "e(a) != e(b)")]
            });
        }
    }
    for (k, &(x1, x2, x3, x4)) in batch.pdp_quads.iter().enumerate() {
        check(LossKind::Pdp, k, &[x1, x2, x3, x4], &|| {
            vec![
                (c(x1) == c(x2), "c(1) == c(2)"),
                (c(x3) == c(x4), "c(3) == c(4)"),
                (c(x1) != c(x3), "c(1) != c(3)"),
                (e(x1) == e(x3), "e(1) == e(3)"),
                (e(x2) == e(x4), "e(2) == e(4)"),
                (e(x1) != e(x2), "e(1) != e(2)"),
            ]
        });
    }
    for (k, &i) in batch.mtl_examples.iter().enumerate() {
        check(LossKind::Mtl, k, &[i], &Vec::new);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Example, SyntheticSpec};
    use crate::losses::RecipeDefaults;

    fn dataset() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            num_classes: 6,
            examples_per_class: 9,
            num_aux: 3,
            latent_dim: 3,
            input_dim: 4,
            seed: 2,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn recipe(name: &str) -> LossRecipe {
        LossRecipe::from_name(name, &RecipeDefaults::default()).unwrap()
    }

    #[test]
    fn batches_satisfy_constraints_and_are_deterministic() {
        let ds = dataset();
        let r = recipe("TL_PDM_PDP_FBV_CE_MTL_E");
        let cfg = SamplerConfig { batch_size: 64, ..Default::default() };
        let a = sample_batch(&ds, &r, &cfg, &mut Rng::new(1)).unwrap();
        let b = sample_batch(&ds, &r, &cfg, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        for k in LossKind::ALL {
            assert_eq!(a.count(k), 64);
        }
        assert!(validate_tuples(&ds, &a).is_empty());
        // MTL reuses triplet anchors
        assert!(a.mtl_examples.iter().zip(&a.triplets).all(|(m, t)| *m == t.0));
    }

    #[test]
    fn inactive_terms_are_not_sampled() {
        let ds = dataset();
        let b = sample_batch(&ds, &recipe("TL_S"), &SamplerConfig::default(), &mut Rng::new(0)).unwrap();
        assert_eq!(b.count(LossKind::Tl), 128);
        assert_eq!(b.count(LossKind::Pdp), 0);
    }

    #[test]
    fn single_aux_dataset_cannot_feed_fbv() {
        let ex = |c: usize, f: f64| Example { features: vec![f], class_id: c, aux_label: 0 };
        let ds = Dataset::new(vec![ex(0, 0.0), ex(0, 1.0), ex(1, 2.0), ex(1, 3.0)], 2, 1).unwrap();
        let err = sample_batch(&ds, &recipe("TL_FBV_E"), &SamplerConfig::default(), &mut Rng::new(0))
            .unwrap_err();
        assert!(err.to_string().contains("no cross-aux pair available"), "{err}");
        assert!(sample_batch(&ds, &recipe("TL_PDP_S"), &SamplerConfig::default(), &mut Rng::new(0)).is_err());
        assert!(sample_batch(&ds, &recipe("TL_PDM_S"), &SamplerConfig::default(), &mut Rng::new(0)).is_ok());
    }

    #[test]
    fn validator_flags_bad_triplet() {
        let ds = dataset();
        let same_class: Vec<usize> = ds.indices_by_class()[&0].clone();
        let batch = TupleBatch {
            triplets: vec![(same_class[0], same_class[1], same_class[2])],
            ..Default::default()
        };
        let v = validate_tuples(&ds, &batch);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "c(a) != c(n)");
        assert!(validate_tuples(&ds, &TupleBatch::default()).is_empty());
    }

    #[test]
    fn every_cell_gets_covered() {
        let ds = dataset();
        let s = TupleSampler::new(&ds);
        let mut rng = Rng::new(5);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            let (a, b) = s.pdm_pair(&mut rng, 100).unwrap();
            seen.insert((ds.class_of(a), ds.aux_of(a)));
            seen.insert((ds.class_of(b), ds.aux_of(b)));
        }
        assert_eq!(seen.len(), 6 * 3);
    }

    #[test]
    fn zero_batch_size_rejected() {
        let ds = dataset();
        let cfg = SamplerConfig { batch_size: 0, ..Default::default() };
        assert!(sample_batch(&ds, &recipe("TL_S"), &cfg, &mut Rng::new(0)).is_err());
    }
}
