//! Auxiliary-label metric-learning losses and their gradients.
//!
//! Every per-tuple loss returns its value together with the gradient with
//! respect to each participating embedding. [`combined_loss`] reduces a whole
//! [`TupleBatch`] and chains the result back to network parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{check_dims, Error, Result};
use crate::math::{self, sq_l2_dist_unchecked, Mat};
use crate::model::{CompositionNet, ModelBundle, MtlHead};
use crate::sampling::TupleBatch;
use crate::spaces::{self, SpaceConfig, SpaceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LossKind {
    /// Triplet loss.
    Tl,
    /// Pairwise distance minimization within a (class, aux) mini-cluster.
    Pdm,
    /// Pairwise distance preservation across classes.
    Pdp,
    /// Fixed basis vector displacement between aux mini-clusters.
    Fbv,
    /// Compositional embedding through the learned map `g`.
    Ce,
    /// Auxiliary-label classification head.
    Mtl,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Tl,
        LossKind::Pdm,
        LossKind::Pdp,
        LossKind::Fbv,
        LossKind::Ce,
        LossKind::Mtl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Tl => "TL",
            LossKind::Pdm => "PDM",
            LossKind::Pdp => "PDP",
            LossKind::Fbv => "FBV",
            LossKind::Ce => "CE",
            LossKind::Mtl => "MTL",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown loss term '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerm {
    pub kind: LossKind,
    pub weight: f64,
}

/// Margins and flags used when building recipes from names.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecipeDefaults {
    pub spherical_margin: f64,
    pub euclidean_margin: f64,
    pub basis_magnitude: f64,
    pub hinge: bool,
}

impl Default for RecipeDefaults {
    fn default() -> Self {
        Self {
            spherical_margin: spaces::DEFAULT_SPHERICAL_MARGIN,
            euclidean_margin: spaces::DEFAULT_EUCLIDEAN_MARGIN,
            basis_magnitude: spaces::DEFAULT_BASIS_MAGNITUDE,
            hinge: true,
        }
    }
}

impl RecipeDefaults {
    pub fn space(&self, kind: SpaceKind) -> Result<SpaceConfig> {
        let margin = match kind {
            SpaceKind::Spherical => self.spherical_margin,
            SpaceKind::Euclidean => self.euclidean_margin,
        };
        SpaceConfig::new(kind, margin, self.basis_magnitude)
    }
}

/// Weighted loss terms plus the embedding space they act in.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecipe {
    terms: Vec<LossTerm>,
    pub space: SpaceConfig,
    /// Apply `max(0, ·)` to the triplet loss.
    pub hinge: bool,
}

impl LossRecipe {
    pub fn new(terms: Vec<LossTerm>, space: SpaceConfig, hinge: bool) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("a recipe needs at least one loss term".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &terms {
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                return Err(Error::Config(format!(
                    "weight of {} must be a finite non-negative number, got {}",
                    t.kind, t.weight
                )));
            }
            if !seen.insert(t.kind) {
                return Err(Error::Config(format!("loss term {} listed twice", t.kind)));
            }
        }
        let kinds: Vec<LossKind> = terms.iter().map(|t| t.kind).collect();
        if !kinds.contains(&LossKind::Tl) && kinds != [LossKind::Ce] {
            return Err(Error::Config(
                "recipes other than plain CE must include the triplet loss".into(),
            ));
        }
        spaces::validate_recipe(&space, &kinds)?;
        Ok(Self { terms, space, hinge })
    }

    /// Equal unit weights for every listed term.
    pub fn equal_weights(kinds: &[LossKind], space: SpaceConfig, hinge: bool) -> Result<Self> {
        Self::new(
            kinds
                .iter()
                .map(|&kind| LossTerm { kind, weight: 1.0 })
                .collect(),
            space,
            hinge,
        )
    }

    /// Parse names like `TL_PDP_FBV_E` or `TL+PDP+FBV(E)`.
    pub fn from_name(name: &str, defaults: &RecipeDefaults) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse recipe name '{name}'"));
        let (body, space) = if let Some(open) = name.rfind('(') {
            let inner = name[open + 1..].strip_suffix(')').ok_or_else(bad)?;
            (&name[..open], inner)
        } else {
            name.rsplit_once('_').ok_or_else(bad)?
        };
        let kind: SpaceKind = space.parse()?;
        let kinds = body
            .split(['_', '+'])
            .map(LossKind::from_str)
            .collect::<Result<Vec<_>>>()?;
        Self::equal_weights(&kinds, defaults.space(kind)?, defaults.hinge)
    }

    pub fn terms(&self) -> &[LossTerm] {
        &self.terms
    }

    /// Terms with positive weight.
    pub fn active_terms(&self) -> impl Iterator<Item = &LossTerm> {
        self.terms.iter().filter(|t| t.weight > 0.0)
    }

    pub fn is_active(&self, kind: LossKind) -> bool {
        self.active_terms().any(|t| t.kind == kind)
    }

    pub fn needs_composition(&self) -> bool {
        self.is_active(LossKind::Ce)
    }

    pub fn needs_head(&self) -> bool {
        self.is_active(LossKind::Mtl)
    }

    /// Triplet term alone, same space and hinge.
    pub fn triplet_only(&self) -> LossRecipe {
        LossRecipe {
            terms: vec![LossTerm {
                kind: LossKind::Tl,
                weight: 1.0,
            }],
            space: self.space,
            hinge: self.hinge,
        }
    }

    /// Display name such as `TL+PDP+FBV(E)`.
    pub fn label(&self) -> String {
        let names: Vec<&str> = self.terms.iter().map(|t| t.kind.as_str()).collect();
        format!("{}({})", names.join("+"), self.space.kind.suffix())
    }
}

/// A loss value with one gradient per participating embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<const N: usize> {
    pub value: f64,
    pub grads: [Vec<f64>; N],
}

fn same_dims(vs: &[&[f64]]) -> Result<()> {
    let d = vs[0].len();
    for v in &vs[1..] {
        check_dims(d, v.len())?;
    }
    Ok(())
}

/// `‖ya − yp‖² − ‖ya − yn‖² + α`, optionally hinged at zero. The subgradient at
/// the kink is zero.
pub fn triplet_loss(
    ya: &[f64],
    yp: &[f64],
    yn: &[f64],
    margin: f64,
    hinge: bool,
) -> Result<LossValue<3>> {
    same_dims(&[ya, yp, yn])?;
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument(format!("margin must be > 0, got {margin}")));
    }
    let raw = sq_l2_dist_unchecked(ya, yp) - sq_l2_dist_unchecked(ya, yn) + margin;
    if hinge && raw <= 0.0 {
        let z = vec![0.0; ya.len()];
        return Ok(LossValue {
            value: 0.0,
            grads: [z.clone(), z.clone(), z],
        });
    }
    // ∂/∂ya = 2(ya−yp) − 2(ya−yn) = 2(yn−yp)
    let ga = yn.iter().zip(yp).map(|(n, p)| 2.0 * (n - p)).collect();
    let gp = ya.iter().zip(yp).map(|(a, p)| -2.0 * (a - p)).collect();
    let gn = ya.iter().zip(yn).map(|(a, n)| 2.0 * (a - n)).collect();
    Ok(LossValue {
        value: raw,
        grads: [ga, gp, gn],
    })
}

/// `‖ya − yb‖²` for two examples of the same class and auxiliary label.
pub fn pdm_loss(ya: &[f64], yb: &[f64]) -> Result<LossValue<2>> {
    same_dims(&[ya, yb])?;
    let ga: Vec<f64> = ya.iter().zip(yb).map(|(a, b)| 2.0 * (a - b)).collect();
    let gb = ga.iter().map(|g| -g).collect();
    Ok(LossValue {
        value: sq_l2_dist_unchecked(ya, yb),
        grads: [ga, gb],
    })
}

/// `(‖y1 − y2‖² − ‖y3 − y4‖²)²`.
pub fn pdp_loss(y1: &[f64], y2: &[f64], y3: &[f64], y4: &[f64]) -> Result<LossValue<4>> {
    same_dims(&[y1, y2, y3, y4])?;
    let diff = sq_l2_dist_unchecked(y1, y2) - sq_l2_dist_unchecked(y3, y4);
    let c = 4.0 * diff;
    let g1: Vec<f64> = y1.iter().zip(y2).map(|(a, b)| c * (a - b)).collect();
    let g2 = g1.iter().map(|g| -g).collect();
    let g3: Vec<f64> = y3.iter().zip(y4).map(|(a, b)| -c * (a - b)).collect();
    let g4 = g3.iter().map(|g| -g).collect();
    Ok(LossValue {
        value: diff * diff,
        grads: [g1, g2, g3, g4],
    })
}

/// Target displacement from aux label `e_a` to `e_b`.
///
/// Label 0 sits at the origin and label `k ≥ 1` at `β·u_k`, where `u_k` is
/// the `k`-th standard basis direction (`u_1` is the first coordinate). The
/// displacement is the difference of the two positions, so `v_ab = −v_ba`.
pub fn basis_vector(e_a: usize, e_b: usize, num_aux: usize, dim: usize, beta: f64) -> Result<Vec<f64>> {
    if num_aux == 0 || num_aux - 1 > dim {
        return Err(Error::InvalidArgument(format!(
            "{num_aux} auxiliary labels need at least {} embedding dimensions, have {dim}",
            num_aux.saturating_sub(1)
        )));
    }
    if e_a >= num_aux || e_b >= num_aux {
        return Err(Error::InvalidArgument(format!(
            "aux labels ({e_a}, {e_b}) out of range [0, {num_aux})"
        )));
    }
    if e_a == e_b {
        return Err(Error::InvalidArgument(format!(
            "basis vector needs two different aux labels, got {e_a} twice"
        )));
    }
    let mut v = vec![0.0; dim];
    if e_b > 0 {
        v[e_b - 1] += beta;
    }
    if e_a > 0 {
        v[e_a - 1] -= beta;
    }
    Ok(v)
}

/// `‖yb − ya − v_ab‖²`. Only defined in Euclidean space.
pub fn fbv_loss(space: &SpaceConfig, ya: &[f64], yb: &[f64], v_ab: &[f64]) -> Result<LossValue<2>> {
    if space.kind != SpaceKind::Euclidean {
        return Err(Error::Config(
            "loss term FBV requires a Euclidean embedding space".into(),
        ));
    }
    same_dims(&[ya, yb, v_ab])?;
    let r: Vec<f64> = yb
        .iter()
        .zip(ya)
        .zip(v_ab)
        .map(|((b, a), v)| b - a - v)
        .collect();
    let value = math::dot(&r, &r);
    let gb: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
    let ga = gb.iter().map(|g| -g).collect();
    Ok(LossValue {
        value,
        grads: [ga, gb],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeValue {
    pub value: f64,
    pub grad_ya: Vec<f64>,
    pub grad_yb: Vec<f64>,
    /// In `g.net().params_flat()` order.
    pub g_grads: Vec<f64>,
}

/// `‖g(ya, e_a, e_b) − yb‖²`.
pub fn ce_loss(g: &CompositionNet, ya: &[f64], e_a: usize, e_b: usize, yb: &[f64]) -> Result<CeValue> {
    let mut g_grads = vec![0.0; g.net().num_params()];
    let (value, grad_ya, grad_yb) = ce_accumulate(g, ya, e_a, e_b, yb, 1.0, &mut g_grads)?;
    Ok(CeValue {
        value,
        grad_ya,
        grad_yb,
        g_grads,
    })
}

/// Adds `scale · ∂L/∂θ_g` into `g_grads`; returns the value and the embedding
/// gradients, both multiplied by `scale`.
fn ce_accumulate(
    g: &CompositionNet,
    ya: &[f64],
    e_a: usize,
    e_b: usize,
    yb: &[f64],
    scale: f64,
    g_grads: &mut [f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_dims(g.embed_dim(), yb.len())?;
    let (pred, tape) = g.forward(ya, e_a, e_b)?;
    let r: Vec<f64> = pred.iter().zip(yb).map(|(p, b)| p - b).collect();
    let value = math::dot(&r, &r);
    let dpred: Vec<f64> = r.iter().map(|x| 2.0 * scale * x).collect();
    let mut dinput = g.net().backward_into(&tape, &dpred, g_grads)?;
    dinput.truncate(ya.len());
    let grad_yb = dpred.iter().map(|x| -x).collect();
    Ok((value, dinput, grad_yb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MtlValue {
    pub value: f64,
    pub grad_y: Vec<f64>,
    /// In `head.net().params_flat()` order.
    pub head_grads: Vec<f64>,
}

/// Cross-entropy `−log p_e` of the head's softmax output.
pub fn mtl_loss(head: &MtlHead, y: &[f64], e: usize) -> Result<MtlValue> {
    let mut head_grads = vec![0.0; head.net().num_params()];
    let (value, grad_y) = mtl_accumulate(head, y, e, 1.0, &mut head_grads)?;
    Ok(MtlValue {
        value,
        grad_y,
        head_grads,
    })
}

/// Adds `scale · ∂L/∂θ_head` into `head_grads`; returns the value and
/// `scale · ∂L/∂y`.
fn mtl_accumulate(
    head: &MtlHead,
    y: &[f64],
    e: usize,
    scale: f64,
    head_grads: &mut [f64],
) -> Result<(f64, Vec<f64>)> {
    let k = head.num_aux();
    if e >= k {
        return Err(Error::InvalidArgument(format!(
            "aux label {e} out of range [0, {k})"
        )));
    }
    let (logits, tape) = head.net().forward(y)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let value = lse - logits[e];
    let dlogits: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, l)| scale * ((l - lse).exp() - if i == e { 1.0 } else { 0.0 }))
        .collect();
    let grad_y = head.net().backward_into(&tape, &dlogits, head_grads)?;
    Ok((value, grad_y))
}

/// Batch objective: `Σ_terms weight · mean(term over its tuples)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedLoss {
    pub value: f64,
    /// Unweighted mean of each active term.
    pub terms: BTreeMap<LossKind, f64>,
    /// Gradient in [`ModelBundle::params_flat`] order; empty when not requested.
    pub grads: Vec<f64>,
}

pub fn combined_loss(
    recipe: &LossRecipe,
    batch: &TupleBatch,
    ds: &Dataset,
    model: &ModelBundle,
) -> Result<CombinedLoss> {
    evaluate(recipe, batch, ds, model, true)
}

/// [`combined_loss`] without the backward pass.
pub fn combined_loss_value(
    recipe: &LossRecipe,
    batch: &TupleBatch,
    ds: &Dataset,
    model: &ModelBundle,
) -> Result<CombinedLoss> {
    evaluate(recipe, batch, ds, model, false)
}

fn evaluate(
    recipe: &LossRecipe,
    batch: &TupleBatch,
    ds: &Dataset,
    model: &ModelBundle,
    want_grads: bool,
) -> Result<CombinedLoss> {
    if recipe.space != model.space {
        return Err(Error::Config(format!(
            "recipe space {:?} does not match the model's {:?}",
            recipe.space, model.space
        )));
    }
    for t in recipe.active_terms() {
        if batch.count(t.kind) == 0 {
            return Err(Error::Sampling(format!(
                "batch has no tuples for active term {}",
                t.kind
            )));
        }
    }
    let g = match (recipe.needs_composition(), &model.g) {
        (true, None) => return Err(Error::Config("CE term needs a composition network".into())),
        (_, g) => g.as_ref(),
    };
    let head = match (recipe.needs_head(), &model.head) {
        (true, None) => return Err(Error::Config("MTL term needs a classification head".into())),
        (_, h) => h.as_ref(),
    };

    // embed each referenced example once
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    for t in recipe.active_terms() {
        batch.for_each_index(t.kind, |i| {
            let next = slot.len();
            slot.entry(i).or_insert(next);
        });
    }
    let mut order = vec![0usize; slot.len()];
    for (&i, &s) in &slot {
        if i >= ds.len() {
            return Err(Error::InvalidArgument(format!(
                "tuple index {i} out of range for dataset of {}",
                ds.len()
            )));
        }
        order[s] = i;
    }
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| ds.examples()[i].features.clone()).collect();
    let x = Mat::from_rows(&rows)?;
    let tape = model.f.forward_batch(&x)?;
    let raw = tape.output();
    let d = raw.cols();
    let emb: Vec<Vec<f64>> = (0..raw.rows())
        .map(|r| spaces::project(&model.space, raw.row(r)))
        .collect::<Result<_>>()?;
    let y = |i: usize| emb[slot[&i]].as_slice();

    let mut dy = Mat::zeros(emb.len(), d);
    let mut add = |i: usize, scale: f64, g: &[f64]| {
        if want_grads {
            math::add_scaled(dy.row_mut(slot[&i]), scale, g);
        }
    };
    let n_g = g.map_or(0, |g| g.net().num_params());
    let n_h = head.map_or(0, |h| h.net().num_params());
    let mut g_grads = vec![0.0; if want_grads { n_g } else { 0 }];
    let mut h_grads = vec![0.0; if want_grads { n_h } else { 0 }];
    let mut scratch_g = Vec::new();
    let mut scratch_h = Vec::new();

    let mut total = 0.0;
    let mut term_values = BTreeMap::new();
    for term in recipe.active_terms() {
        let n = batch.count(term.kind) as f64;
        let scale = term.weight / n;
        let mut sum = 0.0;
        match term.kind {
            LossKind::Tl => {
                for &(a, p, ng) in &batch.triplets {
                    let l = triplet_loss(y(a), y(p), y(ng), recipe.space.margin, recipe.hinge)?;
                    sum += l.value;
                    if l.value != 0.0 || !recipe.hinge {
                        add(a, scale, &l.grads[0]);
                        add(p, scale, &l.grads[1]);
                        add(ng, scale, &l.grads[2]);
                    }
                }
            }
            LossKind::Pdm => {
                for &(a, b) in &batch.pdm_pairs {
                    let l = pdm_loss(y(a), y(b))?;
                    sum += l.value;
                    add(a, scale, &l.grads[0]);
                    add(b, scale, &l.grads[1]);
                }
            }
            LossKind::Pdp => {
                for &(i1, i2, i3, i4) in &batch.pdp_quads {
                    let l = pdp_loss(y(i1), y(i2), y(i3), y(i4))?;
                    sum += l.value;
                    for (i, gr) in [i1, i2, i3, i4].into_iter().zip(&l.grads) {
                        add(i, scale, gr);
                    }
                }
            }
            LossKind::Fbv => {
                let k = ds.num_aux();
                for &(a, b) in &batch.fbv_pairs {
                    let v = basis_vector(ds.aux_of(a), ds.aux_of(b), k, d, recipe.space.basis_magnitude)?;
                    let l = fbv_loss(&recipe.space, y(a), y(b), &v)?;
                    sum += l.value;
                    add(a, scale, &l.grads[0]);
                    add(b, scale, &l.grads[1]);
                }
            }
            LossKind::Ce => {
                let g = g.expect("checked above");
                let buf = if want_grads {
                    &mut g_grads
                } else {
                    scratch_g.resize(n_g, 0.0);
                    &mut scratch_g
                };
                for &(a, b) in &batch.ce_pairs {
                    let (v, ga, gb) = ce_accumulate(g, y(a), ds.aux_of(a), ds.aux_of(b), y(b), scale, buf)?;
                    sum += v;
                    add(a, 1.0, &ga);
                    add(b, 1.0, &gb);
                }
            }
            LossKind::Mtl => {
                let h = head.expect("checked above");
                let buf = if want_grads {
                    &mut h_grads
                } else {
                    scratch_h.resize(n_h, 0.0);
                    &mut scratch_h
                };
                for &i in &batch.mtl_examples {
                    let (v, gy) = mtl_accumulate(h, y(i), ds.aux_of(i), scale, buf)?;
                    sum += v;
                    // gy already carries the scale
                    add(i, 1.0, &gy);
                }
            }
        }
        let mean = sum / n;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} loss", term.kind),
            });
        }
        term_values.insert(term.kind, mean);
        total += term.weight * mean;
    }

    let mut grads = Vec::new();
    if want_grads {
        let mut draw = Mat::zeros(emb.len(), d);
        for (r, y) in emb.iter().enumerate() {
            let back = spaces::project_backward(&model.space, raw.row(r), y, dy.row(r));
            draw.row_mut(r).copy_from_slice(&back);
        }
        let mut f_grads = vec![0.0; model.f.num_params()];
        model.f.backward_batch(&tape, &draw, &mut f_grads)?;
        grads = f_grads;
        if let Some(g) = &model.g {
            if g_grads.is_empty() {
                g_grads = vec![0.0; g.net().num_params()];
            }
            grads.extend(g_grads);
        }
        if let Some(head) = &model.head {
            if h_grads.is_empty() {
                h_grads = vec![0.0; head.net().num_params()];
            }
            grads.extend(h_grads);
        }
    }
    Ok(CombinedLoss {
        value: total,
        terms: term_values,
        grads,
    })
}
