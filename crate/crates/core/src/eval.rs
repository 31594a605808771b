//! Verification metrics: pair construction, rank-statistic AUC, ROC curves,
//! PCA export and mini-cluster geometry diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::basis_vector;
use crate::math::{self, pca_project, sq_l2_dist_unchecked};
use crate::Rng;

pub const DEFAULT_MAX_PAIRS: usize = 20_000;

/// `(i, j, same_class)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationPairSet {
    pub pairs: Vec<(usize, usize, bool)>,
    pub exhaustive: bool,
    pub seed: u64,
}

impl VerificationPairSet {
    pub fn num_pos(&self) -> usize {
        self.pairs.iter().filter(|p| p.2).count()
    }

    pub fn num_neg(&self) -> usize {
        self.pairs.len() - self.num_pos()
    }
}

/// All pairs when there are at most `max_pairs`; otherwise a class-balanced
/// random subsample.
pub fn build_pairs(ds: &Dataset, max_pairs: usize, seed: u64) -> Result<VerificationPairSet> {
    let n = ds.len();
    let by_class = ds.indices_by_class();
    let positives: usize = by_class.values().map(|v| v.len() * (v.len() - 1) / 2).sum();
    let total = n * (n - 1) / 2;
    if positives == 0 {
        return Err(Error::InvalidArgument("no same-class pairs available".into()));
    }
    if positives == total {
        return Err(Error::InvalidArgument(
            "all examples share one class: no different-class pairs".into(),
        ));
    }
    if max_pairs < 2 {
        return Err(Error::InvalidArgument("max_pairs must be at least 2".into()));
    }
    if total <= max_pairs {
        let mut pairs = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j, ds.class_of(i) == ds.class_of(j)));
            }
        }
        return Ok(VerificationPairSet {
            pairs,
            exhaustive: true,
            seed,
        });
    }

    let mut rng = Rng::new(seed);
    let negatives = total - positives;
    let per_side = (max_pairs / 2).min(positives).min(negatives);

    let mut pos: Vec<(usize, usize)> = Vec::with_capacity(positives);
    for idx in by_class.values() {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                pos.push((i.min(j), i.max(j)));
            }
        }
    }
    rng.shuffle(&mut pos);
    pos.truncate(per_side);

    let mut neg = BTreeSet::new();
    let mut neg_order = Vec::with_capacity(per_side);
    if negatives <= 4 * per_side {
        let mut all = Vec::with_capacity(negatives);
        for i in 0..n {
            for j in i + 1..n {
                if ds.class_of(i) != ds.class_of(j) {
                    all.push((i, j));
                }
            }
        }
        rng.shuffle(&mut all);
        neg_order = all.into_iter().take(per_side).collect();
    } else {
        while neg_order.len() < per_side {
            let i = rng.below(n);
            let j = rng.below(n);
            if i == j || ds.class_of(i) == ds.class_of(j) {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if neg.insert(key) {
                neg_order.push(key);
            }
        }
    }

    let pairs = pos
        .into_iter()
        .map(|(i, j)| (i, j, true))
        .chain(neg_order.into_iter().map(|(i, j)| (i, j, false)))
        .collect();
    Ok(VerificationPairSet {
        pairs,
        exhaustive: false,
        seed,
    })
}

/// Mann–Whitney statistic kept in integer form: `twice_u = 2·U` where ties
/// count one half.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankStatistic {
    pub twice_u: u128,
    pub num_pos: usize,
    pub num_neg: usize,
}

impl RankStatistic {
    pub fn auc(&self) -> f64 {
        self.twice_u as f64 / (2.0 * self.num_pos as f64 * self.num_neg as f64)
    }
}

/// Rank statistic for "positives score higher"; `O((P + N) log(P + N))`.
pub fn rank_statistic(pos: &[f64], neg: &[f64]) -> Result<RankStatistic> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "AUC needs positive and negative scores, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    if !math::all_finite(pos) || !math::all_finite(neg) {
        return Err(Error::NonFinite {
            context: "verification scores".into(),
        });
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // For each tie group: every positive beats all negatives below the group
    // and ties with the negatives inside it.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let group_pos = all[i..j].iter().filter(|x| x.1).count() as u128;
        let group_neg = (j - i) as u128 - group_pos;
        twice_u += group_pos * (2 * neg_below + group_neg);
        neg_below += group_neg;
        i = j;
    }
    Ok(RankStatistic {
        twice_u,
        num_pos: pos.len(),
        num_neg: neg.len(),
    })
}

pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    Ok(rank_statistic(pos, neg)?.auc())
}

/// ROC points from the strictest threshold to the loosest, tie groups taken
/// together. Starts at `(0, 0)` and ends at `(1, 1)`.
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (p, n) = (pos.len().max(1) as f64, neg.len().max(1) as f64);
    let mut roc = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        roc.push((fp as f64 / n, tp as f64 / p));
        i = j;
    }
    if roc.last() != Some(&(1.0, 1.0)) {
        roc.push((1.0, 1.0));
    }
    roc
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub num_pos: usize,
    pub num_neg: usize,
    pub pca_coords: Option<Vec<PcaPoint>>,
    pub geometry: Option<GeometryDiagnostics>,
}

impl EvaluationReport {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("auc,num_pos,num_neg");
        if self.geometry.is_some() {
            s.push_str(",pdm_radius,pdp_spread,fbv_residual");
        }
        s.push('\n');
        write!(s, "{:.12},{},{}", self.auc, self.num_pos, self.num_neg).unwrap();
        if let Some(g) = &self.geometry {
            write!(
                s,
                ",{},{},{}",
                fmt_opt(Some(g.pdm_radius)),
                fmt_opt(g.pdp_spread),
                fmt_opt(g.fbv_residual)
            )
            .unwrap();
        }
        s.push('\n');
        s
    }

    pub fn roc_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.roc {
            writeln!(s, "{f:.12},{t:.12}").unwrap();
        }
        s
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12}"))
}

/// Pair score: negative squared distance, so larger means more similar.
pub fn pair_score(a: &[f64], b: &[f64]) -> f64 {
    -sq_l2_dist_unchecked(a, b)
}

pub fn verification_auc(embeddings: &[Vec<f64>], pairs: &VerificationPairSet) -> Result<EvaluationReport> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &(i, j, same) in &pairs.pairs {
        let (a, b) = match (embeddings.get(i), embeddings.get(j)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "pair ({i}, {j}) references a missing embedding"
                )))
            }
        };
        crate::error::check_dims(a.len(), b.len())?;
        let s = pair_score(a, b);
        if same {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    let stat = rank_statistic(&pos, &neg)?;
    Ok(EvaluationReport {
        auc: stat.auc(),
        roc: roc_curve(&pos, &neg),
        num_pos: pos.len(),
        num_neg: neg.len(),
        pca_coords: None,
        geometry: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaPoint {
    pub pc1: f64,
    pub pc2: f64,
    pub class_id: usize,
    pub aux_label: usize,
}

/// First two principal coordinates of each embedding.
pub fn pca_points(embeddings: &[Vec<f64>], ds: &Dataset) -> Result<Vec<PcaPoint>> {
    crate::error::check_dims(ds.len(), embeddings.len())?;
    let k = embeddings.first().map_or(0, Vec::len).min(2);
    let pca = pca_project(embeddings, k)?;
    Ok(pca
        .projections
        .iter()
        .zip(ds.examples())
        .map(|(p, e)| PcaPoint {
            pc1: p[0],
            pc2: p.get(1).copied().unwrap_or(0.0),
            class_id: e.class_id,
            aux_label: e.aux_label,
        })
        .collect())
}

pub fn pca_csv(points: &[PcaPoint]) -> String {
    let mut s = String::from("pc1,pc2,class_id,aux_label\n");
    for p in points {
        writeln!(s, "{:.12},{:.12},{},{}", p.pc1, p.pc2, p.class_id, p.aux_label).unwrap();
    }
    s
}

/// Scatter plot: colour encodes the class, glyph shape the auxiliary label.
pub fn pca_svg(points: &[PcaPoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 640.0;
    const PAD: f64 = 40.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.pc1);
        x1 = x1.max(p.pc1);
        y0 = y0.min(p.pc2);
        y1 = y1.max(p.pc2);
    }
    let sx = if x1 > x0 { (W - 2.0 * PAD) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (H - 2.0 * PAD) / (y1 - y0) } else { 1.0 };
    let classes: BTreeSet<usize> = points.iter().map(|p| p.class_id).collect();
    let hue: BTreeMap<usize, f64> = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, 360.0 * i as f64 / classes.len().max(1) as f64))
        .collect();

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">PCA of embeddings (colour: class, shape: aux label)</text>"#).unwrap();
    for p in points {
        let cx = PAD + (p.pc1 - x0) * sx;
        let cy = H - PAD - (p.pc2 - y0) * sy;
        let fill = format!("hsl({:.1},70%,45%)", hue[&p.class_id]);
        let r = 5.0;
        let attrs = format!(
            r#"class="pt" data-class="{}" data-aux="{}" fill="{fill}" fill-opacity="0.8""#,
            p.class_id, p.aux_label
        );
        let glyph = match p.aux_label % 5 {
            0 => format!(r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r}" {attrs}/>"#),
            1 => format!(
                r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" {attrs}/>"#,
                cx - r,
                cy - r,
                2.0 * r,
                2.0 * r
            ),
            2 => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" {attrs}/>"#,
                cx,
                cy - r,
                cx - r,
                cy + r,
                cx + r,
                cy + r
            ),
            3 => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" {attrs}/>"#,
                cx,
                cy - r,
                cx + r,
                cy,
                cx,
                cy + r,
                cx - r,
                cy
            ),
            _ => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" {attrs}/>"#,
                cx,
                cy + r,
                cx - r,
                cy - r,
                cx + r,
                cy - r
            ),
        };
        s.push_str(&glyph);
        s.push('\n');
    }
    s.push_str("</svg>\n");
    s
}

/// Write `<stem>.csv` and `<stem>.svg`; returns the plotted points.
pub fn pca_export(embeddings: &[Vec<f64>], ds: &Dataset, stem: impl AsRef<Path>) -> Result<Vec<PcaPoint>> {
    let points = pca_points(embeddings, ds)?;
    let stem = stem.as_ref();
    std::fs::write(stem.with_extension("csv"), pca_csv(&points))?;
    std::fs::write(stem.with_extension("svg"), pca_svg(&points))?;
    Ok(points)
}

/// How closely embeddings follow the mini-cluster structure.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryDiagnostics {
    /// Mean distance of a point to its (class, aux) centroid, averaged over
    /// cells with at least two points.
    pub pdm_radius: f64,
    /// For each aux pair, the standard deviation across classes of the
    /// distance between the two mini-cluster centroids; averaged over pairs.
    pub pdp_spread: Option<f64>,
    /// Mean of `‖(centroid_b − centroid_a) − v_ab‖` over classes and aux pairs.
    pub fbv_residual: Option<f64>,
}

pub fn geometry_diagnostics(
    embeddings: &[Vec<f64>],
    ds: &Dataset,
    basis_magnitude: f64,
) -> Result<GeometryDiagnostics> {
    crate::error::check_dims(ds.len(), embeddings.len())?;
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut cells: BTreeMap<(usize, usize), Vec<&[f64]>> = BTreeMap::new();
    for (e, y) in ds.examples().iter().zip(embeddings) {
        crate::error::check_dims(dim, y.len())?;
        cells.entry((e.class_id, e.aux_label)).or_default().push(y);
    }
    let centroids: BTreeMap<(usize, usize), Vec<f64>> = cells
        .iter()
        .map(|(&k, pts)| {
            let mut c = vec![0.0; dim];
            for p in pts {
                math::add_scaled(&mut c, 1.0, p);
            }
            c.iter_mut().for_each(|v| *v /= pts.len() as f64);
            (k, c)
        })
        .collect();

    let radii: Vec<f64> = cells
        .iter()
        .filter(|(_, pts)| pts.len() >= 2)
        .map(|(k, pts)| {
            let c = &centroids[k];
            pts.iter().map(|p| sq_l2_dist_unchecked(p, c).sqrt()).sum::<f64>() / pts.len() as f64
        })
        .collect();
    let pdm_radius = mean(&radii).unwrap_or(0.0);

    let mut aux_by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(c, a) in centroids.keys() {
        aux_by_class.entry(c).or_default().push(a);
    }
    let k = ds.num_aux();
    let mut distances: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut residuals = Vec::new();
    let fbv_ok = k >= 1 && k - 1 <= dim;
    for (&c, auxes) in &aux_by_class {
        for (i, &a) in auxes.iter().enumerate() {
            for &b in &auxes[i + 1..] {
                let ca = &centroids[&(c, a)];
                let cb = &centroids[&(c, b)];
                distances
                    .entry((a, b))
                    .or_default()
                    .push(sq_l2_dist_unchecked(ca, cb).sqrt());
                if fbv_ok {
                    let v = basis_vector(a, b, k, dim, basis_magnitude)?;
                    let r: f64 = cb
                        .iter()
                        .zip(ca)
                        .zip(&v)
                        .map(|((y, x), v)| (y - x - v).powi(2))
                        .sum();
                    residuals.push(r.sqrt());
                }
            }
        }
    }
    let spreads: Vec<f64> = distances
        .values()
        .filter(|d| d.len() >= 2)
        .map(|d| {
            let m = mean(d).expect("non-empty");
            (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
        })
        .collect();
    Ok(GeometryDiagnostics {
        pdm_radius,
        pdp_spread: mean(&spreads),
        fbv_residual: mean(&residuals),
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}
