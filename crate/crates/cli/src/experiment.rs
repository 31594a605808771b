//! Multi-seed experiment runners and their result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use geoembed_core::data::{self, Splits, SplitSpec};
use geoembed_core::eval::{self, GeometryDiagnostics};
use geoembed_core::model::{Activation, CompositionNet, MlpNet, MlpSpec, ModelBundle, MtlHead};
use geoembed_core::training::{self, TrainLog};
use geoembed_core::{Dataset, LossRecipe, Rng, SpaceKind};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{io_err, CliError, Result};
use crate::plot;

const INIT_F_STREAM: u64 = 10;
const INIT_G_STREAM: u64 = 11;
const INIT_HEAD_STREAM: u64 = 12;
const TREATMENT_STREAM: u64 = 13;
const PAIRS_STREAM: u64 = 14;

/// What happens to the training set's auxiliary labels before training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AuxTreatment {
    Original,
    ShuffleWithinClass,
    Corrupt(f64),
}

/// One cell of an experiment: a recipe plus the knobs the sweeps vary.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub recipe: String,
    pub treatment: AuxTreatment,
    pub max_triplets: Option<usize>,
    /// Overrides the margin of the recipe's space.
    pub margin: Option<f64>,
}

impl RunSpec {
    pub fn plain(recipe: &str) -> Self {
        Self {
            recipe: recipe.to_string(),
            treatment: AuxTreatment::Original,
            max_triplets: None,
            margin: None,
        }
    }

    pub fn label(&self) -> String {
        let mut s = self.recipe.clone();
        match self.treatment {
            AuxTreatment::Original => {}
            AuxTreatment::ShuffleWithinClass => s.push_str("_RE"),
            AuxTreatment::Corrupt(p) => write!(s, "@flip={p}").unwrap(),
        }
        if let Some(n) = self.max_triplets {
            write!(s, "@triplets={n}").unwrap();
        }
        if let Some(m) = self.margin {
            write!(s, "@margin={m}").unwrap();
        }
        s
    }

    /// Corruption at probability zero is the identity, so it shares a cache slot
    /// with the untreated run.
    fn cache_key(&self, seed: u64) -> String {
        let mut canonical = self.clone();
        if canonical.treatment == AuxTreatment::Corrupt(0.0) {
            canonical.treatment = AuxTreatment::Original;
        }
        format!("{}#{seed}", canonical.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub label: String,
    pub seed: u64,
    pub auc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub runtime_s: Option<f64>,
    pub diagnostics: Option<GeometryDiagnostics>,
    pub error: Option<String>,
    pub log: Option<TrainLog>,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub label: String,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<RunRow>,
}

pub const RESULTS_HEADER: &str = "recipe,seed,auc,best_epoch,runtime_s,pdm_radius,pdp_spread,fbv_residual";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl ResultsTable {
    /// Labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.label) {
                out.push(r.label.clone());
            }
        }
        out
    }

    pub fn rows_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RunRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    pub fn aucs(&self, label: &str) -> Vec<f64> {
        self.rows_for(label).filter_map(|r| r.auc).collect()
    }

    pub fn auc_for(&self, label: &str, seed: u64) -> Option<f64> {
        self.rows_for(label).find(|r| r.seed == seed).and_then(|r| r.auc)
    }

    pub fn median_auc(&self, label: &str) -> Option<f64> {
        median(&self.aucs(label))
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        self.labels()
            .into_iter()
            .map(|label| {
                let aucs = self.aucs(&label);
                let failed = self.rows_for(&label).filter(|r| !r.ok()).count();
                Aggregate {
                    median: median(&aucs).unwrap_or(f64::NAN),
                    min: aucs.iter().copied().fold(f64::INFINITY, f64::min),
                    max: aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    succeeded: aucs.len(),
                    failed,
                    label,
                }
            })
            .collect()
    }

    pub fn extend(&mut self, other: ResultsTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{RESULTS_HEADER}\n");
        for r in &self.rows {
            let d = r.diagnostics.as_ref();
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.label,
                r.seed,
                opt6(r.auc),
                opt(r.best_epoch),
                r.runtime_s.map(|t| format!("{t:.3}")).unwrap_or_default(),
                opt6(d.map(|d| d.pdm_radius)),
                opt6(d.and_then(|d| d.pdp_spread)),
                opt6(d.and_then(|d| d.fbv_residual)),
            )
            .unwrap();
        }
        s
    }

    pub fn aggregates_csv(&self) -> String {
        let mut s = String::from("recipe,median_auc,min_auc,max_auc,succeeded,failed\n");
        for a in self.aggregates() {
            writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{},{}",
                a.label, a.median, a.min, a.max, a.succeeded, a.failed
            )
            .unwrap();
        }
        s
    }

    pub fn summary(&self, title: &str) -> String {
        let aggs = self.aggregates();
        let width = aggs.iter().map(|a| a.label.len()).max().unwrap_or(6).max(6);
        let mut s = format!("{title}\n\n");
        writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>8}  {:>4}", "recipe", "median", "min", "max", "runs").unwrap();
        for a in &aggs {
            writeln!(
                s,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>4}",
                a.label, a.median, a.min, a.max, a.succeeded
            )
            .unwrap();
        }
        let failures: Vec<&RunRow> = self.rows.iter().filter(|r| !r.ok()).collect();
        if !failures.is_empty() {
            s.push_str("\nfailed runs:\n");
            for r in failures {
                writeln!(s, "  {} seed {}: {}", r.label, r.seed, r.error.as_deref().unwrap_or("")).unwrap();
            }
        }
        s
    }
}

/// Dataset and split for one seed. Synthetic data is regenerated with
/// `data.seed + seed`, so different seeds see different worlds but every recipe
/// at a given seed sees the same one.
pub fn prepare_splits(cfg: &ExperimentConfig, seed: u64) -> Result<Splits> {
    let ds = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(seed);
            data::generate_synthetic(&spec)?
        }
        DataSource::File(path) => data::load_features(path)?,
    };
    let (train, val, test) = cfg.split;
    Ok(data::split_by_class(
        &ds,
        &SplitSpec {
            train,
            val,
            test,
            seed,
        },
    )?)
}

pub fn resolve_recipe(cfg: &ExperimentConfig, spec: &RunSpec) -> Result<LossRecipe> {
    let mut defaults = cfg.recipe_defaults;
    if let Some(m) = spec.margin {
        defaults.spherical_margin = m;
        defaults.euclidean_margin = m;
    }
    Ok(LossRecipe::from_name(&spec.recipe, &defaults)?)
}

/// Initial parameters depend only on the seed and the shapes, so recipes that
/// share a backbone start from the same weights.
pub fn init_model(cfg: &ExperimentConfig, recipe: &LossRecipe, input_dim: usize, num_aux: usize, seed: u64) -> Result<ModelBundle> {
    let root = Rng::new(seed);
    let mut widths = vec![input_dim];
    widths.extend(&cfg.hidden);
    widths.push(cfg.embed_dim);
    let f = MlpNet::new(MlpSpec::new(widths, Activation::Relu)?, &mut root.derive(INIT_F_STREAM))?;
    let g = if recipe.needs_composition() {
        Some(CompositionNet::new(cfg.embed_dim, num_aux, &mut root.derive(INIT_G_STREAM))?)
    } else {
        None
    };
    let head = if recipe.needs_head() {
        Some(MtlHead::new(cfg.embed_dim, num_aux, &mut root.derive(INIT_HEAD_STREAM))?)
    } else {
        None
    };
    Ok(ModelBundle {
        space: recipe.space,
        f,
        g,
        head,
    })
}

pub fn apply_treatment(ds: &Dataset, treatment: AuxTreatment, seed: u64) -> Result<Dataset> {
    let seed = Rng::new(seed).derive(TREATMENT_STREAM).next_u64();
    Ok(match treatment {
        AuxTreatment::Original => ds.clone(),
        AuxTreatment::ShuffleWithinClass => data::shuffle_aux_within_class(ds, seed),
        AuxTreatment::Corrupt(p) => data::corrupt_aux(ds, p, seed)?,
    })
}

pub struct TrainedRun {
    pub model: ModelBundle,
    pub log: TrainLog,
    pub splits: Splits,
}

pub fn train_run(cfg: &ExperimentConfig, spec: &RunSpec, seed: u64) -> Result<TrainedRun> {
    let recipe = resolve_recipe(cfg, spec)?;
    let splits = prepare_splits(cfg, seed)?;
    let train_ds = apply_treatment(&splits.train, spec.treatment, seed)?;
    let init = init_model(cfg, &recipe, train_ds.input_dim(), train_ds.num_aux(), seed)?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    tc.max_triplets = spec.max_triplets.or(tc.max_triplets);
    let out = training::train(init, &recipe, &train_ds, &splits.val, &tc)?;
    Ok(TrainedRun {
        model: out.model,
        log: out.log,
        splits,
    })
}

pub struct Evaluation {
    pub auc: f64,
    pub report: eval::EvaluationReport,
    pub embeddings: Vec<Vec<f64>>,
}

pub fn evaluate(cfg: &ExperimentConfig, model: &ModelBundle, test: &Dataset, seed: u64) -> Result<Evaluation> {
    let embeddings = model.embed_dataset(test)?;
    let pairs_seed = Rng::new(seed).derive(PAIRS_STREAM).next_u64();
    let pairs = eval::build_pairs(test, cfg.max_pairs, pairs_seed)?;
    let mut report = eval::verification_auc(&embeddings, &pairs)?;
    report.geometry = Some(eval::geometry_diagnostics(
        &embeddings,
        test,
        cfg.recipe_defaults.basis_magnitude,
    )?);
    Ok(Evaluation {
        auc: report.auc,
        report,
        embeddings,
    })
}

fn execute(cfg: &ExperimentConfig, spec: &RunSpec, seed: u64) -> RunRow {
    let start = Instant::now();
    let result = train_run(cfg, spec, seed).and_then(|run| {
        let ev = evaluate(cfg, &run.model, &run.splits.test, seed)?;
        Ok((run.log, ev))
    });
    let elapsed = start.elapsed().as_secs_f64();
    let mut row = RunRow {
        label: spec.label(),
        seed,
        auc: None,
        best_epoch: None,
        runtime_s: cfg.timing.then_some(elapsed),
        diagnostics: None,
        error: None,
        log: None,
    };
    match result {
        Ok((log, ev)) => {
            row.auc = Some(ev.auc);
            row.best_epoch = Some(log.best_epoch);
            row.diagnostics = ev.report.geometry;
            row.log = Some(log);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Executes runs on demand and remembers their results, so a baseline shared by
/// several experiments is trained once.
pub struct Runner {
    pub cfg: ExperimentConfig,
    cache: BTreeMap<String, RunRow>,
    progress: bool,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Self {
            cfg,
            cache: BTreeMap::new(),
            progress: false,
        }
    }

    /// Print one line per completed run to stderr.
    pub fn with_progress(mut self, on: bool) -> Self {
        self.progress = on;
        self
    }

    pub fn run(&mut self, spec: &RunSpec, seed: u64) -> RunRow {
        let key = spec.cache_key(seed);
        let mut row = match self.cache.get(&key) {
            Some(r) => r.clone(),
            None => {
                let r = execute(&self.cfg, spec, seed);
                if self.progress {
                    match (&r.auc, &r.error) {
                        (Some(a), _) => eprintln!("{} seed {}: auc {a:.4} (best epoch {})", r.label, seed, opt(r.best_epoch)),
                        (_, Some(e)) => eprintln!("{} seed {}: FAILED {e}", r.label, seed),
                        _ => {}
                    }
                }
                self.cache.insert(key, r.clone());
                r
            }
        };
        row.label = spec.label();
        row
    }

    pub fn run_all(&mut self, specs: &[RunSpec]) -> ResultsTable {
        let seeds = self.cfg.seeds.clone();
        let mut table = ResultsTable::default();
        for spec in specs {
            for &seed in &seeds {
                table.rows.push(self.run(spec, seed));
            }
        }
        table
    }
}

pub fn run_method_matrix(runner: &mut Runner) -> ResultsTable {
    let specs: Vec<RunSpec> = runner.cfg.recipes.iter().map(|r| RunSpec::plain(r)).collect();
    runner.run_all(&specs)
}

/// Baseline, the constrained recipe, and the constrained recipe trained on
/// within-class shuffled auxiliary labels.
pub fn run_re_control(runner: &mut Runner) -> ResultsTable {
    let re = runner.cfg.re_recipe.clone();
    let specs = vec![
        RunSpec::plain(&runner.cfg.baseline),
        RunSpec::plain(&re),
        RunSpec {
            treatment: AuxTreatment::ShuffleWithinClass,
            ..RunSpec::plain(&re)
        },
    ];
    runner.run_all(&specs)
}

pub fn size_specs(recipes: &[String], sizes: &[usize]) -> Vec<RunSpec> {
    recipes
        .iter()
        .flat_map(|r| {
            sizes.iter().map(move |&n| RunSpec {
                max_triplets: Some(n),
                ..RunSpec::plain(r)
            })
        })
        .collect()
}

pub fn run_size_sweep(runner: &mut Runner, recipes: &[String], sizes: &[usize]) -> Result<ResultsTable> {
    if sizes.is_empty() || sizes.contains(&0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Invalid("sizes must be positive and increasing".into()));
    }
    Ok(runner.run_all(&size_specs(recipes, sizes)))
}

/// The baseline comes first, then the constrained recipe at every flip probability.
pub fn run_corruption_sweep(runner: &mut Runner, flip_probs: &[f64]) -> Result<ResultsTable> {
    if flip_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CliError::Invalid("flip probabilities must lie in [0, 1]".into()));
    }
    let recipe = runner.cfg.constrained_recipe.clone();
    let mut specs = vec![RunSpec::plain(&runner.cfg.baseline)];
    specs.extend(flip_probs.iter().map(|&p| RunSpec {
        treatment: AuxTreatment::Corrupt(p),
        ..RunSpec::plain(&recipe)
    }));
    Ok(runner.run_all(&specs))
}

/// Every listed recipe at every margin.
pub fn run_margin_sweep(runner: &mut Runner, margins: &[f64]) -> Result<ResultsTable> {
    if margins.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(CliError::Invalid("margins must be positive".into()));
    }
    let specs: Vec<RunSpec> = runner
        .cfg
        .recipes
        .iter()
        .flat_map(|r| {
            margins.iter().map(move |&m| RunSpec {
                margin: Some(m),
                ..RunSpec::plain(r)
            })
        })
        .collect();
    Ok(runner.run_all(&specs))
}

/// `recipe,triplets,seed,auc` for a size sweep.
pub fn size_csv(table: &ResultsTable, specs: &[RunSpec]) -> String {
    let mut s = String::from("recipe,triplets,seed,auc\n");
    for spec in specs {
        for r in table.rows_for(&spec.label()) {
            writeln!(s, "{},{},{},{}", spec.recipe, opt(spec.max_triplets), r.seed, opt6(r.auc)).unwrap();
        }
    }
    s
}

/// Median-AUC curves per recipe against triplet count.
pub fn size_plot(table: &ResultsTable, specs: &[RunSpec]) -> String {
    let mut series: Vec<plot::Series> = Vec::new();
    for spec in specs {
        let Some(n) = spec.max_triplets else { continue };
        let Some(m) = table.median_auc(&spec.label()) else { continue };
        match series.iter_mut().find(|s| s.name == spec.recipe) {
            Some(s) => s.points.push((n as f64, m)),
            None => series.push(plot::Series {
                name: spec.recipe.clone(),
                points: vec![(n as f64, m)],
            }),
        }
    }
    plot::line_plot_svg(&series, "training triplets (log scale)", "median AUC", true)
}

pub fn corruption_csv(table: &ResultsTable, recipe: &str, flip_probs: &[f64]) -> String {
    let mut s = String::from("recipe,flip_prob,seed,auc\n");
    for &p in flip_probs {
        let label = RunSpec {
            treatment: AuxTreatment::Corrupt(p),
            ..RunSpec::plain(recipe)
        }
        .label();
        for r in table.rows_for(&label) {
            writeln!(s, "{recipe},{p},{},{}", r.seed, opt6(r.auc)).unwrap();
        }
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

/// `<name>.csv`, `<name>_aggregate.csv`, `<name>_summary.txt`, and one training
/// log per successful run under `logs/`.
pub fn write_table(dir: &Path, name: &str, title: &str, table: &ResultsTable) -> Result<()> {
    write_file(&dir.join(format!("{name}.csv")), &table.to_csv())?;
    write_file(&dir.join(format!("{name}_aggregate.csv")), &table.aggregates_csv())?;
    write_file(&dir.join(format!("{name}_summary.txt")), &table.summary(title))?;
    for r in &table.rows {
        if let Some(log) = &r.log {
            let file = format!("{}_seed{}.csv", sanitize(&r.label), r.seed);
            write_file(&dir.join("logs").join(file), &log.to_csv())?;
        }
    }
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Spaces used by the recipes of a config, in first-appearance order.
pub fn recipe_spaces(cfg: &ExperimentConfig) -> Result<Vec<(String, SpaceKind)>> {
    cfg.recipes
        .iter()
        .map(|r| Ok((r.clone(), resolve_recipe(cfg, &RunSpec::plain(r))?.space.kind)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(RunSpec::plain("TL_S").label(), "TL_S");
        let re = RunSpec {
            treatment: AuxTreatment::ShuffleWithinClass,
            ..RunSpec::plain("TL_PDM_FBV_E")
        };
        assert_eq!(re.label(), "TL_PDM_FBV_E_RE");
        let c = RunSpec {
            treatment: AuxTreatment::Corrupt(0.3),
            max_triplets: Some(1000),
            ..RunSpec::plain("TL_PDP_FBV_E")
        };
        assert_eq!(c.label(), "TL_PDP_FBV_E@flip=0.3@triplets=1000");
        let zero = RunSpec {
            treatment: AuxTreatment::Corrupt(0.0),
            ..RunSpec::plain("TL_S")
        };
        assert_eq!(zero.cache_key(3), RunSpec::plain("TL_S").cache_key(3));
    }

    #[test]
    fn median_and_aggregates() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let row = |label: &str, seed, auc| RunRow {
            label: label.into(),
            seed,
            auc,
            best_epoch: None,
            runtime_s: None,
            diagnostics: None,
            error: auc.is_none().then(|| "boom".to_string()),
            log: None,
        };
        let t = ResultsTable {
            rows: vec![row("A", 1, Some(0.9)), row("A", 2, Some(0.7)), row("A", 3, None), row("B", 1, Some(0.5))],
        };
        let a = &t.aggregates()[0];
        assert_eq!((a.median, a.min, a.max, a.succeeded, a.failed), (0.8, 0.7, 0.9, 2, 1));
        let csv = t.to_csv();
        assert!(csv.starts_with(RESULTS_HEADER));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("A,3,,,,,,\n"));
        assert!(t.summary("x").contains("A seed 3: boom"));
    }
}
