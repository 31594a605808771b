use geoembed_cli::experiment::{self, AuxTreatment, RunSpec, Runner};
use geoembed_cli::{DataSource, ExperimentConfig};
use geoembed_core::data::SyntheticSpec;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        data: DataSource::Synthetic(SyntheticSpec {
            num_classes: 10,
            examples_per_class: 8,
            num_aux: 2,
            latent_dim: 4,
            input_dim: 8,
            ..SyntheticSpec::default()
        }),
        split: (6, 2, 2),
        embed_dim: 6,
        hidden: vec![16],
        recipes: vec!["TL_S".into(), "TL_PDP_FBV_E".into()],
        seeds: vec![1, 2, 3, 4, 5],
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 3;
    cfg.train.batches_per_epoch = 4;
    cfg.train.batch_size = 32;
    cfg.train.val_tuples = 64;
    cfg
}

#[test]
fn matrix_has_one_row_per_recipe_and_seed() {
    let mut runner = Runner::new(small());
    let t = experiment::run_method_matrix(&mut runner);
    assert_eq!(t.rows.len(), 10);
    assert!(t.rows.iter().all(|r| r.ok()));
    assert!(t.rows.iter().all(|r| r.auc.is_some_and(|a| (0.0..=1.0).contains(&a))));
    assert_eq!(t.aggregates().len(), 2);
}

#[test]
fn identical_config_gives_identical_csv() {
    let a = experiment::run_method_matrix(&mut Runner::new(small())).to_csv();
    let b = experiment::run_method_matrix(&mut Runner::new(small())).to_csv();
    assert_eq!(a, b);
}

#[test]
fn re_treatment_only_permutes_labels() {
    let cfg = small();
    let s = experiment::prepare_splits(&cfg, 1).unwrap();
    let re = experiment::apply_treatment(&s.train, AuxTreatment::ShuffleWithinClass, 1).unwrap();
    assert_eq!(re.aux_histograms(), s.train.aux_histograms());
    for (x, y) in s.train.examples().iter().zip(re.examples()) {
        assert_eq!(x.features, y.features);
        assert_eq!(x.class_id, y.class_id);
    }
    let mut runner = Runner::new(cfg);
    let t = experiment::run_re_control(&mut runner);
    assert_eq!(t.labels(), vec!["TL_S", "TL_PDM_FBV_E", "TL_PDM_FBV_E_RE"]);
    assert_eq!(t.rows.len(), 15);
}

#[test]
fn corruption_sweep_contracts() {
    let cfg = small();
    let mut runner = Runner::new(cfg.clone());
    let matrix = experiment::run_method_matrix(&mut runner);
    let t = experiment::run_corruption_sweep(&mut runner, &[0.0, 1.0]).unwrap();
    assert_eq!(t.labels()[0], "TL_S");
    for &s in &cfg.seeds {
        assert_eq!(t.auc_for("TL_PDP_FBV_E@flip=0", s), matrix.auc_for("TL_PDP_FBV_E", s));
    }
    // the cache is not what makes flip 0 agree: recompute without it
    let fresh = experiment::run_corruption_sweep(&mut Runner::new(cfg.clone()), &[0.0]).unwrap();
    let spec = RunSpec {
        treatment: AuxTreatment::Corrupt(0.0),
        ..RunSpec::plain("TL_PDP_FBV_E")
    };
    let run = experiment::train_run(&cfg, &spec, 2).unwrap();
    let ev = experiment::evaluate(&cfg, &run.model, &run.splits.test, 2).unwrap();
    assert_eq!(Some(ev.auc), fresh.auc_for("TL_PDP_FBV_E@flip=0", 2));
    // K=2 and flip 1 is a deterministic relabelling that still trains
    assert!(t.rows_for("TL_PDP_FBV_E@flip=1").all(|r| r.ok()));
    assert!(experiment::run_corruption_sweep(&mut runner, &[1.5]).is_err());
}

#[test]
fn size_sweep_counts_and_bounds() {
    let mut cfg = small();
    cfg.seeds = vec![1, 2];
    let sizes = [1_000, 10_000, 100_000];
    let recipes = vec!["TL_S".to_string()];
    let mut runner = Runner::new(cfg);
    let t = experiment::run_size_sweep(&mut runner, &recipes, &sizes).unwrap();
    assert_eq!(t.rows.len(), 3 * 2);
    assert!(t.rows.iter().all(|r| r.auc.is_some_and(|a| a.is_finite() && (0.0..=1.0).contains(&a))));
    let specs = experiment::size_specs(&recipes, &sizes);
    assert_eq!(experiment::size_csv(&t, &specs).lines().count(), 7);
    assert!(experiment::size_plot(&t, &specs).contains("<polyline"));
    assert!(experiment::run_size_sweep(&mut runner, &recipes, &[10, 5]).is_err());
}

#[test]
fn failures_are_recorded_per_row() {
    let mut cfg = small();
    cfg.recipes = vec!["TL_S".into(), "TL_FBV_S".into(), "NOPE".into()];
    cfg.seeds = vec![1];
    let t = experiment::run_method_matrix(&mut Runner::new(cfg));
    assert_eq!(t.rows.len(), 3);
    assert!(t.rows[0].ok());
    assert!(t.rows[1].error.as_deref().unwrap().contains("Euclidean"));
    assert!(!t.rows[2].ok());
    let csv = t.to_csv();
    assert!(csv.contains("\nNOPE,1,,,,,,\n"));
    assert!(t.summary("m").contains("failed runs"));
}

#[test]
fn timing_is_opt_in() {
    let mut cfg = small();
    cfg.seeds = vec![1];
    cfg.recipes = vec!["TL_S".into()];
    let t = experiment::run_method_matrix(&mut Runner::new(cfg.clone()));
    assert!(t.rows[0].runtime_s.is_none());
    cfg.timing = true;
    let t = experiment::run_method_matrix(&mut Runner::new(cfg));
    assert!(t.rows[0].runtime_s.is_some());
}
