use std::process::Command;

const CONFIG: &str = "\
data.num_classes=10
data.examples_per_class=8
data.num_aux=2
data.latent_dim=4
data.input_dim=8
split.train=6
split.val=2
split.test=2
model.embed_dim=6
model.hidden=16
train.epochs=2
train.batches_per_epoch=3
train.batch_size=16
train.val_tuples=32
experiment.recipes=TL_S,TL_PDM_FBV_E
experiment.seeds=1,2
";

fn geoembed(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_geoembed")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn verbs_write_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    std::fs::write(&cfg, CONFIG).unwrap();
    let c = cfg.to_str().unwrap();
    let out = |name: &str| dir.path().join(name);
    let o = |name: &str| out(name).to_str().unwrap().to_string();

    geoembed(&["matrix", "--config", c, "--out", &o("m")]);
    let results = std::fs::read_to_string(out("m/results.csv")).unwrap();
    assert!(results.starts_with("recipe,seed,auc,best_epoch,runtime_s,pdm_radius,pdp_spread,fbv_residual\n"));
    assert_eq!(results.lines().count(), 5);
    let manifest = std::fs::read_to_string(out("m/manifest.txt")).unwrap();
    for f in ["results.csv", "results_summary.txt", "config.txt", "logs/TL_S_seed1.csv"] {
        assert!(manifest.contains(&format!("  {f}\n")), "{f} missing from manifest");
    }

    geoembed(&["train", "--config", c, "--seed", "2", "--recipe", "TL_S", "--out", &o("t")]);
    let model = o("t/model.txt");
    geoembed(&["eval", "--config", c, "--seed", "2", "--model", &model, "--out", &o("e")]);
    assert_eq!(
        std::fs::read(out("t/report.csv")).unwrap(),
        std::fs::read(out("e/report.csv")).unwrap()
    );
    geoembed(&["pca-plot", "--config", c, "--seed", "2", "--model", &model, "--out", &o("p")]);
    assert!(out("p/pca.svg").exists() && out("p/pca.csv").exists());

    geoembed(&["generate", "--config", c, "--out", &o("g")]);
    assert!(std::fs::read_to_string(out("g/features.txt")).unwrap().starts_with("#geoembed v1"));

    geoembed(&["re-control", "--config", c, "--seed", "1", "--out", &o("r")]);
    geoembed(&["corruption-sweep", "--config", c, "--seed", "1", "--flip-probs", "0,0.5", "--out", &o("c")]);
    assert_eq!(std::fs::read_to_string(out("c/auc_vs_flip.csv")).unwrap().lines().count(), 3);
    geoembed(&["size-sweep", "--config", c, "--seed", "1", "--sizes", "20,40", "--out", &o("s")]);
    assert!(out("s/auc_vs_size.svg").exists());
    geoembed(&["matrix", "--config", c, "--seed", "1", "--margin-sweep", "--set", "experiment.margins=0.5,1", "--out", &o("ms")]);
    assert_eq!(std::fs::read_to_string(out("ms/margin_sweep.csv")).unwrap().lines().count(), 5);
}

#[test]
fn bad_config_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "train.epochs=3\ntrain.nonsense=1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_geoembed"))
        .args(["matrix", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
