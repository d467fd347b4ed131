use std::collections::BTreeMap;
use std::sync::Arc;

use mvn_core::data::manifest::Manifest;
use mvn_core::data::{BankSpec, Scheme};
use mvn_core::models::ModelKind;
use mvn_core::pipeline::{
    evaluate_sweep, train, EvalReport, ExampleFactory, Experiment, GeneratedData, ManifestData, Oracle, SweepSpec,
    TrainConfig,
};

fn tiny(kind: ModelKind) -> TrainConfig {
    let mut cfg = TrainConfig::desk(kind);
    cfg.hidden = 5;
    cfg.epochs = 3;
    cfg.batches_per_epoch = 2;
    cfg.batch_size = 3;
    cfg.validation_size = 3;
    cfg
}

fn factory(experiment: Experiment) -> Arc<ExampleFactory> {
    let bank = BankSpec { seed: 8, speech: 5, noise: 4 }.build();
    Arc::new(ExampleFactory::new(Arc::new(bank), experiment).unwrap())
}

fn manifest(recipes: Vec<mvn_core::data::MixtureRecipe>) -> Manifest {
    let mut m = Manifest::new(BTreeMap::new());
    m.recipes = recipes;
    Manifest::parse(&m.to_text()).unwrap()
}

#[test]
fn manifests_train_the_same_model_as_generated_data() {
    let f = factory(Experiment::Simple);
    for kind in [ModelKind::Mvn, ModelKind::AvgOutput] {
        let cfg = tiny(kind);
        let generated = GeneratedData::new(f.clone(), &cfg).unwrap();
        let train_m = manifest(generated.train_recipes().unwrap());
        let val_m = manifest(generated.validation_recipes().unwrap());
        let from_files = ManifestData::new(f.clone(), &cfg, &train_m, &val_m).unwrap();

        let a = train(&cfg, &generated, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        let b = train(&cfg, &from_files, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        assert_eq!(a.best, b.best, "{kind}");
        assert_eq!(a.state.curve, b.state.curve, "{kind}");
        let lowest = a.state.curve.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.state.curve[a.best_epoch].val_loss, lowest);
    }
}

#[test]
fn trained_model_sweeps_and_reports_round_trip() {
    let f = factory(Experiment::Simple);
    let cfg = tiny(ModelKind::Mvn);
    let data = GeneratedData::new(f.clone(), &cfg).unwrap();
    let out = train(&cfg, &data, f.input_dim(), None, &mut |_| Ok(())).unwrap();
    let spec = SweepSpec::new(Scheme::Decreasing, vec![1, 2, 7], 2, 2, 4);
    let report = evaluate_sweep(&out.best, &f, &spec).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.aggregates.len(), 3);
    assert!(report.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    let again = EvalReport::parse_raw_csv(&report.raw_csv(false), "mvn").unwrap();
    assert_eq!(again.aggregate_csv(false), report.aggregate_csv(false));

    let oracle = evaluate_sweep(&Oracle, &f, &spec).unwrap();
    assert!(oracle.rows.iter().all(|r| r.accuracy == 1.0));
}

#[test]
fn room_experiment_trains_and_evaluates() {
    let f = factory(Experiment::Room);
    let mut cfg = tiny(ModelKind::AvgInput);
    cfg.epochs = 1;
    cfg.per_frame_shuffle = false;
    let data = GeneratedData::new(f.clone(), &cfg).unwrap();
    let out = train(&cfg, &data, f.input_dim(), None, &mut |_| Ok(())).unwrap();
    let mut spec = SweepSpec::new(Scheme::Increasing, vec![2, 3], 1, 2, 6);
    spec.per_frame_shuffle = false;
    let a = evaluate_sweep(&out.best, &f, &spec).unwrap();
    let b = evaluate_sweep(&out.best, &f, &spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 2);
}
