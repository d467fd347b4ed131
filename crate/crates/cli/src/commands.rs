use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mvn_core::data::manifest::Manifest;
use mvn_core::data::write_wav;
use mvn_core::models::{Model, ModelKind};
use mvn_core::numerics::Checkpoint;
use mvn_core::pipeline::{
    curve_csv, evaluate_sweep, train, DataSource, EvalReport, Experiment, GeneratedData, ManifestData, Split,
    SweepSpec, TrainState,
};
use mvn_core::room::{render_moving_source, render_noise_field};
use mvn_core::seed::{self, tag};

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::plot;
use crate::write_file;

fn manifest_header(cfg: &RunConfig, kind: &str, scheme: &str, channels: usize, shuffle: bool) -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    h.insert("set".into(), kind.into());
    h.insert("seed".into(), cfg.seed.to_string());
    h.insert("experiment".into(), cfg.experiment.clone());
    h.insert("scheme".into(), scheme.into());
    h.insert("channels".into(), channels.to_string());
    h.insert("per_frame_shuffle".into(), shuffle.to_string());
    h
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let factory = cfg.train_factory()?;
    let schedule = cfg.data_schedule()?;
    let shuffle = cfg.data_shuffle()?;
    let split = cfg.split()?;
    let stream = match split {
        Split::Train => tag::TRAIN,
        Split::Test => tag::TEST,
    };
    let mut data = Manifest::new(manifest_header(cfg, &cfg.data.split, &cfg.data.scheme, schedule.len(), shuffle));
    for i in 0..cfg.data.mixtures {
        let mut rng = seed::rng(cfg.seed, &[stream, i as u64]);
        data.recipes.push(factory.draw(&schedule, shuffle, split, &mut rng)?);
    }
    write_file(&out.join("dataset.manifest"), data.to_text().as_bytes())?;
    if cfg.data.validation_mixtures > 0 {
        let mut val = Manifest::new(manifest_header(cfg, "validation", &cfg.data.scheme, schedule.len(), shuffle));
        for i in 0..cfg.data.validation_mixtures {
            let mut rng = seed::rng(cfg.seed, &[tag::VALIDATION, i as u64]);
            val.recipes.push(factory.draw(&schedule, shuffle, Split::Train, &mut rng)?);
        }
        write_file(&out.join("validation.manifest"), val.to_text().as_bytes())?;
    }
    if cfg.data.write_wavs {
        let dir = out.join("wavs");
        std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        for (i, r) in data.recipes.iter().enumerate() {
            write_wav(&dir.join(format!("mix_{i:05}.wav")), &factory.render(r)?)?;
        }
    }
    eprintln!(
        "wrote {} mixtures ({} validation) to {}",
        cfg.data.mixtures,
        cfg.data.validation_mixtures,
        out.display()
    );
    Ok(())
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let mut room_cfg = cfg.clone();
    room_cfg.experiment = Experiment::Room.name().into();
    let factory = room_cfg.train_factory()?;
    let dir = out.join("scenes");
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let s = &cfg.simulate;
    for id in s.first_id..s.first_id + s.scenes as u64 {
        let scene = factory.scene_for(id, s.mics)?;
        write_file(&dir.join(format!("scene_{id:05}.txt")), scene.to_text().as_bytes())?;
        if s.render_wavs {
            let bank = &factory.bank;
            let speech = &bank.speech[id as usize % bank.speech.len()].samples;
            let noise = &bank.noise[id as usize % bank.noise.len()].samples;
            let wet = render_moving_source(&scene, speech)?;
            let field = render_noise_field(&scene, noise, &mut seed::rng(cfg.seed, &[tag::DIFFUSE, id]))?;
            write_wav(&dir.join(format!("scene_{id:05}_speech.wav")), &wet.channels)?;
            write_wav(&dir.join(format!("scene_{id:05}_noise.wav")), &field.channels)?;
        }
    }
    eprintln!("wrote {} scenes to {}", s.scenes, dir.display());
    Ok(())
}

fn read_manifest(path: &Path, experiment: &str) -> Result<Manifest, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let m = Manifest::parse(&text).map_err(|e| Failure::new("parse", format!("{}: {e}", path.display())))?;
    if let Ok(exp) = m.header_value("experiment") {
        if exp != experiment {
            return Err(Failure::new(
                "input",
                format!("{} was generated for the {exp} experiment, not {experiment}", path.display()),
            ));
        }
    }
    Ok(m)
}

pub fn train_cmd(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<(), Failure> {
    let tc = cfg.train_config()?;
    let manifests = match (&cfg.train.train_manifest, &cfg.train.validation_manifest) {
        (Some(t), Some(v)) => Some((read_manifest(t, &cfg.experiment)?, read_manifest(v, &cfg.experiment)?)),
        _ => None,
    };
    let state = match resume {
        Some(p) => Some(TrainState::from_checkpoint(&Checkpoint::load(p)?)?),
        None => None,
    };
    let factory = Arc::new(cfg.train_factory()?);
    let input_dim = factory.input_dim();
    let data: Box<dyn DataSource> = match manifests {
        Some((t, v)) => Box::new(ManifestData::new(factory, &tc, &t, &v)?),
        None => Box::new(GeneratedData::new(factory, &tc)?),
    };
    cfg.write_resolved(out)?;
    let state_path = out.join("state.ckpt");
    let curve_path = out.join("curve.csv");
    let mut hook = |s: &TrainState| -> mvn_core::Result<()> {
        let r = s.curve.last().expect("hook runs after an epoch");
        eprintln!(
            "epoch {}/{}: train {:.6} val {:.6} lr {:e}",
            r.epoch + 1,
            tc.epochs,
            r.train_loss,
            r.val_loss,
            r.lr
        );
        s.to_checkpoint().save(&state_path)?;
        std::fs::write(&curve_path, curve_csv(&s.curve))?;
        Ok(())
    };
    let outcome = train(&tc, data.as_ref(), input_dim, state, &mut hook)?;
    outcome.best.to_checkpoint().save(&out.join("model.ckpt"))?;
    outcome.state.to_checkpoint().save(&state_path)?;
    write_file(&curve_path, curve_csv(&outcome.state.curve).as_bytes())?;
    eprintln!(
        "best epoch {} (val {:.6}); wrote {}",
        outcome.best_epoch + 1,
        outcome.state.best_val,
        out.join("model.ckpt").display()
    );
    Ok(())
}

/// `path` or `path:kind`, the latter evaluating a network under another
/// fusion rule of its family.
fn load_model(spec: &str) -> Result<Model, Failure> {
    let (path, kind) = match spec.rsplit_once(':') {
        Some((p, k)) if ModelKind::parse(k).is_ok() => (p, Some(ModelKind::parse(k)?)),
        _ => (spec, None),
    };
    let path = PathBuf::from(path);
    let ckpt = Checkpoint::load(&path).map_err(|e| Failure::new(e.category(), format!("{}: {e}", path.display())))?;
    let model = Model::from_checkpoint(&ckpt)?;
    Ok(match kind {
        Some(k) => model.as_kind(k)?,
        None => model,
    })
}

pub fn eval_cmd(cfg: &RunConfig, out: &Path, checkpoints: &[String]) -> Result<(), Failure> {
    if checkpoints.is_empty() {
        return Err(Failure::usage("eval needs at least one --checkpoint"));
    }
    let models = checkpoints.iter().map(|c| load_model(c)).collect::<Result<Vec<_>, _>>()?;
    let factory = cfg.test_factory()?;
    let schemes = cfg.eval_schemes()?;
    let shuffle = cfg.eval_shuffle()?;
    cfg.write_resolved(out)?;
    let mut reports = Vec::new();
    for model in &models {
        for &scheme in &schemes {
            let mut spec = SweepSpec::new(scheme, cfg.eval.ks.clone(), cfg.eval.runs, cfg.eval.mixtures, cfg.seed);
            spec.per_frame_shuffle = shuffle;
            let r = evaluate_sweep(model, &factory, &spec)?;
            for a in &r.aggregates {
                eprintln!("{} {} K={}: {:.4} ± {:.4}", a.model, a.scheme, a.k, a.mean, a.std);
            }
            reports.push(r);
        }
    }
    let report = EvalReport::merge(reports)?;
    let with_model = models.iter().any(|m| m.kind != models[0].kind);
    write_file(&out.join("report.csv"), report.raw_csv(with_model).as_bytes())?;
    write_file(&out.join("aggregate.csv"), report.aggregate_csv(with_model).as_bytes())?;
    eprintln!("wrote {} rows to {}", report.rows.len(), out.join("report.csv").display());
    Ok(())
}

pub fn plot_cmd(reports: &[PathBuf], out: &Path) -> Result<(), Failure> {
    if reports.is_empty() {
        return Err(Failure::usage("plot needs at least one report CSV"));
    }
    let mut parsed = Vec::new();
    for p in reports {
        let text = std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
        let model = p.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        parsed.push(
            EvalReport::parse_raw_csv(&text, model)
                .map_err(|e| Failure::new("parse", format!("{}: {e}", p.display())))?,
        );
    }
    let report = EvalReport::merge(parsed)?;
    let charts = plot::schemes(&report.aggregates)
        .into_iter()
        .map(|s| Ok((plot::render_svg(&report.aggregates, &s)?, s)))
        .collect::<Result<Vec<_>, Failure>>()?;
    for (svg, scheme) in charts {
        let path = out.join(format!("accuracy_{scheme}.svg"));
        write_file(&path, svg.as_bytes())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

