//! Subcommand bodies. Each takes the resolved config and a sink for its records.

use std::path::{Path, PathBuf};

use privehd::data::{self, gen_image_like, gen_synthetic, split, Dataset, ImageSpec, SyntheticSpec};
use privehd::format::{read_model, write_model};
use privehd::hwsim::{hw_encode_binary, lut_cost, sign_agreement, HwMode, TieBreakTable};
use privehd::privacy::{dp_release, dp_train_pipeline, DpConfig, PrivacyParams};
use privehd::quant::obfuscate_query;
use privehd::reconstruction::{
    breach_report, crosstalk_std, fidelity, fidelity_best_gain, recover_features, to_pgm, BreachInput,
};
use privehd::rng::derive_seed;
use privehd::{DimensionMask, Encoder, EncodingConfig, EncodingVariant, Labeled, Model, QuantScheme};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{epsilon_value, AttackMode, DataKind, EvalSet, Grid, RunConfig};
use crate::error::CliError;
use crate::output::Sink;

type Res<T = ()> = Result<T, CliError>;

pub fn run(cfg: &RunConfig, sink: &mut Sink) -> Res {
    match cfg.command {
        "train" => train(cfg, sink),
        "predict" => predict(cfg, sink),
        "retrain" => retrain(cfg, sink),
        "prune" => prune(cfg, sink),
        "dp-train" => dp_train(cfg, sink),
        "attack" => attack(cfg, sink),
        "hw-sim" => hw_sim(cfg, sink),
        "sweep" => sweep(cfg, sink),
        "gen-data" => gen_data(cfg, sink),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

fn generate(cfg: &RunConfig) -> Res<Dataset> {
    Ok(match cfg.data_kind {
        DataKind::Synthetic => gen_synthetic(&SyntheticSpec {
            num_classes: cfg.classes,
            d_iv: cfg.features,
            samples_per_class: cfg.samples_per_class,
            cluster_std: cfg.cluster_std,
            seed: cfg.seeds.data,
        })?,
        DataKind::Image => gen_image_like(&ImageSpec {
            num_classes: cfg.classes,
            side: cfg.side,
            samples_per_class: cfg.samples_per_class,
            seed: cfg.seeds.data,
        })?,
    })
}

/// Adds the file name to io failures.
fn at_path<T>(path: &Path, r: privehd::Result<T>) -> Res<T> {
    r.map_err(|e| match e {
        privehd::Error::Io(e) => CliError::Io(format!("{}: {e}", path.display())),
        privehd::Error::Parse { .. } => CliError::Config(format!("{}: {e}", path.display())),
        other => other.into(),
    })
}

fn read_model_at(path: &Path) -> Res<Model> {
    at_path(path, read_model(path))
}

fn load(cfg: &RunConfig) -> Res<Dataset> {
    match &cfg.data {
        Some(path) => at_path(path, data::load_csv(path)),
        None => generate(cfg),
    }
}

fn load_split(cfg: &RunConfig) -> Res<(Dataset, Dataset)> {
    let ds = load(cfg)?;
    Ok(split(&ds, cfg.train_fraction, cfg.seeds.split)?)
}

fn encoding_config(cfg: &RunConfig, ds: &Dataset, d_hv: usize, scheme: QuantScheme) -> EncodingConfig {
    EncodingConfig {
        seed: cfg.seeds.codebook,
        d_iv: ds.d_iv(),
        d_hv,
        levels: cfg.levels,
        variant: cfg.encoding,
        scheme,
        range: ds.range,
    }
}

fn fit(config: EncodingConfig, classes: usize, encoded: &[Labeled]) -> Res<Model> {
    Ok(Model::train(config, classes, encoded.iter().map(|(h, l)| (h, *l)))?)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Res<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn save(model: &Model, cfg: &RunConfig) -> Res {
    if let Some(path) = &cfg.out {
        at_path(path, write_model(model, path))?;
    }
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Res<Model> {
    read_model_at(required(&cfg.model, "model")?)
}

/// The evaluation set for a saved model plus the training split.
fn eval_sets(cfg: &RunConfig) -> Res<(Dataset, Dataset)> {
    let ds = load(cfg)?;
    let (tr, te) = split(&ds, cfg.train_fraction, cfg.seeds.split)?;
    Ok(match cfg.eval {
        EvalSet::Test => (tr, te),
        EvalSet::All => (tr, ds),
    })
}

fn check_model_data(model: &Model, ds: &Dataset) -> Res {
    if model.config().d_iv != ds.d_iv() || model.num_classes() < ds.num_classes {
        return Err(CliError::Config(format!(
            "model expects {} features and {} classes, data has {} and {}",
            model.config().d_iv,
            model.num_classes(),
            ds.d_iv(),
            ds.num_classes
        )));
    }
    Ok(())
}

fn train(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let (tr, te) = load_split(cfg)?;
    let encoder = Encoder::new(encoding_config(cfg, &tr, cfg.d_hv, cfg.scheme))?;
    let (etr, ete) = (tr.encode(&encoder)?, te.encode(&encoder)?);
    let mut model = fit(*encoder.config(), tr.num_classes, &etr)?;
    let mut mispredicts = Vec::new();
    for _ in 0..cfg.epochs {
        mispredicts.push(model.retrain_epoch(&etr)?);
    }
    sink.record(
        "train",
        &json!({
            "train_samples": tr.len(),
            "test_samples": te.len(),
            "train_accuracy": model.accuracy(&etr)?,
            "test_accuracy": model.accuracy(&ete)?,
            "centroid_accuracy": data::nearest_centroid_accuracy(&tr, &te)?,
            "retrain_mispredicts": mispredicts,
        }),
    )?;
    save(&model, cfg)
}

fn predict(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let model = load_model(cfg)?;
    let (_, eval) = eval_sets(cfg)?;
    check_model_data(&model, &eval)?;
    let encoder = Encoder::new(*model.config())?;
    let encoded = eval.encode(&encoder)?;
    let queries: Vec<_> = encoded.iter().map(|(h, _)| h.clone()).collect();
    let predicted = model.predict_batch(&queries)?;
    let correct = predicted.iter().zip(&eval.labels).filter(|(p, l)| p == l).count();
    sink.record(
        "predict",
        &json!({
            "samples": eval.len(),
            "correct": correct,
            "accuracy": correct as f64 / eval.len() as f64,
            "predictions": predicted,
        }),
    )
}

fn retrain(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let mut model = load_model(cfg)?;
    let (tr, eval) = eval_sets(cfg)?;
    check_model_data(&model, &tr)?;
    let encoder = Encoder::new(*model.config())?;
    let (etr, eev) = (tr.encode(&encoder)?, eval.encode(&encoder)?);
    for epoch in 1..=cfg.epochs {
        let mispredicts = model.retrain_epoch(&etr)?;
        sink.record("retrain", &json!({ "epoch": epoch, "mispredicts": mispredicts, "accuracy": model.accuracy(&eev)? }))?;
    }
    save(&model, cfg)
}

fn prune(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let mut model = load_model(cfg)?;
    let (tr, eval) = eval_sets(cfg)?;
    check_model_data(&model, &tr)?;
    let encoder = Encoder::new(*model.config())?;
    let (etr, eev) = (tr.encode(&encoder)?, eval.encode(&encoder)?);
    let before = model.accuracy(&eev)?;
    let mask = model.prune(cfg.prune)?;
    sink.record(
        "prune",
        &json!({
            "epoch": 0,
            "prune_percent": cfg.prune,
            "masked_dims": mask.count_masked(),
            "accuracy_unpruned": before,
            "accuracy": model.accuracy(&eev)?,
        }),
    )?;
    for epoch in 1..=cfg.epochs {
        let mispredicts = model.retrain_epoch(&etr)?;
        sink.record("prune", &json!({ "epoch": epoch, "mispredicts": mispredicts, "accuracy": model.accuracy(&eev)? }))?;
    }
    save(&model, cfg)
}

fn dp_config(cfg: &RunConfig, tr: &Dataset, d_hv: usize, epsilon: f64, noise_seed: u64) -> DpConfig {
    DpConfig {
        encoding: encoding_config(cfg, tr, d_hv, cfg.scheme),
        prune_percent: cfg.prune,
        retrain_epochs: cfg.epochs,
        epsilon,
        delta: cfg.delta,
        noise_seed,
    }
}

#[derive(Serialize)]
struct DpRecord {
    #[serde(serialize_with = "ser_eps")]
    epsilon: f64,
    delta: f64,
    sigma: f64,
    delta_f: f64,
    noise_std: f64,
    d_hv: usize,
    kept_dims: usize,
    scheme: String,
    sensitivity_l1: f64,
    sensitivity_approximate: bool,
    noise_seed: u64,
    test_accuracy: f64,
}

fn ser_eps<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    epsilon_value(*v).serialize(s)
}

fn dp_point(cfg: &RunConfig, tr: &Dataset, te: &Dataset, d_hv: usize, epsilon: f64, noise_seed: u64) -> Res<(Model, DpRecord)> {
    let dc = dp_config(cfg, tr, d_hv, epsilon, noise_seed);
    let out = dp_train_pipeline(tr, &dc)?;
    let encoded = te.encode(&Encoder::new(dc.encoding)?)?;
    let record = DpRecord {
        epsilon,
        delta: cfg.delta,
        sigma: out.params.sigma,
        delta_f: out.params.delta_f,
        noise_std: if epsilon.is_finite() { out.params.noise_std() } else { 0.0 },
        d_hv,
        kept_dims: out.model.mask().count_kept(),
        scheme: out.sensitivity.scheme.clone(),
        sensitivity_l1: out.sensitivity.l1,
        sensitivity_approximate: out.sensitivity.approximate,
        noise_seed,
        test_accuracy: out.model.accuracy(&encoded)?,
    };
    Ok((out.model, record))
}

fn dp_train(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let (tr, te) = load_split(cfg)?;
    let (model, record) = dp_point(cfg, &tr, &te, cfg.d_hv, cfg.epsilon, cfg.seeds.noise)?;
    sink.record("dp-train", &record)?;
    save(&model, cfg)
}

fn pgm_dump(cfg: &RunConfig, name: &str, values: &[f64], max_value: f64) -> Res {
    let Some(dir) = &cfg.pgm_dir else { return Ok(()) };
    let width = (values.len() as f64).sqrt().round() as usize;
    if width * width != values.len() {
        return Err(CliError::Config(format!("{} features do not form a square image", values.len())));
    }
    std::fs::create_dir_all(dir)?;
    let text = to_pgm(values, width, max_value.round().clamp(1.0, u16::MAX as f64) as u16)?;
    std::fs::write(dir.join(format!("{name}.pgm")), text)?;
    Ok(())
}

fn attack(cfg: &RunConfig, sink: &mut Sink) -> Res {
    match cfg.attack {
        AttackMode::Query => attack_query(cfg, sink),
        AttackMode::Adjacent => attack_adjacent(cfg, sink),
    }
}

fn attack_query(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let ds = load(cfg)?;
    let original = ds
        .samples
        .get(cfg.sample)
        .ok_or_else(|| CliError::Config(format!("sample {} out of range ({} samples)", cfg.sample, ds.len())))?;
    let encoder = Encoder::new(encoding_config(cfg, &ds, cfg.d_hv, QuantScheme::NONE))?;
    let max_value = ds.range.max;
    let h = encoder.encode_raw(original)?;
    let mask = DimensionMask::random_fraction(cfg.d_hv, cfg.mask, cfg.seeds.noise)?;
    let q = obfuscate_query(&h, cfg.scheme, ds.d_iv(), &mask)?;
    pgm_dump(cfg, "original", original, max_value)?;
    for (target, query, scheme) in [("plain", &h, QuantScheme::NONE), ("obfuscated", &q, cfg.scheme)] {
        let report = breach_report(BreachInput::Query(query), &encoder, original, max_value)?;
        let gain = fidelity_best_gain(original, &report.recovered, max_value)?;
        let max_abs_error = original.iter().zip(&report.recovered).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pgm_dump(cfg, target, &report.recovered, max_value)?;
        sink.record(
            "attack",
            &json!({
                "target": target,
                "sample": cfg.sample,
                "source": report.source,
                "scheme": scheme.to_string(),
                "masked_dims": mask.count_masked(),
                "d_hv": report.d_hv,
                "mse": report.mse,
                "psnr_db": report.psnr_db,
                "psnr_db_best_gain": gain.psnr_db,
                "max_abs_error": max_abs_error,
            }),
        )?;
    }
    Ok(())
}

fn attack_adjacent(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let (tr, _) = load_split(cfg)?;
    let original = tr
        .samples
        .get(cfg.sample)
        .ok_or_else(|| CliError::Config(format!("sample {} out of range ({} training samples)", cfg.sample, tr.len())))?
        .clone();
    let (with, without, encoder) = if let Some(path) = &cfg.model {
        let with = read_model_at(path)?;
        let without = read_model_at(required(&cfg.model_without, "model-without")?)?;
        let encoder = Encoder::new(*with.config())?;
        (with, without, encoder)
    } else {
        let encoder = Encoder::new(encoding_config(cfg, &tr, cfg.d_hv, cfg.scheme))?;
        let encoded = tr.encode(&encoder)?;
        let mut with = fit(*encoder.config(), tr.num_classes, &encoded)?;
        let rest: Vec<Labeled> =
            encoded.iter().enumerate().filter(|&(i, _)| i != cfg.sample).map(|(_, s)| s.clone()).collect();
        let mut without = fit(*encoder.config(), tr.num_classes, &rest)?;
        if cfg.epsilon.is_finite() {
            let delta_f = privehd::privacy::sensitivity_report(tr.d_iv(), cfg.d_hv, cfg.scheme, cfg.encoding == EncodingVariant::Level)?.l2;
            for (i, m) in [&mut with, &mut without].into_iter().enumerate() {
                let params = PrivacyParams::calibrated(cfg.epsilon, cfg.delta, delta_f, derive_seed(cfg.seeds.noise, i as u64))?;
                dp_release(m, params)?;
            }
        }
        (with, without, encoder)
    };
    let max_value = tr.range.max;
    let report = breach_report(BreachInput::AdjacentModels { with: &with, without: &without }, &encoder, &original, max_value)?;
    pgm_dump(cfg, "original", &original, max_value)?;
    pgm_dump(cfg, "adjacent", &report.recovered, max_value)?;
    let max_abs_error = original.iter().zip(&report.recovered).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // scale of the scalar-decode cross-talk, in feature units
    let levels: Vec<f64> = encoder.levels_of(&original)?.iter().map(|&v| v as f64).collect();
    let crosstalk = (0..levels.len()).map(|m| crosstalk_std(&levels, m, with.d_hv())).fold(0.0, f64::max);
    let step = (tr.range.max - tr.range.min) / (encoder.config().levels - 1) as f64;
    sink.record(
        "attack",
        &json!({
            "target": "adjacent",
            "sample": cfg.sample,
            "class": report.class,
            "source": report.source,
            "scheme": report.scheme,
            "masked_dims": report.masked_dims,
            "d_hv": report.d_hv,
            "epsilon": epsilon_value(with.release().map_or(f64::INFINITY, |p| p.epsilon)),
            "mse": report.mse,
            "psnr_db": report.psnr_db,
            "max_abs_error": max_abs_error,
            "crosstalk_std_max": crosstalk * step,
        }),
    )
}

fn hw_sim(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let (tr, te) = load_split(cfg)?;
    let d_iv = tr.d_iv();
    for mode in [HwMode::Binary, HwMode::Ternary] {
        sink.record("lut-cost", &lut_cost(d_iv, mode)?)?;
    }
    for mode in [HwMode::Binary, HwMode::Ternary] {
        sink.record("agreement", &sign_agreement(mode, d_iv, cfg.columns, cfg.seeds.ties)?)?;
    }
    let mut ecfg = encoding_config(cfg, &tr, cfg.d_hv, QuantScheme::BINARY);
    ecfg.variant = EncodingVariant::Level;
    let encoder = Encoder::new(ecfg)?;
    let ties = TieBreakTable::generate(cfg.seeds.ties, d_iv, cfg.d_hv)?;
    let hw = |ds: &Dataset| -> Res<Vec<Labeled>> {
        ds.samples
            .par_iter()
            .zip(&ds.labels)
            .map(|(s, &l)| Ok((hw_encode_binary(&encoder.levels_of(s)?, encoder.codebook(), &ties)?, l)))
            .collect()
    };
    let (htr, hte) = (hw(&tr)?, hw(&te)?);
    let (etr, ete) = (tr.encode(&encoder)?, te.encode(&encoder)?);
    let exact = fit(ecfg, tr.num_classes, &etr)?.accuracy(&ete)?;
    let approx = fit(ecfg, tr.num_classes, &htr)?.accuracy(&hte)?;
    let (same, total) = htr.iter().zip(&etr).fold((0usize, 0usize), |(s, t), ((a, _), (b, _))| {
        (s + a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| x == y).count(), t + a.len())
    });
    sink.record(
        "hw-end-to-end",
        &json!({
            "d_iv": d_iv,
            "d_hv": cfg.d_hv,
            "exact_accuracy": exact,
            "hw_accuracy": approx,
            "gap_points": (exact - approx) * 100.0,
            "dimension_agreement": same as f64 / total as f64,
        }),
    )
}

fn sweep(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let (tr, te) = load_split(cfg)?;
    match cfg.grid {
        Grid::Dp => {
            let points: Vec<(f64, usize, usize)> = cfg
                .epsilons
                .iter()
                .flat_map(|&e| cfg.dims.iter().flat_map(move |&d| (0..cfg.trials).map(move |t| (e, d, t))))
                .collect();
            let rows: Vec<Res<(usize, DpRecord)>> = points
                .par_iter()
                .map(|&(e, d, t)| Ok((t, dp_point(cfg, &tr, &te, d, e, derive_seed(cfg.seeds.noise, t as u64))?.1)))
                .collect();
            for row in rows {
                let (trial, record) = row?;
                let mut v = serde_json::to_value(&record)?;
                v["trial"] = json!(trial);
                sink.record("sweep-dp", &v)?;
            }
        }
        Grid::Inference => {
            let rows: Vec<Res<Vec<serde_json::Value>>> = cfg.dims.par_iter().map(|&d| inference_rows(cfg, &tr, &te, d)).collect();
            let mut rows = rows.into_iter().collect::<Res<Vec<_>>>()?.into_iter().flatten().collect::<Vec<_>>();
            // grid order: scheme, then D_hv, then mask
            rows.sort_by_key(|r| (r["scheme_index"].as_u64(), r["d_hv"].as_u64(), r["mask_index"].as_u64()));
            for mut r in rows {
                let obj = r.as_object_mut().expect("object");
                obj.remove("scheme_index");
                obj.remove("mask_index");
                sink.record("sweep-inference", &r)?;
            }
        }
        Grid::Training => {
            let points: Vec<(QuantScheme, usize)> =
                cfg.schemes.iter().flat_map(|&s| cfg.dims.iter().map(move |&d| (s, d))).collect();
            let rows: Vec<Res<serde_json::Value>> = points
                .par_iter()
                .map(|&(s, d)| {
                    let encoder = Encoder::new(encoding_config(cfg, &tr, d, s))?;
                    let model = fit(*encoder.config(), tr.num_classes, &tr.encode(&encoder)?)?;
                    Ok(json!({ "scheme": s.to_string(), "d_hv": d, "test_accuracy": model.accuracy(&te.encode(&encoder)?)? }))
                })
                .collect();
            for r in rows {
                sink.record("sweep-training", &r?)?;
            }
        }
    }
    Ok(())
}

/// Test samples scored for PSNR in the inference grid.
const PSNR_SAMPLES: usize = 8;

fn inference_rows(cfg: &RunConfig, tr: &Dataset, te: &Dataset, d_hv: usize) -> Res<Vec<serde_json::Value>> {
    let encoder = Encoder::new(encoding_config(cfg, tr, d_hv, QuantScheme::NONE))?;
    let model = fit(*encoder.config(), tr.num_classes, &tr.encode(&encoder)?)?;
    let raw = te.encode_raw(&encoder)?;
    let max_value = te.range.max;
    let mut rows = Vec::new();
    for (si, &scheme) in cfg.schemes.iter().enumerate() {
        for (mi, &m) in cfg.masks.iter().enumerate() {
            let mask = DimensionMask::random_fraction(d_hv, m, derive_seed(cfg.seeds.noise, mi as u64))?;
            let queries = raw.iter().map(|(h, _)| obfuscate_query(h, scheme, te.d_iv(), &mask)).collect::<Result<Vec<_>, _>>()?;
            let predicted = model.predict_batch(&queries)?;
            let correct = predicted.iter().zip(&te.labels).filter(|(p, l)| p == l).count();
            let n = PSNR_SAMPLES.min(te.len());
            let mut psnr = 0.0;
            for (q, x) in queries.iter().zip(&te.samples).take(n) {
                psnr += fidelity(x, &recover_features(q, &encoder)?, max_value)?.psnr().min(100.0);
            }
            rows.push(json!({
                "scheme_index": si,
                "mask_index": mi,
                "scheme": scheme.to_string(),
                "d_hv": d_hv,
                "mask": m,
                "test_accuracy": correct as f64 / te.len() as f64,
                "psnr_db_mean": psnr / n as f64,
            }));
        }
    }
    Ok(rows)
}

fn gen_data(cfg: &RunConfig, sink: &mut Sink) -> Res {
    let out = required(&cfg.out, "out")?;
    let ds = generate(cfg)?;
    at_path(out, ds.write_csv(out))?;
    sink.record(
        "dataset",
        &json!({
            "name": ds.name,
            "samples": ds.len(),
            "d_iv": ds.d_iv(),
            "classes": ds.num_classes,
            "min": ds.range.min,
            "max": ds.range.max,
        }),
    )
}
