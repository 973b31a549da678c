use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use stcast_core::nnet::{
    build_model, grad_check, load_checkpoint, model_from_bytes, random_batch, save_checkpoint, Dataset, Model,
    ModelConfig, TrainConfig, FLOAT_MAGIC,
};
use stcast_core::pipeline::{forecast_network, Prepared};
use stcast_core::ternary::{save_ternary_checkpoint, ternary_model_from_bytes, train_ternary, TERNARY_MAGIC};

use super::{lags, load_prepared, train_config, variant, write_cube, Stats};
use crate::config::Config;
use crate::error::CliError;
use crate::heatmap::emit_heatmap;

/// Model settings read from the config; the grid comes from the data.
struct ModelKeys {
    config: ModelConfig,
    use_ext: bool,
}

fn model_keys(cfg: &mut Config) -> Result<ModelKeys, CliError> {
    let config = ModelConfig {
        variant: variant(cfg)?,
        filters: cfg.require("filters")?,
        residual_units: cfg.require("residual_units")?,
        height: 0,
        width: 0,
        lags: lags(cfg)?,
        ext_dim: 0,
        ext_hidden: cfg.get("ext_hidden", 10)?,
        batch_norm: cfg.get("batch_norm", false)?,
    };
    let use_ext = cfg.get("ext", true)?;
    Ok(ModelKeys { config, use_ext })
}

/// Loaded signals plus the dataset for a model configuration.
fn dataset(prep: &Prepared, features: Option<&stcast_core::ingest::FeatureTable>, config: &ModelConfig) -> Result<Dataset, CliError> {
    let features = if config.ext_dim > 0 {
        Some(features.ok_or_else(|| CliError::Data("model uses external features but the data has none".into()))?)
    } else {
        None
    };
    Ok(prep.dataset(features, config.lags.clone())?)
}

/// Builds a fresh model for the data, or loads `init` if given.
fn initial_model(cfg: &mut Config, prep: &Prepared, has_features: bool) -> Result<(Model, u64), CliError> {
    let keys = model_keys(cfg)?;
    let init = cfg.input_path("init")?;
    let seed: u64 = cfg.get("seed", 0)?;
    let model = match init {
        Some(path) => load_checkpoint(&path)?,
        None => {
            let mut mc = keys.config;
            mc.height = prep.scaled.rows;
            mc.width = prep.scaled.cols;
            if keys.use_ext && has_features {
                mc.ext_dim = stcast_core::ingest::FEATURE_WIDTH;
            }
            build_model(&mc, seed)?
        }
    };
    if (model.config.height, model.config.width) != (prep.scaled.rows, prep.scaled.cols) {
        return Err(CliError::Data(format!(
            "model grid {}x{} does not match the data's {}x{}",
            model.config.height, model.config.width, prep.scaled.rows, prep.scaled.cols
        )));
    }
    Ok((model, seed))
}

fn history_csv(phases: &[(&str, &[f64], &[f64])]) -> String {
    let mut s = String::from("phase,epoch,train_loss,val_mse\n");
    for (phase, loss, val) in phases {
        for (i, l) in loss.iter().enumerate() {
            let v = val.get(i).map(f64::to_string).unwrap_or_default();
            writeln!(s, "{phase},{i},{l},{v}").unwrap();
        }
    }
    s
}

struct TrainSetup {
    data: Dataset,
    model: Model,
    tc: TrainConfig,
    samples: Vec<usize>,
}

fn train_setup(cfg: &mut Config) -> Result<TrainSetup, CliError> {
    let dir = cfg.require_input("data")?;
    let (prep, features) = load_prepared(&dir)?;
    let (model, _) = initial_model(cfg, &prep, features.is_some())?;
    let tc = train_config(cfg)?;
    cfg.finish()?;
    let data = dataset(&prep, features.as_ref(), &model.config)?;
    let samples = prep.train_samples(&model.config.lags);
    Ok(TrainSetup { data, model, tc, samples })
}

pub fn train(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let TrainSetup { mut model, data, tc, samples, .. } = train_setup(cfg)?;
    let hist = stcast_core::nnet::train(&mut model, &data, &samples, &tc)?;
    save_checkpoint(&model, &out.join("model.ckpt"))?;
    fs::write(
        out.join("history.csv"),
        history_csv(&[("main", &hist.train_loss, &hist.val_mse), ("finetune", &hist.finetune_loss, &[])]),
    )?;
    Ok(vec![
        ("stat.parameters".into(), model.param_count().to_string()),
        ("stat.samples".into(), samples.len().to_string()),
        ("stat.best_epoch".into(), hist.best_epoch.map(|e| e.to_string()).unwrap_or_default()),
    ])
}

pub fn ternarize(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let TrainSetup { mut model, data, tc, samples, .. } = train_setup(cfg)?;
    let (state, hist) = train_ternary(&mut model, &data, &samples, &tc)?;
    save_ternary_checkpoint(&model, &state, &out.join("model.strt"))?;
    fs::write(
        out.join("history.csv"),
        history_csv(&[("main", &hist.train_loss, &hist.val_mse), ("finetune", &hist.finetune_loss, &[])]),
    )?;
    let zero_layers = state.ternary.iter().filter(|t| t.k == 0).count();
    Ok(vec![
        ("stat.ternary_layers".into(), state.ternary.len().to_string()),
        ("stat.zero_layers".into(), zero_layers.to_string()),
        ("stat.best_epoch".into(), hist.best_epoch.map(|e| e.to_string()).unwrap_or_default()),
    ])
}

/// Loads a float or ternary checkpoint by its magic. Returns the model and
/// whether it is ternary.
fn load_any(path: &Path) -> Result<(Model, bool), CliError> {
    let bytes = fs::read(path)?;
    match bytes.get(..4) {
        Some(m) if m == FLOAT_MAGIC => Ok((model_from_bytes(&bytes)?, false)),
        Some(m) if m == TERNARY_MAGIC => Ok((ternary_model_from_bytes(&bytes)?, true)),
        _ => Err(CliError::Data(format!("{}: not a checkpoint (bad magic at byte 0)", path.display()))),
    }
}

pub fn predict(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let dir = cfg.require_input("data")?;
    let ckpt = cfg.require_input("checkpoint")?;
    let method: Option<String> = cfg.opt("method")?;
    let heatmaps: usize = cfg.get("heatmaps", 24)?;
    cfg.finish()?;
    let (prep, features) = load_prepared(&dir)?;
    let (model, ternary) = load_any(&ckpt)?;
    let method = method.unwrap_or_else(|| if ternary { "ST-ResNet-ternary" } else { "ST-ResNet" }.to_string());
    if method.is_empty() || method.contains(['/', '\\']) || method.starts_with('.') {
        return Err(CliError::Usage(format!("bad method name `{method}`")));
    }
    let data = dataset(&prep, features.as_ref(), &model.config)?;
    let fc = forecast_network(&model, &data, &prep, prep.test_range())?;
    let mdir = out.join("forecasts").join(&method);
    write_cube(&fc.cumulative, &mdir.join("cumulative"))?;
    write_cube(&fc.raw, &mdir.join("raw"))?;
    let hdir = mdir.join("heatmaps");
    if hdir.exists() {
        fs::remove_dir_all(&hdir)?;
    }
    fs::create_dir_all(&hdir)?;
    for t in 0..heatmaps.min(fc.cumulative.hours) {
        let name = format!("hour_{:05}.pgm", t);
        emit_heatmap(fc.cumulative.frame(t), fc.cumulative.rows, fc.cumulative.cols, &hdir.join(name))?;
    }
    Ok(vec![
        ("stat.method".into(), method),
        ("stat.hours".into(), fc.cumulative.hours.to_string()),
        ("stat.first_hour".into(), fc.cumulative.start_hour.to_string()),
    ])
}

pub fn gradcheck(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let keys = model_keys(cfg)?;
    let mut mc = keys.config;
    mc.height = cfg.require("rows")?;
    mc.width = cfg.require("cols")?;
    mc.ext_dim = if keys.use_ext { cfg.get("ext_dim", stcast_core::ingest::FEATURE_WIDTH)? } else { 0 };
    let seed: u64 = cfg.get("seed", 0)?;
    let batch_n: usize = cfg.get("batch", 2)?;
    let eps: f64 = cfg.get("eps", 1e-5)?;
    let l2: f64 = cfg.get("l2", 1e-3)?;
    let per_tensor: usize = cfg.get("per_tensor", 32)?;
    let tolerance: f64 = cfg.get("tolerance", 1e-4)?;
    cfg.finish()?;
    let mut model = build_model(&mc, seed)?;
    let batch = random_batch(&mc, batch_n, seed.wrapping_add(1));
    let report = grad_check(&mut model, &batch, eps, l2, per_tensor, seed)?;
    let mut csv = String::from("tensor,checked,kinks,max_rel\n");
    for t in &report.tensors {
        writeln!(csv, "{},{},{},{:e}", t.name, t.checked, t.kinks, t.max_rel).unwrap();
    }
    fs::write(out.join("gradcheck.csv"), csv)?;
    println!("max relative error {:e} over {} tensors", report.max_rel, report.tensors.len());
    if !(report.max_rel < tolerance) {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:e} >= {tolerance:e}",
            report.max_rel
        )));
    }
    Ok(vec![("stat.max_rel".into(), format!("{:e}", report.max_rel))])
}
