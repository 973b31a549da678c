use std::fs;
use std::path::{Path, PathBuf};

use stcast_core::baselines::{ArimaOptions, ArimaOrder};
use stcast_core::eval::{compare_report, Domain, ForecastRun, Scope, DEFAULT_HIT_THRESHOLD};
use stcast_core::grid::CrimeCube;
use stcast_core::pipeline::{baseline_runs, test_truth, BaselineSettings};

use super::{join, load_prepared, write_cube, Stats};
use crate::config::Config;
use crate::error::CliError;

fn arima_order(s: &str) -> Result<Option<ArimaOrder>, CliError> {
    if s == "off" {
        return Ok(None);
    }
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| CliError::Usage(format!("bad arima order `{s}` (p,d,q or off)"))))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [p, d, q] => Ok(Some(ArimaOrder { p, d, q })),
        _ => Err(CliError::Usage(format!("bad arima order `{s}` (p,d,q or off)"))),
    }
}

fn domain_dir(d: Domain) -> &'static str {
    match d {
        Domain::Cumulative => "cumulative",
        Domain::Raw => "raw",
    }
}

pub fn baselines(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let dir = cfg.require_input("data")?;
    let defaults = BaselineSettings::default();
    let knn_candidates: Vec<usize> = cfg.list("knn_candidates", &join(&defaults.knn_candidates))?;
    let arima: String = cfg.get("arima", "2,0,1".to_string())?;
    let settings = BaselineSettings {
        knn_candidates,
        arima: arima_order(&arima)?,
        arima_refit_every: cfg.get("arima_refit_every", defaults.arima_refit_every)?,
        arima_options: ArimaOptions {
            max_iter: cfg.get("arima_max_iter", defaults.arima_options.max_iter)?,
            ..defaults.arima_options
        },
    };
    cfg.finish()?;
    let (prep, _) = load_prepared(&dir)?;
    let b = baseline_runs(&prep, &settings)?;
    for run in &b.runs {
        write_cube(&run.predictions, &out.join("forecasts").join(&run.method).join(domain_dir(run.domain)))?;
    }
    Ok(vec![
        ("stat.knn_k_cumulative".into(), b.knn_k.0.to_string()),
        ("stat.knn_k_raw".into(), b.knn_k.1.to_string()),
        ("stat.arima_failures".into(), b.arima_failures.to_string()),
        ("stat.arima_unconverged".into(), b.arima_unconverged.to_string()),
    ])
}

fn parse_scope(s: &str) -> Result<Scope, CliError> {
    if s == "all" {
        return Ok(Scope::All);
    }
    let bad = || CliError::Usage(format!("bad scope `{s}` (all or row,col)"));
    let (r, c) = s.split_once(',').ok_or_else(bad)?;
    Ok(Scope::Cell { row: r.trim().parse().map_err(|_| bad())?, col: c.trim().parse().map_err(|_| bad())? })
}

/// Method directories under each forecasts root, in root order and then by
/// name.
fn method_dirs(roots: &[PathBuf]) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for root in roots {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for d in dirs {
            let name = d.file_name().expect("directory entry").to_string_lossy().into_owned();
            if out.iter().any(|(n, _)| *n == name) {
                return Err(CliError::Usage(format!("method `{name}` appears in more than one forecasts root")));
            }
            out.push((name, d));
        }
    }
    Ok(out)
}

pub fn evaluate(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let dir = cfg.require_input("data")?;
    let roots = cfg.input_list("forecasts")?;
    let scope: String = cfg.get("scope", "all".to_string())?;
    let threshold: f64 = cfg.get("threshold", DEFAULT_HIT_THRESHOLD)?;
    cfg.finish()?;
    let scope = parse_scope(&scope)?;
    if roots.is_empty() {
        return Err(CliError::Usage("missing required key `forecasts`".into()));
    }
    if let Some(r) = roots.iter().find(|r| !r.is_dir()) {
        return Err(CliError::Usage(format!("forecasts root {} is not a directory", r.display())));
    }
    let (prep, _) = load_prepared(&dir)?;
    let (cum_truth, raw_truth) = test_truth(&prep);
    let mut runs = Vec::new();
    for (method, mdir) in method_dirs(&roots)? {
        for (domain, truth) in [(Domain::Cumulative, &cum_truth), (Domain::Raw, &raw_truth)] {
            let predictions = CrimeCube::read_dir(&mdir.join(domain_dir(domain)))?;
            runs.push(ForecastRun { method: method.clone(), predictions, truth: truth.clone(), domain });
        }
    }
    let report = compare_report(&runs, scope, threshold)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    let text = report.to_text();
    fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(vec![("stat.methods".into(), (runs.len() / 2).to_string())])
}
