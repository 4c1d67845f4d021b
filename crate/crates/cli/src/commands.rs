use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use superclt::model::FiniteTypeModel;
use superclt::par::{with_threads, Execution};
use superclt::simulate::{simulate_ensemble, SimConfig};
use superclt::spectral::CRITICAL_TOL;
use superclt::verify::{
    first_basis, merge_reports, parse_selector, run_verification, VerificationReport, VerifyConfig, DEFAULT_LEVEL,
};
use superclt::{classify, decompose, derive_coefficients, load_model, Error, LimitContext, Result, SpectralDecomposition};

use crate::manifest::{config_hash, now, RunManifest, MANIFEST_FILE, VERSION};
use crate::render::{limits_csv, paths_csv, SpectrumView};
use crate::{
    Basis, Failure, FunctionArgs, LimitsArgs, ReportArgs, SimulateArgs, SpectrumArgs, VerifyArgs, THREADS_ENV,
};

fn read_config(path: &Path) -> Result<(String, FiniteTypeModel)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let model = load_model(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok((text, model))
}

fn output_dir(out: &Option<PathBuf>) -> Result<Option<&Path>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Some(dir.as_path()))
        }
        None => Ok(None),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

/// `--threads`, else the environment override, else rayon's default.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        _ => Ok(None),
    }
}

fn execution(threads: Option<usize>) -> Execution {
    if threads == Some(1) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Resolve an optional coefficient list in the requested basis.
fn function_coeffs(d: &SpectralDecomposition, given: &Option<Vec<f64>>, basis: Basis, name: &str) -> Result<Option<Vec<f64>>> {
    let Some(values) = given else {
        return Ok(None);
    };
    if values.len() != d.n_types() {
        return Err(Error::Config(format!(
            "--{name} has {} entries, the model has {} types",
            values.len(),
            d.n_types()
        )));
    }
    Ok(Some(match basis {
        Basis::Eigen => values.clone(),
        Basis::Values => d.project(values).coeffs,
    }))
}

struct Functions {
    f: Option<Vec<f64>>,
    h: Option<Vec<f64>>,
    g: Option<Vec<f64>>,
}

impl Functions {
    fn resolve(d: &SpectralDecomposition, args: &FunctionArgs) -> Result<Self> {
        Ok(Functions {
            f: function_coeffs(d, &args.f, args.basis, "f")?,
            h: function_coeffs(d, &args.h_fn, args.basis, "h-fn")?,
            g: function_coeffs(d, &args.g, args.basis, "g")?,
        })
    }
}

pub(crate) fn spectrum(args: SpectrumArgs) -> std::result::Result<(), Failure> {
    let started = now();
    let (text, model) = read_config(&args.config)?;
    let d = decompose(&model)?;
    let tol = args.tol.unwrap_or(CRITICAL_TOL);
    let classification = if d.supercritical { Some(classify(&d, tol)?) } else { None };
    let view = SpectrumView::new(model.name.as_deref(), &d, classification.as_ref());
    let json = to_json(&view);
    let table = view.table();
    print!("{json}{table}");
    if let Some(dir) = output_dir(&args.out)? {
        let mut manifest = RunManifest::new("spectrum", config_hash(&text, &format!("tol={tol:e}")), None, started);
        manifest.write_output(dir, "spectrum.json", &json)?;
        manifest.write_output(dir, "spectrum.txt", &table)?;
        manifest.finish(dir)?;
    }
    Ok(())
}

pub(crate) fn limits(args: LimitsArgs) -> std::result::Result<(), Failure> {
    let started = now();
    let (text, model) = read_config(&args.config)?;
    let d = decompose(&model)?;
    let c = classify(&d, CRITICAL_TOL)?;
    let derived = derive_coefficients(&model);
    let fns = Functions::resolve(&d, &args.functions)?;
    let f = fns.f.map(|v| d.function(v)).unwrap_or_else(|| first_basis(&d, &c.small));
    let h = fns.h.map(|v| d.function(v)).unwrap_or_else(|| first_basis(&d, &c.critical));
    let g = fns.g.map(|v| d.function(v)).unwrap_or_else(|| d.basis(0));
    let q = args
        .q
        .unwrap_or_else(|| derived.k.max(-2.0 * d.lambda_1()).floor() + 1.0);
    let ctx = LimitContext::new(&d, &c, &derived.big_a);
    let cov = ctx.limit_covariance_matrix(&f, &h, &g, &args.taus, q, derived.k)?;
    let doc = json!({
        "model": model.name,
        "q": q,
        "k": derived.k,
        "basis": "eigen",
        "f": f.coeffs,
        "h": h.coeffs,
        "g": g.coeffs,
        "limit": cov,
    });
    let json = to_json(&doc);
    let csv = limits_csv(&cov);
    match output_dir(&args.out)? {
        Some(dir) => {
            let settings = json!({"taus": args.taus, "q": q, "f": f.coeffs, "h": h.coeffs, "g": g.coeffs}).to_string();
            let mut manifest = RunManifest::new("limits", config_hash(&text, &settings), None, started);
            manifest.write_output(dir, "limits.json", &json)?;
            manifest.write_output(dir, "limits.csv", &csv)?;
            manifest.finish(dir)?;
            print!("{csv}");
        }
        None => print!("{json}"),
    }
    Ok(())
}

pub(crate) fn simulate(args: SimulateArgs) -> std::result::Result<(), Failure> {
    let started = now();
    let (text, model) = read_config(&args.config)?;
    let d = decompose(&model)?;
    let mut grid = args.grid.clone();
    if let Some(horizon) = args.horizon {
        if grid.iter().any(|&t| t > horizon + 1e-12) {
            return Err(Error::Config(format!("grid extends past --horizon {horizon}")).into());
        }
        if grid.last().is_none_or(|&t| (t - horizon).abs() > 1e-12) {
            grid.push(horizon);
        }
    }
    if grid.is_empty() {
        return Err(Error::Config("give --grid, --horizon or both".into()).into());
    }
    let mu0 = model.initial_mass()?.to_vec();
    let cfg = SimConfig::new(args.scheme, args.h, grid, args.seed, mu0);
    let threads = thread_count(args.threads)?;
    let ensemble = with_threads(threads, || {
        simulate_ensemble(&model, &d, &cfg, args.replicas, execution(threads))
    })?;
    let csv = paths_csv(&ensemble);
    match output_dir(&args.out)? {
        Some(dir) => {
            let config_echo: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            let meta = json!({
                "version": VERSION,
                "config": config_echo,
                "simulation": cfg,
                "replicas": args.replicas,
            });
            let settings = json!({"simulation": SimConfig { seed: 0, ..cfg.clone() }}).to_string();
            let mut manifest = RunManifest::new("simulate", config_hash(&text, &settings), Some(args.seed), started);
            manifest.write_output(dir, "paths.csv", &csv)?;
            manifest.write_output(dir, "paths.meta.json", &to_json(&meta))?;
            manifest.finish(dir)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub(crate) fn verify(args: VerifyArgs) -> std::result::Result<(), Failure> {
    let started = now();
    let (text, model) = read_config(&args.config)?;
    let d = decompose(&model)?;
    let c = classify(&d, CRITICAL_TOL)?;
    let mut cfg = VerifyConfig::for_model(&model, &d, &c)?;
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(taus) = args.taus {
        cfg.taus = taus;
    }
    if let Some(q) = args.q {
        cfg.q = q;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    cfg.seed = args.seed;
    cfg.level = args.level.unwrap_or(DEFAULT_LEVEL);
    cfg.tests = parse_selector(&args.tests)?;
    cfg.scheme = args.scheme;
    cfg.h = args.step;
    cfg.decay_t = args.decay_t;
    let fns = Functions::resolve(&d, &args.functions)?;
    cfg.f = fns.f;
    cfg.h_fn = fns.h;
    cfg.g = fns.g;

    let threads = thread_count(args.threads)?;
    let report = with_threads(threads, || run_verification(&model, &cfg, execution(threads)))?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = output_dir(&args.out)? {
        let settings = serde_json::to_string(&VerifyConfig { seed: 0, replicas: 0, ..cfg.clone() })
            .expect("config serializes");
        let mut manifest = RunManifest::new("verify", config_hash(&text, &settings), Some(cfg.seed), started);
        manifest.write_output(dir, "report.json", &(report.to_json() + "\n"))?;
        manifest.write_output(dir, "report.txt", &table)?;
        manifest.write_output(dir, "report.csv", &report.to_csv())?;
        manifest.finish(dir)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::VerifyFailed)
    }
}

fn empty_report() -> VerificationReport {
    VerificationReport {
        model: None,
        t: 0.0,
        taus: Vec::new(),
        q: 0.0,
        level: DEFAULT_LEVEL,
        replicas: 0,
        seeds: Vec::new(),
        rows: Vec::new(),
        notes: vec!["no input reports".into()],
    }
}

pub(crate) fn report(args: ReportArgs) -> std::result::Result<(), Failure> {
    let started = now();
    let mut reports = Vec::new();
    let mut hash: Option<(String, PathBuf)> = None;
    for input in &args.inputs {
        let dir = if input.is_dir() {
            input.clone()
        } else {
            input.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        if !dir.join(MANIFEST_FILE).exists() {
            return Err(Error::ManifestMismatch(format!("{} has no {MANIFEST_FILE}", dir.display())).into());
        }
        let manifest = RunManifest::load(&dir)?;
        if manifest.subcommand != "verify" && manifest.subcommand != "report" {
            return Err(Error::ManifestMismatch(format!(
                "{} was written by `{}`, not `verify`",
                dir.display(),
                manifest.subcommand
            ))
            .into());
        }
        match &hash {
            Some((h, first)) if *h != manifest.config_hash => {
                return Err(Error::ManifestMismatch(format!(
                    "config hash of {} differs from {}",
                    dir.display(),
                    first.display()
                ))
                .into());
            }
            Some(_) => {}
            None => hash = Some((manifest.config_hash.clone(), dir.clone())),
        }
        reports.push(VerificationReport::from_json(&manifest.read_verified(&dir, "report.json")?)?);
    }
    let merged = merge_reports(&reports)?.unwrap_or_else(empty_report);
    let table = merged.to_table();
    print!("{table}");
    if let Some(dir) = output_dir(&args.out)? {
        let config_hash = hash.map(|(h, _)| h).unwrap_or_default();
        let mut manifest = RunManifest::new("report", config_hash, None, started);
        manifest.write_output(dir, "report.json", &(merged.to_json() + "\n"))?;
        manifest.write_output(dir, "report.txt", &table)?;
        manifest.write_output(dir, "report.csv", &merged.to_csv())?;
        manifest.finish(dir)?;
    }
    if merged.passed() {
        Ok(())
    } else {
        Err(Failure::VerifyFailed)
    }
}
