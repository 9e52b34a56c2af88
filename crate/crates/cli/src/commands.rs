use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use qdrisk::kernel::KernelSpec;
use qdrisk::mixture::{CovStructure, FitConfig};
use qdrisk::risk::{cv_unbiased_risk, CvConfig, CvEstimate};
use qdrisk::selection::{risk_curve, scan, standardize, Criterion, MPolicy, ScanConfig};
use qdrisk::simgen::{generate, run_experiment, ScenarioId, ScenarioSpec};
use qdrisk::tuning::{default_h_grid, log_grid, recommend_h, Recommendation, SdofReport};
use qdrisk::Dataset;
use serde::Serialize;
use serde_json::json;

use crate::input::read_csv;
use crate::manifest::{write_csv, write_json, write_table, RunManifest};
use crate::{CvArgs, DataArgs, ModelArgs, SdofArgs, SelectArgs, SimulateArgs};

pub enum Outcome {
    Complete,
    /// Some candidates or replications failed; results cover the rest.
    Partial,
}

struct Prepared {
    data: Dataset,
    scales: Option<Vec<f64>>,
    sha256: String,
}

fn prepare(args: &DataArgs) -> Result<Prepared> {
    let input = read_csv(&args.input, args.header)?;
    let (data, scales) = if args.standardize {
        let (d, s) = standardize(&input.data)?;
        (d, Some(s))
    } else {
        (input.data, None)
    };
    Ok(Prepared { data, scales, sha256: input.sha256 })
}

/// `auto` uses the sDOF recommendation on `data`.
fn resolve_h(spec: &str, data: &Dataset) -> Result<(f64, Option<Recommendation>)> {
    if spec.trim().eq_ignore_ascii_case("auto") {
        let rec = recommend_h(data, &default_h_grid())?;
        if !rec.in_range {
            log::warn!("no grid bandwidth has sdof in range; using h = {}", rec.recommended);
        }
        Ok((rec.recommended, Some(rec)))
    } else {
        let h: f64 = spec.trim().parse().with_context(|| format!("--h `{spec}` is neither `auto` nor a number"))?;
        Ok((h, None))
    }
}

fn resolve_cov(cov: &Option<String>, dim: usize) -> Result<CovStructure> {
    Ok(match cov {
        Some(s) => s.parse()?,
        None => CovStructure::default_for_dim(dim),
    })
}

fn scan_config(m: &ModelArgs, h: f64, data: &Dataset) -> Result<ScanConfig> {
    let mut cfg = ScanConfig::new(
        m.kmin,
        m.kmax,
        resolve_cov(&m.cov, data.dim())?,
        KernelSpec::gaussian(h, data.dim())?,
    );
    cfg.fit = FitConfig { restarts: m.restarts, seed: m.seed, ..FitConfig::default() };
    // standardization already happened at ingestion
    cfg.standardize = false;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn parse_criteria(list: &str) -> Result<Vec<Criterion>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let c: Criterion = item.parse()?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        bail!("--criteria names no criterion");
    }
    Ok(out)
}

pub fn select(a: SelectArgs) -> Result<Outcome> {
    let started = Utc::now();
    let criteria = parse_criteria(&a.criteria)?;
    let prep = prepare(&a.data)?;
    let (h, rec) = resolve_h(&a.model.h, &prep.data)?;
    let mut cfg = scan_config(&a.model, h, &prep.data)?;
    cfg.m_policy = a.m.map(MPolicy::Explicit);
    if criteria.contains(&Criterion::Cv) {
        let cv = CvConfig::v_fold(prep.data.len(), a.cv_folds, a.model.seed);
        cv.validate(prep.data.len())?;
        cfg.cv = Some(cv);
    }
    let mut result = scan(&prep.data, &cfg)?;
    result.scales = prep.scales.clone();

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("select", a.model.seed, started);
    manifest.input_sha256 = Some(prep.sha256);
    manifest.config = json!({
        "input": a.data.input,
        "header": a.data.header,
        "standardize": a.data.standardize,
        "h": h,
        "h_source": if rec.is_some() { "auto" } else { "flag" },
        "h_recommendation": rec,
        "criteria": criteria,
        "scan": cfg,
    });
    write_json(&a.out, "scan.json", &result, &mut manifest)?;
    write_csv(&a.out, "risk_curve.csv", &risk_curve(&result), &mut manifest)?;
    manifest.write(&a.out)?;

    println!("n = {}, D = {}, h = {h:.4}", result.n, result.dim);
    for c in &criteria {
        match result.decision(*c) {
            Some(k) => println!("{c}: k = {k}"),
            None => println!("{c}: none"),
        }
    }
    for f in &result.failures {
        eprintln!("k = {} failed: {}", f.k, f.reason);
    }
    Ok(if result.failures.is_empty() { Outcome::Complete } else { Outcome::Partial })
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        bail!("--h-grid must look like lo:hi:count, got `{spec}`");
    };
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad grid start `{lo}`"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad grid end `{hi}`"))?;
    let count: usize = count.trim().parse().with_context(|| format!("bad grid count `{count}`"))?;
    Ok(log_grid(lo, hi, count)?)
}

#[derive(Serialize)]
struct SdofRow {
    h: f64,
    sdof: f64,
    verdict: qdrisk::tuning::Verdict,
}

impl From<&SdofReport> for SdofRow {
    fn from(r: &SdofReport) -> Self {
        Self { h: r.h, sdof: r.sdof, verdict: r.verdict }
    }
}

pub fn sdof(a: SdofArgs) -> Result<Outcome> {
    let started = Utc::now();
    let grid = parse_grid(&a.h_grid)?;
    let prep = prepare(&a.data)?;
    let rec = recommend_h(&prep.data, &grid)?;
    let rows: Vec<SdofRow> = rec.reports.iter().map(SdofRow::from).collect();

    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    eprintln!(
        "acceptable sdof range [{}, {}]; recommended h = {}{}",
        rec.bounds.lower,
        rec.bounds.upper,
        rec.recommended,
        if rec.in_range { "" } else { " (no grid point in range)" }
    );

    if let Some(dir) = &a.out {
        out_dir(dir)?;
        let mut manifest = RunManifest::new("sdof", 0, started);
        manifest.input_sha256 = Some(prep.sha256);
        manifest.config = json!({
            "input": a.data.input,
            "header": a.data.header,
            "standardize": a.data.standardize,
            "h_grid": grid,
        });
        write_csv(dir, "sdof.csv", &rows, &mut manifest)?;
        write_json(dir, "recommendation.json", &rec, &mut manifest)?;
        manifest.write(dir)?;
    }
    Ok(Outcome::Complete)
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let started = Utc::now();
    let id: ScenarioId = a.model.parse()?;
    let spec = ScenarioSpec::new(id, a.n);
    let (h, rec) = if a.h.trim().eq_ignore_ascii_case("auto") {
        // pilot sample from a seed no replication uses
        let pilot = standardize(&generate(&spec, a.seed ^ 0x5eed_5eed)?)?.0;
        let rec = recommend_h(&pilot, &default_h_grid())?;
        (rec.recommended, Some(rec))
    } else {
        (a.h.trim().parse().with_context(|| format!("--h `{}` is neither `auto` nor a number", a.h))?, None)
    };
    let mut cfg = ScanConfig::new(
        a.kmin,
        a.kmax,
        resolve_cov(&a.cov, spec.dim())?,
        KernelSpec::gaussian(h, spec.dim())?,
    );
    cfg.fit.restarts = a.restarts;
    let table = run_experiment(&spec, a.reps, &cfg, a.seed)?;

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("simulate", a.seed, started);
    manifest.config = json!({
        "model": spec.id.to_string(),
        "n": a.n,
        "reps": a.reps,
        "h": h,
        "h_recommendation": rec,
        "scan": cfg,
    });
    let (header, rows) = table.rows();
    write_table(&a.out, "frequency.csv", &header, &rows, &mut manifest)?;
    write_json(&a.out, "frequency.json", &table, &mut manifest)?;
    manifest.write(&a.out)?;

    println!("{}", header.join(","));
    for r in &rows {
        println!("{}", r.join(","));
    }
    if table.failed > 0 {
        eprintln!("{} of {} replications failed", table.failed, a.reps);
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Complete)
}

#[derive(Serialize)]
struct CvRow {
    k: usize,
    estimate: Option<CvEstimate>,
    error: Option<String>,
}

fn cv_config(a: &CvArgs, n: usize) -> Result<CvConfig> {
    let cv = match (a.folds, a.subsets) {
        (Some(v), None) => {
            let cv = CvConfig::v_fold(n, v, a.model.seed);
            if let Some(m) = a.m {
                if m != cv.m {
                    bail!("--m {m} disagrees with {v} folds of {n} points, which fit on m = {}", cv.m);
                }
            }
            cv
        }
        (None, Some(count)) => {
            let Some(m) = a.m else {
                bail!("--subsets needs --m");
            };
            CvConfig::random_subsets(count, m, a.model.seed)
        }
        _ => bail!("give exactly one of --folds or --subsets"),
    };
    cv.validate(n)?;
    Ok(cv)
}

pub fn cv(a: CvArgs) -> Result<Outcome> {
    let started = Utc::now();
    let prep = prepare(&a.data)?;
    let n = prep.data.len();
    let cv = cv_config(&a, n)?;
    let (h, rec) = resolve_h(&a.model.h, &prep.data)?;
    let cfg = scan_config(&a.model, h, &prep.data)?;

    let mut rows = Vec::new();
    println!("k,estimate,stderr,subsets,failures");
    for k in cfg.k_min..=cfg.k_max {
        match cv_unbiased_risk(&prep.data, k, cfg.structure, &cfg.fit, &cfg.kernel, &cv) {
            Ok(e) => {
                println!("{k},{},{},{},{}", e.estimate, e.stderr, e.subset_values.len(), e.failures);
                rows.push(CvRow { k, estimate: Some(e), error: None });
            }
            Err(e) => {
                eprintln!("k = {k} failed: {e}");
                rows.push(CvRow { k, estimate: None, error: Some(e.to_string()) });
            }
        }
    }
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        let mut manifest = RunManifest::new("cv", a.model.seed, started);
        manifest.input_sha256 = Some(prep.sha256);
        manifest.config = json!({
            "input": a.data.input,
            "header": a.data.header,
            "standardize": a.data.standardize,
            "h": h,
            "h_recommendation": rec,
            "cv": cv,
            "scan": cfg,
        });
        write_json(dir, "cv.json", &rows, &mut manifest)?;
        manifest.write(dir)?;
    }
    if rows.iter().all(|r| r.estimate.is_none()) {
        bail!("cross-validation failed for every k");
    }
    Ok(if rows.iter().any(|r| r.estimate.is_none()) { Outcome::Partial } else { Outcome::Complete })
}
