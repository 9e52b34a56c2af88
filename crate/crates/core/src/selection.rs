//! Scans over the number of mixture components and the selection rules.
//!
//! Each candidate `k` is fitted by EM, its risk is estimated against one
//! shared raw kernel matrix, and the candidates are ranked by AIC, BIC, QAIC,
//! QBIC and (optionally) cross-validated risk. A model is *adequate* when its
//! QAIC does not exceed the biased risk estimate of the empirical
//! distribution; the minimal-risk-adequate (MRA) choice is the smallest
//! adequate `k`, or none when no candidate qualifies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::kernel::{integrals_vs_mixture, kernel_matrix, KernelMatrix, KernelSpec};
use crate::mixture::{fit_em, CovStructure, FitConfig, FitResult};
use crate::risk::{
    aic, benchmark, bic, bic_equivalent_m, cv_unbiased_risk, qaic, qbic, quadratic_risk_at_m,
    risk_components, Benchmark, CvConfig, CvEstimate, RiskBreakdown, RiskComponents,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Qaic,
    Mra,
    Bic,
    Qbic,
    Cv,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Aic,
        Criterion::Qaic,
        Criterion::Mra,
        Criterion::Bic,
        Criterion::Qbic,
        Criterion::Cv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Qaic => "qaic",
            Criterion::Mra => "mra",
            Criterion::Bic => "bic",
            Criterion::Qbic => "qbic",
            Criterion::Cv => "cv",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .map_or_else(|| config(format!("unknown criterion `{s}`")), Ok)
    }
}

/// Scales every coordinate to unit sample variance; means are untouched.
/// Returns the data and the per-coordinate multipliers.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Vec<f64>)> {
    if data.len() < 2 {
        return Err(Error::DegenerateData(
            "standardization needs at least two observations".into(),
        ));
    }
    let vars = data.column_variances();
    if let Some(d) = vars.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateData(format!(
            "coordinate {d} has zero variance"
        )));
    }
    let scales: Vec<f64> = vars.iter().map(|v| 1.0 / v.sqrt()).collect();
    Ok((data.scaled(&scales), scales))
}

/// Sample size at which an extra risk column is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum MPolicy {
    /// `m = n`
    SampleSize,
    /// `m = n / (ln n - 1)`
    BicEquivalent,
    Explicit(f64),
    /// `m = γ n`
    Fraction(f64),
}

impl MPolicy {
    pub fn resolve(self, n: usize) -> Result<f64> {
        let m = match self {
            MPolicy::SampleSize => n as f64,
            MPolicy::BicEquivalent => bic_equivalent_m(n)?,
            MPolicy::Explicit(m) => m,
            MPolicy::Fraction(g) => g * n as f64,
        };
        if !(m > 0.0 && m.is_finite()) {
            return config(format!("m policy {self:?} resolves to {m}"));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub structure: CovStructure,
    pub kernel: KernelSpec,
    pub fit: FitConfig,
    /// Scale coordinates to unit variance before fitting.
    pub standardize: bool,
    /// Optional extra risk evaluation besides QAIC and QBIC.
    pub m_policy: Option<MPolicy>,
    pub cv: Option<CvConfig>,
}

impl ScanConfig {
    pub fn new(k_min: usize, k_max: usize, structure: CovStructure, kernel: KernelSpec) -> Self {
        Self {
            k_min,
            k_max,
            structure,
            kernel,
            fit: FitConfig::default(),
            standardize: true,
            m_policy: None,
            cv: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_max < self.k_min {
            return config(format!(
                "invalid component range {}..={}",
                self.k_min, self.k_max
            ));
        }
        self.kernel.validate()
    }
}

/// Everything computed for one successfully fitted `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub k: usize,
    pub fit: FitResult,
    pub components: RiskComponents,
    pub qaic: RiskBreakdown,
    pub qbic: RiskBreakdown,
    pub risk_at_m: Option<RiskBreakdown>,
    pub aic: f64,
    pub bic: f64,
    pub cv: Option<CvEstimate>,
    /// QAIC total at most the biased empirical benchmark.
    pub adequate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KFailure {
    pub k: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScanResult {
    pub n: usize,
    pub dim: usize,
    pub config: ScanConfig,
    /// Standardization multipliers, when applied.
    pub scales: Option<Vec<f64>>,
    pub per_k: Vec<KResult>,
    pub failures: Vec<KFailure>,
    /// Empirical-distribution risk at `m = n`.
    pub benchmark: Benchmark,
    pub decisions: BTreeMap<Criterion, Option<usize>>,
}

impl ModelScanResult {
    pub fn get(&self, k: usize) -> Option<&KResult> {
        self.per_k.iter().find(|r| r.k == k)
    }

    pub fn decision(&self, c: Criterion) -> Option<usize> {
        self.decisions.get(&c).copied().flatten()
    }
}

/// Standardizes (if configured), builds the kernel matrix once and scans.
pub fn scan(data: &Dataset, cfg: &ScanConfig) -> Result<ModelScanResult> {
    cfg.validate()?;
    let (data, scales) = if cfg.standardize {
        let (d, s) = standardize(data)?;
        (d, Some(s))
    } else {
        (data.clone(), None)
    };
    let raw = kernel_matrix(&cfg.kernel, &data)?;
    let mut result = scan_with_kernel(&data, cfg, &raw)?;
    result.scales = scales;
    Ok(result)
}

/// Scans with a precomputed raw kernel matrix of `data` (already
/// standardized if that is wanted; `cfg.standardize` is not applied here).
pub fn scan_with_kernel(data: &Dataset, cfg: &ScanConfig, raw: &KernelMatrix) -> Result<ModelScanResult> {
    cfg.validate()?;
    let n = data.len();
    if raw.n() != n {
        return config("kernel matrix does not match the data");
    }
    let bench = benchmark(raw, n as f64)?;
    let extra_m = cfg.m_policy.map(|p| p.resolve(n)).transpose()?;
    let outcomes: Vec<std::result::Result<KResult, (usize, Error)>> = (cfg.k_min..=cfg.k_max)
        .into_par_iter()
        .map(|k| evaluate_k(data, cfg, raw, k, &bench, extra_m).map_err(|e| (k, e)))
        .collect();
    let mut per_k = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for o in outcomes {
        match o {
            Ok(r) => per_k.push(r),
            Err((k, e)) => {
                log::warn!("k = {k} failed: {e}");
                failures.push(KFailure {
                    k,
                    reason: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if per_k.is_empty() {
        return Err(first_err.expect("at least one k scanned"));
    }
    let decisions = decide(&per_k, cfg.cv.is_some());
    Ok(ModelScanResult {
        n,
        dim: data.dim(),
        config: cfg.clone(),
        scales: None,
        per_k,
        failures,
        benchmark: bench,
        decisions,
    })
}

fn evaluate_k(
    data: &Dataset,
    cfg: &ScanConfig,
    raw: &KernelMatrix,
    k: usize,
    bench: &Benchmark,
    extra_m: Option<f64>,
) -> Result<KResult> {
    let n = data.len();
    let fit = fit_em(data, k, cfg.structure, &cfg.fit)?;
    let ints = integrals_vs_mixture(&cfg.kernel, data, &fit.model)?;
    let ext = fit.model.extended_scores(data)?;
    let comps = risk_components(raw, &ints, &ext, &format!("k={k}"))?;
    let q_aic = qaic(comps.mlf_hat, comps.pec_hat_at_n, n);
    let q_bic = qbic(comps.mlf_hat, comps.pec_hat_at_n, n)?;
    let risk_at_m = extra_m
        .map(|m| quadratic_risk_at_m(comps.mlf_hat, comps.pec_hat_at_n, n, m))
        .transpose()?;
    let cv = cfg
        .cv
        .as_ref()
        .map(|cv| cv_unbiased_risk(data, k, cfg.structure, &cfg.fit, &cfg.kernel, cv))
        .transpose()?;
    Ok(KResult {
        k,
        aic: aic(fit.log_lik, fit.param_dim, n),
        bic: bic(fit.log_lik, fit.param_dim, n),
        adequate: q_aic.total <= bench.empirical_risk_biased,
        fit,
        components: comps,
        qaic: q_aic,
        qbic: q_bic,
        risk_at_m,
        cv,
    })
}

/// Smallest `k` minimizing `score`; ties go to the smaller `k`.
fn argmin(per_k: &[KResult], score: impl Fn(&KResult) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in per_k {
        let s = score(r);
        if s.is_nan() {
            continue;
        }
        match best {
            Some((bk, bs)) if s > bs || (s == bs && r.k > bk) => {}
            _ => best = Some((r.k, s)),
        }
    }
    best.map(|(k, _)| k)
}

/// Decision per criterion over the successfully fitted candidates.
pub fn decide(per_k: &[KResult], with_cv: bool) -> BTreeMap<Criterion, Option<usize>> {
    let mut d = BTreeMap::new();
    d.insert(Criterion::Aic, argmin(per_k, |r| r.aic));
    d.insert(Criterion::Bic, argmin(per_k, |r| r.bic));
    d.insert(Criterion::Qaic, argmin(per_k, |r| r.qaic.total));
    d.insert(Criterion::Qbic, argmin(per_k, |r| r.qbic.total));
    d.insert(Criterion::Mra, mra_of(per_k));
    if with_cv {
        d.insert(
            Criterion::Cv,
            argmin(per_k, |r| r.cv.as_ref().map_or(f64::NAN, |c| c.estimate)),
        );
    }
    d
}

fn mra_of(per_k: &[KResult]) -> Option<usize> {
    per_k.iter().filter(|r| r.adequate).map(|r| r.k).min()
}

/// Smallest adequate `k`, or `None` when the candidate class is too small.
pub fn mra(result: &ModelScanResult) -> Option<usize> {
    mra_of(&result.per_k)
}

/// One row of the risk-component table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCurveRow {
    pub k: usize,
    pub mlf_hat: f64,
    pub pec_hat: f64,
    pub qaic: f64,
    pub qbic: f64,
    pub benchmark: f64,
    pub risk_at_m: Option<f64>,
    pub cv: Option<f64>,
}

pub fn risk_curve(result: &ModelScanResult) -> Vec<RiskCurveRow> {
    let mut rows: Vec<RiskCurveRow> = result
        .per_k
        .iter()
        .map(|r| RiskCurveRow {
            k: r.k,
            mlf_hat: r.qaic.mlf_hat,
            pec_hat: r.qaic.pec_hat_at_n,
            qaic: r.qaic.total,
            qbic: r.qbic.total,
            benchmark: result.benchmark.empirical_risk_biased,
            risk_at_m: r.risk_at_m.as_ref().map(|b| b.total),
            cv: r.cv.as_ref().map(|c| c.estimate),
        })
        .collect();
    rows.sort_by_key(|r| r.k);
    rows
}
