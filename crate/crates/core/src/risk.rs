//! Risk estimators.
//!
//! For a fitted model `M` the quadratic risk at sample size `m` splits into a
//! model lack of fit (MLF) and a parameter estimation cost (PEC) that scales
//! like `1/m`. Estimates are assembled from the kernel matrix centered under
//! the fitted model and the projection onto the likelihood scores:
//!
//! - `d̂ = 𝟙ᵀ(I-P)K(I-P)𝟙 / n²`,
//! - `MLF̂ = d̂ - tr((I-P)K(I-P)) / n²`,
//! - `PEĈ(m) = tr(PKP) / (n m)`,
//!
//! where `K` is centered under the fitted model and `P` projects onto the
//! mean-centered score columns (the part of the extended-score projection
//! orthogonal to the constants, which model centering already removes).

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::kernel::{
    center_empirically, center_under_model, integrals_vs_mixture, kernel_matrix, Centering,
    KernelMatrix, KernelSpec, ModelIntegrals,
};
use crate::mixture::{fit_em, CovStructure, FitConfig};
use crate::quaddist::{build_projection, traces, u_statistic, ProjectionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLabel {
    Qaic,
    Qbic,
    /// Risk at an explicit sample size.
    AtM,
}

/// `total = mlf_hat + (n/m) · pec_hat_at_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub mlf_hat: f64,
    pub pec_hat_at_n: f64,
    pub n: usize,
    pub m: f64,
    pub total: f64,
    pub label: RiskLabel,
}

impl RiskBreakdown {
    /// The parameter-estimation part of `total`.
    pub fn pec_at_m(&self) -> f64 {
        self.n as f64 / self.m * self.pec_hat_at_n
    }
}

/// Risk of the empirical distribution used as an adequacy benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub empirical_risk_biased: f64,
    pub empirical_risk_unbiased: f64,
    pub m: f64,
}

fn check_m(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return config(format!("m must be positive and finite, got {m}"));
    }
    Ok(())
}

/// `(1/m)[mean diagonal - mean off-diagonal]` of a raw kernel matrix.
pub fn empirical_risk_unbiased(raw: &KernelMatrix, m: f64) -> Result<f64> {
    check_m(m)?;
    if raw.centering != Centering::Raw {
        return config("unbiased empirical risk needs a raw kernel matrix");
    }
    let n = raw.n();
    if n < 2 {
        return Err(Error::Infeasible(
            "empirical risk needs at least two observations".into(),
        ));
    }
    let nf = n as f64;
    let tr = raw.trace();
    let off = raw.total() - tr;
    Ok((tr / nf - off / (nf * (nf - 1.0))) / m)
}

/// `tr(K_cen(F̂)) / (n m)`.
pub fn empirical_risk_biased(cen_f: &KernelMatrix, m: f64) -> Result<f64> {
    check_m(m)?;
    if cen_f.centering != Centering::EmpiricallyCentered {
        return config("biased empirical risk needs an empirically centered kernel matrix");
    }
    Ok(cen_f.trace() / (cen_f.n() as f64 * m))
}

/// Both benchmark estimators at sample size `m`.
pub fn benchmark(raw: &KernelMatrix, m: f64) -> Result<Benchmark> {
    let cen = center_empirically(raw)?;
    Ok(Benchmark {
        empirical_risk_biased: empirical_risk_biased(&cen, m)?,
        empirical_risk_unbiased: empirical_risk_unbiased(raw, m)?,
        m,
    })
}

/// `𝟙ᵀ(I-P)K(I-P)𝟙 / n² - tr_scen / n²`.
pub fn mlf_hat(cen_model: &KernelMatrix, proj: &ProjectionMatrix, tr_scen: f64) -> Result<f64> {
    if cen_model.n() != proj.n() {
        return config("kernel matrix and projection differ in size");
    }
    let n = cen_model.n();
    let ones = DVector::from_element(n, 1.0);
    let r = &ones - proj.apply(&ones);
    let nf = n as f64;
    let d_hat = r.dot(&(&cen_model.values * &r)) / (nf * nf);
    Ok(d_hat - tr_scen / (nf * nf))
}

/// `tr(PKP) / (n m)`.
pub fn pec_hat(tr_pkp: f64, n: usize, m: f64) -> Result<f64> {
    check_m(m)?;
    Ok(tr_pkp / (n as f64 * m))
}

/// `mlf + (n/m) pec_at_n`.
pub fn quadratic_risk_at_m(mlf_hat: f64, pec_hat_at_n: f64, n: usize, m: f64) -> Result<RiskBreakdown> {
    check_m(m)?;
    Ok(RiskBreakdown {
        mlf_hat,
        pec_hat_at_n,
        n,
        m,
        total: mlf_hat + n as f64 / m * pec_hat_at_n,
        label: RiskLabel::AtM,
    })
}

pub fn qaic(mlf_hat: f64, pec_hat_at_n: f64, n: usize) -> RiskBreakdown {
    RiskBreakdown {
        mlf_hat,
        pec_hat_at_n,
        n,
        m: n as f64,
        total: mlf_hat + pec_hat_at_n,
        label: RiskLabel::Qaic,
    }
}

/// `n / (ln n - 1)`, the sample size at which the risk penalty matches BIC.
pub fn bic_equivalent_m(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Infeasible(format!(
            "QBIC needs ln n > 1, got n = {n}"
        )));
    }
    let nf = n as f64;
    Ok(nf / (nf.ln() - 1.0))
}

pub fn qbic(mlf_hat: f64, pec_hat_at_n: f64, n: usize) -> Result<RiskBreakdown> {
    let m = bic_equivalent_m(n)?;
    Ok(RiskBreakdown {
        mlf_hat,
        pec_hat_at_n,
        n,
        m,
        total: mlf_hat + ((n as f64).ln() - 1.0) * pec_hat_at_n,
        label: RiskLabel::Qbic,
    })
}

/// AIC on the per-observation scale.
pub fn aic(log_lik: f64, p: usize, n: usize) -> f64 {
    let nf = n as f64;
    -2.0 * log_lik / nf + 2.0 * p as f64 / nf
}

/// BIC on the per-observation scale.
pub fn bic(log_lik: f64, p: usize, n: usize) -> f64 {
    let nf = n as f64;
    -2.0 * log_lik / nf + nf.ln() * p as f64 / nf
}

/// Everything the risk estimators need from one fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskComponents {
    pub n: usize,
    /// `𝟙ᵀ(I-P)K(I-P)𝟙 / n²`
    pub d_hat: f64,
    pub tr_scen: f64,
    pub tr_pkp: f64,
    pub mlf_hat: f64,
    pub pec_hat_at_n: f64,
    /// Rank of the extended-score projection (constants included).
    pub projection_rank: usize,
    pub rank_deficient: bool,
}

/// Centers `raw` under the fitted model, projects out its scores and
/// evaluates the MLF and PEC estimates.
pub fn risk_components(
    raw: &KernelMatrix,
    ints: &ModelIntegrals,
    ext_scores: &DMatrix<f64>,
    model_label: &str,
) -> Result<RiskComponents> {
    let cen = center_under_model(raw, ints, model_label)?;
    let proj = build_projection(ext_scores)?;
    let score = proj.score_part()?;
    let t = traces(&cen, &score)?;
    let n = raw.n();
    let nf = n as f64;
    let mlf = mlf_hat(&cen, &score, t.tr_scen)?;
    Ok(RiskComponents {
        n,
        d_hat: mlf + t.tr_scen / (nf * nf),
        tr_scen: t.tr_scen,
        tr_pkp: t.tr_pkp,
        mlf_hat: mlf,
        pec_hat_at_n: pec_hat(t.tr_pkp, n, nf)?,
        projection_rank: proj.rank(),
        rank_deficient: proj.rank_deficient(),
    })
}

/// How holdout sets are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum CvScheme {
    /// `folds` disjoint holdouts from a seeded shuffle; fold assignment
    /// depends on the seed, not on the data order.
    VFold { folds: usize, seed: u64 },
    /// `count` random fitting subsets of size `m`; every subset is used
    /// (in lexicographic order) when `count` reaches `C(n, m)`.
    RandomSubsets { count: usize, seed: u64 },
}

/// `m` is the size of each fitting subset. For V-fold schemes it is
/// `n - ⌈n/V⌉`; folds of uneven size fit on `n - |fold|` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub scheme: CvScheme,
    pub m: usize,
}

impl CvConfig {
    pub fn v_fold(n: usize, folds: usize, seed: u64) -> Self {
        Self {
            scheme: CvScheme::VFold { folds, seed },
            m: n - n.div_ceil(folds.max(1)),
        }
    }

    pub fn random_subsets(count: usize, m: usize, seed: u64) -> Self {
        Self {
            scheme: CvScheme::RandomSubsets { count, seed },
            m,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m < 2 || self.m + 2 > n {
            return config(format!(
                "subset size m = {} must satisfy 2 ≤ m ≤ n - 2 = {} so that each \
                 holdout keeps at least two points for the unbiased U-statistic",
                self.m,
                n as i64 - 2
            ));
        }
        match self.scheme {
            CvScheme::VFold { folds, .. } => {
                if folds < 2 {
                    return config("V-fold needs at least two folds");
                }
                if n / folds < 2 {
                    return config(format!(
                        "{folds} folds of {n} points leave a holdout with fewer than two points"
                    ));
                }
            }
            CvScheme::RandomSubsets { count, .. } => {
                if count == 0 {
                    return config("need at least one subset");
                }
            }
        }
        Ok(())
    }
}

/// Mean and spread of the per-subset U-statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEstimate {
    pub estimate: f64,
    /// Between-subset standard deviation over `√subsets`; overlapping subsets
    /// make this an understatement.
    pub stderr: f64,
    pub subset_values: Vec<f64>,
    pub failures: usize,
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `(fit indices, holdout indices)` for every subset of the scheme, both
/// sorted ascending.
pub fn cv_splits(n: usize, cv: &CvConfig) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    cv.validate(n)?;
    let complement = |fit: &[usize]| -> Vec<usize> {
        let mut mask = vec![true; n];
        fit.iter().for_each(|&i| mask[i] = false);
        (0..n).filter(|&i| mask[i]).collect()
    };
    let splits = match cv.scheme {
        CvScheme::VFold { folds, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let perm = sample(&mut rng, n, n).into_vec();
            (0..folds)
                .map(|f| {
                    let lo = f * n / folds;
                    let hi = (f + 1) * n / folds;
                    let mut hold = perm[lo..hi].to_vec();
                    hold.sort_unstable();
                    let mut fit: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
                    fit.sort_unstable();
                    (fit, hold)
                })
                .collect()
        }
        CvScheme::RandomSubsets { count, seed } => {
            if count as u128 >= binomial(n, cv.m) {
                combinations(n, cv.m)
                    .into_iter()
                    .map(|fit| {
                        let hold = complement(&fit);
                        (fit, hold)
                    })
                    .collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        let mut fit = sample(&mut rng, n, cv.m).into_vec();
                        fit.sort_unstable();
                        let hold = complement(&fit);
                        (fit, hold)
                    })
                    .collect()
            }
        }
    };
    Ok(splits)
}

/// U-statistic of the holdout kernel block centered under the model fitted
/// on the complementary subset.
pub fn subset_u_statistic(
    data: &Dataset,
    fit_idx: &[usize],
    hold_idx: &[usize],
    k: usize,
    structure: CovStructure,
    fit: &FitConfig,
    kernel: &KernelSpec,
) -> Result<f64> {
    let train = data.select(fit_idx);
    let hold = data.select(hold_idx);
    let model = fit_em(&train, k, structure, fit)?.model;
    let raw = kernel_matrix(kernel, &hold)?;
    let ints = integrals_vs_mixture(kernel, &hold, &model)?;
    let cen = center_under_model(&raw, &ints, format!("k={k} subset fit"))?;
    u_statistic(&cen)
}

/// Subset-based unbiased estimate of the risk at sample size `cv.m`:
/// fit on each subset, score the holdout pairs, average.
pub fn cv_unbiased_risk(
    data: &Dataset,
    k: usize,
    structure: CovStructure,
    fit: &FitConfig,
    kernel: &KernelSpec,
    cv: &CvConfig,
) -> Result<CvEstimate> {
    let splits = cv_splits(data.len(), cv)?;
    let results: Vec<Result<f64>> = splits
        .par_iter()
        .map(|(f, h)| subset_u_statistic(data, f, h, k, structure, fit, kernel))
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut last_err = None;
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) => last_err = Some(e),
        }
    }
    let failures = splits.len() - values.len();
    if values.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Infeasible("no subsets".into())));
    }
    if failures > 0 {
        log::warn!("{failures} of {} subsets failed to fit and were skipped", splits.len());
    }
    let s = values.len() as f64;
    let estimate = values.iter().sum::<f64>() / s;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (s - 1.0);
        (var / s).sqrt()
    } else {
        0.0
    };
    Ok(CvEstimate {
        estimate,
        stderr,
        subset_values: values,
        failures,
    })
}
