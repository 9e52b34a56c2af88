//! Gaussian mixtures: densities, sampling, EM fitting and likelihood scores.
//!
//! Free parameterization used by [`GaussianMixture::score_vector`] and
//! [`GaussianMixture::free_parameters`], in order:
//!
//! 1. weights `π_1 … π_{k-1}` (the last weight is `1 - Σ`),
//! 2. for each component `j`: the mean (`D` entries) followed by the
//!    covariance entries of the structure:
//!    - `Spherical`: `log σ_j²`,
//!    - `Diagonal`: `log σ_{j,d}²` for each coordinate,
//!    - `Full`: the lower-triangular Cholesky factor `L_j` (with
//!      `Σ_j = L_j L_jᵀ`), row by row, `L[a][b]` for `b ≤ a`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, FitDiagnostics, Result};
use crate::gaussian::{log_sum_exp, Mvn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovStructure {
    Spherical,
    Diagonal,
    Full,
}

impl CovStructure {
    /// Number of free covariance parameters per component.
    pub fn cov_params(self, dim: usize) -> usize {
        match self {
            CovStructure::Spherical => 1,
            CovStructure::Diagonal => dim,
            CovStructure::Full => dim * (dim + 1) / 2,
        }
    }

    /// Full covariances in two or three dimensions, diagonal above.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim >= 4 {
            CovStructure::Diagonal
        } else {
            CovStructure::Full
        }
    }
}

impl std::str::FromStr for CovStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spherical" => Ok(CovStructure::Spherical),
            "diagonal" | "diag" => Ok(CovStructure::Diagonal),
            "full" => Ok(CovStructure::Full),
            other => config(format!("unknown covariance structure `{other}`")),
        }
    }
}

/// Number of free parameters of a `k`-component mixture in `ℝ^dim`.
pub fn param_dim(k: usize, dim: usize, structure: CovStructure) -> usize {
    k * dim + k * structure.cov_params(dim) + (k - 1)
}

#[derive(Clone, Debug)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A finite mixture of multivariate normals.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct GaussianMixture {
    dim: usize,
    structure: CovStructure,
    components: Vec<Component>,
    normals: Vec<Mvn>,
}

impl PartialEq for GaussianMixture {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.structure == other.structure
            && self.components.len() == other.components.len()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|(a, b)| a.weight == b.weight && a.mean == b.mean && a.cov == b.cov)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MixtureRepr {
    dimension: usize,
    structure: CovStructure,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

impl From<GaussianMixture> for MixtureRepr {
    fn from(m: GaussianMixture) -> Self {
        let d = m.dim;
        MixtureRepr {
            dimension: d,
            structure: m.structure,
            weights: m.components.iter().map(|c| c.weight).collect(),
            means: m
                .components
                .iter()
                .map(|c| c.mean.iter().copied().collect())
                .collect(),
            covariances: m
                .components
                .iter()
                .map(|c| (0..d).map(|r| c.cov.row(r).iter().copied().collect()).collect())
                .collect(),
        }
    }
}

impl TryFrom<MixtureRepr> for GaussianMixture {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        let d = r.dimension;
        if r.means.len() != r.weights.len() || r.covariances.len() != r.weights.len() {
            return config("weights, means and covariances differ in length");
        }
        let mut comps = Vec::with_capacity(r.weights.len());
        for ((w, mean), cov) in r.weights.iter().zip(&r.means).zip(&r.covariances) {
            if mean.len() != d || cov.len() != d || cov.iter().any(|row| row.len() != d) {
                return config("component shape does not match the declared dimension");
            }
            let flat: Vec<f64> = cov.iter().flatten().copied().collect();
            comps.push(Component {
                weight: *w,
                mean: DVector::from_column_slice(mean),
                cov: DMatrix::from_row_slice(d, d, &flat),
            });
        }
        GaussianMixture::new(r.structure, comps)
    }
}

impl GaussianMixture {
    /// Validates weights, covariance definiteness and structure.
    pub fn new(structure: CovStructure, components: Vec<Component>) -> Result<Self> {
        let Some(first) = components.first() else {
            return config("mixture needs at least one component");
        };
        let dim = first.mean.len();
        if dim == 0 {
            return config("mixture dimension must be at least 1");
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-10 {
            return config(format!("mixture weights sum to {total}, not 1"));
        }
        let mut normals = Vec::with_capacity(components.len());
        for (j, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return config(format!("weight {j} = {} outside (0, 1]", c.weight));
            }
            if c.mean.len() != dim || c.cov.nrows() != dim || c.cov.ncols() != dim {
                return config(format!("component {j} has inconsistent dimension"));
            }
            check_structure(structure, &c.cov, j)?;
            let eig = SymmetricEigen::new(c.cov.clone()).eigenvalues;
            if eig.iter().any(|&l| l <= 0.0) {
                return config(format!("covariance {j} is not positive definite"));
            }
            normals.push(Mvn::new(c.mean.clone(), &c.cov)?);
        }
        Ok(Self {
            dim,
            structure,
            components,
            normals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn structure(&self) -> CovStructure {
        self.structure
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn param_dim(&self) -> usize {
        param_dim(self.k(), self.dim, self.structure)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return config(format!(
                "point has dimension {}, mixture has {}",
                x.len(),
                self.dim
            ));
        }
        Ok(())
    }

    /// Per-component `log π_j + log φ_j(x)`.
    fn log_joint(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), n) in out.iter_mut().zip(&self.components).zip(&self.normals) {
            *o = c.weight.ln() + n.log_density(x);
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut buf = vec![0.0; self.k()];
        self.log_joint(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// Sum of log densities over the rows of `data`.
    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        if data.dim() != self.dim {
            return config("data and mixture dimensions differ");
        }
        let mut buf = vec![0.0; self.k()];
        Ok(data
            .rows()
            .map(|x| {
                self.log_joint(x, &mut buf);
                log_sum_exp(&buf)
            })
            .sum())
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        self.sample_labeled(n, seed).0
    }

    /// Draws together with the generating component of each row.
    pub fn sample_labeled(&self, n: usize, seed: u64) -> (Dataset, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub(crate) fn sample_with<R: Rng>(&self, n: usize, rng: &mut R) -> (Dataset, Vec<usize>) {
        let weights = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .expect("validated weights");
        let factors: Vec<DMatrix<f64>> = self
            .components
            .iter()
            .map(|c| {
                c.cov
                    .clone()
                    .cholesky()
                    .expect("validated covariance")
                    .unpack()
            })
            .collect();
        let d = self.dim;
        let mut values = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut z = DVector::zeros(d);
        for _ in 0..n {
            let j = weights.sample(rng);
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let x = &self.components[j].mean + &factors[j] * &z;
            values.extend(x.iter());
            labels.push(j);
        }
        (Dataset::new(d, values).expect("finite draws"), labels)
    }

    /// Gradient of `log f(x)` in the free parameterization (module docs).
    pub fn score_vector(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let derived = ScoreCache::new(self)?;
        derived.score(self, x).ok_or(Error::ScoreUnderflow { index: 0 })
    }

    /// `n × (p+1)` matrix with rows `(1, s(x_i)ᵀ)`.
    pub fn extended_scores(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        if data.dim() != self.dim {
            return config("data and mixture dimensions differ");
        }
        let cache = ScoreCache::new(self)?;
        let p = self.param_dim();
        let rows: Vec<DVector<f64>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                cache
                    .score(self, data.row(i))
                    .ok_or(Error::ScoreUnderflow { index: i })
            })
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(data.len(), p + 1);
        for (i, s) in rows.iter().enumerate() {
            out[(i, 0)] = 1.0;
            for (c, v) in s.iter().enumerate() {
                out[(i, c + 1)] = *v;
            }
        }
        Ok(out)
    }

    /// Parameter vector in the score ordering.
    pub fn free_parameters(&self) -> Vec<f64> {
        let k = self.k();
        let d = self.dim;
        let mut theta = Vec::with_capacity(self.param_dim());
        theta.extend(self.components[..k - 1].iter().map(|c| c.weight));
        for c in &self.components {
            theta.extend(c.mean.iter());
            match self.structure {
                CovStructure::Spherical => theta.push(c.cov[(0, 0)].ln()),
                CovStructure::Diagonal => theta.extend((0..d).map(|i| c.cov[(i, i)].ln())),
                CovStructure::Full => {
                    let l = c.cov.clone().cholesky().expect("validated").unpack();
                    for a in 0..d {
                        for b in 0..=a {
                            theta.push(l[(a, b)]);
                        }
                    }
                }
            }
        }
        theta
    }

    /// Inverse of [`free_parameters`](Self::free_parameters).
    pub fn from_free_parameters(
        structure: CovStructure,
        k: usize,
        dim: usize,
        theta: &[f64],
    ) -> Result<Self> {
        if k == 0 || dim == 0 {
            return config("k and dim must be positive");
        }
        if theta.len() != param_dim(k, dim, structure) {
            return config(format!(
                "expected {} parameters, got {}",
                param_dim(k, dim, structure),
                theta.len()
            ));
        }
        let mut weights: Vec<f64> = theta[..k - 1].to_vec();
        weights.push(1.0 - weights.iter().sum::<f64>());
        let mut pos = k - 1;
        let mut comps = Vec::with_capacity(k);
        for w in weights {
            let mean = DVector::from_column_slice(&theta[pos..pos + dim]);
            pos += dim;
            let cov = match structure {
                CovStructure::Spherical => {
                    let v = theta[pos].exp();
                    pos += 1;
                    DMatrix::from_diagonal_element(dim, dim, v)
                }
                CovStructure::Diagonal => {
                    let diag = DVector::from_iterator(dim, theta[pos..pos + dim].iter().map(|t| t.exp()));
                    pos += dim;
                    DMatrix::from_diagonal(&diag)
                }
                CovStructure::Full => {
                    let mut l = DMatrix::zeros(dim, dim);
                    for a in 0..dim {
                        for b in 0..=a {
                            l[(a, b)] = theta[pos];
                            pos += 1;
                        }
                    }
                    let cov = &l * l.transpose();
                    (&cov + cov.transpose()) * 0.5
                }
            };
            comps.push(Component {
                weight: w,
                mean,
                cov,
            });
        }
        Self::new(structure, comps)
    }
}

fn check_structure(structure: CovStructure, cov: &DMatrix<f64>, j: usize) -> Result<()> {
    let d = cov.nrows();
    let scale = cov.diagonal().amax().max(f64::MIN_POSITIVE);
    for a in 0..d {
        for b in 0..d {
            let v = cov[(a, b)];
            if !v.is_finite() {
                return config(format!("covariance {j} has non-finite entries"));
            }
            if a != b {
                if (v - cov[(b, a)]).abs() > 1e-10 * scale {
                    return config(format!("covariance {j} is not symmetric"));
                }
                if structure != CovStructure::Full && v != 0.0 {
                    return config(format!(
                        "covariance {j} has off-diagonal entries but structure is {structure:?}"
                    ));
                }
            }
        }
    }
    if structure == CovStructure::Spherical {
        let v0 = cov[(0, 0)];
        if (0..d).any(|i| (cov[(i, i)] - v0).abs() > 1e-12 * v0.abs()) {
            return config(format!("covariance {j} is not spherical"));
        }
    }
    Ok(())
}

/// Per-component quantities reused across score evaluations.
struct ScoreCache {
    inverses: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
}

impl ScoreCache {
    fn new(mix: &GaussianMixture) -> Result<Self> {
        let inverses = mix.normals.iter().map(Mvn::inverse).collect();
        let factors = if mix.structure == CovStructure::Full {
            mix.components
                .iter()
                .map(|c| {
                    c.cov
                        .clone()
                        .cholesky()
                        .map(|ch| ch.unpack())
                        .ok_or_else(|| Error::Numerical("covariance lost definiteness".into()))
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { inverses, factors })
    }

    /// `None` when the density at `x` is zero or not finite.
    fn score(&self, mix: &GaussianMixture, x: &[f64]) -> Option<DVector<f64>> {
        let k = mix.k();
        let d = mix.dim;
        let mut lj = vec![0.0; k];
        mix.log_joint(x, &mut lj);
        let lf = log_sum_exp(&lj);
        if !lf.is_finite() {
            return None;
        }
        // posterior membership r_j = π_j φ_j / f
        let resp: Vec<f64> = lj.iter().map(|v| (v - lf).exp()).collect();
        let mut s = DVector::zeros(mix.param_dim());
        let last = &mix.components[k - 1];
        for j in 0..k - 1 {
            s[j] = resp[j] / mix.components[j].weight - resp[k - 1] / last.weight;
        }
        let xv = DVector::from_column_slice(x);
        let mut pos = k - 1;
        for (j, c) in mix.components.iter().enumerate() {
            let r = resp[j];
            let diff = &xv - &c.mean;
            let a = &self.inverses[j] * &diff;
            for i in 0..d {
                s[pos + i] = r * a[i];
            }
            pos += d;
            match mix.structure {
                CovStructure::Spherical => {
                    let var = c.cov[(0, 0)];
                    s[pos] = r * (-0.5 * d as f64 + diff.norm_squared() / (2.0 * var));
                    pos += 1;
                }
                CovStructure::Diagonal => {
                    for i in 0..d {
                        let var = c.cov[(i, i)];
                        s[pos + i] = r * (-0.5 + diff[i] * diff[i] / (2.0 * var));
                    }
                    pos += d;
                }
                CovStructure::Full => {
                    // d log φ / dΣ = (a aᵀ - Σ⁻¹)/2 and dΣ = dL Lᵀ + L dLᵀ,
                    // so the gradient in L is (a aᵀ - Σ⁻¹) L
                    let g = &a * a.transpose() - &self.inverses[j];
                    let grad_l = g * &self.factors[j];
                    for row in 0..d {
                        for col in 0..=row {
                            s[pos] = r * grad_l[(row, col)];
                            pos += 1;
                        }
                    }
                }
            }
        }
        Some(s)
    }
}

/// EM settings. `Default` gives the values used throughout the crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Stop when the relative log-likelihood gain drops below this.
    pub tol: f64,
    pub restarts: usize,
    /// Covariance eigenvalues are kept above `cov_floor` times the mean
    /// per-coordinate data variance.
    pub cov_floor: f64,
    pub weight_floor: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-8,
            restarts: 5,
            cov_floor: 1e-4,
            weight_floor: 1e-4,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_iter == 0 || self.restarts == 0 {
            return config("max_iter and restarts must be positive");
        }
        if !(self.tol > 0.0) || !(self.cov_floor > 0.0) {
            return config("tol and cov_floor must be positive");
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0 / k as f64) {
            return config(format!(
                "weight_floor {} must lie in (0, 1/{k})",
                self.weight_floor
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: GaussianMixture,
    pub log_lik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub param_dim: usize,
    /// Log-likelihood after each E-step of the winning restart.
    pub log_lik_trace: Vec<f64>,
    /// Largest per-iteration log-likelihood decrease seen in any restart
    /// (zero when every run was monotone).
    pub max_decrease: f64,
    pub failed_restarts: usize,
}

struct EmRun {
    model: GaussianMixture,
    log_lik: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
    max_decrease: f64,
}

/// Maximum-likelihood fit of a `k`-component mixture, best of
/// `config.restarts` k-means++-seeded EM runs.
pub fn fit_em(
    data: &Dataset,
    k: usize,
    structure: CovStructure,
    config: &FitConfig,
) -> Result<FitResult> {
    if k == 0 {
        return crate::error::config("k must be at least 1");
    }
    config.validate(k)?;
    let n = data.len();
    if n <= k {
        return Err(Error::Infeasible(format!(
            "{n} observations cannot support {k} components"
        )));
    }
    let mean_var = data.column_variances().iter().sum::<f64>() / data.dim() as f64;
    if !(mean_var > 0.0) {
        return Err(Error::DegenerateData(
            "all observations are identical".into(),
        ));
    }
    let var_floor = config.cov_floor * mean_var;

    let runs: Vec<std::result::Result<EmRun, String>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            run_em(data, k, structure, config, var_floor, &mut rng)
        })
        .collect();

    let max_decrease = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.max_decrease)
        .fold(0.0, f64::max);
    let mut reasons = Vec::new();
    let mut best: Option<EmRun> = None;
    for run in runs {
        match run {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.log_lik > b.log_lik) {
                    best = Some(run);
                }
            }
            Err(reason) => reasons.push(reason),
        }
    }
    let Some(best) = best else {
        return Err(Error::FitFailure(FitDiagnostics {
            k,
            restarts: config.restarts,
            reasons,
        }));
    };
    Ok(FitResult {
        param_dim: best.model.param_dim(),
        model: best.model,
        log_lik: best.log_lik,
        iterations: best.iterations,
        converged: best.converged,
        log_lik_trace: best.trace,
        max_decrease,
        failed_restarts: reasons.len(),
    })
}

fn run_em<R: Rng>(
    data: &Dataset,
    k: usize,
    structure: CovStructure,
    config: &FitConfig,
    var_floor: f64,
    rng: &mut R,
) -> std::result::Result<EmRun, String> {
    let n = data.len();
    let mut model = initialize(data, k, structure, var_floor, rng)?;
    let mut resp = DMatrix::zeros(n, k);
    let mut ll = e_step(&model, data, &mut resp)?;
    let mut trace = vec![ll];
    let mut max_decrease = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        model = m_step(&model, data, &resp, structure, var_floor, config.weight_floor)?;
        iterations += 1;
        let next = e_step(&model, data, &mut resp)?;
        trace.push(next);
        max_decrease = max_decrease.max(ll - next);
        let gain = next - ll;
        ll = next;
        if gain <= config.tol * ll.abs() {
            converged = true;
            break;
        }
    }
    Ok(EmRun {
        model,
        log_lik: ll,
        iterations,
        converged,
        trace,
        max_decrease,
    })
}

/// Fills `resp` with posterior memberships and returns the log-likelihood.
fn e_step(
    model: &GaussianMixture,
    data: &Dataset,
    resp: &mut DMatrix<f64>,
) -> std::result::Result<f64, String> {
    let k = model.k();
    let mut buf = vec![0.0; k];
    let mut ll = 0.0;
    for (i, x) in data.rows().enumerate() {
        model.log_joint(x, &mut buf);
        let lf = log_sum_exp(&buf);
        if !lf.is_finite() {
            return Err(format!("density vanished at observation {i}"));
        }
        ll += lf;
        for j in 0..k {
            resp[(i, j)] = (buf[j] - lf).exp();
        }
    }
    Ok(ll)
}

fn m_step(
    prev: &GaussianMixture,
    data: &Dataset,
    resp: &DMatrix<f64>,
    structure: CovStructure,
    var_floor: f64,
    weight_floor: f64,
) -> std::result::Result<GaussianMixture, String> {
    let n = data.len();
    let d = data.dim();
    let k = resp.ncols();
    let counts: Vec<f64> = (0..k).map(|j| resp.column(j).sum()).collect();
    let weights = floored_weights(&counts, weight_floor);
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        let nj = counts[j];
        let prev_c = &prev.components[j];
        // a component without responsibility contributes nothing to the
        // expected complete-data likelihood; keep its shape
        if nj < 1e-300 * n as f64 || !nj.is_finite() {
            comps.push(Component {
                weight: weights[j],
                mean: prev_c.mean.clone(),
                cov: prev_c.cov.clone(),
            });
            continue;
        }
        let mut mean = DVector::zeros(d);
        for (i, x) in data.rows().enumerate() {
            let r = resp[(i, j)];
            for a in 0..d {
                mean[a] += r * x[a];
            }
        }
        mean /= nj;
        let mut scatter = DMatrix::zeros(d, d);
        for (i, x) in data.rows().enumerate() {
            let r = resp[(i, j)];
            if r == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = x[a] - mean[a];
                for b in 0..=a {
                    scatter[(a, b)] += r * da * (x[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                scatter[(b, a)] = scatter[(a, b)];
            }
        }
        scatter /= nj;
        comps.push(Component {
            weight: weights[j],
            mean,
            cov: constrain_cov(&scatter, structure, var_floor),
        });
    }
    GaussianMixture::new(structure, comps).map_err(|e| e.to_string())
}

/// Maximizes `Σ c_j log π_j` over the simplex with `π_j ≥ floor`.
pub(crate) fn floored_weights(counts: &[f64], floor: f64) -> Vec<f64> {
    let k = counts.len();
    let mut clamped = vec![false; k];
    loop {
        let n_clamped = clamped.iter().filter(|&&c| c).count();
        let free_mass = 1.0 - floor * n_clamped as f64;
        let free_count: f64 = counts
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(v, _)| *v)
            .sum();
        let n_free = k - n_clamped;
        let w: Vec<f64> = counts
            .iter()
            .zip(&clamped)
            .map(|(&c, &is_clamped)| {
                if is_clamped {
                    floor
                } else if free_count > 0.0 {
                    free_mass * c / free_count
                } else {
                    free_mass / n_free as f64
                }
            })
            .collect();
        let mut changed = false;
        for j in 0..k {
            if !clamped[j] && w[j] < floor {
                clamped[j] = true;
                changed = true;
            }
        }
        if !changed {
            // rounding can leave the sum a few ulps off one
            let total: f64 = w.iter().sum();
            return w.iter().map(|v| v / total).collect();
        }
    }
}

/// Projects a scatter matrix onto the structure with eigenvalues at least `floor`.
fn constrain_cov(scatter: &DMatrix<f64>, structure: CovStructure, floor: f64) -> DMatrix<f64> {
    let d = scatter.nrows();
    match structure {
        CovStructure::Spherical => {
            let v = (scatter.trace() / d as f64).max(floor);
            DMatrix::from_diagonal_element(d, d, v)
        }
        CovStructure::Diagonal => {
            DMatrix::from_diagonal(&scatter.diagonal().map(|v| v.max(floor)))
        }
        CovStructure::Full => {
            let eig = SymmetricEigen::new(scatter.clone());
            if eig.eigenvalues.iter().all(|&l| l >= floor) {
                return scatter.clone();
            }
            let clamped = eig.eigenvalues.map(|l| l.max(floor));
            let v = &eig.eigenvectors;
            let c = v * DMatrix::from_diagonal(&clamped) * v.transpose();
            (&c + c.transpose()) * 0.5
        }
    }
}

/// k-means++ seeds, uniform weights and the pooled within-seed covariance.
fn initialize<R: Rng>(
    data: &Dataset,
    k: usize,
    structure: CovStructure,
    var_floor: f64,
    rng: &mut R,
) -> std::result::Result<GaussianMixture, String> {
    let n = data.len();
    let d = data.dim();
    let mut seeds: Vec<usize> = vec![rng.random_range(0..n)];
    let mut dist2: Vec<f64> = data.rows().map(|x| sq_dist(x, data.row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        seeds.push(next);
        for (i, x) in data.rows().enumerate() {
            dist2[i] = dist2[i].min(sq_dist(x, data.row(next)));
        }
    }

    let mut assign = vec![0usize; n];
    let mut sums = vec![vec![0.0; d]; k];
    let mut sizes = vec![0usize; k];
    for (i, x) in data.rows().enumerate() {
        let (best, _) = seeds
            .iter()
            .enumerate()
            .map(|(j, &s)| (j, sq_dist(x, data.row(s))))
            .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        assign[i] = best;
        sizes[best] += 1;
        for a in 0..d {
            sums[best][a] += x[a];
        }
    }
    let centers: Vec<Vec<f64>> = sums
        .iter()
        .zip(&sizes)
        .map(|(s, &m)| s.iter().map(|v| v / m.max(1) as f64).collect())
        .collect();
    let mut pooled = DMatrix::zeros(d, d);
    for (i, x) in data.rows().enumerate() {
        let c = &centers[assign[i]];
        for a in 0..d {
            for b in 0..d {
                pooled[(a, b)] += (x[a] - c[a]) * (x[b] - c[b]);
            }
        }
    }
    pooled /= n as f64;
    let cov = constrain_cov(&pooled, structure, var_floor);
    let comps = seeds
        .iter()
        .map(|&s| Component {
            weight: 1.0 / k as f64,
            mean: DVector::from_column_slice(data.row(s)),
            cov: cov.clone(),
        })
        .collect();
    GaussianMixture::new(structure, comps).map_err(|e| e.to_string())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
