//! Kernel families, kernel matrices and centering.
//!
//! Two kernel families are supported:
//!
//! - the Gaussian kernel `K(x, y) = φ(x - y; 0, h² I)`, whose integrals against
//!   Gaussian mixtures are available in closed form, and
//! - the partition kernel `K(x, y) = Σ_c 1[x ∈ A_c] 1[y ∈ A_c] / p_c` on
//!   one-dimensional bins, for which every quadratic-distance quantity
//!   reduces to a Pearson chi-squared expression.
//!
//! A kernel matrix can be centered under a model `G`
//! (`K(x,y) - K(x,G) - K(G,y) + K(G,G)`) or under the empirical distribution
//! of the data (double centering).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::gaussian::Mvn;
use crate::mixture::GaussianMixture;

/// Disjoint bins `[e_c, e_{c+1})` on the real line with a probability per bin.
///
/// The last bin is closed on the right when its edge is finite. Edges may be
/// infinite to cover the whole line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCells {
    edges: Vec<f64>,
    probs: Vec<f64>,
}

impl PartitionCells {
    pub fn new(edges: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || probs.len() != edges.len() - 1 {
            return config(format!(
                "{} edges cannot carry {} cell probabilities",
                edges.len(),
                probs.len()
            ));
        }
        if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return config("partition edges must be strictly increasing");
        }
        if let Some(c) = probs.iter().position(|&p| !(p > 0.0)) {
            return config(format!("cell {c} has nonpositive probability"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return config(format!("cell probabilities sum to {total}, not 1"));
        }
        Ok(Self { edges, probs })
    }

    /// `cells` bins over the whole line with equal probabilities, split at
    /// the given interior cut points.
    pub fn equiprobable(cuts: &[f64]) -> Result<Self> {
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend_from_slice(cuts);
        edges.push(f64::INFINITY);
        let c = cuts.len() + 1;
        Self::new(edges, vec![1.0 / c as f64; c])
    }

    /// Same bins, new probabilities.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.edges.clone(), probs)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the bin containing `x`.
    pub fn cell_of(&self, x: f64) -> Result<usize> {
        let last = self.edges.len() - 1;
        if x.is_nan() || x < self.edges[0] || x > self.edges[last] {
            return Err(Error::Domain(format!("{x} lies outside every cell")));
        }
        // first edge strictly greater than x closes the cell
        let idx = self.edges.partition_point(|&e| e <= x);
        Ok(idx.clamp(1, last) - 1)
    }

    /// Occupancy counts of one-dimensional data.
    pub fn counts(&self, data: &Dataset) -> Result<Vec<usize>> {
        check_one_dim(data)?;
        let mut counts = vec![0; self.len()];
        for row in data.rows() {
            counts[self.cell_of(row[0])?] += 1;
        }
        Ok(counts)
    }
}

fn check_one_dim(data: &Dataset) -> Result<()> {
    if data.dim() != 1 {
        return config("partition kernels are defined on one-dimensional data only");
    }
    Ok(())
}

/// A conditionally nonnegative definite kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// Normal density kernel with covariance `h² I` in `ℝ^dim`.
    Gaussian { bandwidth: f64, dim: usize },
    Partition { cells: PartitionCells },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64, dim: usize) -> Result<Self> {
        let spec = KernelSpec::Gaussian { bandwidth, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn partition(cells: PartitionCells) -> Self {
        KernelSpec::Partition { cells }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { bandwidth, dim } => {
                if !(*bandwidth > 0.0 && bandwidth.is_finite()) {
                    return config(format!("bandwidth must be positive, got {bandwidth}"));
                }
                if *dim == 0 {
                    return config("kernel dimension must be at least 1");
                }
                Ok(())
            }
            KernelSpec::Partition { .. } => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::Gaussian { dim, .. } => *dim,
            KernelSpec::Partition { .. } => 1,
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            KernelSpec::Gaussian { bandwidth, .. } => Some(*bandwidth),
            KernelSpec::Partition { .. } => None,
        }
    }
}

/// `(2πh²)^(-D/2)`, the diagonal of a Gaussian kernel matrix.
pub fn gaussian_peak(h: f64, dim: usize) -> f64 {
    (2.0 * PI * h * h).powf(-0.5 * dim as f64)
}

#[inline]
fn gaussian_value(h: f64, peak: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    peak * (-0.5 * d2 / (h * h)).exp()
}

/// `K(x, y)`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != spec.dim() || y.len() != spec.dim() {
        return config(format!(
            "points of dimension {} and {} for a kernel of dimension {}",
            x.len(),
            y.len(),
            spec.dim()
        ));
    }
    match spec {
        KernelSpec::Gaussian { bandwidth, dim } => Ok(gaussian_value(
            *bandwidth,
            gaussian_peak(*bandwidth, *dim),
            x,
            y,
        )),
        KernelSpec::Partition { cells } => {
            let a = cells.cell_of(x[0])?;
            let b = cells.cell_of(y[0])?;
            Ok(if a == b { 1.0 / cells.probs[a] } else { 0.0 })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Centering {
    Raw,
    /// Centered under a model distribution; the label names the model.
    ModelCentered(String),
    EmpiricallyCentered,
    /// `(I - P) K (I - P)` for a score projection `P`.
    ScoreCentered,
}

/// An `n × n` symmetric kernel matrix over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub centering: Centering,
}

impl KernelMatrix {
    /// Wraps a square matrix; symmetry is checked to `1e-10` relative.
    pub fn new(values: DMatrix<f64>, centering: Centering) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return config("kernel matrix must be square");
        }
        let scale = values.amax().max(f64::MIN_POSITIVE);
        let n = values.nrows();
        for i in 0..n {
            for j in 0..i {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-10 * scale {
                    return config(format!("kernel matrix not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self { values, centering })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// `𝟙ᵀ K 𝟙`
    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    fn require(&self, expected: &Centering, op: &str) -> Result<()> {
        if std::mem::discriminant(&self.centering) != std::mem::discriminant(expected) {
            return config(format!(
                "{op} needs a {expected:?} kernel matrix, got {:?}",
                self.centering
            ));
        }
        Ok(())
    }
}

/// Fills a symmetric matrix from its upper triangle, rows in parallel.
fn symmetric_from_fn<F>(n: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| f(i, j)).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Raw kernel matrix `K_ij = K(x_i, x_j)`.
pub fn kernel_matrix(spec: &KernelSpec, data: &Dataset) -> Result<KernelMatrix> {
    spec.validate()?;
    if data.is_empty() {
        return config("kernel matrix of an empty dataset");
    }
    if data.dim() != spec.dim() {
        return config(format!(
            "data dimension {} differs from kernel dimension {}",
            data.dim(),
            spec.dim()
        ));
    }
    let n = data.len();
    let values = match spec {
        KernelSpec::Gaussian { bandwidth, dim } => {
            let h = *bandwidth;
            let peak = gaussian_peak(h, *dim);
            symmetric_from_fn(n, |i, j| gaussian_value(h, peak, data.row(i), data.row(j)))
        }
        KernelSpec::Partition { cells } => {
            let idx: Vec<usize> = data
                .rows()
                .map(|r| cells.cell_of(r[0]))
                .collect::<Result<_>>()?;
            symmetric_from_fn(n, |i, j| {
                if idx[i] == idx[j] {
                    1.0 / cells.probs[idx[i]]
                } else {
                    0.0
                }
            })
        }
    };
    Ok(KernelMatrix {
        values,
        centering: Centering::Raw,
    })
}

/// `K(x_i, G)` for every observation and `K(G, G)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelIntegrals {
    pub kxg: Vec<f64>,
    pub kgg: f64,
}

/// `∬ K(x, y) dA(x) dB(y)` for the Gaussian kernel and two mixtures:
/// `Σ_j Σ_l a_j b_l φ(μ_j; μ_l, Σ_j + Σ_l + h² I)`.
pub fn mixture_cross_integral(h: f64, a: &GaussianMixture, b: &GaussianMixture) -> Result<f64> {
    if a.dim() != b.dim() {
        return config("mixtures differ in dimension");
    }
    let h2 = h * h;
    let mut total = 0.0;
    for ca in a.components() {
        for cb in b.components() {
            let mut cov = &ca.cov + &cb.cov;
            for i in 0..a.dim() {
                cov[(i, i)] += h2;
            }
            let mvn = Mvn::new(cb.mean.clone(), &cov)?;
            total += ca.weight * cb.weight * mvn.log_density(ca.mean.as_slice()).exp();
        }
    }
    Ok(total)
}

/// Closed-form Gaussian-kernel quadratic distance between two mixtures,
/// `K(F,F) - 2 K(F,G) + K(G,G)`.
pub fn mixture_distance(h: f64, f: &GaussianMixture, g: &GaussianMixture) -> Result<f64> {
    Ok(mixture_cross_integral(h, f, f)? - 2.0 * mixture_cross_integral(h, f, g)?
        + mixture_cross_integral(h, g, g)?)
}

/// Closed-form kernel integrals of the Gaussian kernel against a mixture:
/// `K(x, G) = Σ_j π_j φ(x; μ_j, Σ_j + h² I)`.
pub fn integrals_vs_gaussian_mixture(
    spec: &KernelSpec,
    data: &Dataset,
    mix: &GaussianMixture,
) -> Result<ModelIntegrals> {
    let KernelSpec::Gaussian { bandwidth, dim } = spec else {
        return config("closed-form mixture integrals need a Gaussian kernel");
    };
    spec.validate()?;
    if *dim != mix.dim() || data.dim() != mix.dim() {
        return config(format!(
            "kernel dimension {dim}, data dimension {}, mixture dimension {}",
            data.dim(),
            mix.dim()
        ));
    }
    let h2 = bandwidth * bandwidth;
    let smoothed: Vec<(f64, Mvn)> = mix
        .components()
        .iter()
        .map(|c| {
            let mut cov = c.cov.clone();
            for i in 0..*dim {
                cov[(i, i)] += h2;
            }
            Mvn::new(c.mean.clone(), &cov).map(|m| (c.weight, m))
        })
        .collect::<Result<_>>()?;
    let kxg = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            smoothed
                .iter()
                .map(|(w, m)| w * m.log_density(x).exp())
                .sum()
        })
        .collect();
    let kgg = mixture_cross_integral(*bandwidth, mix, mix)?;
    Ok(ModelIntegrals { kxg, kgg })
}

/// Integrals of a partition kernel with bin probabilities `p` against a
/// model giving the bins probabilities `g`: `K(x, G) = g_c / p_c` for the
/// bin `c` containing `x`, and `K(G, G) = Σ_c g_c² / p_c`. Both equal 1 when
/// the kernel is built from the model's own probabilities.
pub fn integrals_vs_partition_model(
    spec: &KernelSpec,
    data: &Dataset,
    model_probs: &[f64],
) -> Result<ModelIntegrals> {
    let KernelSpec::Partition { cells } = spec else {
        return config("partition integrals need a partition kernel");
    };
    check_one_dim(data)?;
    if model_probs.len() != cells.len() {
        return config(format!(
            "{} model probabilities for {} cells",
            model_probs.len(),
            cells.len()
        ));
    }
    if let Some(c) = model_probs.iter().position(|&g| !(g > 0.0)) {
        return config(format!("model gives cell {c} zero probability"));
    }
    if (model_probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return config("model probabilities do not sum to 1");
    }
    let kxg = data
        .rows()
        .map(|r| cells.cell_of(r[0]).map(|c| model_probs[c] / cells.probs[c]))
        .collect::<Result<_>>()?;
    let kgg = model_probs
        .iter()
        .zip(&cells.probs)
        .map(|(g, p)| g * g / p)
        .sum();
    Ok(ModelIntegrals { kxg, kgg })
}

/// Kernel integrals against a fitted mixture for either kernel family; the
/// partition kernel uses the mixture's cell probabilities.
pub fn integrals_vs_mixture(
    spec: &KernelSpec,
    data: &Dataset,
    mix: &GaussianMixture,
) -> Result<ModelIntegrals> {
    match spec {
        KernelSpec::Gaussian { .. } => integrals_vs_gaussian_mixture(spec, data, mix),
        KernelSpec::Partition { cells } => {
            let g = crate::pearson::mixture_cell_probs(mix, cells)?;
            integrals_vs_partition_model(spec, data, &g)
        }
    }
}

/// `K(x_i, x_j) - K(x_i, G) - K(G, x_j) + K(G, G)`.
pub fn center_under_model(
    raw: &KernelMatrix,
    ints: &ModelIntegrals,
    label: impl Into<String>,
) -> Result<KernelMatrix> {
    raw.require(&Centering::Raw, "model centering")?;
    let n = raw.n();
    if ints.kxg.len() != n {
        return config(format!(
            "{} kernel integrals for a {n}x{n} kernel matrix",
            ints.kxg.len()
        ));
    }
    let a = &ints.kxg;
    let values = symmetric_from_fn(n, |i, j| raw.values[(i, j)] - a[i] - a[j] + ints.kgg);
    Ok(KernelMatrix {
        values,
        centering: Centering::ModelCentered(label.into()),
    })
}

/// Double centering by row, column and grand means.
pub fn center_empirically(raw: &KernelMatrix) -> Result<KernelMatrix> {
    raw.require(&Centering::Raw, "empirical centering")?;
    let n = raw.n();
    let nf = n as f64;
    let row_means: Vec<f64> = raw.values.row_iter().map(|r| r.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let values = symmetric_from_fn(n, |i, j| {
        raw.values[(i, j)] - row_means[i] - row_means[j] + grand
    });
    Ok(KernelMatrix {
        values,
        centering: Centering::EmpiricallyCentered,
    })
}

/// `K / c` with `c = tr(K) / tr(K²)`. Returns the scaled matrix and `c`.
pub fn scale_kernel(k: &KernelMatrix) -> Result<(KernelMatrix, f64)> {
    let tr = k.trace();
    // K symmetric, so tr(K²) is the squared Frobenius norm
    let tr2 = k.values.norm_squared();
    if !(tr2 > 0.0) {
        return Err(Error::DegenerateKernel(
            "cannot scale a zero kernel matrix".into(),
        ));
    }
    let c = tr / tr2;
    if c == 0.0 {
        return Err(Error::DegenerateKernel(
            "kernel matrix has zero trace".into(),
        ));
    }
    Ok((
        KernelMatrix {
            values: &k.values / c,
            centering: k.centering.clone(),
        },
        c,
    ))
}

/// Row vector of `K(x_i, G)` as a column, for callers that want nalgebra.
pub fn kxg_vector(ints: &ModelIntegrals) -> DVector<f64> {
    DVector::from_column_slice(&ints.kxg)
}
