//! Binned (chi-squared) reference models.
//!
//! With a partition kernel every quadratic-distance estimator reduces to a
//! Pearson chi-squared expression, which makes these models exact oracles for
//! the generic kernel pipeline.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::kernel::PartitionCells;
use crate::mixture::GaussianMixture;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `P(a ≤ Z < b)` for a standard normal, accurate in both tails.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        normal_sf(a) - normal_sf(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// `Σ_c (O_c - n g_c)² / (n g_c)`.
pub fn pearson_statistic(counts: &[usize], probs: &[f64]) -> Result<f64> {
    if counts.len() != probs.len() {
        return config("counts and probabilities differ in length");
    }
    if probs.iter().any(|&g| !(g > 0.0)) {
        return config("cell probabilities must be positive");
    }
    let n: usize = counts.iter().sum();
    let nf = n as f64;
    Ok(counts
        .iter()
        .zip(probs)
        .map(|(&o, &g)| {
            let e = nf * g;
            (o as f64 - e).powi(2) / e
        })
        .sum())
}

/// Probability mass a one-dimensional mixture puts on each cell.
pub fn mixture_cell_probs(mix: &GaussianMixture, cells: &PartitionCells) -> Result<Vec<f64>> {
    if mix.dim() != 1 {
        return config("cell probabilities need a one-dimensional mixture");
    }
    let edges = cells.edges();
    let probs: Vec<f64> = edges
        .windows(2)
        .map(|e| {
            mix.components()
                .iter()
                .map(|c| {
                    let sd = c.cov[(0, 0)].sqrt();
                    let mu = c.mean[0];
                    c.weight * normal_interval((e[0] - mu) / sd, (e[1] - mu) / sd)
                })
                .sum()
        })
        .collect();
    Ok(probs)
}

/// Unit-variance normal location model observed through bins
/// `(-∞, t₁), [t₁, t₂), …, [t_{C-1}, ∞)`:
/// `g_c(μ) = Φ(t_c - μ) - Φ(t_{c-1} - μ)`, one free parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedNormalLocation {
    edges: Vec<f64>,
}

impl BinnedNormalLocation {
    pub fn new(cuts: &[f64]) -> Result<Self> {
        if cuts.is_empty() {
            return config("need at least one cut point");
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return config("cut points must be finite and strictly increasing");
        }
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend_from_slice(cuts);
        edges.push(f64::INFINITY);
        Ok(Self { edges })
    }

    pub fn cells(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probs(&self, mu: f64) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|e| normal_interval(e[0] - mu, e[1] - mu))
            .collect()
    }

    /// `d g_c / d μ`.
    pub fn prob_derivatives(&self, mu: f64) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|e| normal_pdf(e[0] - mu) - normal_pdf(e[1] - mu))
            .collect()
    }

    /// Partition kernel cells weighted by the model at `mu`.
    pub fn partition(&self, mu: f64) -> Result<PartitionCells> {
        let mut probs = self.probs(mu);
        // absorb the last few ulps so the sum check is exact
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        PartitionCells::new(self.edges.clone(), probs)
    }

    /// Score `Σ_c O_c g'_c / g_c`, strictly decreasing in `μ`.
    fn score(&self, counts: &[usize], mu: f64) -> f64 {
        self.probs(mu)
            .iter()
            .zip(self.prob_derivatives(mu))
            .zip(counts)
            .map(|((g, dg), &o)| if o == 0 { 0.0 } else { o as f64 * dg / g })
            .sum()
    }

    /// Maximum-likelihood `μ` from cell counts, by bisection on the score.
    pub fn fit(&self, counts: &[usize]) -> Result<f64> {
        if counts.len() != self.cells() {
            return config("one count per cell required");
        }
        let occupied: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
        let (Some(&lo_cell), Some(&hi_cell)) = (occupied.first(), occupied.last()) else {
            return config("no observations");
        };
        if lo_cell == hi_cell && (lo_cell == 0 || hi_cell == self.cells() - 1) {
            return Err(Error::Infeasible(
                "all observations in an unbounded end cell; the MLE diverges".into(),
            ));
        }
        let first = self.edges[1];
        let last = self.edges[self.cells() - 1];
        let (mut lo, mut hi) = (first - 40.0, last + 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.score(counts, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * mid.abs().max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `n × 2` extended scores `(1, g'_c(μ)/g_c(μ))` for one-dimensional data.
    pub fn extended_scores(&self, data: &Dataset, mu: f64) -> Result<DMatrix<f64>> {
        if data.dim() != 1 {
            return config("binned models take one-dimensional data");
        }
        let cells = self.partition(mu)?;
        let g = self.probs(mu);
        let dg = self.prob_derivatives(mu);
        let mut out = DMatrix::from_element(data.len(), 2, 1.0);
        for (i, row) in data.rows().enumerate() {
            let c = cells.cell_of(row[0])?;
            if !(g[c] > 0.0) {
                return Err(Error::ScoreUnderflow { index: i });
            }
            out[(i, 1)] = dg[c] / g[c];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_statistic(&[10, 10, 10], &[1.0 / 3.0; 3]).unwrap(), 0.0);
        // (20-15)²/15 + (10-15)²/15
        let x = pearson_statistic(&[20, 10], &[0.5, 0.5]).unwrap();
        assert!((x - 50.0 / 15.0).abs() < 1e-12);
        assert!(pearson_statistic(&[1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn normal_functions() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((normal_interval(8.0, f64::INFINITY) - normal_sf(8.0)).abs() < 1e-30);
        assert!(normal_interval(8.0, 9.0) > 0.0);
    }

    #[test]
    fn binned_model_probabilities() {
        let m = BinnedNormalLocation::new(&[-1.0, 0.0, 1.0]).unwrap();
        let p = m.probs(0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - p[3]).abs() < 1e-15 && (p[1] - p[2]).abs() < 1e-15);
        // derivative by central difference
        let h = 1e-6;
        let (up, dn) = (m.probs(0.3 + h), m.probs(0.3 - h));
        for (c, d) in m.prob_derivatives(0.3).iter().enumerate() {
            assert!(((up[c] - dn[c]) / (2.0 * h) - d).abs() < 1e-8);
        }
    }

    #[test]
    fn mle_solves_score_equation() {
        let m = BinnedNormalLocation::new(&[-1.0, 0.0, 1.0]).unwrap();
        let counts = [12, 30, 41, 17];
        let mu = m.fit(&counts).unwrap();
        assert!(m.score(&counts, mu).abs() < 1e-8);
        // symmetric counts put the MLE at the centre
        assert!(m.fit(&[5, 20, 20, 5]).unwrap().abs() < 1e-12);
        assert!(matches!(m.fit(&[9, 0, 0, 0]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn extended_score_columns_sum_to_zero_at_mle() {
        let m = BinnedNormalLocation::new(&[-0.5, 0.5]).unwrap();
        let data = Dataset::from_scalars(&[-2.0, -0.7, -0.1, 0.2, 0.3, 0.9, 1.4]).unwrap();
        let cells = m.partition(0.0).unwrap();
        let counts = cells.counts(&data).unwrap();
        let mu = m.fit(&counts).unwrap();
        let u = m.extended_scores(&data, mu).unwrap();
        assert!(u.column(1).sum().abs() < 1e-8);
        assert!(u.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mixture_cell_probs_match_binned_model() {
        use crate::mixture::{Component, CovStructure};
        use nalgebra::DVector;
        let mix = GaussianMixture::new(
            CovStructure::Full,
            vec![Component {
                weight: 1.0,
                mean: DVector::from_vec(vec![0.4]),
                cov: DMatrix::identity(1, 1),
            }],
        )
        .unwrap();
        let m = BinnedNormalLocation::new(&[-1.0, 0.5, 2.0]).unwrap();
        let cells = m.partition(0.0).unwrap();
        let a = mixture_cell_probs(&mix, &cells).unwrap();
        for (x, y) in a.iter().zip(m.probs(0.4)) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
