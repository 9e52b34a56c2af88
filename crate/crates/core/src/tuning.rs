//! Spectral degrees of freedom and bandwidth choice.
//!
//! The sDOF of a kernel on a sample is `(tr K̃)² / tr(K̃²)` for the
//! empirically centered kernel matrix `K̃` — the effective number of
//! eigen-directions the kernel resolves, playing the role the cell count plays
//! for a chi-squared test. A bandwidth is reasonable when the sDOF sits
//! between `max(5, D(D+1)/2)` and `n/5`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::kernel::{
    center_empirically, gaussian_peak, kernel_matrix, Centering, KernelMatrix, KernelSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TooSmooth,
    InRange,
    TooRough,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdofReport {
    pub h: f64,
    pub sdof: f64,
    pub verdict: Verdict,
}

/// Acceptable sDOF range for `n` points in `ℝ^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdofBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SdofBounds {
    pub fn new(n: usize, dim: usize) -> Self {
        Self {
            lower: 5f64.max((dim * (dim + 1)) as f64 / 2.0),
            upper: n as f64 / 5.0,
        }
    }

    pub fn verdict(&self, sdof: f64) -> Verdict {
        if sdof < self.lower {
            Verdict::TooSmooth
        } else if sdof > self.upper {
            Verdict::TooRough
        } else {
            Verdict::InRange
        }
    }
}

/// `(tr K)² / tr(K²)` of an empirically centered matrix.
pub fn sdof_from_centered(cen: &KernelMatrix) -> Result<f64> {
    if cen.centering != Centering::EmpiricallyCentered {
        return config("sDOF needs an empirically centered kernel matrix");
    }
    let tr = cen.trace();
    let tr2 = cen.values.norm_squared();
    if !(tr2 > 1e-300) {
        return Err(Error::DegenerateData(
            "centered kernel matrix vanishes (all observations identical?)".into(),
        ));
    }
    Ok(tr * tr / tr2)
}

pub fn sdof_empirical(data: &Dataset, spec: &KernelSpec) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::Infeasible("sDOF needs at least two observations".into()));
    }
    let raw = kernel_matrix(spec, data)?;
    sdof_from_centered(&center_empirically(&raw)?)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi.is_finite()) || hi < lo {
        return config(format!("invalid bandwidth range {lo}:{hi}"));
    }
    if count == 0 || (count == 1 && lo != hi) {
        return config("grid needs at least two points for a nontrivial range");
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// 24 log-spaced bandwidths from 0.1 to 3 (for standardized data).
pub fn default_h_grid() -> Vec<f64> {
    log_grid(0.1, 3.0, 24).expect("static grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub reports: Vec<SdofReport>,
    pub bounds: SdofBounds,
    pub recommended: f64,
    /// False when no grid point was in range and the fallback was used.
    pub in_range: bool,
}

fn squared_distances(data: &Dataset) -> Vec<Vec<f64>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            (0..data.len())
                .map(|j| x.iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect()
}

fn sdof_from_distances(d2: &[Vec<f64>], h: f64, dim: usize) -> Result<f64> {
    let n = d2.len();
    let peak = gaussian_peak(h, dim);
    let values = nalgebra::DMatrix::from_fn(n, n, |i, j| peak * (-0.5 * d2[i][j] / (h * h)).exp());
    let raw = KernelMatrix::new(values, Centering::Raw)?;
    sdof_from_centered(&center_empirically(&raw)?)
}

/// Evaluates the sDOF of the Gaussian kernel at every grid bandwidth and
/// picks the median in-range one (lower median for even counts). Without an
/// in-range point, the bandwidth whose sDOF is closest on the log scale to
/// the geometric mean of the bounds is returned and `in_range` is false.
pub fn recommend_h(data: &Dataset, grid: &[f64]) -> Result<Recommendation> {
    if grid.is_empty() {
        return config("bandwidth grid is empty");
    }
    if let Some(h) = grid.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return config(format!("bandwidth {h} is not positive"));
    }
    if data.len() < 2 {
        return Err(Error::Infeasible("sDOF needs at least two observations".into()));
    }
    let dim = data.dim();
    let bounds = SdofBounds::new(data.len(), dim);
    let d2 = squared_distances(data);
    let reports: Vec<SdofReport> = grid
        .par_iter()
        .map(|&h| {
            sdof_from_distances(&d2, h, dim).map(|sdof| SdofReport {
                h,
                sdof,
                verdict: bounds.verdict(sdof),
            })
        })
        .collect::<Result<_>>()?;
    let mut inside: Vec<f64> = reports
        .iter()
        .filter(|r| r.verdict == Verdict::InRange)
        .map(|r| r.h)
        .collect();
    inside.sort_by(f64::total_cmp);
    let (recommended, in_range) = if inside.is_empty() {
        let target = (bounds.lower * bounds.upper).sqrt().ln();
        let best = reports
            .iter()
            .min_by(|a, b| {
                (a.sdof.ln() - target)
                    .abs()
                    .total_cmp(&(b.sdof.ln() - target).abs())
            })
            .expect("nonempty grid");
        (best.h, false)
    } else {
        (inside[(inside.len() - 1) / 2], true)
    };
    Ok(Recommendation {
        reports,
        bounds,
        recommended,
        in_range,
    })
}
