//! U/V statistics, score projections and traces.
//!
//! Projections are stored through an orthonormal basis `W` (`n × r`) so that
//! `P = W Wᵀ` is never materialized unless asked for; every product with a
//! kernel matrix then costs `O(n² r)`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{config, Error, Result};
use crate::kernel::{Centering, KernelMatrix};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const PINV_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceEstimates {
    pub v_stat: f64,
    pub u_stat: f64,
    pub n: usize,
}

/// `𝟙ᵀ K 𝟙 / n²`.
pub fn v_statistic(cen: &KernelMatrix) -> Result<f64> {
    if cen.centering == Centering::Raw {
        return config("V-statistic needs a centered kernel matrix");
    }
    let n = cen.n() as f64;
    if cen.centering == Centering::EmpiricallyCentered {
        // row sums vanish by construction; skip the round-off
        return Ok(0.0);
    }
    Ok(cen.total() / (n * n))
}

/// `(𝟙ᵀ K 𝟙 - tr K) / (n (n - 1))`, the mean off-diagonal entry.
pub fn u_statistic(cen: &KernelMatrix) -> Result<f64> {
    if !matches!(cen.centering, Centering::ModelCentered(_)) {
        return config("U-statistic needs a model-centered kernel matrix");
    }
    let n = cen.n();
    if n < 2 {
        return Err(Error::Infeasible(
            "U-statistic needs at least two observations".into(),
        ));
    }
    let nf = n as f64;
    Ok((cen.total() - cen.trace()) / (nf * (nf - 1.0)))
}

pub fn distance_estimates(cen: &KernelMatrix) -> Result<DistanceEstimates> {
    Ok(DistanceEstimates {
        v_stat: v_statistic(cen)?,
        u_stat: u_statistic(cen)?,
        n: cen.n(),
    })
}

/// An orthogonal projection `P = W Wᵀ` on `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    basis: DMatrix<f64>,
    /// Leading basis column is `𝟙/√n`.
    has_constant: bool,
    condition_number: f64,
    rank_deficient: bool,
}

impl ProjectionMatrix {
    /// Projection onto the span of orthonormal columns.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::<f64>::identity(r, r)).amax() > 1e-8 {
            return config("projection basis is not orthonormal");
        }
        Ok(Self {
            basis,
            has_constant: false,
            condition_number: 1.0,
            rank_deficient: false,
        })
    }

    /// `P = 0`.
    pub fn zero(n: usize) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
            has_constant: false,
            condition_number: 1.0,
            rank_deficient: false,
        }
    }

    /// `P = I`, the projection of a saturated (empirical) model.
    pub fn saturated(n: usize) -> Self {
        Self {
            basis: DMatrix::identity(n, n),
            has_constant: false,
            condition_number: 1.0,
            rank_deficient: false,
        }
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Ratio of extreme singular values of the (column-equilibrated)
    /// centered score matrix; infinite when columns were dropped as null.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Fewer independent directions than extended-score columns.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Dense `n × n` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `P - 𝟙𝟙ᵀ/n`: the part of an extended-score projection that lies
    /// orthogonal to the constants.
    pub fn score_part(&self) -> Result<ProjectionMatrix> {
        if !self.has_constant {
            return config("projection was not built from extended scores");
        }
        Ok(Self {
            basis: self.basis.columns(1, self.rank() - 1).into_owned(),
            has_constant: false,
            condition_number: self.condition_number,
            rank_deficient: self.rank_deficient,
        })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }
}

/// Hat matrix `U (UᵀU)⁻ Uᵀ` of an extended-score matrix whose first column
/// is constant one.
///
/// The constant direction is split off exactly; the remaining score columns
/// are mean-centered, scaled to unit norm and passed through a thin SVD whose
/// singular values below `1e-10 ·` the largest are treated as zero. Scaling
/// leaves the span, and hence the projection, unchanged.
pub fn build_projection(ext: &DMatrix<f64>) -> Result<ProjectionMatrix> {
    let (n, q) = ext.shape();
    if q == 0 {
        return config("extended-score matrix has no columns");
    }
    if n <= q {
        return Err(Error::Infeasible(format!(
            "{n} observations cannot support {} score parameters",
            q - 1
        )));
    }
    if ext.column(0).iter().any(|&v| v != 1.0) {
        return config("first extended-score column must be all ones");
    }
    let nf = n as f64;
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(q - 1);
    for c in 1..q {
        let col = ext.column(c);
        let norm = col.norm();
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("score column {c} is not finite")));
        }
        let centered = col.add_scalar(-col.sum() / nf);
        let cnorm = centered.norm();
        if cnorm > PINV_TOL * norm && cnorm > 0.0 {
            kept.push(centered / cnorm);
        }
    }
    let dropped = (q - 1) - kept.len();
    let constant = DMatrix::from_element(n, 1, 1.0 / nf.sqrt());
    if kept.is_empty() {
        return Ok(ProjectionMatrix {
            basis: constant,
            has_constant: true,
            condition_number: if dropped > 0 { f64::INFINITY } else { 1.0 },
            rank_deficient: dropped > 0,
        });
    }
    let scores = DMatrix::from_columns(&kept);
    let svd = SVD::new(scores, true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD produced no left vectors".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.max();
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > PINV_TOL * smax).collect();
    let smin = sv.min();
    let condition_number = if dropped > 0 || smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    };
    let mut basis = DMatrix::zeros(n, 1 + keep.len());
    basis.set_column(0, &constant.column(0));
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j + 1, &u.column(i));
    }
    Ok(ProjectionMatrix {
        basis,
        has_constant: true,
        condition_number,
        rank_deficient: 1 + keep.len() < q,
    })
}

fn check_shapes(k: &KernelMatrix, proj: &ProjectionMatrix) -> Result<()> {
    if k.n() != proj.n() {
        return config(format!(
            "kernel matrix is {0}x{0}, projection is {1}x{1}",
            k.n(),
            proj.n()
        ));
    }
    Ok(())
}

/// `(I - P) K (I - P)`.
pub fn score_center(k: &KernelMatrix, proj: &ProjectionMatrix) -> Result<KernelMatrix> {
    check_shapes(k, proj)?;
    let w = proj.basis();
    let kw = &k.values * w;
    let core = w.transpose() * &kw;
    let mut out = &k.values - w * kw.transpose() - &kw * w.transpose() + w * (core * w.transpose());
    // restore exact symmetry lost to round-off
    let n = out.nrows();
    for i in 0..n {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    Ok(KernelMatrix {
        values: out,
        centering: Centering::ScoreCentered,
    })
}

/// Traces of the score-centered kernel and of the projected kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Traces {
    /// `tr((I - P) K (I - P))`
    pub tr_scen: f64,
    /// `tr(P K P)`
    pub tr_pkp: f64,
    /// `tr(P K)`
    pub tr_pk: f64,
}

/// Computes both traces in `O(n² r)` without forming `n × n` products.
pub fn traces(k: &KernelMatrix, proj: &ProjectionMatrix) -> Result<Traces> {
    check_shapes(k, proj)?;
    let w = proj.basis();
    let n = k.n();
    if proj.rank() == 0 {
        return Ok(Traces {
            tr_scen: k.trace(),
            tr_pkp: 0.0,
            tr_pk: 0.0,
        });
    }
    let kw = &k.values * w;
    let core = w.transpose() * &kw;
    let tr_pkp = core.trace();
    let wc = w * &core;
    let mut tr_pk = 0.0;
    let mut tr_scen = 0.0;
    for i in 0..n {
        let cross = w.row(i).dot(&kw.row(i));
        tr_pk += cross;
        tr_scen += k.values[(i, i)] - 2.0 * cross + wc.row(i).dot(&w.row(i));
    }
    Ok(Traces {
        tr_scen,
        tr_pkp,
        tr_pk,
    })
}
