//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Exits nonzero when an asserted
//! check fails. Lines tagged `known` are checked faithfully and reported, but
//! their outcome is explained by an exact identity that is asserted instead.

mod common;

use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector};
use qdrisk::kernel::{
    center_under_model, eval_kernel, integrals_vs_gaussian_mixture, integrals_vs_partition_model,
    kernel_matrix, KernelSpec, PartitionCells,
};
use qdrisk::mixture::{fit_em, Component, CovStructure, FitConfig, GaussianMixture};
use qdrisk::pearson::{pearson_statistic, BinnedNormalLocation};
use qdrisk::quaddist::{build_projection, u_statistic, v_statistic, ProjectionMatrix};
use qdrisk::risk::{
    bic_equivalent_m, combinations, cv_splits, cv_unbiased_risk, qaic, quadratic_risk_at_m,
    risk_components, subset_u_statistic, CvConfig,
};
use qdrisk::selection::{scan, standardize, Criterion, ModelScanResult, ScanConfig};
use qdrisk::simgen::{generate, replication_seeds, ScenarioId, ScenarioSpec};
use qdrisk::tuning::{default_h_grid, recommend_h, sdof_empirical};
use qdrisk::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Report {
    failed_asserted: usize,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, pass: bool, detail: String, started: Instant) {
        println!(
            "criterion {id:<3} {:<4} {name} [{detail}] ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        if !pass {
            self.failed_asserted += 1;
        }
    }

    fn known(&mut self, id: &str, name: &str, pass: bool, detail: String) {
        println!(
            "criterion {id:<3} {:<4} {name} [{detail}] (known)",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

/// Every fitted model seen by the suite, for the projection and EM checks.
#[derive(Default)]
struct FitAudit {
    fits: usize,
    worst_idempotence: f64,
    worst_trace: f64,
    worst_decrease: f64,
    decrease_violations: usize,
}

impl FitAudit {
    fn record(&mut self, data: &Dataset, model: &GaussianMixture, max_decrease: f64) {
        self.fits += 1;
        self.worst_decrease = self.worst_decrease.max(max_decrease);
        if max_decrease > 1e-8 {
            self.decrease_violations += 1;
        }
        let ext = model.extended_scores(data).expect("scores of a fitted model");
        let proj = build_projection(&ext).expect("projection of a fitted model");
        let (idem, tr) = projection_defects(&proj);
        self.worst_idempotence = self.worst_idempotence.max(idem);
        self.worst_trace = self.worst_trace.max(tr);
    }
}

/// `(‖P² − P‖_max, |tr P − rank|)`, with `P` formed explicitly.
fn projection_defects(proj: &ProjectionMatrix) -> (f64, f64) {
    let p = proj.matrix();
    let idem = (&p * &p - &p).amax();
    (idem, (p.trace() - proj.rank() as f64).abs())
}

fn multinomial(n: usize, probs: &[f64], rng: &mut ChaCha8Rng) -> Dataset {
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let c = probs
                .iter()
                .position(|p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(probs.len() - 1);
            c as f64 + 0.5
        })
        .collect();
    Dataset::from_scalars(&xs).unwrap()
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let combos: Vec<(usize, usize)> =
        [3usize, 5, 10].iter().flat_map(|&c| [50usize, 500].map(|n| (c, n))).collect();
    let (mut v_err, mut q_err, mut u_lit_err, mut u_exact_err, mut factor_err) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..50 {
        let (c, n) = combos[i % combos.len()];
        // data from a random multinomial; the fitted model stays equiprobable
        let raw_p: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
        let tot: f64 = raw_p.iter().sum();
        let truth: Vec<f64> = raw_p.iter().map(|p| p / tot).collect();
        let data = multinomial(n, &truth, &mut rng);
        let probs = vec![1.0 / c as f64; c];
        let cells = PartitionCells::new((0..=c).map(|e| e as f64).collect(), probs.clone()).unwrap();
        let spec = KernelSpec::partition(cells.clone());
        let chi2 = pearson_statistic(&cells.counts(&data).unwrap(), &probs).unwrap();
        let nf = n as f64;
        let df = c as f64 - 1.0;

        let raw = kernel_matrix(&spec, &data).unwrap();
        let ints = integrals_vs_partition_model(&spec, &data, &probs).unwrap();
        let cen = center_under_model(&raw, &ints, "equiprobable").unwrap();
        let v = v_statistic(&cen).unwrap();
        let u = u_statistic(&cen).unwrap();
        let rc = risk_components(&raw, &ints, &DMatrix::from_element(n, 1, 1.0), "equiprobable").unwrap();
        let q = qaic(rc.mlf_hat, rc.pec_hat_at_n, n).total;

        v_err = v_err.max((v - chi2 / nf).abs());
        q_err = q_err.max((q - (chi2 / nf - df / nf)).abs());
        u_lit_err = u_lit_err.max((u - (chi2 / nf - df / nf)).abs());
        // the off-diagonal mean is (nV - (C-1)) / (n - 1): the literal form
        // is off by exactly the factor n / (n - 1)
        u_exact_err = u_exact_err.max((u - (chi2 - df) / (nf - 1.0)).abs());
        factor_err = factor_err.max((u * (nf - 1.0) / nf - (chi2 / nf - df / nf)).abs());
    }
    r.line("1a", "V-statistic = Pearson/n", v_err <= 1e-10, format!("max err {v_err:.2e}"), t);
    r.line("1b", "QAIC = Pearson/n - (C-1)/n", q_err <= 1e-10, format!("max err {q_err:.2e}"), t);
    r.known(
        "1c",
        "U-statistic = Pearson/n - (C-1)/n",
        u_lit_err <= 1e-10,
        format!("max err {u_lit_err:.2e}; unattainable for an off-diagonal mean"),
    );
    r.line(
        "1d",
        "U-statistic = (Pearson - (C-1))/(n-1) and (n-1)/n U = Pearson/n - (C-1)/n",
        u_exact_err <= 1e-10 && factor_err <= 1e-10,
        format!("max err {u_exact_err:.2e}, {factor_err:.2e}"),
        t,
    );
    r.line("1t", "runtime < 10 s", t.elapsed().as_secs_f64() < 10.0, String::new(), t);
}

fn std_normal() -> GaussianMixture {
    GaussianMixture::new(
        CovStructure::Full,
        vec![Component { weight: 1.0, mean: DVector::zeros(1), cov: DMatrix::identity(1, 1) }],
    )
    .unwrap()
}

fn criterion_2(r: &mut Report) {
    let t = Instant::now();
    let g = std_normal();
    let spec = KernelSpec::gaussian(1.0, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let us: Vec<f64> = (0..500)
        .map(|_| {
            let xs: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
            let data = Dataset::from_scalars(&xs).unwrap();
            let raw = kernel_matrix(&spec, &data).unwrap();
            let ints = integrals_vs_gaussian_mixture(&spec, &data, &g).unwrap();
            u_statistic(&center_under_model(&raw, &ints, "N(0,1)").unwrap()).unwrap()
        })
        .collect();
    let (mean, se) = mean_and_se(&us);
    r.line(
        "2",
        "U-statistic unbiased under the model",
        mean.abs() <= 3.0 * se && t.elapsed().as_secs_f64() < 30.0,
        format!("mean {mean:.3e}, se {se:.3e}"),
        t,
    );
}

/// Independent 2-D evaluation of `Σ_j π_j φ(x; μ_j, Σ_j + h² I)`.
fn smoothed_density_2d(mix: &GaussianMixture, h: f64, x: f64, y: f64) -> f64 {
    mix.components()
        .iter()
        .map(|c| {
            let (a, b, d) = (c.cov[(0, 0)] + h * h, c.cov[(0, 1)], c.cov[(1, 1)] + h * h);
            let det = a * d - b * b;
            let (dx, dy) = (x - c.mean[0], y - c.mean[1]);
            let q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
            c.weight * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        })
        .sum()
}

fn criterion_3(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let d = 1 + trial % 2;
        let k = 1 + (trial / 2) % 3;
        let mix = random_mixture(&mut rng, k, d, CovStructure::Full);
        let h = rng.random_range(0.3..1.3);
        let spec = KernelSpec::gaussian(h, d).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.5..2.5)).collect();
        let ints = integrals_vs_gaussian_mixture(&spec, &Dataset::new(d, x.clone()).unwrap(), &mix).unwrap();
        let bx = support(&mix, h, 0);
        let (q_kxg, q_kgg) = if d == 1 {
            let g = |y: f64| mix.density(&[y]).unwrap();
            let f = |y: f64| eval_kernel(&spec, &x, &[y]).unwrap() * g(y);
            let rough = integrate(f, bx.0, bx.1, 1e-13);
            let kxg = integrate(f, bx.0, bx.1, 1e-10 * rough.abs().min(1e-3));
            let kgg = integrate_2d(
                |u, v| eval_kernel(&spec, &[u], &[v]).unwrap() * g(u) * g(v),
                bx,
                bx,
                1e-12,
            );
            (kxg, kgg)
        } else {
            let by = support(&mix, h, 1);
            let f = |u: f64, v: f64| eval_kernel(&spec, &x, &[u, v]).unwrap() * mix.density(&[u, v]).unwrap();
            // tolerance relative to the size of the integral, which is tiny
            // for points far in the tails
            let rough = integrate_2d(f, bx, by, 1e-12);
            let kxg = integrate_2d(f, bx, by, 1e-10 * rough.abs().min(1e-2));
            // K(G,G) = ∫ K(x,G) g(x) dx with K(x,G) evaluated independently
            let kgg = integrate_2d(
                |u, v| smoothed_density_2d(&mix, h, u, v) * mix.density(&[u, v]).unwrap(),
                bx,
                by,
                1e-12,
            );
            (kxg, kgg)
        };
        worst = worst
            .max((ints.kxg[0] - q_kxg).abs() / q_kxg)
            .max((ints.kgg - q_kgg).abs() / q_kgg);
    }
    r.line(
        "3",
        "closed-form kernel integrals vs quadrature",
        worst <= 1e-6 && t.elapsed().as_secs_f64() < 60.0,
        format!("worst relative err {worst:.2e}"),
        t,
    );
}

fn fd_check(audit_fd: &mut f64, mix: &GaussianMixture, data: &Dataset) {
    for x in data.rows().take(5) {
        let fd = fd_score(mix, x, 1e-5);
        let s = mix.score_vector(x).unwrap();
        for (c, f) in fd.iter().enumerate() {
            *audit_fd = audit_fd.max((s[c] - f).abs() / f.abs().max(1.0));
        }
    }
}

/// Scans plus the per-fit audit for the desk-scale trend criteria.
fn trend_scans(
    id: ScenarioId,
    k_max: usize,
    seed: u64,
    audit: &mut FitAudit,
    fd: &mut f64,
) -> (f64, Vec<ModelScanResult>) {
    let spec = ScenarioSpec::new(id, 1000);
    let pilot = standardize(&generate(&spec, seed ^ 0xfeed).unwrap()).unwrap().0;
    let h = recommend_h(&pilot, &default_h_grid()).unwrap().recommended;
    let base = ScanConfig::new(1, k_max, CovStructure::Full, KernelSpec::gaussian(h, 2).unwrap());
    let mut scans = Vec::new();
    for s in replication_seeds(seed, 25) {
        let data = standardize(&generate(&spec, s).unwrap()).unwrap().0;
        let mut cfg = base.clone();
        cfg.standardize = false;
        cfg.fit.seed = s;
        let res = scan(&data, &cfg).unwrap();
        for kr in &res.per_k {
            audit.record(&data, &kr.fit.model, kr.fit.max_decrease);
        }
        if let Some(kr) = res.per_k.last() {
            fd_check(fd, &kr.fit.model, &data);
        }
        scans.push(res);
    }
    (h, scans)
}

fn decomposition_errors(scans: &[ModelScanResult]) -> (f64, f64, f64) {
    let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
    for s in scans {
        let n = s.n as f64;
        let m_bic = bic_equivalent_m(s.n).unwrap();
        for k in &s.per_k {
            a = a.max((k.qaic.total - (k.qaic.mlf_hat + k.qaic.pec_hat_at_n)).abs());
            b = b.max((k.qbic.total - (k.qbic.mlf_hat + (n.ln() - 1.0) * k.qbic.pec_hat_at_n)).abs());
            let at = quadratic_risk_at_m(k.qaic.mlf_hat, k.qaic.pec_hat_at_n, s.n, m_bic).unwrap();
            c = c.max((k.qbic.total - at.total).abs());
        }
    }
    (a, b, c)
}

fn criterion_6(r: &mut Report) {
    let t = Instant::now();
    let model = BinnedNormalLocation::new(&[-0.84, -0.25, 0.25, 0.84]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 2000;
    let vals: Vec<f64> = (0..100)
        .map(|_| {
            let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let data = Dataset::from_scalars(&xs).unwrap();
            let counts = model.partition(0.0).unwrap().counts(&data).unwrap();
            let mu = model.fit(&counts).unwrap();
            let cells = model.partition(mu).unwrap();
            let spec = KernelSpec::partition(cells.clone());
            let raw = kernel_matrix(&spec, &data).unwrap();
            let ints = integrals_vs_partition_model(&spec, &data, cells.probs()).unwrap();
            let ext = model.extended_scores(&data, mu).unwrap();
            n as f64 * risk_components(&raw, &ints, &ext, "binned").unwrap().pec_hat_at_n
        })
        .collect();
    let (mean, se) = mean_and_se(&vals);
    r.line(
        "6",
        "n·PEC of a one-parameter binned model near 1",
        (mean - 1.0).abs() <= 0.15 && t.elapsed().as_secs_f64() < 120.0,
        format!("mean {mean:.4}, se {se:.4}"),
        t,
    );
}

fn criterion_7(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for c in [2usize, 3, 5, 8, 12] {
        for _ in 0..4 {
            let counts: Vec<usize> = (0..c).map(|_| rng.random_range(1..20)).collect();
            let n: usize = counts.iter().sum();
            let xs: Vec<f64> = counts
                .iter()
                .enumerate()
                .flat_map(|(cell, &k)| (0..k).map(move |_| cell as f64 + 0.5))
                .collect();
            let probs: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
            let cells = PartitionCells::new((0..=c).map(|e| e as f64).collect(), probs).unwrap();
            let s = sdof_empirical(&Dataset::from_scalars(&xs).unwrap(), &KernelSpec::partition(cells)).unwrap();
            worst = worst.max((s - (c as f64 - 1.0)).abs());
        }
    }
    r.line("7", "partition sdof = C - 1", worst <= 1e-8, format!("max err {worst:.2e}"), t);
}

fn criterion_10(r: &mut Report) {
    let t = Instant::now();
    let data = Dataset::from_scalars(&[-1.2, 0.3, 0.9, -0.4, 2.2, 1.1]).unwrap();
    let spec = KernelSpec::gaussian(0.7, 1).unwrap();
    let fit = FitConfig::default();
    let st = CovStructure::Full;
    let oracle: Vec<f64> = combinations(6, 4)
        .iter()
        .map(|f| {
            let hold: Vec<usize> = (0..6).filter(|i| !f.contains(i)).collect();
            subset_u_statistic(&data, f, &hold, 1, st, &fit, &spec).unwrap()
        })
        .collect();
    let exhaustive = cv_unbiased_risk(&data, 1, st, &fit, &spec, &CvConfig::random_subsets(15, 4, 1)).unwrap();
    let exhaustive_ok = oracle.len() == 15
        && exhaustive.subset_values == oracle
        && exhaustive.estimate == oracle.iter().sum::<f64>() / 15.0;

    let vf = CvConfig::v_fold(6, 3, 10);
    let folds: Vec<f64> = cv_splits(6, &vf)
        .unwrap()
        .iter()
        .map(|(f, h)| subset_u_statistic(&data, f, h, 1, st, &fit, &spec).unwrap())
        .collect();
    let vfold = cv_unbiased_risk(&data, 1, st, &fit, &spec, &vf).unwrap();
    let vfold_ok = folds.len() == 3
        && vfold.subset_values == folds
        && vfold.estimate == folds.iter().sum::<f64>() / 3.0;
    r.line(
        "10",
        "CV equals enumeration (15 subsets; 3 folds)",
        exhaustive_ok && vfold_ok,
        format!("exhaustive {}, v-fold {}", exhaustive.estimate, vfold.estimate),
        t,
    );
}

fn main() {
    let mut r = Report { failed_asserted: 0 };
    let mut audit = FitAudit::default();
    let mut fd = 0.0f64;

    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);

    // extra small fits across structures for the projection and score checks
    let t4 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for s in [CovStructure::Spherical, CovStructure::Diagonal, CovStructure::Full] {
        for (k, d) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
            let truth = random_mixture(&mut rng, k, d, s);
            let data = truth.sample(300, rng.random());
            let f = fit_em(&data, k, s, &FitConfig::default()).unwrap();
            audit.record(&data, &f.model, f.max_decrease);
            fd_check(&mut fd, &f.model, &data);
        }
    }

    let t8 = Instant::now();
    let (h8, m2) = trend_scans(ScenarioId::M2, 8, 8, &mut audit, &mut fd);
    let share = |scans: &[ModelScanResult], c: Criterion, pred: &dyn Fn(Option<usize>) -> bool| {
        scans.iter().filter(|s| pred(s.decision(c))).count()
    };
    let mra4 = share(&m2, Criterion::Mra, &|k| k == Some(4));
    let bic4 = share(&m2, Criterion::Bic, &|k| k == Some(4));
    let qaic4 = share(&m2, Criterion::Qaic, &|k| k.is_some_and(|k| k >= 4));
    let secs8 = t8.elapsed().as_secs_f64();

    let t9 = Instant::now();
    let (h9, m3) = trend_scans(ScenarioId::M3, 5, 9, &mut audit, &mut fd);
    let none9 = share(&m3, Criterion::Mra, &|k| k.is_none());
    let secs9 = t9.elapsed().as_secs_f64();

    r.line(
        "4",
        "projection idempotent, trace = rank, scores match finite differences",
        audit.worst_idempotence <= 1e-8 && audit.worst_trace <= 1e-6 && fd <= 1e-5,
        format!(
            "{} fits; idempotence {:.2e}, trace {:.2e}, score {:.2e}",
            audit.fits, audit.worst_idempotence, audit.worst_trace, fd
        ),
        t4,
    );

    let t5 = Instant::now();
    let all: Vec<ModelScanResult> = m2.iter().chain(&m3).cloned().collect();
    let (ea, eb, ec) = decomposition_errors(&all);
    r.line(
        "5",
        "QAIC/QBIC decompositions and QBIC = risk at n/(ln n - 1)",
        ea <= 1e-12 && eb <= 1e-12 && ec <= 1e-12,
        format!("{ea:.1e}, {eb:.1e}, {ec:.1e} over {} scans", all.len()),
        t5,
    );

    criterion_6(&mut r);
    criterion_7(&mut r);

    r.line(
        "8",
        "M2 trend: MRA=4, BIC=4 in >= 80%; QAIC >= 4 in >= 90%",
        mra4 >= 20 && bic4 >= 20 && qaic4 >= 23 && secs8 < 900.0,
        format!("h {h8:.3}; MRA {mra4}/25, BIC {bic4}/25, QAIC>=4 {qaic4}/25; {secs8:.0}s"),
        t8,
    );
    r.line(
        "9",
        "M3 with k <= 5: MRA finds no adequate model in >= 80%",
        none9 >= 20 && secs9 < 600.0,
        format!("h {h9:.3}; none {none9}/25; {secs9:.0}s"),
        t9,
    );

    criterion_10(&mut r);

    let t11 = Instant::now();
    r.line(
        "11",
        "EM log-likelihood never decreases beyond 1e-8",
        audit.decrease_violations == 0,
        format!("{} fits; worst decrease {:.2e}", audit.fits, audit.worst_decrease),
        t11,
    );

    if r.failed_asserted > 0 {
        println!("{} asserted check(s) failed", r.failed_asserted);
        std::process::exit(1);
    }
    println!("all asserted checks passed");
}
