//! Simulation scenarios and the replication harness.
//!
//! The canonical mixtures are fixed here because no published parameter
//! tables exist for them (mirrored in `fixtures/scenarios.v1.json`):
//!
//! | id  | D  | definition |
//! |-----|----|------------|
//! | M1  | 2  | two unit spherical components at (0,0) and (2.5,0), weights ½ |
//! | M2  | 2  | four unit spherical components at (±4, ±4), equal weights |
//! | M3  | 2  | six unit spherical components on a hexagon of circumradius 6 |
//! | M4U | 2  | `x ~ U[-1.5, 1.5]`, `y ~ U[x²-1, x²+1]` |
//! | M5  | 4  | M3 plus two standard normal coordinates |
//! | M6  | 8  | M3 plus six standard normal coordinates |
//! | M7  | 12 | M3 plus ten standard normal coordinates |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::mixture::{Component, CovStructure, GaussianMixture};
use crate::selection::{scan, Criterion, ScanConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScenarioId {
    M1,
    M2,
    M3,
    M4U,
    M5,
    M6,
    M7,
    Custom(GaussianMixture),
}

impl ScenarioId {
    pub fn dim(&self) -> usize {
        match self {
            ScenarioId::M1 | ScenarioId::M2 | ScenarioId::M3 | ScenarioId::M4U => 2,
            ScenarioId::M5 => 4,
            ScenarioId::M6 => 8,
            ScenarioId::M7 => 12,
            ScenarioId::Custom(m) => m.dim(),
        }
    }

    /// Number of mixture components generating the data, if it is a mixture.
    pub fn true_k(&self) -> Option<usize> {
        match self {
            ScenarioId::M1 => Some(2),
            ScenarioId::M2 => Some(4),
            ScenarioId::M3 | ScenarioId::M5 | ScenarioId::M6 | ScenarioId::M7 => Some(6),
            ScenarioId::M4U => None,
            ScenarioId::Custom(m) => Some(m.k()),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioId::M1 => f.write_str("1"),
            ScenarioId::M2 => f.write_str("2"),
            ScenarioId::M3 => f.write_str("3"),
            ScenarioId::M4U => f.write_str("u"),
            ScenarioId::M5 => f.write_str("5"),
            ScenarioId::M6 => f.write_str("6"),
            ScenarioId::M7 => f.write_str("7"),
            ScenarioId::Custom(m) => write!(f, "custom(k={}, D={})", m.k(), m.dim()),
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    /// `1`–`7` or `u` (also `m1`, `M4U`, ...).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix('m').unwrap_or(&t);
        Ok(match t {
            "1" => ScenarioId::M1,
            "2" => ScenarioId::M2,
            "3" => ScenarioId::M3,
            "4" | "4u" | "u" => ScenarioId::M4U,
            "5" => ScenarioId::M5,
            "6" => ScenarioId::M6,
            "7" => ScenarioId::M7,
            _ => return config(format!("unknown model `{s}` (expected 1-7 or u)")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n: usize) -> Self {
        Self { id, n }
    }

    pub fn dim(&self) -> usize {
        self.id.dim()
    }
}

fn spherical(centers: &[[f64; 2]]) -> GaussianMixture {
    let w = 1.0 / centers.len() as f64;
    GaussianMixture::new(
        CovStructure::Spherical,
        centers
            .iter()
            .map(|c| Component {
                weight: w,
                mean: DVector::from_column_slice(c),
                cov: DMatrix::identity(2, 2),
            })
            .collect(),
    )
    .expect("canonical mixture is valid")
}

/// The two-dimensional mixture behind a scenario (M3's for M5–M7).
pub fn canonical_mixture(id: &ScenarioId) -> Option<GaussianMixture> {
    match id {
        ScenarioId::M1 => Some(spherical(&[[0.0, 0.0], [2.5, 0.0]])),
        ScenarioId::M2 => Some(spherical(&[[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0]])),
        ScenarioId::M3 | ScenarioId::M5 | ScenarioId::M6 | ScenarioId::M7 => {
            let centers: Vec<[f64; 2]> = (0..6)
                .map(|j| {
                    let a = std::f64::consts::PI / 3.0 * j as f64;
                    [6.0 * a.cos(), 6.0 * a.sin()]
                })
                .collect();
            Some(spherical(&centers))
        }
        ScenarioId::M4U => None,
        ScenarioId::Custom(m) => Some(m.clone()),
    }
}

/// Draws `spec.n` observations; identical seeds give identical data.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Dataset> {
    if spec.n == 0 {
        return config("scenario needs n ≥ 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match &spec.id {
        ScenarioId::M4U => {
            let mut values = Vec::with_capacity(2 * spec.n);
            for _ in 0..spec.n {
                let x: f64 = rng.random_range(-1.5..=1.5);
                let y: f64 = rng.random_range(x * x - 1.0..=x * x + 1.0);
                values.extend([x, y]);
            }
            Dataset::new(2, values)
        }
        id => {
            let mix = canonical_mixture(id).expect("mixture scenario");
            let (base, _) = mix.sample_with(spec.n, &mut rng);
            let extra = id.dim() - mix.dim();
            if extra == 0 {
                return Ok(base);
            }
            let mut values = Vec::with_capacity(spec.n * id.dim());
            for row in base.rows() {
                values.extend_from_slice(row);
                for _ in 0..extra {
                    values.push(StandardNormal.sample(&mut rng));
                }
            }
            Dataset::new(id.dim(), values)
        }
    }
}

/// Selection counts per criterion over replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub criteria: Vec<Criterion>,
    pub k_min: usize,
    pub k_max: usize,
    pub reps: usize,
    /// `counts[c][k]` replications in which criterion `c` chose `k`.
    pub counts: BTreeMap<Criterion, BTreeMap<usize, usize>>,
    /// Replications with no choice (no adequate model for MRA).
    pub none: BTreeMap<Criterion, usize>,
    /// Replications whose scan failed outright.
    pub failed: usize,
}

impl FrequencyTable {
    fn empty(criteria: &[Criterion], k_min: usize, k_max: usize, reps: usize) -> Self {
        Self {
            criteria: criteria.to_vec(),
            k_min,
            k_max,
            reps,
            counts: criteria.iter().map(|&c| (c, BTreeMap::new())).collect(),
            none: criteria.iter().map(|&c| (c, 0)).collect(),
            failed: 0,
        }
    }

    pub fn count(&self, c: Criterion, k: usize) -> usize {
        self.counts.get(&c).and_then(|m| m.get(&k)).copied().unwrap_or(0)
    }

    pub fn none_count(&self, c: Criterion) -> usize {
        self.none.get(&c).copied().unwrap_or(0)
    }

    /// Replications in which `c` chose a `k` satisfying `pred`.
    pub fn count_where(&self, c: Criterion, pred: impl Fn(usize) -> bool) -> usize {
        self.counts
            .get(&c)
            .map_or(0, |m| m.iter().filter(|(k, _)| pred(**k)).map(|(_, v)| v).sum())
    }

    /// Counts plus `none` plus `failed`; equals `reps` for every criterion.
    pub fn row_total(&self, c: Criterion) -> usize {
        self.count_where(c, |_| true) + self.none_count(c) + self.failed
    }

    /// `criterion, k_min..k_max, none, failed` rows for tabular output.
    pub fn rows(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["criterion".to_string()];
        header.extend((self.k_min..=self.k_max).map(|k| k.to_string()));
        header.extend(["none".into(), "failed".into()]);
        let rows = self
            .criteria
            .iter()
            .map(|&c| {
                let mut row = vec![c.to_string()];
                row.extend((self.k_min..=self.k_max).map(|k| self.count(c, k).to_string()));
                row.push(self.none_count(c).to_string());
                row.push(self.failed.to_string());
                row
            })
            .collect();
        (header, rows)
    }
}

/// The criteria tabulated by [`run_experiment`].
pub const EXPERIMENT_CRITERIA: [Criterion; 5] = [
    Criterion::Aic,
    Criterion::Qaic,
    Criterion::Mra,
    Criterion::Bic,
    Criterion::Qbic,
];

/// Replication seeds drawn from a master generator.
pub fn replication_seeds(seed: u64, reps: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..reps).map(|_| master.next_u64()).collect()
}

/// Runs `reps` independent generate-and-scan replications in parallel.
/// Replication `r` draws its data and EM seeds from the `r`-th master seed.
pub fn run_experiment(
    spec: &ScenarioSpec,
    reps: usize,
    scan_cfg: &ScanConfig,
    seed: u64,
) -> Result<FrequencyTable> {
    if reps == 0 {
        return config("need at least one replication");
    }
    scan_cfg.validate()?;
    if scan_cfg.kernel.dim() != spec.dim() {
        return config(format!(
            "kernel dimension {} does not match scenario dimension {}",
            scan_cfg.kernel.dim(),
            spec.dim()
        ));
    }
    let outcomes: Vec<Option<BTreeMap<Criterion, Option<usize>>>> = replication_seeds(seed, reps)
        .into_par_iter()
        .map(|s| {
            let data = generate(spec, s).ok()?;
            let mut cfg = scan_cfg.clone();
            cfg.fit.seed = s;
            match scan(&data, &cfg) {
                Ok(r) => Some(r.decisions),
                Err(e) => {
                    log::warn!("replication with seed {s} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let mut table = FrequencyTable::empty(&EXPERIMENT_CRITERIA, scan_cfg.k_min, scan_cfg.k_max, reps);
    for o in outcomes {
        let Some(decisions) = o else {
            table.failed += 1;
            continue;
        };
        for c in EXPERIMENT_CRITERIA {
            match decisions.get(&c).copied().flatten() {
                Some(k) => *table.counts.get_mut(&c).unwrap().entry(k).or_insert(0) += 1,
                None => *table.none.get_mut(&c).unwrap() += 1,
            }
        }
    }
    Ok(table)
}
