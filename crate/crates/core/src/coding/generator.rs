//! Random binary generator matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::binary_rank;

/// Upper bound on whole-matrix resamples in [`rand_matrix`].
pub const MAX_RESAMPLES: usize = 1_000_000;

/// `s × r` binary code matrix: no all-zero row and full column rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGenerator", into = "RawGenerator")]
pub struct GeneratorMatrix {
    s: usize,
    r: usize,
    rho: f64,
    seed: u64,
    rows: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct RawGenerator {
    s: usize,
    r: usize,
    rho: f64,
    seed: u64,
    rows: Vec<Vec<u8>>,
}

impl TryFrom<RawGenerator> for GeneratorMatrix {
    type Error = Error;

    fn try_from(raw: RawGenerator) -> Result<Self> {
        let g = GeneratorMatrix::from_rows(raw.rows, raw.rho, raw.seed)?;
        if (g.s, g.r) != (raw.s, raw.r) {
            return Err(Error::DimensionMismatch(format!(
                "declared {}x{}, rows give {}x{}",
                raw.s, raw.r, g.s, g.r
            )));
        }
        Ok(g)
    }
}

impl From<GeneratorMatrix> for RawGenerator {
    fn from(g: GeneratorMatrix) -> Self {
        RawGenerator {
            s: g.s,
            r: g.r,
            rho: g.rho,
            seed: g.seed,
            rows: g.rows,
        }
    }
}

fn has_zero_row(rows: &[Vec<u8>]) -> bool {
    rows.iter().any(|row| row.iter().all(|&v| v == 0))
}

impl GeneratorMatrix {
    /// Validates `rows` against every generator invariant.
    pub fn from_rows(rows: Vec<Vec<u8>>, rho: f64, seed: u64) -> Result<Self> {
        let s = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if r == 0 || r > s {
            return Err(Error::InvalidSpec(format!("generator must satisfy 1 <= r <= s, got {s}x{r}")));
        }
        if has_zero_row(&rows) {
            return Err(Error::InvalidSpec("generator has an all-zero row".into()));
        }
        let rank = binary_rank(&rows)?;
        if rank != r {
            return Err(Error::InvalidSpec(format!("generator rank {rank} < {r}")));
        }
        Ok(GeneratorMatrix { s, r, rho, seed, rows })
    }

    /// The `G = [1]` code used when there is a single shard.
    pub fn single() -> Self {
        GeneratorMatrix {
            s: 1,
            r: 1,
            rho: 1.0,
            seed: 0,
            rows: vec![vec![1]],
        }
    }

    /// `s × s` identity: the uncoded sharded baseline.
    pub fn identity(s: usize) -> Result<Self> {
        let rows = (0..s)
            .map(|i| (0..s).map(|j| u8::from(i == j)).collect())
            .collect();
        GeneratorMatrix::from_rows(rows, 1.0 / s as f64, 0)
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Target density the matrix was sampled with.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.rows[i][j]
    }

    /// Coded shards that uncoded shard `i` contributes to.
    pub fn row_support(&self, i: usize) -> Vec<usize> {
        (0..self.r).filter(|&j| self.rows[i][j] != 0).collect()
    }

    /// Uncoded shards summed into coded shard `j`, ascending.
    pub fn column_support(&self, j: usize) -> Vec<usize> {
        (0..self.s).filter(|&i| self.rows[i][j] != 0).collect()
    }

    pub fn row_weight(&self, i: usize) -> usize {
        self.rows[i].iter().filter(|&&v| v != 0).count()
    }

    /// Fraction of ones actually present.
    pub fn density(&self) -> f64 {
        let ones: usize = (0..self.s).map(|i| self.row_weight(i)).sum();
        ones as f64 / (self.s * self.r) as f64
    }

    /// Code rate `τ = s / r`.
    pub fn rate(&self) -> f64 {
        self.s as f64 / self.r as f64
    }
}

pub fn rate(g: &GeneratorMatrix) -> f64 {
    g.rate()
}

fn check_shape(s: usize, r: usize) -> Result<()> {
    if r == 0 || r > s {
        return Err(Error::InvalidSpec(format!("need 1 <= r <= s, got s = {s}, r = {r}")));
    }
    Ok(())
}

/// Bernoulli(ρ) generator, resampled whole until it has no zero row and
/// exact rank `r`.
pub fn rand_matrix(s: usize, r: usize, rho: f64, seed: u64) -> Result<GeneratorMatrix> {
    check_shape(s, r)?;
    let min = 1.0 / r as f64;
    if !(rho >= min * (1.0 - 1e-12) && rho <= 1.0) {
        return Err(Error::DensityOutOfRange { rho, min });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    loop {
        let rows = loop {
            if attempts == MAX_RESAMPLES {
                return Err(Error::NonTermination { attempts, s, r, rho });
            }
            attempts += 1;
            let rows: Vec<Vec<u8>> = (0..s)
                .map(|_| (0..r).map(|_| u8::from(rng.random_bool(rho))).collect())
                .collect();
            if !has_zero_row(&rows) {
                break rows;
            }
        };
        if binary_rank(&rows)? == r {
            return Ok(GeneratorMatrix { s, r, rho, seed, rows });
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// One-hot rows with every column used, uniformly over all such matrices.
///
/// Rows are assigned in order; with `m` rows left and `k` columns still empty
/// the next row picks an empty column with probability
/// `k·N(m−1, k−1) / N(m, k)`, where `N(m, k)` counts the assignments of `m`
/// rows that cover `k` given columns. This is the distribution the
/// reject-until-surjective loop targets, without its `r!/rʳ` acceptance rate.
pub fn rand_matrix_minimal(s: usize, r: usize, seed: u64) -> Result<GeneratorMatrix> {
    check_shape(s, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // ln N(m, k) for m in 0..=s, k in 0..=r.
    let mut log_n = vec![vec![f64::NEG_INFINITY; r + 1]; s + 1];
    log_n[0][0] = 0.0;
    for m in 1..=s {
        for k in 0..=r.min(m) {
            let cover = if k > 0 {
                (k as f64).ln() + log_n[m - 1][k - 1]
            } else {
                f64::NEG_INFINITY
            };
            let reuse = if k < r {
                ((r - k) as f64).ln() + log_n[m - 1][k]
            } else {
                f64::NEG_INFINITY
            };
            log_n[m][k] = log_add_exp(cover, reuse);
        }
    }

    let mut empty: Vec<usize> = (0..r).collect();
    let mut used: Vec<usize> = Vec::with_capacity(r);
    let mut rows = Vec::with_capacity(s);
    for i in 0..s {
        let m = s - i;
        let k = empty.len();
        let p_empty = if k == 0 {
            0.0
        } else {
            (k as f64).ln() + log_n[m - 1][k - 1] - log_n[m][k]
        }
        .exp();
        let col = if k > 0 && (m == k || used.is_empty() || rng.random::<f64>() < p_empty) {
            let idx = rng.random_range(0..k);
            let c = empty.swap_remove(idx);
            used.push(c);
            c
        } else {
            used[rng.random_range(0..used.len())]
        };
        let mut row = vec![0u8; r];
        row[col] = 1;
        rows.push(row);
    }
    debug_assert!(empty.is_empty());
    Ok(GeneratorMatrix {
        s,
        r,
        rho: 1.0 / r as f64,
        seed,
        rows,
    })
}
