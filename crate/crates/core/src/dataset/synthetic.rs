//! Synthetic regression datasets with known feature distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// lognormal(μ, σ²) features, polynomial response (degree 3 by default).
    LognormalPoly,
    /// χ²(k) features, polynomial response (degree 4 by default).
    ChisquarePoly,
    /// lognormal(μ, σ²) features through a random sigmoid MLP.
    Mlp,
    /// standard normal features, linear response.
    GaussianLinear,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::LognormalPoly => "lognormal-poly",
            SyntheticKind::ChisquarePoly => "chisquare-poly",
            SyntheticKind::Mlp => "mlp",
            SyntheticKind::GaussianLinear => "gaussian-linear",
        }
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lognormal-poly" => Ok(SyntheticKind::LognormalPoly),
            "chisquare-poly" => Ok(SyntheticKind::ChisquarePoly),
            "mlp" => Ok(SyntheticKind::Mlp),
            "gaussian-linear" => Ok(SyntheticKind::GaussianLinear),
            other => Err(Error::InvalidSpec(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

fn default_mu() -> f64 {
    1.0
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_dof() -> f64 {
    1.0
}
fn default_layers() -> Vec<usize> {
    vec![50, 25, 50]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_dof")]
    pub dof: f64,
    /// Polynomial degree; `None` picks 3 for lognormal-poly and 4 for chisquare-poly.
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default = "default_layers")]
    pub layers: Vec<usize>,
    pub seed: u64,
    /// Return the polynomial expansion as the feature matrix instead of `X`.
    #[serde(default)]
    pub expose_expanded: bool,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, d: usize, seed: u64) -> Self {
        let (mu, sigma2) = match kind {
            SyntheticKind::Mlp => (1.0, 4.0),
            _ => (default_mu(), default_sigma2()),
        };
        SyntheticSpec {
            kind,
            n,
            d,
            mu,
            sigma2,
            dof: default_dof(),
            degree: None,
            layers: default_layers(),
            seed,
            expose_expanded: false,
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree.unwrap_or(match self.kind {
            SyntheticKind::LognormalPoly => 3,
            SyntheticKind::ChisquarePoly => 4,
            SyntheticKind::Mlp | SyntheticKind::GaussianLinear => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be at least 1");
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) || !self.mu.is_finite() {
            return bad("lognormal parameters must be finite with sigma2 >= 0");
        }
        if !(self.dof > 0.0 && self.dof.is_finite()) {
            return bad("chi-square degrees of freedom must be positive");
        }
        if self.degree() == 0 {
            return bad("polynomial degree must be at least 1");
        }
        if self.kind == SyntheticKind::Mlp && (self.layers.is_empty() || self.layers.contains(&0)) {
            return bad("mlp layer widths must be nonempty and positive");
        }
        Ok(())
    }
}

/// `[X, X∘², …, X∘ᵏ]`, grouped by power.
pub fn expand_polynomial(x: &Matrix, degree: u32) -> Result<Matrix> {
    let (n, d) = x.shape();
    let k = degree as usize;
    let mut data = Vec::with_capacity(n * d * k);
    for row in x.iter_rows() {
        for power in 1..=degree as i32 {
            data.extend(row.iter().map(|v| v.powi(power)));
        }
    }
    Matrix::new(n, d * k, data)
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn standard_normals(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Generates the dataset described by `spec`; a pure function of the spec.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n, spec.d);

    let x_data: Vec<f64> = match spec.kind {
        SyntheticKind::LognormalPoly | SyntheticKind::Mlp => {
            let sigma = spec.sigma2.sqrt();
            (0..n * d)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    (spec.mu + sigma * z).exp()
                })
                .collect()
        }
        SyntheticKind::ChisquarePoly => {
            let chi = ChiSquared::new(spec.dof).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            (0..n * d).map(|_| chi.sample(&mut rng)).collect()
        }
        SyntheticKind::GaussianLinear => standard_normals(&mut rng, n * d),
    };
    let x = Matrix::new(n, d, x_data)?;

    let (design, signal) = match spec.kind {
        SyntheticKind::Mlp => (None, mlp_forward(&x, &spec.layers, &mut rng)?),
        _ => {
            let design = expand_polynomial(&x, spec.degree())?;
            let w = standard_normals(&mut rng, design.cols());
            let signal = design.mat_vec(&w)?.into_vec();
            (Some(design), signal)
        }
    };
    let noise = standard_normals(&mut rng, n);
    let y = Vector::new(signal.iter().zip(&noise).map(|(s, e)| s + e).collect())?;

    match design {
        Some(xp) if spec.expose_expanded => {
            let names = (1..=spec.degree())
                .flat_map(|p| {
                    (0..d).map(move |j| if p == 1 { format!("x{j}") } else { format!("x{j}^{p}") })
                })
                .collect();
            Dataset::from_parts(xp, y, (0..n).collect(), names, "y".into())
        }
        _ => Dataset::new(x, y),
    }
}

/// Random sigmoid MLP with a linear scalar output; weights and biases are N(0, 1).
fn mlp_forward(x: &Matrix, layers: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut act = x.clone();
    for &width in layers {
        let w = Matrix::new(act.cols(), width, standard_normals(rng, act.cols() * width))?;
        let b = standard_normals(rng, width);
        let pre = act.matmul(&w)?;
        let mut data = Vec::with_capacity(pre.rows() * width);
        for row in pre.iter_rows() {
            data.extend(row.iter().zip(&b).map(|(v, bias)| sigmoid(v + bias)));
        }
        act = Matrix::new(pre.rows(), width, data)?;
    }
    let w_out = standard_normals(rng, act.cols());
    let b_out: f64 = rng.sample(StandardNormal);
    Ok(act.mat_vec(&w_out)?.iter().map(|v| v + b_out).collect())
}
