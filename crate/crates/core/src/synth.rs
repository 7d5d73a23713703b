//! Synthetic data sources for tests, the oracle check and the stability probe.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};
use crate::stack::Dataset;

/// Ground-truth regression function over `x ∈ [0, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthFn {
    /// `Σⱼ 4xⱼ / j`.
    Linear,
    /// `2 sin(2πx₁) + Σ_{j≥2} xⱼ`.
    Sine,
    /// Friedman #1; needs `d ≥ 5`.
    Friedman,
}

impl TruthFn {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TruthFn::Linear => x.iter().enumerate().map(|(j, v)| 4.0 * v / (j + 1) as f64).sum(),
            TruthFn::Sine => 2.0 * (std::f64::consts::TAU * x[0]).sin() + x[1..].iter().sum::<f64>(),
            TruthFn::Friedman => {
                10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
            }
        }
    }

    fn min_dim(self) -> usize {
        match self {
            TruthFn::Friedman => 5,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TruthFn::Linear => "linear",
            TruthFn::Sine => "sine",
            TruthFn::Friedman => "friedman",
        }
    }
}

/// Additive noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    /// `N(0, σ²)`.
    Gaussian(f64),
    /// `N(0, (σ · (0.25 + 1.5x₁))²)`: the scale grows with the first feature.
    Heteroscedastic(f64),
}

impl Noise {
    fn sigma(self) -> f64 {
        match self {
            Noise::Gaussian(s) | Noise::Heteroscedastic(s) => s,
        }
    }

    fn scale(self, x: &[f64]) -> f64 {
        match self {
            Noise::Gaussian(s) => s,
            Noise::Heteroscedastic(s) => s * (0.25 + 1.5 * x[0]),
        }
    }
}

/// Description of a synthetic regression dataset.
///
/// Text form: `fn=friedman,n=1000,d=5,noise=gaussian:1.0,seed=7`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub noise: Noise,
    pub truth: TruthFn,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 5,
            noise: Noise::Gaussian(1.0),
            truth: TruthFn::Friedman,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("synthetic n and d must be >= 1".into()));
        }
        if self.d < self.truth.min_dim() {
            return Err(Error::Config(format!(
                "{} needs d >= {}",
                self.truth.name(),
                self.truth.min_dim()
            )));
        }
        let s = self.noise.sigma();
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("noise scale must be >= 0, got {s}")));
        }
        Ok(())
    }

    /// `n` units drawn from its own seed.
    pub fn generate(&self) -> Result<Dataset> {
        self.draw(self.n, &mut rng::child(self.seed, "synthetic"))
    }

    /// `n` fresh units from `rng`, ignoring `self.n` and `self.seed`.
    pub fn draw(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        self.validate()?;
        let mut xs = Vec::with_capacity(n * self.d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let start = xs.len();
            xs.extend((0..self.d).map(|_| rng.random::<f64>()));
            let x = &xs[start..];
            let e: f64 = StandardNormal.sample(rng);
            y.push(self.truth.eval(x) + self.noise.scale(x) * e);
        }
        Dataset::unnamed(Matrix::new(n, self.d, xs)?, y)
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let noise = match self.noise {
            Noise::Gaussian(s) => format!("gaussian:{s}"),
            Noise::Heteroscedastic(s) => format!("hetero:{s}"),
        };
        write!(
            f,
            "fn={},n={},d={},noise={},seed={}",
            self.truth.name(),
            self.n,
            self.d,
            noise,
            self.seed
        )
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in synthetic spec, got {item:?}")))?;
            let bad = || Error::Config(format!("bad synthetic value {v:?} for {k}"));
            match k.trim() {
                "fn" => {
                    spec.truth = match v {
                        "linear" => TruthFn::Linear,
                        "sine" => TruthFn::Sine,
                        "friedman" => TruthFn::Friedman,
                        _ => return Err(bad()),
                    }
                }
                "n" => spec.n = v.parse().map_err(|_| bad())?,
                "d" => spec.d = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                "noise" => {
                    let (kind, sigma) = v.split_once(':').ok_or_else(bad)?;
                    let sigma: f64 = sigma.parse().map_err(|_| bad())?;
                    spec.noise = match kind {
                        "gaussian" => Noise::Gaussian(sigma),
                        "hetero" => Noise::Heteroscedastic(sigma),
                        _ => return Err(bad()),
                    }
                }
                other => return Err(Error::Config(format!("unknown synthetic key {other}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `n` iid second-level pairs: `Z = [1, g₂, …, g_M]` with standard normal `g`,
/// `y = Σ zⱼ/j + N(0, 1)`.
pub fn gaussian_meta_sample(n: usize, m: usize, rng: &mut Rng) -> (Matrix, Vec<f64>) {
    let mut z = Vec::with_capacity(n * m);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut target = 0.0;
        for j in 0..m {
            let v = if j == 0 { 1.0 } else { StandardNormal.sample(rng) };
            target += v / (j + 1) as f64;
            z.push(v);
        }
        let e: f64 = StandardNormal.sample(rng);
        y.push(target + e);
    }
    (Matrix::new(n, m, z).expect("finite draws"), y)
}
