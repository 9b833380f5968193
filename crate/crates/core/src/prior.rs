//! Prior distributions shared by the hyperparameter space and the
//! architecture grammar: truncated normals on the unit interval and
//! boosted-default categoricals.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

/// How strongly a default value is believed to be good.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    #[default]
    Medium,
    High,
}

impl Confidence {
    /// Standard deviation of the truncated normal in normalized `[0, 1]` space.
    pub fn sigma(self) -> f64 {
        match self {
            Confidence::Low => 0.5,
            Confidence::Medium => 0.25,
            Confidence::High => 0.125,
        }
    }

    /// Weight multiplier of the default category.
    pub fn categorical_multiplier(self) -> f64 {
        match self {
            Confidence::Low => 2.0,
            Confidence::Medium => 4.0,
            Confidence::High => 8.0,
        }
    }
}

impl std::str::FromStr for Confidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Confidence::Low),
            "medium" => Ok(Confidence::Medium),
            "high" => Ok(Confidence::High),
            other => Err(format!("unknown confidence level `{other}`")),
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Normal(`mean`, `sigma`) truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitTruncatedNormal {
    pub mean: f64,
    pub sigma: f64,
}

impl UnitTruncatedNormal {
    pub fn new(mean: f64, sigma: f64) -> Self {
        debug_assert!(sigma > 0.0);
        Self { mean: mean.clamp(0.0, 1.0), sigma }
    }

    fn mass(&self) -> f64 {
        std_normal_cdf((1.0 - self.mean) / self.sigma) - std_normal_cdf(-self.mean / self.sigma)
    }

    /// Density at `x`; zero outside the unit interval.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let z = (x - self.mean) / self.sigma;
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        phi / (self.sigma * self.mass())
    }

    /// Rejection sampling. The mean lies inside the interval, so at least
    /// half of the untruncated mass is accepted.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let x = self.mean + self.sigma * z;
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
    }
}

/// Rounds to the nearest integer with ties going up.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Samples one of `n` ordered choices through the continuous relaxation:
/// draw a truncated normal around `center`'s normalized position and round
/// to the nearest index.
pub fn sample_ordered_index<R: Rng + ?Sized>(
    n: usize,
    center: usize,
    sigma: f64,
    rng: &mut R,
) -> usize {
    if n <= 1 {
        return 0;
    }
    let span = (n - 1) as f64;
    let dist = UnitTruncatedNormal::new(center as f64 / span, sigma);
    let idx = round_half_up(dist.sample(rng) * span) as usize;
    idx.min(n - 1)
}

/// Density of the ordered choice `index` under the relaxation used by
/// [`sample_ordered_index`], evaluated at its normalized position.
pub fn ordered_index_density(n: usize, index: usize, center: usize, sigma: f64) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let span = (n - 1) as f64;
    UnitTruncatedNormal::new(center as f64 / span, sigma).pdf(index as f64 / span)
}

/// Probability of category `index` when `default` is boosted by the
/// confidence multiplier and all other categories share equal weight.
pub fn boosted_probability(n: usize, index: usize, default: usize, confidence: Confidence) -> f64 {
    let m = confidence.categorical_multiplier();
    let denom = m + (n as f64) - 1.0;
    if index == default {
        m / denom
    } else {
        1.0 / denom
    }
}

pub fn sample_boosted<R: Rng + ?Sized>(
    n: usize,
    default: usize,
    confidence: Confidence,
    rng: &mut R,
) -> usize {
    if n <= 1 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for i in 0..n {
        acc += boosted_probability(n, i, default, confidence);
        if u < acc {
            return i;
        }
    }
    n - 1
}
