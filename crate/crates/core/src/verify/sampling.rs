use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::convex::sgn;
use crate::linalg::CVector;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// Independent standard normal real and imaginary parts.
    ComplexGaussian,
    /// `|N(0, 1)|`, real.
    Nonnegative,
    /// Pairs `(u, ρ sgn u)` with `u` complex Gaussian and `ρ ≥ 0`.
    PhaseAligned,
}

/// Seeded sample family. Sample `k` is drawn from ChaCha8 stream `k`, so any
/// single sample can be regenerated from `(seed, k)` without the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    pub count: usize,
    pub distribution: Distribution,
}

impl SampleSpec {
    pub fn new(seed: u64, count: usize, distribution: Distribution) -> Self {
        Self {
            seed,
            count,
            distribution,
        }
    }

    pub fn with_distribution(self, distribution: Distribution) -> Self {
        Self { distribution, ..self }
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Sample `index` of length `n`; for phase-aligned pairs, the first component.
    pub fn vector(&self, index: usize, n: usize) -> CVector {
        let mut rng = self.rng(index);
        match self.distribution {
            Distribution::Nonnegative => CVector::from_fn(n, |_, _| {
                let x: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(x.abs(), 0.0)
            }),
            Distribution::ComplexGaussian | Distribution::PhaseAligned => gaussian(&mut rng, n),
        }
    }

    /// Sample `index` as a pair. Phase-aligned pairs satisfy `u_i conj(v_i) ≥ 0`.
    pub fn pair(&self, index: usize, n: usize) -> (CVector, CVector) {
        let mut rng = self.rng(index);
        match self.distribution {
            Distribution::PhaseAligned => {
                let u = gaussian(&mut rng, n);
                let v = CVector::from_fn(n, |i, _| {
                    let rho: f64 = StandardNormal.sample(&mut rng);
                    sgn(u[i]) * rho.abs()
                });
                (u, v)
            }
            Distribution::ComplexGaussian => (gaussian(&mut rng, n), gaussian(&mut rng, n)),
            Distribution::Nonnegative => {
                let mut draw = || {
                    CVector::from_fn(n, |_, _| {
                        let x: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(x.abs(), 0.0)
                    })
                };
                (draw(), draw())
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| {
        Complex64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
    })
}
