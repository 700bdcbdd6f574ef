use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Identity,
    /// `[cos(2 pi x), sin(2 pi x)]`
    Original,
    /// `[cos(2 pi B x), sin(2 pi B x)]`, `B ~ N(0, sigma^2)`
    Gaussian,
    /// `alpha * x`
    Multiscale,
    /// `[sin(2^k x), cos(2^k x)]` for `k = 0..L`
    Positional,
    /// `[cos(2 pi B x), alpha * x, sin(2 pi B x)]`
    Multimodes,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 6] = [
        EmbeddingKind::Identity,
        EmbeddingKind::Original,
        EmbeddingKind::Gaussian,
        EmbeddingKind::Multiscale,
        EmbeddingKind::Positional,
        EmbeddingKind::Multimodes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Identity => "identity",
            EmbeddingKind::Original => "original",
            EmbeddingKind::Gaussian => "gaussian",
            EmbeddingKind::Multiscale => "multiscale",
            EmbeddingKind::Positional => "positional",
            EmbeddingKind::Multimodes => "multimodes",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    /// Standard deviation of the entries of `B`.
    pub sigma: f64,
    /// Number of rows of `B`.
    pub m: usize,
    pub alpha: f64,
    /// Octave count for the positional variant.
    pub octaves: usize,
    pub seed: u64,
}

impl EmbeddingSpec {
    pub fn identity() -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Identity,
            sigma: 0.0,
            m: 0,
            alpha: 1.0,
            octaves: 0,
            seed: 0,
        }
    }

    pub fn multimodes(sigma: f64, m: usize, alpha: f64, seed: u64) -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Multimodes,
            sigma,
            m,
            alpha,
            octaves: 0,
            seed,
        }
    }

    pub fn output_dim(&self, d: usize) -> usize {
        match self.kind {
            EmbeddingKind::Identity | EmbeddingKind::Multiscale => d,
            EmbeddingKind::Original => 2 * d,
            EmbeddingKind::Gaussian => 2 * self.m,
            EmbeddingKind::Positional => 2 * d * self.octaves,
            EmbeddingKind::Multimodes => 2 * self.m + d,
        }
    }

    fn uses_matrix(&self) -> bool {
        matches!(self.kind, EmbeddingKind::Gaussian | EmbeddingKind::Multimodes)
    }
}

/// An embedding with its frozen random matrix drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    spec: EmbeddingSpec,
    d: usize,
    /// Row-major `m x d`, already multiplied by `2 pi`.
    b2pi: Vec<f64>,
}

impl Embedding {
    pub fn new(spec: EmbeddingSpec, d: usize) -> Self {
        let b2pi = if spec.uses_matrix() && spec.m > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let normal = Normal::new(0.0, spec.sigma.max(0.0)).expect("finite sigma");
            (0..spec.m * d).map(|_| 2.0 * PI * normal.sample(&mut rng)).collect()
        } else {
            Vec::new()
        };
        Embedding { spec, d, b2pi }
    }

    pub fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim(self.d)
    }

    /// The matrix `B` (row-major `m x d`), without the `2 pi` factor.
    pub fn matrix(&self) -> Vec<f64> {
        self.b2pi.iter().map(|v| v / (2.0 * PI)).collect()
    }

    fn projections<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        (0..self.spec.m)
            .map(|j| {
                let row = &self.b2pi[j * self.d..(j + 1) * self.d];
                let mut acc = x[0].clone() * row[0];
                for k in 1..self.d {
                    acc = acc + x[k].clone() * row[k];
                }
                acc
            })
            .collect()
    }

    pub fn embed<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.d, "embedding input dimension");
        let alpha = self.spec.alpha;
        match self.spec.kind {
            EmbeddingKind::Identity => x.to_vec(),
            EmbeddingKind::Multiscale => x.iter().map(|v| v.clone() * alpha).collect(),
            EmbeddingKind::Original => {
                let z: Vec<T> = x.iter().map(|v| v.clone() * (2.0 * PI)).collect();
                z.iter().map(|v| v.cos()).chain(z.iter().map(|v| v.sin())).collect()
            }
            EmbeddingKind::Positional => {
                let mut out = Vec::with_capacity(self.output_dim());
                for k in 0..self.spec.octaves {
                    let f = (1u64 << k) as f64;
                    let z: Vec<T> = x.iter().map(|v| v.clone() * f).collect();
                    out.extend(z.iter().map(|v| v.sin()));
                    out.extend(z.iter().map(|v| v.cos()));
                }
                out
            }
            EmbeddingKind::Gaussian => {
                let z = self.projections(x);
                z.iter().map(|v| v.cos()).chain(z.iter().map(|v| v.sin())).collect()
            }
            EmbeddingKind::Multimodes => {
                let z = self.projections(x);
                let mut out = Vec::with_capacity(self.output_dim());
                out.extend(z.iter().map(|v| v.cos()));
                out.extend(x.iter().map(|v| v.clone() * alpha));
                out.extend(z.iter().map(|v| v.sin()));
                out
            }
        }
    }
}
