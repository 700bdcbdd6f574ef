//! Embedded subnetworks and the linear merge that forms the surrogate.

mod batch;
mod checkpoint;
mod embedding;

use std::sync::Arc;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BlockKind, Jet, ParamLayout, ParameterVector, Scalar, Var};

pub use batch::{BatchLoss, PreparedInputs};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use embedding::{Embedding, EmbeddingKind, EmbeddingSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("non-finite network output {output} at point {point:?}")]
    NonFinite { output: usize, point: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub layers: usize,
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Width of an extra linear output layer; `None` feeds the last hidden
    /// layer straight into the merge.
    pub output_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetConfig {
    pub embedding: EmbeddingSpec,
    pub body: SubnetSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub subnets: Vec<SubnetConfig>,
}

impl NetworkSpec {
    /// `M` multimodes-embedded subnets with `sigma_i = sigma_step * i`.
    #[allow(clippy::too_many_arguments)]
    pub fn multiscale(
        input_dim: usize,
        output_dim: usize,
        m_subnets: usize,
        sigma_step: f64,
        frequencies: usize,
        alpha: f64,
        layers: usize,
        width: usize,
        seed: u64,
    ) -> Self {
        let subnets = (1..=m_subnets)
            .map(|i| SubnetConfig {
                embedding: EmbeddingSpec::multimodes(
                    sigma_step * i as f64,
                    frequencies,
                    alpha,
                    seed.wrapping_add(i as u64),
                ),
                body: SubnetSpec {
                    layers,
                    width,
                    activation: Activation::Tanh,
                    output_dim: None,
                },
            })
            .collect();
        NetworkSpec {
            input_dim,
            output_dim,
            subnets,
        }
    }

    /// A single fully connected network on the raw coordinates.
    pub fn plain(input_dim: usize, output_dim: usize, layers: usize, width: usize) -> Self {
        NetworkSpec {
            input_dim,
            output_dim,
            subnets: vec![SubnetConfig {
                embedding: EmbeddingSpec::identity(),
                body: SubnetSpec {
                    layers,
                    width,
                    activation: Activation::Tanh,
                    output_dim: None,
                },
            }],
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::InvalidSpec(m));
        if self.input_dim == 0 || self.input_dim > crate::autodiff::MAX_AXES {
            return bad(format!("input_dim must be in 1..=4, got {}", self.input_dim));
        }
        if self.output_dim == 0 {
            return bad("output_dim must be >= 1".into());
        }
        if self.subnets.is_empty() {
            return bad("at least one subnet is required (M >= 1)".into());
        }
        for (i, s) in self.subnets.iter().enumerate() {
            if s.body.layers == 0 || s.body.width == 0 {
                return bad(format!("subnet {i}: layers and width must be >= 1"));
            }
            if s.body.output_dim == Some(0) {
                return bad(format!("subnet {i}: output_dim must be >= 1"));
            }
            if s.embedding.output_dim(self.input_dim) == 0 {
                return bad(format!("subnet {i}: embedding produces no features"));
            }
            if !(s.embedding.sigma.is_finite() && s.embedding.sigma >= 0.0) {
                return bad(format!("subnet {i}: sigma must be finite and >= 0"));
            }
            if !s.embedding.alpha.is_finite() {
                return bad(format!("subnet {i}: alpha must be finite"));
            }
        }
        Ok(())
    }
}

/// Position of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: usize,
    pub b: usize,
    pub tanh: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct SubnetPlan {
    pub layers: Vec<Dense>,
    /// Column offset of this subnet's output in the merge input.
    pub merge_offset: usize,
    pub out_dim: usize,
}

/// The trainable surrogate: `M` embedded subnets whose outputs are
/// concatenated and mapped linearly to the final outputs.
#[derive(Clone, Debug)]
pub struct MultiscaleNetwork {
    spec: NetworkSpec,
    embeddings: Vec<Embedding>,
    plans: Vec<SubnetPlan>,
    merge: Dense,
    layout: Arc<ParamLayout>,
}

impl MultiscaleNetwork {
    pub fn new(spec: NetworkSpec) -> Result<Self, NetworkError> {
        spec.validate()?;
        let mut layout = ParamLayout::new();
        let mut embeddings = Vec::new();
        let mut plans = Vec::new();
        let mut merge_in = 0;
        let dense = |layout: &mut ParamLayout, group: String, rows: usize, cols: usize, tanh: bool| {
            let wb = layout.push(group.clone(), BlockKind::Weight, rows, cols);
            let bb = layout.push(group, BlockKind::Bias, rows, 1);
            Dense {
                rows,
                cols,
                w: layout.blocks()[wb].offset,
                b: layout.blocks()[bb].offset,
                tanh,
            }
        };
        for (i, s) in spec.subnets.iter().enumerate() {
            let emb = Embedding::new(s.embedding.clone(), spec.input_dim);
            let mut fan_in = emb.output_dim();
            let mut layers = Vec::new();
            for l in 0..s.body.layers {
                layers.push(dense(&mut layout, format!("subnet{i}.hidden{l}"), s.body.width, fan_in, true));
                fan_in = s.body.width;
            }
            if let Some(k) = s.body.output_dim {
                layers.push(dense(&mut layout, format!("subnet{i}.output"), k, fan_in, false));
                fan_in = k;
            }
            plans.push(SubnetPlan {
                layers,
                merge_offset: merge_in,
                out_dim: fan_in,
            });
            merge_in += fan_in;
            embeddings.push(emb);
        }
        let merge = dense(&mut layout, "merge".into(), spec.output_dim, merge_in, false);
        Ok(MultiscaleNetwork {
            spec,
            embeddings,
            plans,
            merge,
            layout: Arc::new(layout),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn param_layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len()
    }

    pub(crate) fn plans(&self) -> &[SubnetPlan] {
        &self.plans
    }

    pub(crate) fn merge(&self) -> Dense {
        self.merge
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; self.layout.len()];
        let all = self.plans.iter().flat_map(|p| p.layers.iter()).chain(std::iter::once(&self.merge));
        for d in all {
            let bound = (6.0 / (d.rows + d.cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in &mut values[d.w..d.w + d.rows * d.cols] {
                *v = dist.sample(&mut rng);
            }
        }
        ParameterVector::new(self.layout.clone(), values)
    }

    fn check_len(&self, n: usize) -> Result<(), NetworkError> {
        if n != self.layout.len() {
            return Err(NetworkError::ParamCount {
                expected: self.layout.len(),
                got: n,
            });
        }
        Ok(())
    }

    /// Plain evaluation at one point.
    pub fn forward(&self, params: &[f64], point: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check_len(params.len())?;
        let out = self.forward_generic(params, point);
        if let Some(o) = out.iter().position(|v| !v.is_finite()) {
            return Err(NetworkError::NonFinite {
                output: o,
                point: point.to_vec(),
            });
        }
        Ok(out)
    }

    /// Reference evaluation over any scalar type. Parameters may be plain
    /// numbers or tape variables; inputs may be jets over either.
    pub fn forward_generic<P, T>(&self, params: &[P], x: &[T]) -> Vec<T>
    where
        P: Scalar,
        T: Weighted<P>,
    {
        assert_eq!(params.len(), self.layout.len(), "parameter count");
        assert_eq!(x.len(), self.spec.input_dim, "input dimension");
        let dense = |d: &Dense, a: &[T]| -> Vec<T> {
            (0..d.rows)
                .map(|r| {
                    let mut acc = a[0].weighted_from(&params[d.b + r]);
                    for (c, ac) in a.iter().enumerate() {
                        acc = acc + ac.weighted(&params[d.w + r * d.cols + c]);
                    }
                    if d.tanh {
                        acc.tanh()
                    } else {
                        acc
                    }
                })
                .collect()
        };
        let mut concat: Vec<T> = Vec::new();
        for (emb, plan) in self.embeddings.iter().zip(&self.plans) {
            let mut a = emb.embed(x);
            for d in &plan.layers {
                a = dense(d, &a);
            }
            concat.extend(a);
        }
        dense(&self.merge, &concat)
    }
}

/// Scalars that can be multiplied by a parameter of type `P`.
pub trait Weighted<P>: Scalar {
    fn weighted(&self, w: &P) -> Self;
    /// `p` as a constant in the context of `self`.
    fn weighted_from(&self, p: &P) -> Self;
}

impl Weighted<f64> for f64 {
    fn weighted(&self, w: &f64) -> f64 {
        self * w
    }
    fn weighted_from(&self, p: &f64) -> f64 {
        *p
    }
}

impl Weighted<f64> for Jet<f64> {
    fn weighted(&self, w: &f64) -> Self {
        self.clone() * *w
    }
    fn weighted_from(&self, p: &f64) -> Self {
        Jet::constant(self.layout(), *p)
    }
}

impl<'t> Weighted<Var<'t>> for Var<'t> {
    fn weighted(&self, w: &Var<'t>) -> Self {
        *self * *w
    }
    fn weighted_from(&self, p: &Var<'t>) -> Self {
        *p
    }
}

impl<'t> Weighted<Var<'t>> for Jet<Var<'t>> {
    fn weighted(&self, w: &Var<'t>) -> Self {
        self.clone().scale(w)
    }
    fn weighted_from(&self, p: &Var<'t>) -> Self {
        Jet::constant(self.layout(), *p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{
        evaluate_with_input_derivatives, finite_difference_check, parameter_gradient, FdStencil,
        JetLayout,
    };

    fn small_multiscale() -> MultiscaleNetwork {
        MultiscaleNetwork::new(NetworkSpec::multiscale(2, 3, 2, 0.5, 3, 1.0, 2, 6, 11)).unwrap()
    }

    #[test]
    fn param_count_with_output_layer() {
        // multimodes with m = 3 in 2D gives 8 features
        let mut spec = NetworkSpec::multiscale(2, 3, 1, 0.1, 3, 1.0, 4, 50, 0);
        spec.subnets[0].body.output_dim = Some(3);
        let net = MultiscaleNetwork::new(spec).unwrap();
        // subnet 8253 plus a 3x3 merge
        assert_eq!(net.param_count(), 8253 + 3 * 3 + 3);
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let net = MultiscaleNetwork::new(NetworkSpec::plain(2, 1, 2, 50)).unwrap();
        let p = net.init_params(3);
        assert_eq!(p, net.init_params(3));
        let bound = (6.0f64 / 100.0).sqrt();
        let blk = &net.param_layout().blocks()[2];
        assert_eq!((blk.rows, blk.cols), (50, 50));
        assert!(p.values()[blk.range()].iter().all(|v| v.abs() <= bound));
        for b in net.param_layout().blocks() {
            if b.kind == BlockKind::Bias {
                assert!(p.values()[b.range()].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zero_weights_give_merge_bias() {
        let net = MultiscaleNetwork::new(NetworkSpec::plain(2, 2, 1, 4)).unwrap();
        let mut p = vec![0.0; net.param_count()];
        let m = net.merge();
        p[m.b] = 0.7;
        p[m.b + 1] = -2.0;
        assert_eq!(net.forward(&p, &[0.3, 0.4]).unwrap(), vec![0.7, -2.0]);
    }

    #[test]
    fn rejects_empty_and_wrong_length() {
        let mut spec = NetworkSpec::plain(2, 1, 1, 4);
        spec.subnets.clear();
        assert!(MultiscaleNetwork::new(spec).is_err());
        let net = MultiscaleNetwork::new(NetworkSpec::plain(2, 1, 1, 4)).unwrap();
        assert!(matches!(
            net.forward(&[0.0; 3], &[0.0, 0.0]),
            Err(NetworkError::ParamCount { .. })
        ));
    }

    #[test]
    fn third_derivatives_match_finite_differences() {
        let net = small_multiscale();
        let p = net.init_params(5);
        let point = [0.31, -0.22];
        let b = evaluate_with_input_derivatives(
            |x| Ok(net.forward_generic(p.values(), x)),
            &point,
            3,
            &[0, 1],
        )
        .unwrap();
        let f = |x: &[f64]| net.forward(p.values(), x).unwrap();
        let r = finite_difference_check(&f, &b, &point, 3e-4, FdStencil::Central4);
        assert!(r.max_rel_of_order(1) < 1e-6, "{}", r.max_rel_of_order(1));
        assert!(r.max_rel_of_order(3) < 1e-4, "{}", r.max_rel_of_order(3));
    }

    #[test]
    fn nested_gradient_matches_parameter_fd() {
        let net = MultiscaleNetwork::new(NetworkSpec::plain(1, 1, 1, 1)).unwrap();
        let p = net.init_params(1).with_values(vec![0.8, 0.1, -1.3, 0.2]);
        let layout = JetLayout::total_order(1, 1);
        let loss = |theta: &[f64]| {
            let x = [Jet::variable(layout, 0, 0.3)];
            let u = &net.forward_generic(theta, &x)[0];
            u.derivative(&[1, 0, 0, 0]).unwrap().powi(2)
        };
        let g = parameter_gradient(&p, |v| {
            let x = [Jet::variable(layout, 0, v[0].lift(0.3))];
            let u = &net.forward_generic(v, &x)[0];
            Ok(u.derivative(&[1, 0, 0, 0]).unwrap().square())
        })
        .unwrap();
        let r = crate::autodiff::finite_difference_gradient_check(
            &loss,
            g.values(),
            p.values(),
            1e-4,
            FdStencil::Central4,
        );
        assert!(r.max_rel() < 1e-6, "{:?}", r);
    }
}
