use super::bundle::DerivativeBundle;
use super::jet::{multi_index_degree, MultiIndex, MAX_AXES};

/// Central difference stencil family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdStencil {
    /// Second-order accurate.
    Central2,
    /// Fourth-order accurate.
    Central4,
}

fn weights(stencil: FdStencil, order: usize) -> &'static [(i32, f64)] {
    match (stencil, order) {
        (_, 0) => &[(0, 1.0)],
        (FdStencil::Central2, 1) => &[(-1, -0.5), (1, 0.5)],
        (FdStencil::Central2, 2) => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        (FdStencil::Central2, 3) => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        (FdStencil::Central4, 1) => &[
            (-2, 1.0 / 12.0),
            (-1, -8.0 / 12.0),
            (1, 8.0 / 12.0),
            (2, -1.0 / 12.0),
        ],
        (FdStencil::Central4, 2) => &[
            (-2, -1.0 / 12.0),
            (-1, 16.0 / 12.0),
            (0, -30.0 / 12.0),
            (1, 16.0 / 12.0),
            (2, -1.0 / 12.0),
        ],
        (FdStencil::Central4, 3) => &[
            (-3, 1.0 / 8.0),
            (-2, -1.0),
            (-1, 13.0 / 8.0),
            (1, -13.0 / 8.0),
            (2, 1.0),
            (3, -1.0 / 8.0),
        ],
        _ => panic!("finite differences support orders 0..=3"),
    }
}

/// Central-difference estimate of `d^alpha f` for every output of `f`.
pub fn fd_partial(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    alpha: &MultiIndex,
    step: f64,
    stencil: FdStencil,
) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let mut terms: Vec<(Vec<f64>, f64)> = vec![(point.to_vec(), 1.0)];
    for axis in 0..MAX_AXES {
        let k = alpha[axis] as usize;
        if k == 0 {
            continue;
        }
        let w = weights(stencil, k);
        let mut next = Vec::with_capacity(terms.len() * w.len());
        for (p, c) in &terms {
            for &(off, wt) in w {
                let mut q = p.clone();
                q[axis] += off as f64 * step;
                next.push((q, c * wt));
            }
        }
        terms = next;
    }
    let scale = step.powi(multi_index_degree(alpha) as i32);
    let mut acc: Option<Vec<f64>> = None;
    for (p, c) in terms {
        let v = f(&p);
        match acc.as_mut() {
            None => acc = Some(v.iter().map(|x| x * c).collect()),
            Some(a) => a.iter_mut().zip(&v).for_each(|(a, x)| *a += x * c),
        }
    }
    acc.unwrap_or_default().into_iter().map(|x| x / scale).collect()
}

#[derive(Clone, Debug)]
pub struct FdEntry {
    pub output: usize,
    pub index: MultiIndex,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    /// `abs_err / max(|analytic|, |numeric|, floor)`, where `floor` is 1e-3
    /// of the largest analytic magnitude among entries of the same order.
    pub rel_err: f64,
}

/// Entrywise analytic-versus-finite-difference comparison.
#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    fn from_pairs(pairs: Vec<(usize, MultiIndex, f64, f64)>) -> FdReport {
        let mut scale = [0.0f64; 4];
        for (_, idx, a, _) in &pairs {
            let k = multi_index_degree(idx).min(3);
            scale[k] = scale[k].max(a.abs());
        }
        let entries = pairs
            .into_iter()
            .map(|(output, index, analytic, numeric)| {
                let k = multi_index_degree(&index).min(3);
                let abs_err = (analytic - numeric).abs();
                let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale[k]).max(1e-300);
                FdEntry {
                    output,
                    index,
                    analytic,
                    numeric,
                    abs_err,
                    rel_err: abs_err / denom,
                }
            })
            .collect();
        FdReport { entries }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.abs_err).fold(0.0, f64::max)
    }

    pub fn max_rel(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    /// Largest relative discrepancy among derivatives of total order `k`.
    pub fn max_rel_of_order(&self, k: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| multi_index_degree(&e.index) == k)
            .map(|e| e.rel_err)
            .fold(0.0, f64::max)
    }
}

/// Compares every derivative carried by `bundle` against central
/// differences of the plain evaluation `f` at `point`.
pub fn finite_difference_check(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    bundle: &DerivativeBundle<f64>,
    point: &[f64],
    step: f64,
    stencil: FdStencil,
) -> FdReport {
    let mut pairs = Vec::new();
    for (i, alpha) in bundle.layout().monomials().iter().enumerate() {
        if bundle.layout().degree_of(i) == 0 {
            continue;
        }
        let numeric = fd_partial(f, point, alpha, step, stencil);
        for (o, n) in numeric.into_iter().enumerate().take(bundle.n_outputs()) {
            let a = bundle.derivative(o, alpha).expect("alpha taken from layout");
            pairs.push((o, *alpha, a, n));
        }
    }
    FdReport::from_pairs(pairs)
}

/// Same comparison for a gradient over parameters (one "output", one
/// first-order entry per parameter, `index[0]` holding nothing useful).
pub fn finite_difference_gradient_check(
    loss: &dyn Fn(&[f64]) -> f64,
    gradient: &[f64],
    params: &[f64],
    step: f64,
    stencil: FdStencil,
) -> FdReport {
    let unit: MultiIndex = [1, 0, 0, 0];
    let pairs = (0..params.len())
        .map(|i| {
            let w = weights(stencil, 1);
            let mut acc = 0.0;
            for &(off, wt) in w {
                let mut p = params.to_vec();
                p[i] += off as f64 * step;
                acc += wt * loss(&p);
            }
            (i, unit, gradient[i], acc / step)
        })
        .collect();
    FdReport::from_pairs(pairs)
}
