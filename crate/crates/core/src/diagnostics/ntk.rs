use std::io::{self, Write};

use crate::autodiff::JetLayout;
use crate::network::MultiscaleNetwork;
use crate::parallel::{ordered_map, ExecMode};

use super::DiagnosticsError;

pub const SPECTRUM_HEADER: &str = "index,eigenvalue";

/// A model with one scalar output whose parameter Jacobian is available.
pub trait ScalarModel: Sync {
    fn param_count(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn values(&self, params: &[f64], points: &[f64]) -> Vec<f64>;
    /// Row `i` is `d NN(x_i) / d theta`.
    fn jacobian(&self, params: &[f64], points: &[f64]) -> Vec<Vec<f64>>;
}

/// [`MultiscaleNetwork`] restricted to one output.
pub struct NetworkModel<'a> {
    pub net: &'a MultiscaleNetwork,
    pub mode: ExecMode,
}

impl<'a> NetworkModel<'a> {
    pub fn new(net: &'a MultiscaleNetwork, mode: ExecMode) -> Result<Self, DiagnosticsError> {
        if net.output_dim() != 1 {
            return Err(DiagnosticsError::Invalid(format!(
                "the kernel diagnostic needs a scalar network, got {} outputs",
                net.output_dim()
            )));
        }
        Ok(NetworkModel { net, mode })
    }
}

impl ScalarModel for NetworkModel<'_> {
    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn values(&self, params: &[f64], points: &[f64]) -> Vec<f64> {
        let prep = self.net.prepare(JetLayout::total_order(self.input_dim(), 0), points);
        let out = self.net.evaluate_batch(params, &prep, self.mode);
        (0..out.len()).map(|p| out.values(p)[0]).collect()
    }

    fn jacobian(&self, params: &[f64], points: &[f64]) -> Vec<Vec<f64>> {
        let prep = self.net.prepare(JetLayout::total_order(self.input_dim(), 0), points);
        self.net.output_gradients(params, &prep, 0, self.mode)
    }
}

/// Symmetric eigendecomposition, eigenvalues descending. `vectors` is
/// row-major `n x n` with eigenvector `i` in column `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

impl Eigen {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.vectors[r * self.n + i]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn jacobi_eigen(a: &[f64], n: usize) -> Result<Eigen, DiagnosticsError> {
    if a.len() != n * n {
        return Err(DiagnosticsError::Invalid(format!("matrix has {} entries, expected {}", a.len(), n * n)));
    }
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[f64]| {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s += a[p * n + q] * a[p * n + q];
                }
            }
        }
        s.sqrt()
    };
    let tol = 1e-15 * norm;
    let mut sweeps = 0;
    while off(&a) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(DiagnosticsError::NoConvergence { sweeps, off: off(&a) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * x - s * y;
                    a[k * n + q] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * x - s * y;
                    a[q * n + k] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * x - s * y;
                    v[k * n + q] = s * x + c * y;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + i];
        }
    }
    Ok(Eigen {
        n,
        values,
        vectors,
        sweeps,
    })
}

#[derive(Clone, Debug)]
pub struct NtkReport {
    pub n: usize,
    /// Symmetrized kernel, row-major.
    pub kernel: Vec<f64>,
    /// `max |K - K^T|` before symmetrization.
    pub asymmetry: f64,
    pub eigen: Eigen,
    /// Number of parameter draws averaged.
    pub draws: usize,
}

impl NtkReport {
    /// `||K Q - Q Lambda||_F / ||K||_F`.
    pub fn eigen_residual(&self) -> f64 {
        let n = self.n;
        let (k, q) = (&self.kernel, &self.eigen.vectors);
        let mut r = 0.0;
        for i in 0..n {
            for j in 0..n {
                let kq: f64 = (0..n).map(|m| k[i * n + m] * q[m * n + j]).sum();
                r += (kq - q[i * n + j] * self.eigen.values[j]).powi(2);
            }
        }
        r.sqrt() / k.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE)
    }

    /// Smallest eigenvalue relative to the largest.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let v = &self.eigen.values;
        v[v.len() - 1] / v[0].abs().max(f64::MIN_POSITIVE)
    }

    /// Norm of the projection of `y` onto the leading `k` eigenvectors.
    pub fn leading_projection(&self, y: &[f64], k: usize) -> f64 {
        (0..k.min(self.n))
            .map(|i| self.eigen.vector(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `K_ij = <dNN(x_i)/dtheta, dNN(x_j)/dtheta>`, averaged over the given
/// parameter draws.
pub fn empirical_ntk<M: ScalarModel + ?Sized>(
    model: &M,
    draws: &[Vec<f64>],
    points: &[f64],
    mode: ExecMode,
) -> Result<NtkReport, DiagnosticsError> {
    let d = model.input_dim();
    if draws.is_empty() {
        return Err(DiagnosticsError::Invalid("at least one parameter draw is required".into()));
    }
    if points.is_empty() || !points.len().is_multiple_of(d) {
        return Err(DiagnosticsError::Invalid(format!("{} coordinates do not form {d}-dimensional points", points.len())));
    }
    if let Some(p) = draws.iter().find(|p| p.len() != model.param_count()) {
        return Err(DiagnosticsError::Invalid(format!("draw has {} parameters, expected {}", p.len(), model.param_count())));
    }
    let n = points.len() / d;
    let mut kernel = vec![0.0; n * n];
    for params in draws {
        let jac = model.jacobian(params, points);
        let rows = ordered_map(mode, n, |i| {
            (0..n).map(|j| jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum::<f64>()).collect::<Vec<f64>>()
        });
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                kernel[i * n + j] += v / draws.len() as f64;
            }
        }
    }
    let mut asymmetry = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            asymmetry = asymmetry.max((kernel[i * n + j] - kernel[j * n + i]).abs());
            let m = 0.5 * (kernel[i * n + j] + kernel[j * n + i]);
            kernel[i * n + j] = m;
            kernel[j * n + i] = m;
        }
    }
    let eigen = jacobi_eigen(&kernel, n)?;
    Ok(NtkReport {
        n,
        kernel,
        asymmetry,
        eigen,
        draws: draws.len(),
    })
}

/// `e(t) = sum_i exp(-lambda_i t) (q_i^T e0) q_i`.
pub fn ntk_error_prediction(report: &NtkReport, e0: &[f64], t: f64) -> Vec<f64> {
    assert_eq!(e0.len(), report.n, "error vector length");
    if t == 0.0 {
        // the eigen round trip is only exact up to rounding
        return e0.to_vec();
    }
    let mut out = vec![0.0; report.n];
    for i in 0..report.n {
        let q = report.eigen.vector(i);
        let c = q.iter().zip(e0).map(|(a, b)| a * b).sum::<f64>() * (-report.eigen.values[i] * t).exp();
        out.iter_mut().zip(&q).for_each(|(o, qi)| *o += c * qi);
    }
    out
}

/// Full-batch gradient descent on `1/2 sum (NN(x_i) - y_i)^2`. Returns the
/// error vector `NN(x) - y` before each step and after the last.
pub fn gd_error_trajectory<M: ScalarModel + ?Sized>(
    model: &M,
    params: &[f64],
    points: &[f64],
    targets: &[f64],
    lr: f64,
    steps: usize,
) -> Vec<Vec<f64>> {
    let mut theta = params.to_vec();
    let error = |theta: &[f64]| -> Vec<f64> { model.values(theta, points).iter().zip(targets).map(|(f, y)| f - y).collect() };
    let mut traj = vec![error(&theta)];
    for _ in 0..steps {
        let e = traj.last().expect("nonempty");
        let jac = model.jacobian(&theta, points);
        for (row, ei) in jac.iter().zip(e) {
            theta.iter_mut().zip(row).for_each(|(t, g)| *t -= lr * ei * g);
        }
        traj.push(error(&theta));
    }
    traj
}

#[derive(Clone, Debug)]
pub struct TrajectoryComparison {
    /// Relative L2 distance of the whole stacked trajectory.
    pub relative_l2: f64,
    /// Worst per-step relative distance.
    pub max_step_relative: f64,
    pub predicted: Vec<Vec<f64>>,
}

/// Compares an observed trajectory with the kernel prediction at
/// `t = lr * step`.
pub fn trajectory_error(report: &NtkReport, observed: &[Vec<f64>], lr: f64) -> TrajectoryComparison {
    let e0 = &observed[0];
    let predicted: Vec<Vec<f64>> = (0..observed.len()).map(|k| ntk_error_prediction(report, e0, lr * k as f64)).collect();
    let (mut num, mut den, mut worst) = (0.0, 0.0, 0.0f64);
    for (p, o) in predicted.iter().zip(observed) {
        let d: f64 = p.iter().zip(o).map(|(a, b)| (a - b).powi(2)).sum();
        let s: f64 = o.iter().map(|b| b * b).sum();
        num += d;
        den += s;
        if s > 0.0 {
            worst = worst.max((d / s).sqrt());
        }
    }
    TrajectoryComparison {
        relative_l2: (num / den.max(f64::MIN_POSITIVE)).sqrt(),
        max_step_relative: worst,
        predicted,
    }
}

pub fn write_spectrum_csv<W: Write>(mut w: W, report: &NtkReport) -> io::Result<()> {
    writeln!(w, "{SPECTRUM_HEADER}")?;
    for (i, v) in report.eigen.values.iter().enumerate() {
        writeln!(w, "{i},{v:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;

    /// `NN(x) = theta . (1, x, x^2)`.
    struct Quadratic;

    impl ScalarModel for Quadratic {
        fn param_count(&self) -> usize {
            3
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn values(&self, p: &[f64], xs: &[f64]) -> Vec<f64> {
            xs.iter().map(|x| p[0] + p[1] * x + p[2] * x * x).collect()
        }
        fn jacobian(&self, _: &[f64], xs: &[f64]) -> Vec<Vec<f64>> {
            xs.iter().map(|x| vec![1.0, *x, x * x]).collect()
        }
    }

    #[test]
    fn jacobi_on_known_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let e = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let q = e.vector(0);
        assert!((q[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((q[0] - q[1]).abs() < 1e-14);
    }

    #[test]
    fn linear_model_matches_gram_oracle() {
        let xs = [-0.7, -0.1, 0.3, 0.9, 1.4];
        let r = empirical_ntk(&Quadratic, &[vec![0.0; 3]], &xs, ExecMode::Sequential).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (xs[i], xs[j]);
                let expect = 1.0 + a * b + a * a * b * b;
                assert!((r.kernel[i * 5 + j] - expect).abs() < 1e-14);
            }
        }
        assert_eq!(r.asymmetry, 0.0);
        assert!(r.eigen_residual() < 1e-10);
        // rank 3: the last two eigenvalues vanish to roundoff
        assert!(r.min_relative_eigenvalue() > -1e-10);
        assert!(r.eigen.values[3].abs() < 1e-12 * r.eigen.values[0]);
    }

    #[test]
    fn single_point_is_squared_gradient_norm() {
        let net = MultiscaleNetwork::new(NetworkSpec::plain(1, 1, 2, 7)).unwrap();
        let params = net.init_params(3).into_values();
        let model = NetworkModel::new(&net, ExecMode::Sequential).unwrap();
        let r = empirical_ntk(&model, std::slice::from_ref(&params), &[0.4], ExecMode::Sequential).unwrap();
        let g = &model.jacobian(&params, &[0.4])[0];
        let n2: f64 = g.iter().map(|v| v * v).sum();
        assert_eq!(r.n, 1);
        assert!((r.kernel[0] - n2).abs() < 1e-12 * n2);
    }

    #[test]
    fn prediction_at_zero_is_identity_and_decays_by_eigenvalue() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let r = empirical_ntk(&Quadratic, &[vec![0.0; 3]], &xs, ExecMode::Sequential).unwrap();
        let e0 = vec![0.3, -1.0, 0.2, 0.5, 0.0, 0.7];
        let p = ntk_error_prediction(&r, &e0, 0.0);
        for (a, b) in p.iter().zip(&e0) {
            assert!((a - b).abs() < 1e-12);
        }
        let q0 = r.eigen.vector(0);
        let q2 = r.eigen.vector(2);
        let coef = |v: &[f64], q: &[f64]| v.iter().zip(q).map(|(a, b)| a * b).sum::<f64>().abs();
        let late = ntk_error_prediction(&r, &e0, 2.0);
        assert!(coef(&late, &q0) / coef(&e0, &q0) < coef(&late, &q2) / coef(&e0, &q2));
    }

    #[test]
    fn linear_model_gd_matches_prediction_for_small_steps() {
        let xs: Vec<f64> = (0..8).map(|i| -1.0 + i as f64 / 3.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
        let p0 = vec![0.1, -0.2, 0.3];
        let r = empirical_ntk(&Quadratic, std::slice::from_ref(&p0), &xs, ExecMode::Sequential).unwrap();
        let lr = 1e-3 / r.eigen.values[0];
        let traj = gd_error_trajectory(&Quadratic, &p0, &xs, &ys, lr, 200);
        let cmp = trajectory_error(&r, &traj, lr);
        assert!(cmp.relative_l2 < 1e-3, "{}", cmp.relative_l2);
    }

    #[test]
    fn vector_network_rejected() {
        let net = MultiscaleNetwork::new(NetworkSpec::plain(1, 2, 1, 3)).unwrap();
        assert!(NetworkModel::new(&net, ExecMode::Sequential).is_err());
    }
}
