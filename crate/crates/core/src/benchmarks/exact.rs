//! Closed-form solutions of the benchmark families, written once over
//! [`Scalar`] so the same code gives values and derivative jets.

use std::f64::consts::PI;

use crate::autodiff::{Jet, Scalar};
use crate::mhd::{ExactFields, ExactSolution};

/// Kovasznay-type flow with a prescribed magnetic field on a steady 2D box.
#[derive(Clone, Debug, PartialEq)]
pub struct Kovasznay {
    pub re: f64,
}

impl Kovasznay {
    pub fn eta(&self) -> f64 {
        let nu = 1.0 / self.re;
        1.0 / (2.0 * nu) - (1.0 / (4.0 * nu * nu) + 4.0 * PI * PI).sqrt()
    }

    fn eval<T: Scalar>(&self, p: &[T]) -> ExactFields<T> {
        let (x, y) = (p[0].clone(), p[1].clone());
        let eta = self.eta();
        let e = (x.clone() * eta).exp();
        let (c, s) = ((y.clone() * (2.0 * PI)).cos(), (y.clone() * (2.0 * PI)).sin());
        let one = x.lift(1.0);
        ExactFields {
            u: vec![one.clone() - e.clone() * c, e.clone() * s.clone() * (eta / (2.0 * PI))],
            b: vec![y.sin(), x.sin()],
            p: (one - (x.clone() * (2.0 * eta)).exp()) * 0.5,
            a1: vec![x.cos() - y.cos()],
            a2: vec![y - e * s / (2.0 * PI)],
        }
    }
}

/// Polynomial-in-time manufactured solution on the unit square.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialUnsteady;

impl PolynomialUnsteady {
    fn eval<T: Scalar>(&self, p: &[T]) -> ExactFields<T> {
        let (x, y, t) = (p[0].clone(), p[1].clone(), p[2].clone());
        let t2 = t.clone() * t;
        let (x8, y8) = (x.clone() * 8.0, y.clone() * 8.0);
        ExactFields {
            u: vec![y.powi(5) + t2.clone(), x.powi(5) + t2.clone()],
            b: vec![y8.sin() + t2.clone(), x8.sin() + t2.clone()],
            p: (x.clone() * 2.0 - 1.0) * (y.clone() * 2.0 - 1.0) * 10.0,
            a1: vec![(x8.cos() - y8.cos()) / 8.0 + t2.clone() * (y.clone() - x.clone())],
            a2: vec![(y.powi(6) - x.powi(6)) / 6.0 + t2 * (y - x)],
        }
    }
}

/// Fully developed channel flow under a transverse field on
/// `[0, Lx] x [-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hartmann {
    pub re: f64,
    pub rm: f64,
    pub s: f64,
    pub g: f64,
    pub p0: f64,
}

impl Hartmann {
    pub fn ha(&self) -> f64 {
        (self.s * self.re * self.rm).sqrt()
    }

    pub fn u1(&self, y: f64) -> f64 {
        let ha = self.ha();
        self.g * self.re / (ha * ha.tanh()) * (1.0 - (y * ha).cosh() / ha.cosh())
    }

    pub fn b1(&self, y: f64) -> f64 {
        let ha = self.ha();
        self.g / self.s * ((y * ha).sinh() / ha.sinh() - y)
    }

    fn eval<T: Scalar>(&self, p: &[T]) -> ExactFields<T> {
        let (x, y) = (p[0].clone(), p[1].clone());
        let ha = self.ha();
        let yh = y.clone() * ha;
        let c = self.g * self.re / (ha * ha.tanh());
        let one = x.lift(1.0);
        let u1 = (one.clone() - yh.cosh() / ha.cosh()) * c;
        let b1 = (yh.sinh() / ha.sinh() - y.clone()) * (self.g / self.s);
        let pressure = -(x.clone() * self.g) - b1.clone() * b1.clone() * (self.s / 2.0) + self.p0;
        ExactFields {
            u: vec![u1, x.lift(0.0)],
            b: vec![b1, one],
            p: pressure,
            a1: vec![(yh.cosh() / (ha * ha.sinh()) - y.clone() * y.clone() * 0.5) * (self.g / self.s) - x],
            a2: vec![(y - yh.sinh() / (ha * ha.cosh())) * c],
        }
    }
}

/// Beltrami flow with a prescribed magnetic field on `[-1, 1]^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Beltrami {
    pub a: f64,
    pub d: f64,
}

impl Beltrami {
    fn eval<T: Scalar>(&self, p: &[T]) -> ExactFields<T> {
        let (a, d) = (self.a, self.d);
        let (x, y, z, t) = (p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone());
        let decay = (t.clone() * (-d * d)).exp();
        let (ex, ey, ez) = ((x.clone() * a).exp(), (y.clone() * a).exp(), (z.clone() * a).exp());
        // phase arguments a*x + d*y and cyclic shifts
        let sxy = x.clone() * a + y.clone() * d;
        let syz = y.clone() * a + z.clone() * d;
        let szx = z.clone() * a + x.clone() * d;
        let u = vec![
            (ex.clone() * syz.sin() + ez.clone() * sxy.cos()) * decay.clone() * (-a),
            (ey.clone() * szx.sin() + ex.clone() * syz.cos()) * decay.clone() * (-a),
            (ez.clone() * sxy.sin() + ey.clone() * szx.cos()) * decay.clone() * (-a),
        ];
        let e2 = |v: &T| (v.clone() * (2.0 * a)).exp();
        let pressure = (e2(&x) + e2(&y) + e2(&z)
            + sxy.sin() * szx.cos() * ((y.clone() + z.clone()) * a).exp() * 2.0
            + syz.sin() * sxy.cos() * ((z.clone() + x.clone()) * a).exp() * 2.0
            + szx.sin() * syz.cos() * ((x.clone() + y.clone()) * a).exp() * 2.0)
            * (t.clone() * (-2.0 * d * d)).exp()
            * (-0.5 * a * a);
        let ty = t + y.clone();
        ExactFields {
            a2: u.iter().map(|v| v.clone() / d).collect(),
            u,
            b: vec![z.sin(), x.sin(), ty.sin()],
            p: pressure,
            a1: vec![ty.cos(), z.cos(), x.cos()],
        }
    }
}

macro_rules! exact_impl {
    ($ty:ty, $d:expr, $unsteady:expr) => {
        impl ExactSolution for $ty {
            fn dim(&self) -> usize {
                $d
            }
            fn unsteady(&self) -> bool {
                $unsteady
            }
            fn eval_f64(&self, x: &[f64]) -> ExactFields<f64> {
                self.eval(x)
            }
            fn eval_jet(&self, x: &[Jet<f64>]) -> ExactFields<Jet<f64>> {
                self.eval(x)
            }
        }
    };
}

exact_impl!(Kovasznay, 2, false);
exact_impl!(PolynomialUnsteady, 2, true);
exact_impl!(Hartmann, 2, false);
exact_impl!(Beltrami, 3, true);
