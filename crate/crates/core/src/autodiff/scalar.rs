use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::AdError;

/// Elementary functions the differentiation machinery knows about.
///
/// The smooth ones propagate through jets and tapes to any order; the
/// piecewise ones are listed so that callers get an explicit error instead
/// of a silently wrong derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementary {
    Tanh,
    Sin,
    Cos,
    Exp,
    Sinh,
    Cosh,
    Recip,
    Powi(i32),
    Abs,
    Relu,
    Floor,
    Sign,
}

impl Elementary {
    pub fn name(self) -> &'static str {
        match self {
            Elementary::Tanh => "tanh",
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Exp => "exp",
            Elementary::Sinh => "sinh",
            Elementary::Cosh => "cosh",
            Elementary::Recip => "recip",
            Elementary::Powi(_) => "powi",
            Elementary::Abs => "abs",
            Elementary::Relu => "relu",
            Elementary::Floor => "floor",
            Elementary::Sign => "sign",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(
            self,
            Elementary::Abs | Elementary::Relu | Elementary::Floor | Elementary::Sign
        )
    }
}

/// Real-number-like values that the network, operators and exact solutions
/// are written against: `f64`, tape variables, and jets over either.
pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Plain real value (order-0 projection).
    fn value(&self) -> f64;

    /// A constant living in the same context as `self` (same tape, same jet layout).
    fn lift(&self, c: f64) -> Self;

    fn tanh(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn recip(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    fn apply(&self, f: Elementary) -> Result<Self, AdError> {
        Ok(match f {
            Elementary::Tanh => self.tanh(),
            Elementary::Sin => self.sin(),
            Elementary::Cos => self.cos(),
            Elementary::Exp => self.exp(),
            Elementary::Sinh => self.sinh(),
            Elementary::Cosh => self.cosh(),
            Elementary::Recip => self.recip(),
            Elementary::Powi(n) => self.powi(n),
            other => return Err(AdError::NonDifferentiable(other.name())),
        })
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// Derivatives `f(a), f'(a), ..., f^(k)(a)` of a smooth elementary function.
///
/// Works for any scalar type so jets over tape variables get exact
/// higher-order chain rules.
pub(crate) fn derivative_ladder<T: Scalar>(f: Elementary, a: &T, k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(k + 1);
    match f {
        Elementary::Tanh => {
            let y = a.tanh();
            out.push(y.clone());
            if k >= 1 {
                let d1 = a.lift(1.0) - y.square();
                out.push(d1.clone());
                if k >= 2 {
                    let d2 = y.clone() * d1.clone() * -2.0;
                    out.push(d2.clone());
                    if k >= 3 {
                        let d3 = (d1.square() + y.clone() * d2.clone()) * -2.0;
                        out.push(d3.clone());
                        if k >= 4 {
                            let d4 = (d1 * d2 * 3.0 + y * d3) * -2.0;
                            out.push(d4);
                        }
                    }
                }
            }
            assert!(k <= 4, "tanh ladder supports order <= 4");
        }
        Elementary::Sin | Elementary::Cos => {
            let s = a.sin();
            let c = a.cos();
            let cycle = if f == Elementary::Sin {
                [s.clone(), c.clone(), -s, -c]
            } else {
                [c.clone(), -s.clone(), -c, s]
            };
            for i in 0..=k {
                out.push(cycle[i % 4].clone());
            }
        }
        Elementary::Exp => {
            let e = a.exp();
            for _ in 0..=k {
                out.push(e.clone());
            }
        }
        Elementary::Sinh | Elementary::Cosh => {
            let sh = a.sinh();
            let ch = a.cosh();
            let pair = if f == Elementary::Sinh {
                [sh, ch]
            } else {
                [ch, sh]
            };
            for i in 0..=k {
                out.push(pair[i % 2].clone());
            }
        }
        Elementary::Recip => {
            // d^j/dx^j x^-1 = (-1)^j j! x^-(j+1)
            let r = a.recip();
            let mut p = r.clone();
            let mut coef = 1.0;
            for j in 0..=k {
                out.push(p.clone() * coef);
                p = p * r.clone();
                coef *= -((j + 1) as f64);
            }
        }
        Elementary::Powi(n) => {
            let mut coef = 1.0;
            for j in 0..=k {
                let e = n - j as i32;
                if coef == 0.0 {
                    out.push(a.lift(0.0));
                } else if e == 0 {
                    out.push(a.lift(coef));
                } else {
                    out.push(a.powi(e) * coef);
                }
                coef *= e as f64;
            }
        }
        other => panic!("no derivative ladder for non-smooth primitive {}", other.name()),
    }
    out
}
