//! Physical fields and their derivatives read off network output jets.
//!
//! Everything is expressed in three components. A 2D problem is embedded
//! with in-plane vectors `(v1, v2, 0)`, out-of-plane potentials
//! `(0, 0, psi)` and `d/dz = 0`, so `curl psi = (psi_y, -psi_x)` and every
//! operator below uses the 3D formulas.

use crate::autodiff::{AdError, Jet, MultiIndex, Scalar, MAX_AXES};

use super::Formulation;

pub type Vec3<T> = [T; 3];

/// Physical axis order used for derivative requests: x, y, z, t.
pub type Axes = [u8; 4];

pub const T_AXIS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Velocity,
    Magnetic,
    Pressure,
    /// Magnetic vector potential.
    A1,
    /// Velocity potential.
    A2,
}

pub fn unit(axis: usize) -> Axes {
    let mut a = [0u8; 4];
    a[axis] = 1;
    a
}

fn plus(a: Axes, b: Axes) -> Axes {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

pub fn cross<T: Scalar + Copy>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot<T: Scalar + Copy>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Derivatives of network heads interpreted under a formulation.
pub struct FieldView<'a, T> {
    heads: &'a [Jet<T>],
    formulation: Formulation,
    d: usize,
    unsteady: bool,
    zero: T,
}

impl<'a, T: Scalar + Copy> FieldView<'a, T> {
    /// `heads` must hold `formulation.output_dim(d)` jets over the inputs
    /// `(x, y[, z][, t])`.
    pub fn new(heads: &'a [Jet<T>], formulation: Formulation, d: usize, unsteady: bool) -> Result<Self, AdError> {
        let expected = formulation.output_dim(d);
        if heads.len() != expected {
            return Err(AdError::DimensionMismatch {
                expected,
                got: heads.len(),
            });
        }
        let nvars = heads[0].layout().nvars();
        if nvars != d + usize::from(unsteady) {
            return Err(AdError::DimensionMismatch {
                expected: d + usize::from(unsteady),
                got: nvars,
            });
        }
        let zero = heads[0].primal().lift(0.0);
        Ok(FieldView {
            heads,
            formulation,
            d,
            unsteady,
            zero,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn zero(&self) -> T {
        self.zero
    }

    /// `D^alpha` of a head, with alpha in physical axes. Derivatives along
    /// absent axes (z in 2D, t when steady) vanish.
    pub fn head(&self, h: usize, alpha: Axes) -> Result<T, AdError> {
        if (self.d == 2 && alpha[2] > 0) || (!self.unsteady && alpha[T_AXIS] > 0) {
            return Ok(self.zero);
        }
        let mut m: MultiIndex = [0; MAX_AXES];
        m[..self.d].copy_from_slice(&alpha[..self.d]);
        if self.unsteady {
            m[self.d] = alpha[T_AXIS];
        }
        self.heads[h].derivative(&m).ok_or(AdError::MissingDerivative { index: m })
    }

    /// Head index of the first component of a stored field, if stored.
    fn offset(&self, field: Field) -> Option<usize> {
        let d = self.d;
        let k = if d == 2 { 1 } else { 3 };
        match (self.formulation, field) {
            (_, Field::Pressure) => Some(self.heads.len() - 1),
            (Formulation::B | Formulation::A1, Field::Velocity) => Some(0),
            (Formulation::B, Field::Magnetic) => Some(d),
            (Formulation::A1, Field::A1) => Some(d),
            (Formulation::A2, Field::A2) => Some(0),
            (Formulation::A2, Field::A1) => Some(k),
            _ => None,
        }
    }

    /// `D^alpha` of component `i` of a field (pressure ignores `i`).
    pub fn component(&self, field: Field, i: usize, alpha: Axes) -> Result<T, AdError> {
        let potential = matches!(field, Field::A1 | Field::A2);
        match self.offset(field) {
            Some(o) if field == Field::Pressure => self.head(o, alpha),
            Some(o) if potential && self.d == 2 => {
                if i == 2 {
                    self.head(o, alpha)
                } else {
                    Ok(self.zero)
                }
            }
            Some(o) => {
                if i < self.d {
                    self.head(o + i, alpha)
                } else {
                    Ok(self.zero)
                }
            }
            None => match field {
                Field::Velocity => self.curl_component(Field::A2, i, alpha),
                Field::Magnetic => self.curl_component(Field::A1, i, alpha),
                _ => Err(AdError::NonDifferentiable(match field {
                    Field::A1 => "formulation has no magnetic potential head",
                    _ => "formulation has no velocity potential head",
                })),
            },
        }
    }

    /// `D^alpha (curl F)_i`.
    pub fn curl_component(&self, field: Field, i: usize, alpha: Axes) -> Result<T, AdError> {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let a = self.component(field, k, plus(alpha, unit(j)))?;
        let b = self.component(field, j, plus(alpha, unit(k)))?;
        Ok(a - b)
    }

    pub fn vector(&self, field: Field, alpha: Axes) -> Result<Vec3<T>, AdError> {
        Ok([
            self.component(field, 0, alpha)?,
            self.component(field, 1, alpha)?,
            self.component(field, 2, alpha)?,
        ])
    }

    pub fn value(&self, field: Field) -> Result<Vec3<T>, AdError> {
        self.vector(field, [0; 4])
    }

    pub fn time_derivative(&self, field: Field) -> Result<Vec3<T>, AdError> {
        self.vector(field, unit(T_AXIS))
    }

    /// `g[j][i] = d_j F_i`.
    pub fn jacobian(&self, field: Field) -> Result<[Vec3<T>; 3], AdError> {
        Ok([
            self.vector(field, unit(0))?,
            self.vector(field, unit(1))?,
            self.vector(field, unit(2))?,
        ])
    }

    /// Gradient of the scalar component `i` (pressure: any `i`).
    pub fn gradient(&self, field: Field, i: usize) -> Result<Vec3<T>, AdError> {
        Ok([
            self.component(field, i, unit(0))?,
            self.component(field, i, unit(1))?,
            self.component(field, i, unit(2))?,
        ])
    }

    pub fn divergence(&self, field: Field) -> Result<T, AdError> {
        let mut s = self.zero;
        for a in 0..self.d {
            s = s + self.component(field, a, unit(a))?;
        }
        Ok(s)
    }

    pub fn curl(&self, field: Field) -> Result<Vec3<T>, AdError> {
        Ok([
            self.curl_component(field, 0, [0; 4])?,
            self.curl_component(field, 1, [0; 4])?,
            self.curl_component(field, 2, [0; 4])?,
        ])
    }

    /// Componentwise Laplacian.
    pub fn laplacian(&self, field: Field) -> Result<Vec3<T>, AdError> {
        let mut out = [self.zero; 3];
        for (i, o) in out.iter_mut().enumerate() {
            for a in 0..self.d {
                let mut al = [0u8; 4];
                al[a] = 2;
                *o = *o + self.component(field, i, al)?;
            }
        }
        Ok(out)
    }

    /// `curl curl F = grad div F - Laplacian F`.
    pub fn curl_curl(&self, field: Field) -> Result<Vec3<T>, AdError> {
        let lap = self.laplacian(field)?;
        let mut out = [self.zero; 3];
        for i in 0..3 {
            let mut gd = self.zero;
            for a in 0..self.d {
                gd = gd + self.component(field, a, plus(unit(i), unit(a)))?;
            }
            out[i] = gd - lap[i];
        }
        Ok(out)
    }

    /// `(v . grad) F` for a known vector `v`.
    pub fn advect(&self, v: &Vec3<T>, field: Field) -> Result<Vec3<T>, AdError> {
        let g = self.jacobian(field)?;
        Ok([0, 1, 2].map(|i| v[0] * g[0][i] + v[1] * g[1][i] + v[2] * g[2][i]))
    }

    /// `curl(F x G)` from first derivatives of both fields.
    pub fn curl_of_cross(&self, f: Field, g: Field) -> Result<Vec3<T>, AdError> {
        let (fv, gv) = (self.value(f)?, self.value(g)?);
        let (df, dg) = (self.jacobian(f)?, self.jacobian(g)?);
        // d_j (F x G) = d_j F x G + F x d_j G
        let dx: Vec<Vec3<T>> = (0..3)
            .map(|j| {
                let a = cross(&df[j], &gv);
                let b = cross(&fv, &dg[j]);
                [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
            })
            .collect();
        Ok([
            dx[1][2] - dx[2][1],
            dx[2][0] - dx[0][2],
            dx[0][1] - dx[1][0],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::JetLayout;

    fn jets(layout: &'static JetLayout, p: &[f64]) -> Vec<Jet<f64>> {
        (0..p.len()).map(|a| Jet::variable(layout, a, p[a])).collect()
    }

    #[test]
    fn curl_2d_of_x_is_0_minus_1() {
        let l = JetLayout::total_order(2, 2);
        let x = jets(l, &[0.3, 0.7]);
        // A2 heads [A2, A1, p] with A2 = x
        let heads = vec![x[0].clone(), x[0].clone() * 0.0, x[0].clone() * 0.0];
        let v = FieldView::new(&heads, Formulation::A2, 2, false).unwrap();
        assert_eq!(v.value(Field::Velocity).unwrap(), [0.0, -1.0, 0.0]);
    }

    #[test]
    fn a2_quadratic_potential() {
        let l = JetLayout::total_order(2, 2);
        let x = jets(l, &[0.4, -0.2]);
        let psi = x[0].clone() * x[0].clone() * -0.5;
        let heads = vec![psi, x[0].clone() * 0.0, x[0].clone() * 0.0];
        let v = FieldView::new(&heads, Formulation::A2, 2, false).unwrap();
        let u = v.value(Field::Velocity).unwrap();
        assert!((u[0]).abs() < 1e-15 && (u[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn curl_3d_of_0_0_xy() {
        let l = JetLayout::total_order(3, 2);
        let x = jets(l, &[0.5, 2.0, -1.0]);
        let z = x[0].clone() * 0.0;
        // A1 heads: [u(3), A1(3), p]
        let heads = vec![
            z.clone(),
            z.clone(),
            z.clone(),
            z.clone(),
            z.clone(),
            x[0].clone() * x[1].clone(),
            z,
        ];
        let v = FieldView::new(&heads, Formulation::A1, 3, false).unwrap();
        assert_eq!(v.value(Field::Magnetic).unwrap(), [0.5, -2.0, 0.0]);
    }

    #[test]
    fn head_count_is_checked() {
        let l = JetLayout::total_order(2, 1);
        let x = jets(l, &[0.0, 0.0]);
        assert!(FieldView::new(&x, Formulation::B, 2, false).is_err());
    }

    #[test]
    fn missing_order_is_reported() {
        let l = JetLayout::total_order(2, 1);
        let x = jets(l, &[0.1, 0.2]);
        let heads = vec![x[0].clone(), x[1].clone(), x[0].clone()];
        let v = FieldView::new(&heads, Formulation::A2, 2, false).unwrap();
        assert!(matches!(v.laplacian(Field::Velocity), Err(AdError::MissingDerivative { .. })));
    }
}
