//! Incompressible MHD residuals in the `B`, `A1` and `A2` formulations.
//!
//! Head layouts (`k` = 1 in 2D, 3 in 3D):
//!
//! | formulation | heads                 |
//! |-------------|-----------------------|
//! | `B`         | `u (d), B (d), p`     |
//! | `A1`        | `u (d), A1 (k), p`    |
//! | `A2`        | `A2 (k), A1 (k), p`   |
//!
//! with `B = curl A1` and `u = curl A2`.

mod fields;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Jet, JetLayout, Scalar};
use crate::network::MultiscaleNetwork;

pub use fields::{cross, dot, unit, Axes, Field, FieldView, Vec3, T_AXIS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formulation {
    B,
    A1,
    A2,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [Formulation::B, Formulation::A1, Formulation::A2];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::B => "B",
            Formulation::A1 => "A1",
            Formulation::A2 => "A2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s))
    }

    pub fn output_dim(self, d: usize) -> usize {
        let k = potential_dim(d);
        match self {
            Formulation::B => 2 * d + 1,
            Formulation::A1 => d + k + 1,
            Formulation::A2 => 2 * k + 1,
        }
    }

    pub fn head_names(self, d: usize) -> Vec<String> {
        let comps = |p: &str, n: usize| -> Vec<String> {
            if n == 1 {
                vec![p.to_string()]
            } else {
                (1..=n).map(|i| format!("{p}_{i}")).collect()
            }
        };
        let vec = |p: &str| (1..=d).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let k = potential_dim(d);
        let mut v = match self {
            Formulation::B => [vec("u"), vec("b")].concat(),
            Formulation::A1 => [vec("u"), comps("a1", k)].concat(),
            Formulation::A2 => [comps("a2", k), comps("a1", k)].concat(),
        };
        v.push("p".into());
        v
    }

    /// Spatial derivative order needed to read `u` and `B`.
    pub fn value_order(self) -> usize {
        match self {
            Formulation::B => 0,
            Formulation::A1 | Formulation::A2 => 1,
        }
    }

    /// Jet layout for the PDE residual at interior points.
    pub fn interior_layout(self, d: usize, unsteady: bool) -> &'static JetLayout {
        match self {
            Formulation::B | Formulation::A1 => JetLayout::spacetime(d, unsteady, 2, 1, 0),
            Formulation::A2 => JetLayout::spacetime(d, unsteady, 3, 1, 1),
        }
    }

    /// Spatial jets of the given order with no time derivatives.
    pub fn spatial_layout(d: usize, unsteady: bool, order: usize) -> &'static JetLayout {
        JetLayout::spacetime(d, unsteady, order, 0, 0)
    }
}

/// Components of a potential: out-of-plane scalar in 2D.
pub fn potential_dim(d: usize) -> usize {
    if d == 2 {
        1
    } else {
        3
    }
}

fn serde_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams {
    /// Hydrodynamic Reynolds number.
    pub re: f64,
    /// Magnetic Reynolds number (potential equations).
    pub rm: f64,
    /// Electric conductivity.
    pub kappa: f64,
    /// Magnetic permeability.
    pub mu: f64,
    /// Coupling number.
    #[serde(default = "serde_one")]
    pub s: f64,
    /// Driving pressure-gradient magnitude.
    #[serde(default)]
    pub g: f64,
}

impl PhysParams {
    pub fn new(re: f64, rm: f64, kappa: f64, mu: f64) -> Self {
        PhysParams {
            re,
            rm,
            kappa,
            mu,
            s: 1.0,
            g: 0.0,
        }
    }

    /// Channel-flow scaling: Lorentz coefficient `s` and magnetic
    /// diffusion `1 / Rm` in both the field and the potential equations.
    pub fn hartmann(re: f64, rm: f64, s: f64, g: f64) -> Self {
        PhysParams {
            re,
            rm,
            kappa: s * rm,
            mu: 1.0 / s,
            s,
            g,
        }
    }

    pub fn hartmann_number(&self) -> f64 {
        (self.s * self.re * self.rm).sqrt()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("re", self.re), ("rm", self.rm), ("kappa", self.kappa), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Momentum source `f` (d components) and induction source `g` (d for
/// `B`, potential components otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTerms {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl SourceTerms {
    pub fn zero(formulation: Formulation, d: usize) -> Self {
        SourceTerms {
            f: vec![0.0; d],
            g: vec![0.0; induction_dim(formulation, d)],
        }
    }
}

fn induction_dim(formulation: Formulation, d: usize) -> usize {
    match formulation {
        Formulation::B => d,
        _ => potential_dim(d),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVector<T> {
    pub formulation: Formulation,
    pub momentum: Vec<T>,
    pub induction: Vec<T>,
    /// `B` and `A1` only.
    pub div_u: Option<T>,
    /// `B` only.
    pub div_b: Option<T>,
}

impl<T: Scalar + Copy> ResidualVector<T> {
    pub fn components(&self) -> impl Iterator<Item = &T> {
        self.momentum
            .iter()
            .chain(&self.induction)
            .chain(self.div_u.as_ref())
            .chain(self.div_b.as_ref())
    }

    pub fn sum_squares(&self) -> T {
        let mut it = self.components();
        let first = *it.next().expect("residual has components");
        it.fold(first * first, |acc, v| acc + *v * *v)
    }

    pub fn max_abs(&self) -> f64 {
        self.components().fold(0.0, |m, v| m.max(v.value().abs()))
    }
}

fn in_plane<T: Copy>(v: Vec3<T>, d: usize) -> Vec<T> {
    v[..d].to_vec()
}

fn potential_part<T: Copy>(v: Vec3<T>, d: usize) -> Vec<T> {
    if d == 2 {
        vec![v[2]]
    } else {
        v.to_vec()
    }
}

fn add3<T: Scalar + Copy>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale3<T: Scalar + Copy>(a: Vec3<T>, s: f64) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// PDE residual under the view's own formulation.
pub fn interior_residual<T: Scalar + Copy>(
    view: &FieldView<T>,
    phys: &PhysParams,
    src: &SourceTerms,
) -> Result<ResidualVector<T>, AdError> {
    interior_residual_as(view, view.formulation(), phys, src)
}

/// PDE residual of `formulation` evaluated on whatever fields `view` can
/// reconstruct (e.g. the `B` residual of an `A2` network).
pub fn interior_residual_as<T: Scalar + Copy>(
    view: &FieldView<T>,
    formulation: Formulation,
    phys: &PhysParams,
    src: &SourceTerms,
) -> Result<ResidualVector<T>, AdError> {
    let d = view.dim();
    let u = view.value(Field::Velocity)?;
    let b = view.value(Field::Magnetic)?;
    let common = {
        let ut = view.time_derivative(Field::Velocity)?;
        let lap = view.laplacian(Field::Velocity)?;
        let adv = view.advect(&u, Field::Velocity)?;
        let gp = view.gradient(Field::Pressure, 0)?;
        add3(add3(ut, scale3(lap, -1.0 / phys.re)), add3(adv, gp))
    };
    let (momentum, induction) = match formulation {
        Formulation::B => {
            let j = view.curl(Field::Magnetic)?;
            let lorentz = scale3(cross(&j, &b), -1.0 / phys.mu);
            let bt = view.time_derivative(Field::Magnetic)?;
            let cc = view.curl_curl(Field::Magnetic)?;
            let cx = view.curl_of_cross(Field::Velocity, Field::Magnetic)?;
            let ind = add3(add3(bt, scale3(cc, 1.0 / (phys.mu * phys.kappa))), scale3(cx, -1.0));
            (add3(common, lorentz), in_plane(ind, d))
        }
        Formulation::A1 | Formulation::A2 => {
            let at = view.time_derivative(Field::A1)?;
            let e = add3(at, cross(&b, &u));
            let lorentz = scale3(cross(&e, &b), phys.kappa);
            let cc = view.curl_curl(Field::A1)?;
            let ind = add3(e, scale3(cc, 1.0 / phys.rm));
            (add3(common, lorentz), potential_part(ind, d))
        }
    };
    let momentum: Vec<T> = in_plane(momentum, d)
        .into_iter()
        .zip(&src.f)
        .map(|(m, f)| m - *f)
        .collect();
    let induction: Vec<T> = induction.into_iter().zip(&src.g).map(|(m, g)| m - *g).collect();
    let div_u = match formulation {
        Formulation::B | Formulation::A1 => Some(view.divergence(Field::Velocity)?),
        Formulation::A2 => None,
    };
    let div_b = match formulation {
        Formulation::B => Some(view.divergence(Field::Magnetic)?),
        _ => None,
    };
    Ok(ResidualVector {
        formulation,
        momentum,
        induction,
        div_u,
        div_b,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// `u - u_d`
    VelocityDirichlet,
    /// `n x (B - B_d)`
    MagneticTangential,
    /// `B - B_d`
    MagneticDirichlet,
    /// `A2 - A2_d` and `n x (A1 - A1_d)`
    PotentialDirichlet,
    /// `(p I - Re^-1 grad u) n - p_d n`
    Traction,
}

/// Which supervision flag of a boundary point enables a kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldGroup {
    Velocity,
    Magnetic,
    Both,
}

impl BoundaryKind {
    pub fn group(self) -> FieldGroup {
        match self {
            BoundaryKind::VelocityDirichlet | BoundaryKind::Traction => FieldGroup::Velocity,
            BoundaryKind::MagneticTangential | BoundaryKind::MagneticDirichlet => FieldGroup::Magnetic,
            BoundaryKind::PotentialDirichlet => FieldGroup::Both,
        }
    }

    pub fn compatible(self, formulation: Formulation) -> bool {
        !(self == BoundaryKind::PotentialDirichlet && formulation == Formulation::B)
    }

    /// Spatial derivative order the kind needs under a formulation.
    pub fn order(self, formulation: Formulation) -> usize {
        let v = usize::from(formulation == Formulation::A2);
        match self {
            BoundaryKind::VelocityDirichlet => v,
            BoundaryKind::MagneticTangential | BoundaryKind::MagneticDirichlet => formulation.value_order(),
            BoundaryKind::PotentialDirichlet => 0,
            BoundaryKind::Traction => v + 1,
        }
    }

    pub fn check(self, formulation: Formulation) -> Result<(), String> {
        if self.compatible(formulation) {
            Ok(())
        } else {
            Err(format!("{self:?} needs potential heads, formulation {} has none", formulation.name()))
        }
    }
}

/// Exact or target field values.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactFields<T> {
    pub u: Vec<T>,
    pub b: Vec<T>,
    pub p: T,
    pub a1: Vec<T>,
    pub a2: Vec<T>,
}

impl<T: Clone> ExactFields<T> {
    /// Network heads that represent these fields under a formulation.
    pub fn heads(&self, formulation: Formulation) -> Vec<T> {
        let mut v = match formulation {
            Formulation::B => [self.u.clone(), self.b.clone()].concat(),
            Formulation::A1 => [self.u.clone(), self.a1.clone()].concat(),
            Formulation::A2 => [self.a2.clone(), self.a1.clone()].concat(),
        };
        v.push(self.p.clone());
        v
    }

    /// `[u, b, p, a1, a2]` flattened.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = [self.u.clone(), self.b.clone()].concat();
        v.push(self.p.clone());
        v.extend(self.a1.iter().cloned());
        v.extend(self.a2.iter().cloned());
        v
    }

    pub fn from_flat(d: usize, v: &[T]) -> Self {
        let k = potential_dim(d);
        assert_eq!(v.len(), 2 * d + 1 + 2 * k, "flat field length");
        ExactFields {
            u: v[..d].to_vec(),
            b: v[d..2 * d].to_vec(),
            p: v[2 * d].clone(),
            a1: v[2 * d + 1..2 * d + 1 + k].to_vec(),
            a2: v[2 * d + 1 + k..].to_vec(),
        }
    }
}

/// Column names matching [`ExactFields::to_flat`].
pub fn field_names(d: usize) -> Vec<String> {
    let k = potential_dim(d);
    let mut v: Vec<String> = (1..=d).map(|i| format!("u{i}")).collect();
    v.extend((1..=d).map(|i| format!("b{i}")));
    v.push("p".into());
    for p in ["a1", "a2"] {
        if k == 1 {
            v.push(p.into());
        } else {
            v.extend((1..=k).map(|i| format!("{p}_{i}")));
        }
    }
    v
}

/// Closed-form solution usable both pointwise and on jets.
pub trait ExactSolution: Send + Sync {
    fn dim(&self) -> usize;
    fn unsteady(&self) -> bool;
    fn eval_f64(&self, x: &[f64]) -> ExactFields<f64>;
    fn eval_jet(&self, x: &[Jet<f64>]) -> ExactFields<Jet<f64>>;
}

fn as_vec3<T: Scalar + Copy>(v: &[f64], zero: T, potential: bool) -> Vec3<T> {
    let c = |x: f64| zero + x;
    match (v.len(), potential) {
        (1, true) => [zero, zero, c(v[0])],
        (2, _) => [c(v[0]), c(v[1]), zero],
        _ => [c(v[0]), c(v[1]), c(v[2])],
    }
}

/// Boundary residual components of one kind at a point with outward
/// normal `n`.
pub fn boundary_residual<T: Scalar + Copy>(
    view: &FieldView<T>,
    kind: BoundaryKind,
    n: &[f64],
    target: &ExactFields<f64>,
    phys: &PhysParams,
) -> Result<Vec<T>, AdError> {
    let d = view.dim();
    let zero = view.zero();
    let normal = as_vec3(n, zero, false);
    let diff = |a: Vec3<T>, b: Vec3<T>| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    Ok(match kind {
        BoundaryKind::VelocityDirichlet => {
            in_plane(diff(view.value(Field::Velocity)?, as_vec3(&target.u, zero, false)), d)
        }
        BoundaryKind::MagneticDirichlet => {
            in_plane(diff(view.value(Field::Magnetic)?, as_vec3(&target.b, zero, false)), d)
        }
        BoundaryKind::MagneticTangential => {
            let db = diff(view.value(Field::Magnetic)?, as_vec3(&target.b, zero, false));
            potential_part(cross(&normal, &db), d)
        }
        BoundaryKind::PotentialDirichlet => {
            let mut out = Vec::new();
            if view.formulation() == Formulation::A2 {
                let da2 = diff(view.value(Field::A2)?, as_vec3(&target.a2, zero, true));
                out.extend(potential_part(da2, d));
            }
            let da1 = diff(view.value(Field::A1)?, as_vec3(&target.a1, zero, true));
            let t = cross(&normal, &da1);
            out.extend(if d == 2 { t[..2].to_vec() } else { t.to_vec() });
            out
        }
        BoundaryKind::Traction => {
            let p = view.component(Field::Pressure, 0, [0; 4])? - target.p;
            let g = view.jacobian(Field::Velocity)?;
            (0..d)
                .map(|i| {
                    let mut s = zero;
                    for (j, nj) in n.iter().enumerate() {
                        s = s + g[j][i] * *nj;
                    }
                    p * n[i] - s * (1.0 / phys.re)
                })
                .collect()
        }
    })
}

/// `u - u_d` and/or `B - B_d` (initial and data supervision).
pub fn value_residual<T: Scalar + Copy>(
    view: &FieldView<T>,
    target: &ExactFields<f64>,
    velocity: bool,
    magnetic: bool,
) -> Result<Vec<T>, AdError> {
    let d = view.dim();
    let mut out = Vec::with_capacity(2 * d);
    if velocity {
        let u = view.value(Field::Velocity)?;
        out.extend((0..d).map(|i| u[i] - target.u[i]));
    }
    if magnetic {
        let b = view.value(Field::Magnetic)?;
        out.extend((0..d).map(|i| b[i] - target.b[i]));
    }
    Ok(out)
}

fn input_jets(layout: &'static JetLayout, point: &[f64]) -> Vec<Jet<f64>> {
    (0..point.len()).map(|a| Jet::variable(layout, a, point[a])).collect()
}

/// Sources that make `exact` solve the formulation: its left-hand side
/// evaluated through the same residual code with zero sources.
pub fn manufactured_sources(
    exact: &dyn ExactSolution,
    point: &[f64],
    phys: &PhysParams,
    formulation: Formulation,
) -> Result<SourceTerms, AdError> {
    let (d, unsteady) = (exact.dim(), exact.unsteady());
    let layout = formulation.interior_layout(d, unsteady);
    let heads = exact.eval_jet(&input_jets(layout, point)).heads(formulation);
    let view = FieldView::new(&heads, formulation, d, unsteady)?;
    let r = interior_residual(&view, phys, &SourceTerms::zero(formulation, d))?;
    Ok(SourceTerms {
        f: r.momentum,
        g: r.induction,
    })
}

/// Residual of an exact solution under given sources (oracle checks).
pub fn exact_residual(
    exact: &dyn ExactSolution,
    point: &[f64],
    phys: &PhysParams,
    formulation: Formulation,
    src: &SourceTerms,
) -> Result<ResidualVector<f64>, AdError> {
    let (d, unsteady) = (exact.dim(), exact.unsteady());
    let layout = formulation.interior_layout(d, unsteady);
    let heads = exact.eval_jet(&input_jets(layout, point)).heads(formulation);
    let view = FieldView::new(&heads, formulation, d, unsteady)?;
    interior_residual(&view, phys, src)
}

/// PDE residual of a network at one point.
pub fn network_residual(
    net: &MultiscaleNetwork,
    params: &[f64],
    point: &[f64],
    formulation: Formulation,
    unsteady: bool,
    phys: &PhysParams,
    src: &SourceTerms,
) -> Result<ResidualVector<f64>, AdError> {
    let d = point.len() - usize::from(unsteady);
    let layout = formulation.interior_layout(d, unsteady);
    let heads = net.forward_generic(params, &input_jets(layout, point));
    let view = FieldView::new(&heads, formulation, d, unsteady)?;
    interior_residual(&view, phys, src)
}

/// Reconstructed `u`, `B`, `p` of a network at one point.
pub fn network_fields(
    net: &MultiscaleNetwork,
    params: &[f64],
    point: &[f64],
    formulation: Formulation,
    unsteady: bool,
) -> Result<ExactFields<f64>, AdError> {
    let d = point.len() - usize::from(unsteady);
    let layout = Formulation::spatial_layout(d, unsteady, formulation.value_order());
    let heads = net.forward_generic(params, &input_jets(layout, point));
    let view = FieldView::new(&heads, formulation, d, unsteady)?;
    fields_from_view(&view)
}

pub fn fields_from_view(view: &FieldView<f64>) -> Result<ExactFields<f64>, AdError> {
    let d = view.dim();
    let k = potential_dim(d);
    let pot = |f: Field| -> Vec<f64> {
        match view.value(f) {
            Ok(v) if k == 1 => vec![v[2]],
            Ok(v) => v.to_vec(),
            Err(_) => Vec::new(),
        }
    };
    Ok(ExactFields {
        u: view.value(Field::Velocity)?[..d].to_vec(),
        b: view.value(Field::Magnetic)?[..d].to_vec(),
        p: view.component(Field::Pressure, 0, [0; 4])?,
        a1: pot(Field::A1),
        a2: pot(Field::A2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jets(layout: &'static JetLayout, p: &[f64]) -> Vec<Jet<f64>> {
        input_jets(layout, p)
    }

    #[test]
    fn zero_fields_give_zero_residual() {
        for f in Formulation::ALL {
            for d in [2, 3] {
                let layout = f.interior_layout(d, true);
                let x = jets(layout, &vec![0.3; d + 1]);
                let heads = vec![x[0].clone() * 0.0; f.output_dim(d)];
                let view = FieldView::new(&heads, f, d, true).unwrap();
                let r = interior_residual(&view, &PhysParams::new(2.0, 3.0, 0.5, 1.5), &SourceTerms::zero(f, d)).unwrap();
                assert_eq!(r.max_abs(), 0.0);
                assert_eq!(r.div_u.is_some(), f != Formulation::A2);
                assert_eq!(r.div_b.is_some(), f == Formulation::B);
            }
        }
    }

    #[test]
    fn lorentz_force_2d_convention() {
        // B = (1 - y, 0): curl B = 1, at y = 0 B = (1, 0), force (0, 1)
        let layout = Formulation::B.interior_layout(2, false);
        let x = jets(layout, &[0.2, 0.0]);
        let z = x[0].clone() * 0.0;
        let heads = vec![z.clone(), z.clone(), (x[1].clone() * -1.0) + 1.0, z.clone(), z];
        let view = FieldView::new(&heads, Formulation::B, 2, false).unwrap();
        let r = interior_residual(&view, &PhysParams::new(1.0, 1.0, 1.0, 1.0), &SourceTerms::zero(Formulation::B, 2)).unwrap();
        // momentum carries -J x B
        assert_eq!(r.momentum, vec![0.0, -1.0]);
    }

    #[test]
    fn tangential_trace_2d() {
        let layout = Formulation::spatial_layout(2, false, 0);
        let x = jets(layout, &[0.2, 1.0]);
        let (b1, b2) = (0.7, -0.4);
        let heads = vec![x[0].clone() * 0.0, x[0].clone() * 0.0, x[0].clone() * 0.0 + b1, x[0].clone() * 0.0 + b2, x[0].clone() * 0.0];
        let view = FieldView::new(&heads, Formulation::B, 2, false).unwrap();
        let target = ExactFields {
            u: vec![0.0; 2],
            b: vec![0.25, 9.0],
            p: 0.0,
            a1: vec![0.0],
            a2: vec![0.0],
        };
        let r = boundary_residual(&view, BoundaryKind::MagneticTangential, &[0.0, 1.0], &target, &PhysParams::new(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(r, vec![-(b1 - 0.25)]);
    }

    #[test]
    fn kind_compatibility() {
        assert!(!BoundaryKind::PotentialDirichlet.compatible(Formulation::B));
        assert!(BoundaryKind::PotentialDirichlet.compatible(Formulation::A1));
        assert_eq!(BoundaryKind::Traction.order(Formulation::A2), 2);
        assert_eq!(BoundaryKind::VelocityDirichlet.order(Formulation::B), 0);
    }

    #[test]
    fn head_names_and_dims() {
        assert_eq!(Formulation::A2.head_names(2), vec!["a2", "a1", "p"]);
        assert_eq!(Formulation::B.head_names(3).len(), 7);
        assert_eq!(Formulation::A2.output_dim(3), 7);
        assert_eq!(Formulation::parse("a2"), Some(Formulation::A2));
        assert_eq!(Formulation::parse("A3"), None);
        assert_eq!(field_names(2), vec!["u1", "u2", "b1", "b2", "p", "a1", "a2"]);
    }

    #[test]
    fn flat_round_trip() {
        let f = ExactFields {
            u: vec![1.0, 2.0, 3.0],
            b: vec![4.0, 5.0, 6.0],
            p: 7.0,
            a1: vec![8.0, 9.0, 10.0],
            a2: vec![11.0, 12.0, 13.0],
        };
        assert_eq!(ExactFields::from_flat(3, &f.to_flat()), f);
        assert_eq!(field_names(3).len(), f.to_flat().len());
    }
}
