//! Collocation sets and the composite loss.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Jet, Var};
use crate::geometry::SampleBatch;
use crate::mhd::{
    boundary_residual, field_names, interior_residual, value_residual, BoundaryKind, ExactFields, FieldGroup,
    FieldView, Formulation, PhysParams, SourceTerms,
};
use crate::network::{BatchLoss, MultiscaleNetwork, PreparedInputs};
use crate::parallel::ExecMode;

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub equation: f64,
    pub initial: f64,
    pub boundary: f64,
    pub data: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            equation: 1.0,
            initial: 100.0,
            boundary: 100.0,
            data: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.equation, self.initial, self.boundary, self.data];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("loss weights must be finite and nonnegative".into());
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err("at least one loss weight must be positive".into());
        }
        Ok(())
    }
}

/// Per-term mean squared residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub equation: f64,
    pub initial: f64,
    pub boundary: f64,
    pub data: f64,
}

impl LossBreakdown {
    pub fn compose(w: &LossWeights, equation: f64, initial: f64, boundary: f64, data: f64) -> Self {
        LossBreakdown {
            total: w.equation * equation + w.initial * initial + w.boundary * boundary + w.data * data,
            equation,
            initial,
            boundary,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Equation,
    Initial,
    Boundary,
    Data,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::Equation => "equation",
            Term::Initial => "initial",
            Term::Boundary => "boundary",
            Term::Data => "data",
        }
    }

    pub fn weight(self, w: &LossWeights) -> f64 {
        match self {
            Term::Equation => w.equation,
            Term::Initial => w.initial,
            Term::Boundary => w.boundary,
            Term::Data => w.data,
        }
    }
}

pub struct InteriorSet {
    pub prep: PreparedInputs,
    pub sources: Vec<SourceTerms>,
}

pub struct BoundarySet {
    pub prep: PreparedInputs,
    pub normals: Vec<Vec<f64>>,
    pub kinds: Vec<Vec<BoundaryKind>>,
    pub targets: Vec<ExactFields<f64>>,
}

/// Field-value supervision (initial conditions or interior data).
pub struct ValueSet {
    pub prep: PreparedInputs,
    pub targets: Vec<ExactFields<f64>>,
    pub velocity: Vec<bool>,
    pub magnetic: Vec<bool>,
}

/// Everything the loss needs besides the parameters.
pub struct Problem {
    pub formulation: Formulation,
    pub dim: usize,
    pub unsteady: bool,
    pub phys: PhysParams,
    pub interior: Option<InteriorSet>,
    pub boundary: Option<BoundarySet>,
    pub initial: Option<ValueSet>,
    pub data: Option<ValueSet>,
}

fn batch_targets(batch: &SampleBatch, d: usize) -> Result<Vec<ExactFields<f64>>, TrainError> {
    if batch.target_names != field_names(d) {
        return Err(TrainError::Invalid(format!(
            "{:?} batch targets must be {:?}, got {:?}",
            batch.role,
            field_names(d),
            batch.target_names
        )));
    }
    Ok((0..batch.len()).map(|i| ExactFields::from_flat(d, batch.target(i))).collect())
}

impl Problem {
    pub fn new(formulation: Formulation, dim: usize, unsteady: bool, phys: PhysParams) -> Self {
        Problem {
            formulation,
            dim,
            unsteady,
            phys,
            interior: None,
            boundary: None,
            initial: None,
            data: None,
        }
    }

    fn check_points(&self, points: &[f64], n: usize) -> Result<(), TrainError> {
        let k = self.dim + usize::from(self.unsteady);
        if points.len() != n * k {
            return Err(TrainError::Invalid(format!("expected {n} points of dimension {k}")));
        }
        Ok(())
    }

    pub fn set_interior(&mut self, net: &MultiscaleNetwork, points: &[f64], sources: Vec<SourceTerms>) -> Result<(), TrainError> {
        self.check_points(points, sources.len())?;
        let layout = self.formulation.interior_layout(self.dim, self.unsteady);
        self.interior = Some(InteriorSet {
            prep: net.prepare(layout, points),
            sources,
        });
        Ok(())
    }

    /// `face_kinds[f]` lists the conditions imposed on face `f`; a kind is
    /// applied at a point when the point's mask flag for its field is set.
    pub fn set_boundary(&mut self, net: &MultiscaleNetwork, batch: &SampleBatch, face_kinds: &[Vec<BoundaryKind>]) -> Result<(), TrainError> {
        let targets = batch_targets(batch, self.dim)?;
        let mut order = 0;
        let mut kinds = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let list = face_kinds.get(batch.faces[i]).ok_or_else(|| {
                TrainError::Invalid(format!("no boundary conditions for face {}", batch.faces[i]))
            })?;
            let active: Vec<BoundaryKind> = list
                .iter()
                .copied()
                .filter(|k| match k.group() {
                    FieldGroup::Velocity => batch.velocity[i],
                    FieldGroup::Magnetic => batch.magnetic[i],
                    FieldGroup::Both => batch.velocity[i] || batch.magnetic[i],
                })
                .collect();
            for k in &active {
                k.check(self.formulation).map_err(TrainError::Invalid)?;
                order = order.max(k.order(self.formulation));
            }
            kinds.push(active);
        }
        let keep: Vec<usize> = (0..batch.len()).filter(|&i| !kinds[i].is_empty()).collect();
        let k = batch.input_dim();
        let points: Vec<f64> = keep.iter().flat_map(|&i| batch.point(i).to_vec()).collect();
        let layout = Formulation::spatial_layout(self.dim, self.unsteady, order);
        self.boundary = Some(BoundarySet {
            prep: net.prepare(layout, &points),
            normals: keep.iter().map(|&i| batch.normal(i).to_vec()).collect(),
            kinds: keep.iter().map(|&i| kinds[i].clone()).collect(),
            targets: keep.iter().map(|&i| targets[i].clone()).collect(),
        });
        debug_assert_eq!(points.len(), keep.len() * k);
        Ok(())
    }

    fn value_set(&self, net: &MultiscaleNetwork, batch: &SampleBatch) -> Result<ValueSet, TrainError> {
        let targets = batch_targets(batch, self.dim)?;
        self.check_points(&batch.points, batch.len())?;
        let layout = Formulation::spatial_layout(self.dim, self.unsteady, self.formulation.value_order());
        Ok(ValueSet {
            prep: net.prepare(layout, &batch.points),
            targets,
            velocity: batch.velocity.clone(),
            magnetic: batch.magnetic.clone(),
        })
    }

    pub fn set_initial(&mut self, net: &MultiscaleNetwork, batch: &SampleBatch) -> Result<(), TrainError> {
        self.initial = Some(self.value_set(net, batch)?);
        Ok(())
    }

    pub fn set_data(&mut self, net: &MultiscaleNetwork, batch: &SampleBatch) -> Result<(), TrainError> {
        self.data = Some(self.value_set(net, batch)?);
        Ok(())
    }

    fn view<'a, 't>(&self, out: &'a [Jet<Var<'t>>]) -> Result<FieldView<'a, Var<'t>>, AdError> {
        FieldView::new(out, self.formulation, self.dim, self.unsteady)
    }
}

fn sum_squares<'t>(zero: Var<'t>, v: &[Var<'t>]) -> Var<'t> {
    v.iter().fold(zero, |acc, x| acc + *x * *x)
}

struct InteriorLoss<'a>(&'a Problem, &'a InteriorSet);

impl BatchLoss for InteriorLoss<'_> {
    fn point_loss<'t>(&self, i: usize, out: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> {
        let view = self.0.view(out)?;
        Ok(interior_residual(&view, &self.0.phys, &self.1.sources[i])?.sum_squares())
    }
}

struct BoundaryLoss<'a>(&'a Problem, &'a BoundarySet);

impl BatchLoss for BoundaryLoss<'_> {
    fn point_loss<'t>(&self, i: usize, out: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> {
        let view = self.0.view(out)?;
        let mut acc = view.zero();
        for &k in &self.1.kinds[i] {
            let r = boundary_residual(&view, k, &self.1.normals[i], &self.1.targets[i], &self.0.phys)?;
            acc = acc + sum_squares(view.zero(), &r);
        }
        Ok(acc)
    }
}

struct ValueLoss<'a>(&'a Problem, &'a ValueSet);

impl BatchLoss for ValueLoss<'_> {
    fn point_loss<'t>(&self, i: usize, out: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> {
        let view = self.0.view(out)?;
        let r = value_residual(&view, &self.1.targets[i], self.1.velocity[i], self.1.magnetic[i])?;
        Ok(sum_squares(view.zero(), &r))
    }
}

impl Problem {
    fn term(&self, t: Term) -> Option<(&PreparedInputs, Box<dyn BatchLoss + '_>)> {
        match t {
            Term::Equation => self.interior.as_ref().map(|s| (&s.prep, Box::new(InteriorLoss(self, s)) as Box<dyn BatchLoss>)),
            Term::Boundary => self.boundary.as_ref().map(|s| (&s.prep, Box::new(BoundaryLoss(self, s)) as Box<dyn BatchLoss>)),
            Term::Initial => self.initial.as_ref().map(|s| (&s.prep, Box::new(ValueLoss(self, s)) as Box<dyn BatchLoss>)),
            Term::Data => self.data.as_ref().map(|s| (&s.prep, Box::new(ValueLoss(self, s)) as Box<dyn BatchLoss>)),
        }
    }

    /// Mean squared residual of one term and the gradient of
    /// `scale * mean`. `None` when the term has no point set.
    pub fn term_loss(
        &self,
        net: &MultiscaleNetwork,
        params: &[f64],
        t: Term,
        scale: f64,
        mode: ExecMode,
    ) -> Result<Option<(f64, Vec<f64>)>, TrainError> {
        let Some((prep, loss)) = self.term(t) else {
            return Ok(None);
        };
        if prep.is_empty() {
            return Err(TrainError::EmptyBatch(t.name()));
        }
        let n = prep.len() as f64;
        let (sum, grad) = net.loss_and_gradient(params, prep, loss.as_ref(), scale / n, mode)?;
        Ok(Some((sum / n, grad)))
    }
}

pub const TERMS: [Term; 4] = [Term::Equation, Term::Initial, Term::Boundary, Term::Data];

/// Weighted composite loss and its parameter gradient.
pub fn assemble_loss(
    net: &MultiscaleNetwork,
    params: &[f64],
    problem: &Problem,
    weights: &LossWeights,
    mode: ExecMode,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    let mut grad = vec![0.0; params.len()];
    let mut values = [0.0; 4];
    for (slot, t) in TERMS.into_iter().enumerate() {
        let w = t.weight(weights);
        if w == 0.0 {
            continue;
        }
        if let Some((v, g)) = problem.term_loss(net, params, t, w, mode)? {
            values[slot] = v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
    }
    let b = LossBreakdown::compose(weights, values[0], values[1], values[2], values[3]);
    if !b.total.is_finite() {
        return Err(TrainError::NonFinite("loss".into()));
    }
    Ok((b, grad))
}
