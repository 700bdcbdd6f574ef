use super::jet::{Jet, JetLayout, MultiIndex, MAX_AXES, MAX_ORDER};
use super::scalar::Scalar;
use super::AdError;

/// Outputs of a map together with their input derivatives at one point.
#[derive(Clone, Debug)]
pub struct DerivativeBundle<T> {
    layout: &'static JetLayout,
    outputs: Vec<Jet<T>>,
}

impl<T: Scalar> DerivativeBundle<T> {
    pub fn new(outputs: Vec<Jet<T>>) -> Self {
        assert!(!outputs.is_empty(), "bundle needs at least one output");
        let layout = outputs[0].layout();
        assert!(
            outputs.iter().all(|o| std::ptr::eq(o.layout(), layout)),
            "bundle outputs must share a layout"
        );
        DerivativeBundle { layout, outputs }
    }

    pub fn layout(&self) -> &'static JetLayout {
        self.layout
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Jet<T>] {
        &self.outputs
    }

    pub fn order(&self) -> usize {
        self.layout.max_degree()
    }

    pub fn value(&self, output: usize) -> T {
        self.outputs[output].primal().clone()
    }

    /// Partial derivative `alpha` of `output`.
    pub fn derivative(&self, output: usize, alpha: &MultiIndex) -> Result<T, AdError> {
        self.outputs[output]
            .derivative(alpha)
            .ok_or(AdError::MissingDerivative { index: *alpha })
    }

    /// Fails on the first multi-index the layout does not carry.
    pub fn require(&self, alphas: impl IntoIterator<Item = MultiIndex>) -> Result<(), AdError> {
        for a in alphas {
            if !self.layout.contains(&a) {
                return Err(AdError::MissingDerivative { index: a });
            }
        }
        Ok(())
    }
}

/// Evaluates `f` on jets seeded at `point` along `directions` and returns
/// every derivative up to `order` (mixed ones included).
pub fn evaluate_with_input_derivatives<T, F>(
    f: F,
    point: &[T],
    order: usize,
    directions: &[usize],
) -> Result<DerivativeBundle<T>, AdError>
where
    T: Scalar,
    F: FnOnce(&[Jet<T>]) -> Result<Vec<Jet<T>>, AdError>,
{
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(AdError::UnsupportedOrder(order));
    }
    if point.is_empty() || point.len() > MAX_AXES {
        return Err(AdError::DimensionMismatch {
            expected: MAX_AXES,
            got: point.len(),
        });
    }
    if let Some(&bad) = directions.iter().find(|&&d| d >= point.len()) {
        return Err(AdError::DimensionMismatch {
            expected: point.len(),
            got: bad + 1,
        });
    }
    let layout = JetLayout::directional(point.len(), order, directions);
    let inputs: Vec<Jet<T>> = point
        .iter()
        .enumerate()
        .map(|(axis, v)| Jet::variable(layout, axis, v.clone()))
        .collect();
    let outputs = f(&inputs)?;
    if outputs.is_empty() {
        return Err(AdError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    Ok(DerivativeBundle::new(outputs))
}
