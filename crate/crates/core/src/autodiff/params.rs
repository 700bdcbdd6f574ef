use std::sync::Arc;

use super::tape::{Tape, Var};
use super::AdError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Weight,
    Bias,
}

/// One contiguous matrix or bias vector inside the flat parameter vector.
/// Weights are stored row-major with shape `rows x cols` (out x in).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub group: String,
    pub kind: BlockKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Maps (layer group, weight/bias, index) to flat offsets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn push(&mut self, group: impl Into<String>, kind: BlockKind, rows: usize, cols: usize) -> usize {
        self.blocks.push(ParamBlock {
            group: group.into(),
            kind,
            rows,
            cols,
            offset: self.total,
        });
        self.total += rows * cols;
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Flat offset of entry `(row, col)` of block `b`.
    pub fn offset(&self, b: usize, row: usize, col: usize) -> usize {
        let blk = &self.blocks[b];
        assert!(row < blk.rows && col < blk.cols, "index outside block");
        blk.offset + row * blk.cols + col
    }

    /// Distinct group names in layout order.
    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for b in &self.blocks {
            if out.last() != Some(&b.group.as_str()) {
                out.push(&b.group);
            }
        }
        out
    }
}

/// Flat trainable parameters together with their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ParameterVector {
    pub fn new(layout: Arc<ParamLayout>, values: Vec<f64>) -> Self {
        assert_eq!(layout.len(), values.len(), "parameter count mismatch");
        ParameterVector { values, layout }
    }

    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let n = layout.len();
        Self::new(layout, vec![0.0; n])
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self::new(self.layout.clone(), values)
    }

    /// Per-block copies in layout order.
    pub fn to_blocks(&self) -> Vec<Vec<f64>> {
        self.layout
            .blocks()
            .iter()
            .map(|b| self.values[b.range()].to_vec())
            .collect()
    }

    pub fn from_blocks(layout: Arc<ParamLayout>, blocks: &[Vec<f64>]) -> Self {
        assert_eq!(layout.blocks().len(), blocks.len(), "block count mismatch");
        let mut values = Vec::with_capacity(layout.len());
        for (b, v) in layout.blocks().iter().zip(blocks) {
            assert_eq!(b.len(), v.len(), "block {} length mismatch", b.group);
            values.extend_from_slice(v);
        }
        Self::new(layout, values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Gradient of a scalar loss with respect to every parameter.
///
/// `loss_fn` receives the parameters as tape variables and may build jets
/// over them, so losses containing input derivatives of a network are
/// differentiated exactly (forward-over-reverse).
pub fn parameter_gradient<F>(params: &ParameterVector, loss_fn: F) -> Result<ParameterVector, AdError>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Result<Var<'t>, AdError>,
{
    if !params.is_finite() {
        let bad = params.values.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(AdError::NonFinite { record: bad });
    }
    let tape = Tape::with_capacity(params.len() * 4);
    let vars = tape.vars(params.values());
    let loss = loss_fn(&vars)?;
    let grad = tape.gradient(loss, &vars)?;
    Ok(params.with_values(grad))
}
