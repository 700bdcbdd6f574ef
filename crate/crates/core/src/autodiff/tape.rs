use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::{derivative_ladder, Elementary, Scalar};
use super::AdError;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Record {
    parents: [u32; 2],
    partials: [f64; 2],
    value: f64,
}

/// Wengert list for reverse accumulation of one scalar output.
///
/// Each record stores its local partials at recording time, so the reverse
/// sweep is a single backwards pass of multiply-adds.
#[derive(Default)]
pub struct Tape {
    records: RefCell<Vec<Record>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} records)", self.records.borrow().len())
    }
}

/// A real number recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.val)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            records: RefCell::new(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every record; previously issued variables become invalid.
    pub fn clear(&mut self) {
        self.records.get_mut().clear();
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [NO_PARENT; 2], [0.0; 2])
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut r = self.records.borrow_mut();
        let idx = r.len() as u32;
        r.push(Record {
            parents,
            partials,
            value,
        });
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    /// Reverse sweep from `output` seeded with `seed`; returns the adjoint of
    /// every record (index by [`Var::index`]).
    pub fn adjoints(&self, output: Var<'_>, seed: f64) -> Result<Vec<f64>, AdError> {
        let records = self.records.borrow();
        let n = output.idx as usize + 1;
        if let Some(bad) = records[..n]
            .iter()
            .position(|r| !r.value.is_finite() || !r.partials.iter().all(|p| p.is_finite()))
        {
            return Err(AdError::NonFinite { record: bad });
        }
        let mut adj = vec![0.0; records.len()];
        adj[output.idx as usize] = seed;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let r = &records[i];
            for k in 0..2 {
                let p = r.parents[k];
                if p != NO_PARENT {
                    adj[p as usize] += a * r.partials[k];
                }
            }
        }
        Ok(adj)
    }

    /// Gradient of `output` with respect to `inputs`.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Result<Vec<f64>, AdError> {
        let adj = self.adjoints(output, 1.0)?;
        Ok(inputs.iter().map(|v| adj[v.idx as usize]).collect())
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, value: f64, d: f64) -> Var<'t> {
        self.tape.push(value, [self.idx, NO_PARENT], [d, 0.0])
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
        self.tape.push(value, [self.idx, other.idx], [da, db])
    }

    fn elementary(self, f: Elementary) -> Var<'t> {
        let d = derivative_ladder(f, &self.val, 1);
        self.unary(d[0], d[1])
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self.val / rhs.val;
        self.binary(rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(&self) -> f64 {
        self.val
    }
    fn lift(&self, c: f64) -> Self {
        self.tape.var(c)
    }
    fn tanh(&self) -> Self {
        self.elementary(Elementary::Tanh)
    }
    fn sin(&self) -> Self {
        self.elementary(Elementary::Sin)
    }
    fn cos(&self) -> Self {
        self.elementary(Elementary::Cos)
    }
    fn exp(&self) -> Self {
        self.elementary(Elementary::Exp)
    }
    fn sinh(&self) -> Self {
        self.elementary(Elementary::Sinh)
    }
    fn cosh(&self) -> Self {
        self.elementary(Elementary::Cosh)
    }
    fn recip(&self) -> Self {
        self.elementary(Elementary::Recip)
    }
    fn powi(&self, n: i32) -> Self {
        self.elementary(Elementary::Powi(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_product() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let f = x * y + x.sin();
        let g = tape.gradient(f, &[x, y]).unwrap();
        assert!((g[0] - (-2.0 + 3f64.cos())).abs() < 1e-15);
        assert_eq!(g[1], 3.0);
    }

    #[test]
    fn non_finite_record_is_reported() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let y = x.recip();
        let z = y * 2.0;
        match tape.gradient(z, &[x]) {
            Err(AdError::NonFinite { record }) => assert_eq!(record, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
