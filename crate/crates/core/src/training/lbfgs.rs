//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_evals: usize,
    /// Converged when the largest gradient entry falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 50,
            c1: 1e-4,
            c2: 0.9,
            max_evals: 25,
            grad_tol: 1e-9,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.history == 0 {
            return Err("lbfgs history must be at least 1".into());
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(format!("need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}", self.c1, self.c2));
        }
        if self.max_evals == 0 {
            return Err("lbfgs max_evals must be at least 1".into());
        }
        if !(self.grad_tol >= 0.0) {
            return Err("grad_tol must be nonnegative".into());
        }
        Ok(())
    }
}

/// Objective value and gradient, plus whatever the caller wants carried
/// along with an accepted point.
#[derive(Clone, Debug)]
pub struct Evaluation<X> {
    pub value: f64,
    pub grad: Vec<f64>,
    pub extra: X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Moved,
    /// Gradient below tolerance; nothing changed.
    Converged,
    /// Neither the quasi-Newton nor the steepest-descent search found a
    /// lower value; nothing changed.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepInfo {
    pub outcome: StepOutcome,
    pub evaluations: usize,
    /// The step came from the steepest-descent fallback.
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct LbfgsState {
    pub config: LbfgsConfig,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    pub iterations: usize,
    pub fallbacks: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

struct Probe<X> {
    a: f64,
    f: f64,
    slope: f64,
    eval: Option<Evaluation<X>>,
}

/// Minimiser of the cubic through two probes, safeguarded into the inner
/// 80% of the bracket; bisection when the cubic is degenerate.
fn interpolate<X>(lo: &Probe<X>, hi: &Probe<X>) -> f64 {
    let (a0, a1) = (lo.a, hi.a);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a0 - a1);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a0 + a1);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let a = a1 - (a1 - a0) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (l, h) = (a0.min(a1), a0.max(a1));
    let w = h - l;
    if a.is_finite() {
        a.clamp(l + 0.1 * w, h - 0.1 * w)
    } else {
        mid
    }
}

impl LbfgsState {
    pub fn new(config: LbfgsConfig) -> Self {
        LbfgsState {
            config,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
            iterations: 0,
            fallbacks: 0,
        }
    }

    pub fn history_len(&self) -> usize {
        self.s.len()
    }

    pub fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            q.iter_mut().zip(&self.y[i]).for_each(|(qj, yj)| *qj -= alpha[i] * yj);
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            q.iter_mut().zip(&self.s[i]).for_each(|(qj, sj)| *qj += (alpha[i] - beta) * sj);
        }
        q
    }

    fn remember(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if !(sy > f64::EPSILON * yy) {
            return;
        }
        if self.s.len() == self.config.history {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        self.rho.push_back(1.0 / sy);
    }

    /// Strong-Wolfe search along `d`. Returns the accepted evaluation, or
    /// the best sufficient-decrease point seen, or `None`.
    fn line_search<X: Clone, E, F>(
        &self,
        x: &[f64],
        cur: &Evaluation<X>,
        d: &[f64],
        a0: f64,
        f: &mut F,
        evals: &mut usize,
    ) -> Result<Option<(f64, Evaluation<X>)>, E>
    where
        F: FnMut(&[f64]) -> Result<Evaluation<X>, E>,
    {
        let (c1, c2) = (self.config.c1, self.config.c2);
        let f0 = cur.value;
        let s0 = dot(&cur.grad, d);
        let armijo = |a: f64, v: f64| v <= f0 + c1 * a * s0;
        let mut probe = |a: f64, evals: &mut usize| -> Result<Probe<X>, E> {
            *evals += 1;
            let e = f(&axpy(x, a, d))?;
            let slope = dot(&e.grad, d);
            let ok = e.value.is_finite() && slope.is_finite();
            Ok(Probe {
                a,
                f: if ok { e.value } else { f64::INFINITY },
                slope: if ok { slope } else { f64::INFINITY },
                eval: Some(e),
            })
        };
        let mut prev = Probe::<X> {
            a: 0.0,
            f: f0,
            slope: s0,
            eval: None,
        };
        let mut a = a0;
        let budget = self.config.max_evals;
        let (mut lo, mut hi);
        let mut first = true;
        loop {
            if *evals >= budget {
                return Ok(None);
            }
            let p = probe(a, evals)?;
            if !armijo(a, p.f) || (!first && p.f >= prev.f) {
                lo = prev;
                hi = p;
                break;
            }
            if p.slope.abs() <= -c2 * s0 {
                return Ok(Some((p.a, p.eval.expect("probe evaluation"))));
            }
            if p.slope >= 0.0 {
                lo = p;
                hi = prev;
                break;
            }
            prev = p;
            first = false;
            a *= 2.0;
        }
        while *evals < budget {
            if (hi.a - lo.a).abs() <= 1e-16 * lo.a.abs().max(1.0) {
                break;
            }
            let a = if hi.f.is_finite() { interpolate(&lo, &hi) } else { 0.5 * (lo.a + hi.a) };
            let p = probe(a, evals)?;
            if !armijo(a, p.f) || p.f >= lo.f {
                hi = p;
            } else {
                if p.slope.abs() <= -c2 * s0 {
                    return Ok(Some((p.a, p.eval.expect("probe evaluation"))));
                }
                if p.slope * (hi.a - lo.a) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        Ok(match lo.eval {
            Some(e) if lo.a > 0.0 && lo.f < f0 => Some((lo.a, e)),
            _ => None,
        })
    }

    /// One iteration from `x` with current evaluation `cur`; both are
    /// replaced by the accepted point. The value never increases.
    pub fn step<X: Clone, E, F>(&mut self, x: &mut Vec<f64>, cur: &mut Evaluation<X>, f: &mut F) -> Result<StepInfo, E>
    where
        F: FnMut(&[f64]) -> Result<Evaluation<X>, E>,
    {
        let gmax = cur.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= self.config.grad_tol {
            return Ok(StepInfo {
                outcome: StepOutcome::Converged,
                evaluations: 0,
                fallback: false,
            });
        }
        let steepest_a0 = (1.0 / cur.grad.iter().map(|v| v.abs()).sum::<f64>()).min(1.0);
        let mut evals = 0;
        let mut d = self.direction(&cur.grad);
        if !(dot(&d, &cur.grad) < 0.0) {
            self.reset();
            d = self.direction(&cur.grad);
        }
        let a0 = if self.s.is_empty() { steepest_a0 } else { 1.0 };
        let mut found = self.line_search(x, cur, &d, a0, f, &mut evals)?;
        let mut fallback = false;
        if found.is_none() && !self.s.is_empty() {
            fallback = true;
            self.fallbacks += 1;
            self.reset();
            d = self.direction(&cur.grad);
            evals = 0;
            found = self.line_search(x, cur, &d, steepest_a0, f, &mut evals)?;
        }
        self.iterations += 1;
        let Some((a, e)) = found else {
            return Ok(StepInfo {
                outcome: StepOutcome::Stalled,
                evaluations: evals,
                fallback,
            });
        };
        let s: Vec<f64> = d.iter().map(|v| a * v).collect();
        let y: Vec<f64> = e.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        *x = axpy(x, a, &d);
        *cur = e;
        self.remember(s, y);
        Ok(StepInfo {
            outcome: StepOutcome::Moved,
            evaluations: evals,
            fallback,
        })
    }
}
