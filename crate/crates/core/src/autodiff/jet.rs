use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

use super::scalar::{derivative_ladder, Elementary, Scalar};

/// Maximum number of input axes (x, y, z, t).
pub const MAX_AXES: usize = 4;
/// Highest derivative order carried by a jet.
pub const MAX_ORDER: usize = 3;

/// A multi-index over the input axes in fixed (x, y, z, t) order.
pub type MultiIndex = [u8; MAX_AXES];

pub fn multi_index_degree(a: &MultiIndex) -> usize {
    a.iter().map(|&v| v as usize).sum()
}

fn multi_index_factorial(a: &MultiIndex) -> f64 {
    a.iter()
        .map(|&v| (1..=v as u32).map(f64::from).product::<f64>())
        .product()
}

/// Monomial set of a truncated multivariate Taylor polynomial.
///
/// The set is downward closed, so arithmetic modulo the complementary
/// monomial ideal is exact on every retained coefficient. Monomials are
/// ordered by degree, then lexicographically in axis order.
pub struct JetLayout {
    nvars: usize,
    monos: Vec<MultiIndex>,
    degree: Vec<u8>,
    factorial: Vec<f64>,
    max_degree: usize,
    lookup: HashMap<MultiIndex, usize>,
    /// `(i, j, k)` with `mono[i] + mono[j] == mono[k]`.
    products: Vec<(u16, u16, u16)>,
}

impl fmt::Debug for JetLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetLayout")
            .field("nvars", &self.nvars)
            .field("len", &self.monos.len())
            .field("max_degree", &self.max_degree)
            .finish()
    }
}

type LayoutKey = (usize, Vec<MultiIndex>);

fn registry() -> &'static Mutex<HashMap<LayoutKey, &'static JetLayout>> {
    static REG: OnceLock<Mutex<HashMap<LayoutKey, &'static JetLayout>>> = OnceLock::new();
    REG.get_or_init(|| Mutex::new(HashMap::new()))
}

fn enumerate(nvars: usize, max_degree: usize) -> Vec<MultiIndex> {
    let mut all = Vec::new();
    let caps: Vec<usize> = (0..MAX_AXES)
        .map(|a| if a < nvars { max_degree } else { 0 })
        .collect();
    for a0 in 0..=caps[0] {
        for a1 in 0..=caps[1] {
            for a2 in 0..=caps[2] {
                for a3 in 0..=caps[3] {
                    let m = [a0 as u8, a1 as u8, a2 as u8, a3 as u8];
                    if multi_index_degree(&m) <= max_degree {
                        all.push(m);
                    }
                }
            }
        }
    }
    all.sort_by(|a, b| {
        multi_index_degree(a)
            .cmp(&multi_index_degree(b))
            .then_with(|| b.cmp(a))
    });
    all
}

impl JetLayout {
    /// Interns the layout made of all monomials (over `nvars` axes, total
    /// degree <= 3) accepted by `keep`. The predicate must describe a
    /// downward-closed set.
    pub fn from_predicate(nvars: usize, keep: impl Fn(&MultiIndex) -> bool) -> &'static JetLayout {
        assert!((1..=MAX_AXES).contains(&nvars), "1..=4 axes supported");
        let monos: Vec<MultiIndex> = enumerate(nvars, MAX_ORDER)
            .into_iter()
            .filter(|m| multi_index_degree(m) == 0 || keep(m))
            .collect();
        for m in &monos {
            for ax in 0..MAX_AXES {
                if m[ax] > 0 {
                    let mut lower = *m;
                    lower[ax] -= 1;
                    assert!(monos.contains(&lower), "jet layout must be downward closed");
                }
            }
        }
        let key = (nvars, monos.clone());
        let mut reg = registry().lock().expect("layout registry poisoned");
        if let Some(l) = reg.get(&key) {
            return l;
        }
        let layout: &'static JetLayout = Box::leak(Box::new(JetLayout::build(nvars, monos)));
        reg.insert(key, layout);
        layout
    }

    /// All monomials of total degree <= `order` in `nvars` axes.
    pub fn total_order(nvars: usize, order: usize) -> &'static JetLayout {
        Self::from_predicate(nvars, |m| multi_index_degree(m) <= order)
    }

    /// Monomials of total degree <= `order` seeded only along `directions`.
    pub fn directional(nvars: usize, order: usize, directions: &[usize]) -> &'static JetLayout {
        Self::from_predicate(nvars, |m| {
            multi_index_degree(m) <= order
                && (0..MAX_AXES).all(|a| m[a] == 0 || directions.contains(&a))
        })
    }

    /// Space-time layout: spatial degree <= `space_order`, time degree
    /// <= `time_order`, and monomials mixing time with space only up to
    /// spatial degree `mixed_order`. The time axis, when present, is the
    /// last input axis.
    pub fn spacetime(
        n_space: usize,
        unsteady: bool,
        space_order: usize,
        time_order: usize,
        mixed_order: usize,
    ) -> &'static JetLayout {
        let nvars = n_space + usize::from(unsteady);
        Self::from_predicate(nvars, |m| {
            let space: usize = m[..n_space].iter().map(|&v| v as usize).sum();
            let time = if unsteady { m[n_space] as usize } else { 0 };
            if time == 0 {
                space <= space_order
            } else {
                time <= time_order && space <= mixed_order && space + time <= MAX_ORDER
            }
        })
    }

    fn build(nvars: usize, monos: Vec<MultiIndex>) -> JetLayout {
        let lookup: HashMap<MultiIndex, usize> =
            monos.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        let degree: Vec<u8> = monos.iter().map(|m| multi_index_degree(m) as u8).collect();
        let factorial = monos.iter().map(multi_index_factorial).collect();
        let max_degree = degree.iter().copied().max().unwrap_or(0) as usize;
        let mut products = Vec::new();
        for (i, a) in monos.iter().enumerate() {
            for (j, b) in monos.iter().enumerate() {
                let mut s = [0u8; MAX_AXES];
                for ax in 0..MAX_AXES {
                    s[ax] = a[ax] + b[ax];
                }
                if let Some(&k) = lookup.get(&s) {
                    products.push((i as u16, j as u16, k as u16));
                }
            }
        }
        JetLayout {
            nvars,
            monos,
            degree,
            factorial,
            max_degree,
            lookup,
            products,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of retained coefficients.
    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monos
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.degree[i] as usize
    }

    /// `alpha!` for the monomial at `i`; derivative = factorial * coefficient.
    pub fn factorial(&self, i: usize) -> f64 {
        self.factorial[i]
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.lookup.contains_key(alpha)
    }

    /// Index of the first-order monomial along `axis`, if seeded.
    pub fn unit(&self, axis: usize) -> Option<usize> {
        let mut m = [0u8; MAX_AXES];
        m[axis] = 1;
        self.index_of(&m)
    }

    pub(crate) fn products(&self) -> &[(u16, u16, u16)] {
        &self.products
    }
}

/// Truncated multivariate Taylor polynomial: `c[i]` is the Taylor
/// coefficient of `layout.monomials()[i]`, i.e. the partial derivative
/// divided by `alpha!`.
#[derive(Clone)]
pub struct Jet<T> {
    layout: &'static JetLayout,
    c: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.c.iter()).finish()
    }
}

impl<T: Scalar> Jet<T> {
    pub fn constant(layout: &'static JetLayout, v: T) -> Self {
        let zero = v.lift(0.0);
        let mut c = vec![zero; layout.len()];
        c[0] = v;
        Jet { layout, c }
    }

    /// Input coordinate `value` along `axis`; seeded when the layout has that axis.
    pub fn variable(layout: &'static JetLayout, axis: usize, value: T) -> Self {
        let mut j = Self::constant(layout, value);
        if let Some(i) = layout.unit(axis) {
            j.c[i] = j.c[0].lift(1.0);
        }
        j
    }

    pub fn from_coefficients(layout: &'static JetLayout, c: Vec<T>) -> Self {
        assert_eq!(c.len(), layout.len(), "coefficient count must match layout");
        Jet { layout, c }
    }

    pub fn layout(&self) -> &'static JetLayout {
        self.layout
    }

    pub fn coefficients(&self) -> &[T] {
        &self.c
    }

    pub fn into_coefficients(self) -> Vec<T> {
        self.c
    }

    pub fn primal(&self) -> &T {
        &self.c[0]
    }

    /// Partial derivative for `alpha`, or `None` when outside the layout.
    pub fn derivative(&self, alpha: &MultiIndex) -> Option<T> {
        self.layout
            .index_of(alpha)
            .map(|i| self.c[i].clone() * self.layout.factorial(i))
    }

    pub fn scale(mut self, s: &T) -> Self {
        for v in &mut self.c {
            *v = v.clone() * s.clone();
        }
        self
    }

    /// `self += other * s`
    pub fn add_scaled(&mut self, other: &Jet<T>, s: &T) {
        self.check(other);
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a = a.clone() + b.clone() * s.clone();
        }
    }

    fn check(&self, other: &Jet<T>) {
        assert!(
            std::ptr::eq(self.layout, other.layout),
            "jets from different layouts cannot be combined"
        );
    }

    fn mul_jets(&self, other: &Jet<T>) -> Jet<T> {
        self.check(other);
        let zero = self.c[0].lift(0.0);
        let mut c = vec![zero; self.layout.len()];
        for &(i, j, k) in self.layout.products() {
            let k = k as usize;
            c[k] = c[k].clone() + self.c[i as usize].clone() * other.c[j as usize].clone();
        }
        Jet {
            layout: self.layout,
            c,
        }
    }

    /// `f(self)` through the truncated Taylor series of `f` about the primal.
    pub fn compose(&self, f: Elementary) -> Jet<T> {
        let k = self.layout.max_degree();
        let d = derivative_ladder(f, &self.c[0], k);
        let mut h = self.clone();
        h.c[0] = h.c[0].lift(0.0);
        let mut out = Jet::constant(self.layout, d[0].clone());
        let mut power = h.clone();
        let mut inv_fact = 1.0;
        for (n, dn) in d.iter().enumerate().skip(1) {
            inv_fact /= n as f64;
            let coef = dn.clone() * inv_fact;
            out.add_scaled(&power, &coef);
            if n < k {
                power = power.mul_jets(&h);
            }
        }
        out
    }
}

impl<T: Scalar> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(mut self, rhs: Jet<T>) -> Jet<T> {
        self.check(&rhs);
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a = a.clone() + b;
        }
        self
    }
}

impl<T: Scalar> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(mut self, rhs: Jet<T>) -> Jet<T> {
        self.check(&rhs);
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a = a.clone() - b;
        }
        self
    }
}

impl<T: Scalar> Mul for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Jet<T>) -> Jet<T> {
        self.mul_jets(&rhs)
    }
}

impl<T: Scalar> Div for Jet<T> {
    type Output = Jet<T>;
    fn div(self, rhs: Jet<T>) -> Jet<T> {
        self.mul_jets(&rhs.compose(Elementary::Recip))
    }
}

impl<T: Scalar> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(mut self) -> Jet<T> {
        for a in &mut self.c {
            *a = -a.clone();
        }
        self
    }
}

impl<T: Scalar> Add<f64> for Jet<T> {
    type Output = Jet<T>;
    fn add(mut self, rhs: f64) -> Jet<T> {
        self.c[0] = self.c[0].clone() + rhs;
        self
    }
}

impl<T: Scalar> Sub<f64> for Jet<T> {
    type Output = Jet<T>;
    fn sub(mut self, rhs: f64) -> Jet<T> {
        self.c[0] = self.c[0].clone() - rhs;
        self
    }
}

impl<T: Scalar> Mul<f64> for Jet<T> {
    type Output = Jet<T>;
    fn mul(mut self, rhs: f64) -> Jet<T> {
        for a in &mut self.c {
            *a = a.clone() * rhs;
        }
        self
    }
}

impl<T: Scalar> Div<f64> for Jet<T> {
    type Output = Jet<T>;
    fn div(self, rhs: f64) -> Jet<T> {
        self * (1.0 / rhs)
    }
}

impl<T: Scalar> Scalar for Jet<T> {
    fn value(&self) -> f64 {
        self.c[0].value()
    }
    fn lift(&self, c: f64) -> Self {
        Jet::constant(self.layout, self.c[0].lift(c))
    }
    fn tanh(&self) -> Self {
        self.compose(Elementary::Tanh)
    }
    fn sin(&self) -> Self {
        self.compose(Elementary::Sin)
    }
    fn cos(&self) -> Self {
        self.compose(Elementary::Cos)
    }
    fn exp(&self) -> Self {
        self.compose(Elementary::Exp)
    }
    fn sinh(&self) -> Self {
        self.compose(Elementary::Sinh)
    }
    fn cosh(&self) -> Self {
        self.compose(Elementary::Cosh)
    }
    fn recip(&self) -> Self {
        self.compose(Elementary::Recip)
    }
    fn powi(&self, n: i32) -> Self {
        self.compose(Elementary::Powi(n))
    }
}
