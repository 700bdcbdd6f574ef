//! Batched jet evaluation of the network.
//!
//! Activations of a chunk of points are stored as matrices with one row per
//! neuron and one column per (Taylor coefficient, point) pair,
//! coefficient-major. Dense layers act on every coefficient linearly, so a
//! layer is one GEMM plus a bias on the constant coefficients, and `tanh` is
//! a handful of vector operations along each row. The backward pass is written out
//! by hand; per-point losses are differentiated on a small tape over the
//! output coefficients only.

use crate::autodiff::{AdError, Jet, JetLayout, Scalar, Tape, Var};
use crate::parallel::{ordered_map, ranges, ExecMode};

use super::{Dense, MultiscaleNetwork};

/// Target number of matrix columns per chunk.
const CHUNK_COLS: usize = 384;
/// Chunks processed by one worker into one gradient buffer.
const CHUNKS_PER_GROUP: usize = 4;

fn chunk_points(layout: &JetLayout) -> usize {
    (CHUNK_COLS / layout.len()).max(1)
}

/// Embedded input jets of a fixed point set, cached because the embedding
/// matrices are frozen.
#[derive(Clone, Debug)]
pub struct PreparedInputs {
    layout: &'static JetLayout,
    n_points: usize,
    /// Points per chunk; chunk `k` starts at point `k * chunk`.
    chunk: usize,
    points: Vec<f64>,
    /// Per subnet, row-major `embed_dim x (n_points * C)`. Inside a chunk
    /// of `np` points column `c * np + q` holds coefficient `c` of point `q`.
    features: Vec<Vec<f64>>,
}

impl PreparedInputs {
    pub fn layout(&self) -> &'static JetLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// Row-major `n x input_dim` coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// A per-point scalar loss on the network output jets.
pub trait BatchLoss: Sync {
    fn point_loss<'t>(&self, index: usize, outputs: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError>;
}

impl<F> BatchLoss for F
where
    F: for<'t> Fn(usize, &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> + Sync,
{
    fn point_loss<'t>(&self, index: usize, outputs: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> {
        self(index, outputs)
    }
}

/// Network output jets for every point of a batch.
#[derive(Clone, Debug)]
pub struct BatchOutputs {
    layout: &'static JetLayout,
    n_out: usize,
    /// `[point][output][coefficient]`
    data: Vec<f64>,
}

impl BatchOutputs {
    pub fn len(&self) -> usize {
        self.data.len() / (self.n_out * self.layout.len())
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn jets(&self, p: usize) -> Vec<Jet<f64>> {
        let c = self.layout.len();
        let base = p * self.n_out * c;
        (0..self.n_out)
            .map(|o| {
                Jet::from_coefficients(self.layout, self.data[base + o * c..base + (o + 1) * c].to_vec())
            })
            .collect()
    }

    pub fn values(&self, p: usize) -> Vec<f64> {
        let c = self.layout.len();
        let base = p * self.n_out * c;
        (0..self.n_out).map(|o| self.data[base + o * c]).collect()
    }
}

#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    off: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    fn dense(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            off: 0,
            rs: cols,
            cs: 1,
        }
    }
}

/// `C <- alpha * A B + beta * C` with `A: m x k`, `B: k x n` and a dense
/// row-major `C` at `c_off` with row stride `rsc`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: &mut [f64], c_off: usize, rsc: usize) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |v: &View, r: usize, cl: usize| v.off + (r - 1) * v.rs + (cl - 1) * v.cs;
    if k > 0 {
        assert!(last(&a, m, k) < a.data.len(), "gemm: A out of bounds");
        assert!(last(&b, k, n) < b.data.len(), "gemm: B out of bounds");
    }
    assert!(c_off + (m - 1) * rsc + n - 1 < c.len(), "gemm: C out of bounds");
    // SAFETY: every element addressed through the given offsets and strides
    // was bounds-checked above, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            1,
        );
    }
}

#[derive(Default)]
struct Workspace {
    /// `[subnet][layer]` pre-activations (only kept for tanh layers).
    pre: Vec<Vec<Vec<f64>>>,
    /// `[subnet][layer]` layer outputs.
    act: Vec<Vec<Vec<f64>>>,
    out: Vec<f64>,
    out_bar: Vec<f64>,
    bar: Vec<f64>,
    bar_prev: Vec<f64>,
    scratch: Vec<f64>,
}

/// The jet product table of a layout, split by use in `tanh`.
struct TanhPlan {
    c: usize,
    max_degree: usize,
    /// Both factors non-constant.
    square: Vec<(usize, usize, usize)>,
    /// First factor of degree at least 2, second non-constant.
    cube: Vec<(usize, usize, usize)>,
    /// Second factor non-constant.
    linear: Vec<(usize, usize, usize)>,
}

fn axpy_product(dst: &mut [f64], a: &[f64], b: &[f64]) {
    for ((h, x), y) in dst.iter_mut().zip(a).zip(b) {
        *h += x * y;
    }
}

impl TanhPlan {
    fn new(layout: &JetLayout) -> Self {
        let mut plan = TanhPlan {
            c: layout.len(),
            max_degree: layout.max_degree(),
            square: Vec::new(),
            cube: Vec::new(),
            linear: Vec::new(),
        };
        for &(i, j, k) in layout.products() {
            let (i, j, k) = (i as usize, j as usize, k as usize);
            if layout.degree_of(j) == 0 {
                continue;
            }
            plan.linear.push((i, j, k));
            if layout.degree_of(i) > 0 {
                plan.square.push((i, j, k));
            }
            if layout.degree_of(i) >= 2 {
                plan.cube.push((i, j, k));
            }
        }
        plan
    }

    /// Squares and cubes of the non-constant parts of a row of `np` jets.
    fn powers(&self, z: &[f64], np: usize, h2: &mut [f64], h3: &mut [f64]) {
        h2.fill(0.0);
        h3.fill(0.0);
        let r = |i: usize| i * np..(i + 1) * np;
        if self.max_degree >= 2 {
            for &(i, j, k) in &self.square {
                axpy_product(&mut h2[r(k)], &z[r(i)], &z[r(j)]);
            }
        }
        if self.max_degree >= 3 {
            for &(i, j, k) in &self.cube {
                axpy_product(&mut h3[r(k)], &h2[r(i)], &z[r(j)]);
            }
        }
    }

    /// In-place `tanh` of a row of `np` jets stored coefficient-major.
    fn forward(&self, z: &mut [f64], np: usize, work: &mut Vec<f64>) {
        let c = self.c;
        if c == 1 {
            z.iter_mut().for_each(|v| *v = v.tanh());
            return;
        }
        work.resize(2 * c * np + 3 * np, 0.0);
        let (h2, rest) = work.split_at_mut(c * np);
        let (h3, d) = rest.split_at_mut(c * np);
        self.powers(z, np, h2, h3);
        let (d1, rest) = d.split_at_mut(np);
        let (d2, d3) = rest.split_at_mut(np);
        for q in 0..np {
            let y = z[q].tanh();
            let a = 1.0 - y * y;
            let b = -2.0 * y * a;
            z[q] = y;
            d1[q] = a;
            d2[q] = 0.5 * b;
            d3[q] = -2.0 * (a * a + y * b) / 6.0;
        }
        for i in 1..c {
            let zi = &mut z[i * np..(i + 1) * np];
            let (s, t) = (&h2[i * np..(i + 1) * np], &h3[i * np..(i + 1) * np]);
            for q in 0..np {
                zi[q] = d1[q] * zi[q] + d2[q] * s[q] + d3[q] * t[q];
            }
        }
    }

    /// Overwrites `ybar`, the adjoint of a `tanh` output row, with the
    /// adjoint of the pre-activation row `z`; `y0` holds the output primals.
    fn adjoint(&self, z: &[f64], y0: &[f64], ybar: &mut [f64], np: usize, work: &mut Vec<f64>) {
        let c = self.c;
        if c == 1 {
            for (b, y) in ybar.iter_mut().zip(y0) {
                *b *= 1.0 - y * y;
            }
            return;
        }
        work.resize(4 * c * np + 5 * np, 0.0);
        let (h2, rest) = work.split_at_mut(c * np);
        let (h3, rest) = rest.split_at_mut(c * np);
        let (g, rest) = rest.split_at_mut(c * np);
        let (hbar, d) = rest.split_at_mut(c * np);
        self.powers(z, np, h2, h3);
        let (d1, rest) = d.split_at_mut(np);
        let (d2, rest) = rest.split_at_mut(np);
        let (d3, rest) = rest.split_at_mut(np);
        let (d4, zbar0) = rest.split_at_mut(np);
        for q in 0..np {
            let y = y0[q];
            let a = 1.0 - y * y;
            let b = -2.0 * y * a;
            let e = -2.0 * (a * a + y * b);
            d1[q] = a;
            d2[q] = b;
            d3[q] = e;
            d4[q] = -2.0 * (3.0 * a * b + y * e);
            zbar0[q] = ybar[q] * a;
        }
        // d/dz0 of every output coefficient; linearisation dy = g * dh
        g[..np].copy_from_slice(d1);
        for i in 1..c {
            let o = i * np;
            for q in 0..np {
                let (zi, s, t) = (z[o + q], h2[o + q], h3[o + q]);
                zbar0[q] += ybar[o + q] * (d2[q] * zi + 0.5 * d3[q] * s + d4[q] / 6.0 * t);
                g[o + q] = d2[q] * zi + 0.5 * d3[q] * s;
            }
        }
        hbar.fill(0.0);
        for &(i, j, k) in &self.linear {
            axpy_product(&mut hbar[j * np..(j + 1) * np], &ybar[k * np..(k + 1) * np], &g[i * np..(i + 1) * np]);
        }
        ybar[..np].copy_from_slice(zbar0);
        ybar[np..c * np].copy_from_slice(&hbar[np..c * np]);
    }
}

impl PreparedInputs {
    /// Feature columns of subnet `i` for one whole chunk or one point.
    fn input_view(&self, i: usize, p0: usize, np: usize) -> View<'_> {
        let c = self.layout.len();
        let start = p0 / self.chunk * self.chunk;
        let chunk_np = self.chunk.min(self.n_points - start);
        let (off, cs) = if np == 1 && chunk_np > 1 {
            (start * c + (p0 - start), chunk_np)
        } else {
            assert!(p0 == start && np == chunk_np, "batch ranges must follow the chunking");
            (start * c, 1)
        };
        View {
            data: &self.features[i],
            off,
            rs: self.n_points * c,
            cs,
        }
    }
}

impl MultiscaleNetwork {
    /// Embeds `points` (row-major `n x input_dim`) as jets in `layout`.
    pub fn prepare(&self, layout: &'static JetLayout, points: &[f64]) -> PreparedInputs {
        let d = self.input_dim();
        assert_eq!(layout.nvars(), d, "layout axes must match the network input");
        assert_eq!(points.len() % d, 0, "points must be row-major n x input_dim");
        let n = points.len() / d;
        let c = layout.len();
        let chunk = chunk_points(layout);
        let mut features: Vec<Vec<f64>> = self
            .embeddings()
            .iter()
            .map(|e| vec![0.0; e.output_dim() * n * c])
            .collect();
        for p in 0..n {
            let x: Vec<Jet<f64>> = (0..d)
                .map(|a| Jet::variable(layout, a, points[p * d + a]))
                .collect();
            let start = p / chunk * chunk;
            let np = chunk.min(n - start);
            for (emb, feat) in self.embeddings().iter().zip(features.iter_mut()) {
                for (r, j) in emb.embed(&x).into_iter().enumerate() {
                    let base = r * n * c + start * c + (p - start);
                    for (ci, v) in j.coefficients().iter().enumerate() {
                        feat[base + ci * np] = *v;
                    }
                }
            }
        }
        PreparedInputs {
            layout,
            n_points: n,
            chunk,
            points: points.to_vec(),
            features,
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<(), AdError> {
        if params.len() != self.param_count() {
            return Err(AdError::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn add_bias(d: &Dense, params: &[f64], z: &mut [f64], cols: usize, np: usize) {
        for r in 0..d.rows {
            let b = params[d.b + r];
            z[r * cols..r * cols + np].iter_mut().for_each(|v| *v += b);
        }
    }

    fn forward_chunk(&self, params: &[f64], prep: &PreparedInputs, p0: usize, np: usize, ws: &mut Workspace) {
        let c = prep.layout.len();
        let cols = np * c;
        let plans = self.plans();
        let tanh = TanhPlan::new(prep.layout);
        ws.pre.resize_with(plans.len(), Vec::new);
        ws.act.resize_with(plans.len(), Vec::new);
        for (i, plan) in plans.iter().enumerate() {
            ws.pre[i].resize_with(plan.layers.len(), Vec::new);
            ws.act[i].resize_with(plan.layers.len(), Vec::new);
            for (l, d) in plan.layers.iter().enumerate() {
                let mut z = std::mem::take(&mut ws.act[i][l]);
                z.clear();
                z.resize(d.rows * cols, 0.0);
                let input = if l == 0 {
                    prep.input_view(i, p0, np)
                } else {
                    View::dense(&ws.act[i][l - 1], cols)
                };
                let w = View {
                    data: params,
                    off: d.w,
                    rs: d.cols,
                    cs: 1,
                };
                gemm(d.rows, d.cols, cols, w, input, 0.0, &mut z, 0, cols);
                Self::add_bias(d, params, &mut z, cols, np);
                if d.tanh {
                    let pre = &mut ws.pre[i][l];
                    pre.clear();
                    pre.extend_from_slice(&z);
                    for row in z.chunks_exact_mut(cols) {
                        tanh.forward(row, np, &mut ws.scratch);
                    }
                }
                ws.act[i][l] = z;
            }
        }
        let m = self.merge();
        ws.out.clear();
        ws.out.resize(m.rows * cols, 0.0);
        for (i, plan) in plans.iter().enumerate() {
            let wm = View {
                data: params,
                off: m.w + plan.merge_offset,
                rs: m.cols,
                cs: 1,
            };
            let h = View::dense(ws.act[i].last().expect("subnet has layers"), cols);
            gemm(m.rows, plan.out_dim, cols, wm, h, 1.0, &mut ws.out, 0, cols);
        }
        Self::add_bias(&m, params, &mut ws.out, cols, np);
    }

    /// Accumulates into `grad` the parameter gradient given `ws.out_bar`.
    fn backward_chunk(&self, params: &[f64], prep: &PreparedInputs, p0: usize, np: usize, ws: &mut Workspace, grad: &mut [f64]) {
        let c = prep.layout.len();
        let cols = np * c;
        let m = self.merge();
        let tanh = TanhPlan::new(prep.layout);
        let bias_grad = |d: &Dense, bar: &[f64], grad: &mut [f64]| {
            for r in 0..d.rows {
                grad[d.b + r] += bar[r * cols..r * cols + np].iter().sum::<f64>();
            }
        };
        bias_grad(&m, &ws.out_bar, grad);
        for (i, plan) in self.plans().iter().enumerate() {
            let h = ws.act[i].last().expect("subnet has layers");
            // dWm[:, block] += out_bar * H^T
            gemm(
                m.rows,
                cols,
                plan.out_dim,
                View::dense(&ws.out_bar, cols),
                View {
                    data: h,
                    off: 0,
                    rs: 1,
                    cs: cols,
                },
                1.0,
                grad,
                m.w + plan.merge_offset,
                m.cols,
            );
            // H_bar = Wm[:, block]^T * out_bar
            ws.bar.clear();
            ws.bar.resize(plan.out_dim * cols, 0.0);
            gemm(
                plan.out_dim,
                m.rows,
                cols,
                View {
                    data: params,
                    off: m.w + plan.merge_offset,
                    rs: 1,
                    cs: m.cols,
                },
                View::dense(&ws.out_bar, cols),
                0.0,
                &mut ws.bar,
                0,
                cols,
            );
            for (l, d) in plan.layers.iter().enumerate().rev() {
                if d.tanh {
                    let (pre, act) = (&ws.pre[i][l], &ws.act[i][l]);
                    for r in 0..d.rows {
                        let row = r * cols..(r + 1) * cols;
                        let y0 = &act[r * cols..r * cols + np];
                        tanh.adjoint(&pre[row.clone()], y0, &mut ws.bar[row], np, &mut ws.scratch);
                    }
                }
                bias_grad(d, &ws.bar, grad);
                let input = if l == 0 {
                    prep.input_view(i, p0, np)
                } else {
                    View::dense(&ws.act[i][l - 1], cols)
                };
                // dW += bar * input^T
                gemm(
                    d.rows,
                    cols,
                    d.cols,
                    View::dense(&ws.bar, cols),
                    View {
                        data: input.data,
                        off: input.off,
                        rs: input.cs,
                        cs: input.rs,
                    },
                    1.0,
                    grad,
                    d.w,
                    d.cols,
                );
                if l > 0 {
                    ws.bar_prev.clear();
                    ws.bar_prev.resize(d.cols * cols, 0.0);
                    gemm(
                        d.cols,
                        d.rows,
                        cols,
                        View {
                            data: params,
                            off: d.w,
                            rs: 1,
                            cs: d.cols,
                        },
                        View::dense(&ws.bar, cols),
                        0.0,
                        &mut ws.bar_prev,
                        0,
                        cols,
                    );
                    std::mem::swap(&mut ws.bar, &mut ws.bar_prev);
                }
            }
        }
    }

    /// Output jets at every prepared point.
    pub fn evaluate_batch(&self, params: &[f64], prep: &PreparedInputs, mode: ExecMode) -> BatchOutputs {
        self.check_params(params).expect("parameter count");
        let c = prep.layout.len();
        let n_out = self.output_dim();
        let chunks = ranges(prep.n_points, prep.chunk);
        let parts = ordered_map(mode, chunks.len(), |k| {
            let r = &chunks[k];
            let np = r.len();
            let mut ws = Workspace::default();
            self.forward_chunk(params, prep, r.start, np, &mut ws);
            let cols = np * c;
            let mut part = vec![0.0; np * n_out * c];
            for q in 0..np {
                for o in 0..n_out {
                    for ci in 0..c {
                        part[(q * n_out + o) * c + ci] = ws.out[o * cols + ci * np + q];
                    }
                }
            }
            part
        });
        BatchOutputs {
            layout: prep.layout,
            n_out,
            data: parts.concat(),
        }
    }

    /// Sum over points of `loss.point_loss`, and the gradient of
    /// `seed * sum` with respect to the parameters.
    pub fn loss_and_gradient<L: BatchLoss + ?Sized>(
        &self,
        params: &[f64],
        prep: &PreparedInputs,
        loss: &L,
        seed: f64,
        mode: ExecMode,
    ) -> Result<(f64, Vec<f64>), AdError> {
        self.check_params(params)?;
        let c = prep.layout.len();
        let n_out = self.output_dim();
        let chunk = prep.chunk;
        let groups = ranges(prep.n_points, chunk * CHUNKS_PER_GROUP);
        let parts = ordered_map(mode, groups.len(), |g| -> Result<(f64, Vec<f64>), AdError> {
            let mut grad = vec![0.0; params.len()];
            let mut total = 0.0;
            let mut ws = Workspace::default();
            let mut tape = Tape::with_capacity(1024);
            let mut coeffs = vec![0.0; n_out * c];
            for r in ranges(groups[g].len(), chunk) {
                let p0 = groups[g].start + r.start;
                let np = r.len();
                let cols = np * c;
                self.forward_chunk(params, prep, p0, np, &mut ws);
                ws.out_bar.clear();
                ws.out_bar.resize(n_out * cols, 0.0);
                for q in 0..np {
                    for o in 0..n_out {
                        for ci in 0..c {
                            coeffs[o * c + ci] = ws.out[o * cols + ci * np + q];
                        }
                    }
                    tape.clear();
                    let (value, adj) = {
                        let vars = tape.vars(&coeffs);
                        let jets: Vec<Jet<Var>> = vars
                            .chunks_exact(c)
                            .map(|v| Jet::from_coefficients(prep.layout, v.to_vec()))
                            .collect();
                        let l = loss.point_loss(p0 + q, &jets)?;
                        let adj = tape.adjoints(l, seed)?;
                        (l.value(), adj)
                    };
                    total += value;
                    for o in 0..n_out {
                        for ci in 0..c {
                            ws.out_bar[o * cols + ci * np + q] = adj[o * c + ci];
                        }
                    }
                }
                self.backward_chunk(params, prep, p0, np, &mut ws, &mut grad);
            }
            Ok((total, grad))
        });
        let mut total = 0.0;
        let mut grad = vec![0.0; params.len()];
        for part in parts {
            let (t, g) = part?;
            total += t;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(AdError::NonFinite { record: i });
        }
        Ok((total, grad))
    }

    /// Gradient of the value of output `output` at each point separately.
    pub fn output_gradients(&self, params: &[f64], prep: &PreparedInputs, output: usize, mode: ExecMode) -> Vec<Vec<f64>> {
        self.check_params(params).expect("parameter count");
        assert!(output < self.output_dim(), "output index");
        let c = prep.layout.len();
        ordered_map(mode, prep.n_points, |p| {
            let mut ws = Workspace::default();
            let mut grad = vec![0.0; params.len()];
            self.forward_chunk(params, prep, p, 1, &mut ws);
            ws.out_bar.clear();
            ws.out_bar.resize(self.output_dim() * c, 0.0);
            ws.out_bar[output * c] = 1.0;
            self.backward_chunk(params, prep, p, 1, &mut ws, &mut grad);
            grad
        })
    }
}
