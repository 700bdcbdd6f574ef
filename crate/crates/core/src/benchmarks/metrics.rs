use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdError;
use crate::geometry::Domain;
use crate::mhd::{fields_from_view, ExactFields, FieldView, Formulation};
use crate::network::MultiscaleNetwork;
use crate::parallel::ExecMode;

/// How predicted pressure is compared with the exact one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureGauge {
    /// Pressure level is fixed by the boundary conditions.
    Absolute,
    /// Pressure is determined up to a constant; the mean offset over each
    /// evaluation block is removed before comparing.
    MeanFree,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentError {
    pub value: f64,
    /// The exact component vanished, so `value` is the absolute norm.
    pub absolute: bool,
}

/// `||pred - exact|| / ||exact||` in the discrete 2-norm.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> ComponentError {
    assert_eq!(pred.len(), exact.len(), "sample count");
    let diff = pred.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        ComponentError {
            value: diff,
            absolute: true,
        }
    } else {
        ComponentError {
            value: diff / norm,
            absolute: false,
        }
    }
}

/// `u1.., b1.., p`.
pub fn metric_names(d: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=d).map(|i| format!("u{i}")).collect();
    v.extend((1..=d).map(|i| format!("b{i}")));
    v.push("p".into());
    v
}

fn metric_values(f: &ExactFields<f64>) -> Vec<f64> {
    let mut v = [f.u.clone(), f.b.clone()].concat();
    v.push(f.p);
    v
}

/// A set of evaluation points sharing a time slice or a section plane.
#[derive(Clone, Debug, PartialEq)]
pub struct GridBlock {
    pub label: String,
    pub time: Option<f64>,
    pub points: Vec<f64>,
    pub input_dim: usize,
}

impl GridBlock {
    pub fn len(&self) -> usize {
        self.points.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn tensor_grid(axes: &[Vec<f64>], time: Option<f64>) -> Vec<f64> {
    let mut pts = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    loop {
        pts.extend(idx.iter().zip(axes).map(|(&i, a)| a[i]));
        pts.extend(time);
        // last axis fastest
        let mut k = axes.len();
        loop {
            if k == 0 {
                return pts;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Uniform tensor grid over the spatial box, once per time slice (once in
/// total for steady domains).
pub fn evaluation_grid(domain: &Domain, resolution: usize, slices: &[f64]) -> Result<Vec<GridBlock>, String> {
    if resolution < 2 {
        return Err(format!("grid resolution must be at least 2, got {resolution}"));
    }
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|a| linspace(domain.lo[a], domain.hi[a], resolution))
        .collect();
    let input_dim = domain.input_dim();
    if !domain.is_unsteady() {
        return Ok(vec![GridBlock {
            label: "grid".into(),
            time: None,
            points: tensor_grid(&axes, None),
            input_dim,
        }]);
    }
    if slices.is_empty() {
        return Err("unsteady evaluation needs at least one time slice".into());
    }
    Ok(slices
        .iter()
        .map(|&t| GridBlock {
            label: format!("t={t}"),
            time: Some(t),
            points: tensor_grid(&axes, Some(t)),
            input_dim,
        })
        .collect())
}

/// Plane `x_axis = value` of a box, sampled at `resolution` per in-plane
/// axis.
pub fn section_grid(domain: &Domain, axis: usize, value: f64, resolution: usize, time: Option<f64>) -> GridBlock {
    let names = ["x", "y", "z"];
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|a| {
            if a == axis {
                vec![value]
            } else {
                linspace(domain.lo[a], domain.hi[a], resolution)
            }
        })
        .collect();
    let label = match time {
        Some(t) => format!("{}={value},t={t}", names[axis]),
        None => format!("{}={value}", names[axis]),
    };
    GridBlock {
        label,
        time,
        points: tensor_grid(&axes, time),
        input_dim: domain.input_dim(),
    }
}

const PREDICT_CHUNK: usize = 16384;

/// Physical fields of a network at each point.
pub fn predict_fields(
    net: &MultiscaleNetwork,
    params: &[f64],
    formulation: Formulation,
    d: usize,
    unsteady: bool,
    points: &[f64],
    mode: ExecMode,
) -> Result<Vec<ExactFields<f64>>, AdError> {
    let k = d + usize::from(unsteady);
    let layout = Formulation::spatial_layout(d, unsteady, formulation.value_order());
    let mut out = Vec::with_capacity(points.len() / k);
    for chunk in points.chunks(PREDICT_CHUNK * k) {
        let prep = net.prepare(layout, chunk);
        let batch = net.evaluate_batch(params, &prep, mode);
        for p in 0..batch.len() {
            let jets = batch.jets(p);
            let view = FieldView::new(&jets, formulation, d, unsteady)?;
            out.push(fields_from_view(&view)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub time: Option<f64>,
    pub errors: Vec<f64>,
    /// Components whose exact values vanish (absolute error reported).
    pub absolute: Vec<bool>,
}

/// Constant added to predicted pressure before comparison.
pub fn pressure_shift(pred: &[ExactFields<f64>], exact: &[ExactFields<f64>], gauge: PressureGauge) -> f64 {
    match gauge {
        PressureGauge::Absolute => 0.0,
        PressureGauge::MeanFree => {
            exact.iter().zip(pred).map(|(e, p)| e.p - p.p).sum::<f64>() / exact.len().max(1) as f64
        }
    }
}

impl MetricRow {
    pub fn compute(label: &str, time: Option<f64>, pred: &[ExactFields<f64>], exact: &[ExactFields<f64>], gauge: PressureGauge) -> Self {
        assert_eq!(pred.len(), exact.len(), "sample count");
        let pv: Vec<Vec<f64>> = pred.iter().map(metric_values).collect();
        let ev: Vec<Vec<f64>> = exact.iter().map(metric_values).collect();
        let m = ev.first().map_or(0, |v| v.len());
        let shift = pressure_shift(pred, exact, gauge);
        let mut errors = Vec::with_capacity(m);
        let mut absolute = Vec::with_capacity(m);
        for c in 0..m {
            let off = if c + 1 == m { shift } else { 0.0 };
            let a: Vec<f64> = pv.iter().map(|v| v[c] + off).collect();
            let b: Vec<f64> = ev.iter().map(|v| v[c]).collect();
            let e = relative_l2(&a, &b);
            errors.push(e.value);
            absolute.push(e.absolute);
        }
        MetricRow {
            label: label.to_string(),
            time,
            errors,
            absolute,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case: String,
    pub formulation: String,
    pub architecture: String,
    /// Human-readable description of the evaluation grid.
    pub grid: String,
    pub components: Vec<String>,
    pub gauge: PressureGauge,
    /// Full-grid rows (one per time slice), then section rows.
    pub rows: Vec<MetricRow>,
    /// Number of leading rows that cover the full grid.
    pub grid_rows: usize,
    /// Mean over the time-slice rows, for unsteady cases.
    pub temporal_mean: Option<Vec<f64>>,
}

pub const METRICS_HEADER_PREFIX: &str = "block,t";

impl MetricsReport {
    pub fn finish(&mut self) {
        let slices: Vec<&MetricRow> = self.rows[..self.grid_rows].iter().filter(|r| r.time.is_some()).collect();
        self.temporal_mean = if slices.is_empty() {
            None
        } else {
            let m = self.components.len();
            Some(
                (0..m)
                    .map(|c| slices.iter().map(|r| r.errors[c]).sum::<f64>() / slices.len() as f64)
                    .collect(),
            )
        };
    }

    /// Headline error of a component: the temporal mean when there is one,
    /// otherwise the full-grid value.
    pub fn headline(&self, component: &str) -> Option<f64> {
        let c = self.components.iter().position(|n| n == component)?;
        match &self.temporal_mean {
            Some(m) => Some(m[c]),
            None => self.rows.first().map(|r| r.errors[c]),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{METRICS_HEADER_PREFIX},{},absolute", self.components.join(","))?;
        for r in &self.rows {
            let t = r.time.map(|t| t.to_string()).unwrap_or_default();
            let errs: Vec<String> = r.errors.iter().map(|e| format!("{e:e}")).collect();
            let abs: Vec<&str> = self
                .components
                .iter()
                .zip(&r.absolute)
                .filter(|(_, a)| **a)
                .map(|(n, _)| n.as_str())
                .collect();
            writeln!(w, "\"{}\",{t},{},{}", r.label, errs.join(","), abs.join(";"))?;
        }
        if let Some(m) = &self.temporal_mean {
            let errs: Vec<String> = m.iter().map(|e| format!("{e:e}")).collect();
            writeln!(w, "temporal_mean,,{},", errs.join(","))?;
        }
        Ok(())
    }
}
