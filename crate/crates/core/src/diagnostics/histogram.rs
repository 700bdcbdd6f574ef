use std::io::{self, Write};

use crate::network::MultiscaleNetwork;
use crate::parallel::ExecMode;
use crate::training::{LossWeights, Problem, Term, TERMS};

use super::DiagnosticsError;

pub const DEFAULT_BINS: usize = 64;

pub const HISTOGRAM_HEADER: &str = "epoch,term,layer,bin,lo,hi,count";

/// Distribution of the entries of `d(lambda * term)/d theta` over one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientHistogram {
    pub epoch: usize,
    pub term: Term,
    pub layer: String,
    /// Bins cover `[-range, range]` uniformly.
    pub range: f64,
    pub counts: Vec<usize>,
}

impl GradientHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = 2.0 * self.range / self.counts.len() as f64;
        (-self.range + w * i as f64, -self.range + w * (i + 1) as f64)
    }

    /// Index of the bin holding zero.
    pub fn zero_bin(&self) -> usize {
        self.counts.len() / 2
    }

    /// Fraction of entries outside the zero bin.
    pub fn spread(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        1.0 - self.counts[self.zero_bin()] as f64 / t as f64
    }
}

fn bin_of(v: f64, range: f64, bins: usize) -> usize {
    let w = 2.0 * range / bins as f64;
    (((v + range) / w).floor().max(0.0) as usize).min(bins - 1)
}

/// One histogram per active loss term and parameter group. Bins are shared
/// across terms within a layer so the figures compare directly.
pub fn gradient_histograms(
    net: &MultiscaleNetwork,
    params: &[f64],
    problem: &Problem,
    weights: &LossWeights,
    epoch: usize,
    bins: usize,
    mode: ExecMode,
) -> Result<Vec<GradientHistogram>, DiagnosticsError> {
    if bins < 2 || !bins.is_multiple_of(2) {
        return Err(DiagnosticsError::Invalid(format!("bins must be even and at least 2, got {bins}")));
    }
    weights.validate().map_err(DiagnosticsError::Invalid)?;
    let mut grads = Vec::new();
    for t in TERMS {
        let w = t.weight(weights);
        if w == 0.0 {
            continue;
        }
        if let Some((_, g)) = problem.term_loss(net, params, t, w, mode)? {
            grads.push((t, g));
        }
    }
    let layout = net.param_layout();
    let mut out = Vec::new();
    for group in layout.groups() {
        let idx: Vec<usize> = layout.blocks().iter().filter(|b| b.group == group).flat_map(|b| b.range()).collect();
        let max = grads
            .iter()
            .flat_map(|(_, g)| idx.iter().map(move |&i| g[i].abs()))
            .fold(0.0, f64::max);
        let range = if max > 0.0 { max } else { 1.0 };
        for (t, g) in &grads {
            let mut counts = vec![0; bins];
            for &i in &idx {
                counts[bin_of(g[i], range, bins)] += 1;
            }
            out.push(GradientHistogram {
                epoch,
                term: *t,
                layer: group.to_string(),
                range,
                counts,
            });
        }
    }
    Ok(out)
}

pub fn write_histograms_csv<W: Write>(mut w: W, hists: &[GradientHistogram]) -> io::Result<()> {
    writeln!(w, "{HISTOGRAM_HEADER}")?;
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(i);
            writeln!(w, "{},{},{},{i},{lo:e},{hi:e},{c}", h.epoch, h.term.name(), h.layer)?;
        }
    }
    Ok(())
}
