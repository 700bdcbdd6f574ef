use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdError;
use crate::geometry::{
    apply_noise, latin_hypercube, sample_boundary, sample_initial, BoundaryMask, GeometryError, MaskPreset, NoiseSpec,
    TargetFn,
};
use crate::mhd::{field_names, manufactured_sources, ExactFields, Formulation, SourceTerms};
use crate::network::{EmbeddingKind, EmbeddingSpec, MultiscaleNetwork, NetworkError, NetworkSpec, SubnetConfig, SubnetSpec};
use crate::parallel::{ordered_map, ExecMode};
use crate::training::{train, EpochRecord, LossWeights, MhdObjective, Problem, Schedule, TrainError, TrainOutcome};

use super::metrics::{evaluation_grid, metric_names, predict_fields, pressure_shift, section_grid, GridBlock, MetricRow, MetricsReport};
use super::{BenchmarkCase, CaseId};

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("invalid settings: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCounts {
    pub interior: usize,
    pub boundary_per_face: usize,
    pub initial: usize,
}

impl SamplingCounts {
    pub fn new(interior: usize, boundary_per_face: usize, initial: usize) -> Self {
        SamplingCounts {
            interior,
            boundary_per_face,
            initial,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub sampling: u64,
    pub init: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            sampling: 1,
            init: 2,
            noise: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    /// Embedded subnets with a linear merge.
    Mhdnet,
    /// One fully connected network on raw coordinates.
    PinnBaseline,
}

impl ArchitectureKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchitectureKind::Mhdnet => "mhdnet",
            ArchitectureKind::PinnBaseline => "pinn_baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub kind: ArchitectureKind,
    /// Number of subnets `M`.
    pub subnets: usize,
    /// `sigma_i = sigma_step * i`.
    pub sigma_step: f64,
    pub embedding: EmbeddingKind,
    pub frequencies: usize,
    pub alpha: f64,
    pub octaves: usize,
    pub layers: usize,
    /// Subnet width; the case default when unset.
    pub width: Option<usize>,
    pub baseline_layers: usize,
    pub baseline_width: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            kind: ArchitectureKind::Mhdnet,
            subnets: 4,
            sigma_step: 0.1,
            embedding: EmbeddingKind::Multimodes,
            frequencies: 32,
            alpha: 1.0,
            octaves: 4,
            layers: 4,
            width: None,
            baseline_layers: 4,
            baseline_width: 200,
        }
    }
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.subnets == 0 {
            return Err("architecture.subnets must be at least 1".into());
        }
        if self.layers == 0 || self.baseline_layers == 0 {
            return Err("layer counts must be at least 1".into());
        }
        if self.width == Some(0) || self.baseline_width == 0 {
            return Err("widths must be at least 1".into());
        }
        let uses_m = matches!(self.embedding, EmbeddingKind::Gaussian | EmbeddingKind::Multimodes);
        if uses_m && self.frequencies == 0 {
            return Err("architecture.frequencies must be at least 1 for this embedding".into());
        }
        if self.embedding == EmbeddingKind::Positional && self.octaves == 0 {
            return Err("architecture.octaves must be at least 1 for the positional embedding".into());
        }
        if !(self.sigma_step.is_finite() && self.sigma_step >= 0.0 && self.alpha.is_finite()) {
            return Err("sigma_step and alpha must be finite, sigma_step nonnegative".into());
        }
        Ok(())
    }

    pub fn spec(&self, input_dim: usize, output_dim: usize, default_width: usize, seed: u64) -> NetworkSpec {
        match self.kind {
            ArchitectureKind::PinnBaseline => NetworkSpec::plain(input_dim, output_dim, self.baseline_layers, self.baseline_width),
            ArchitectureKind::Mhdnet => NetworkSpec {
                input_dim,
                output_dim,
                subnets: (1..=self.subnets)
                    .map(|i| SubnetConfig {
                        embedding: EmbeddingSpec {
                            kind: self.embedding,
                            sigma: self.sigma_step * i as f64,
                            m: self.frequencies,
                            alpha: self.alpha,
                            octaves: self.octaves,
                            seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
                        },
                        body: SubnetSpec {
                            layers: self.layers,
                            width: self.width.unwrap_or(default_width),
                            activation: Default::default(),
                            output_dim: None,
                        },
                    })
                    .collect(),
            },
        }
    }
}

/// Everything about a benchmark run except the case itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub formulation: Formulation,
    pub architecture: ArchitectureConfig,
    pub counts: SamplingCounts,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub mask: MaskPreset,
    pub noise_ratio: f64,
    pub seeds: Seeds,
    /// Points per axis of the evaluation grid.
    pub resolution: usize,
    pub mode: ExecMode,
}

impl RunSettings {
    pub fn for_case(case: &BenchmarkCase) -> Self {
        RunSettings {
            formulation: case.formulation,
            architecture: ArchitectureConfig::default(),
            counts: case.counts,
            weights: LossWeights::default(),
            schedule: Schedule::default(),
            mask: MaskPreset::Standard,
            noise_ratio: 0.1,
            seeds: Seeds::default(),
            resolution: if case.dim() == 3 { 51 } else { 101 },
            mode: ExecMode::default(),
        }
    }
}

pub fn build_network(case: &BenchmarkCase, settings: &RunSettings) -> Result<MultiscaleNetwork, BenchmarkError> {
    settings.architecture.validate().map_err(BenchmarkError::Config)?;
    let spec = settings.architecture.spec(
        case.domain.input_dim(),
        settings.formulation.output_dim(case.dim()),
        case.subnet_width,
        settings.seeds.init,
    );
    Ok(MultiscaleNetwork::new(spec)?)
}

fn exact_flat(case: &BenchmarkCase) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |p: &[f64]| case.exact.eval_f64(p).to_flat()
}

/// Samples every collocation set of a case and derives its sources.
pub fn build_problem(case: &BenchmarkCase, settings: &RunSettings, net: &MultiscaleNetwork) -> Result<Problem, BenchmarkError> {
    let (d, unsteady, f) = (case.dim(), case.unsteady(), settings.formulation);
    let seed = settings.seeds.sampling;
    let mut problem = Problem::new(f, d, unsteady, case.phys.clone());

    let interior = latin_hypercube(settings.counts.interior, &case.domain, seed)?;
    let sources = ordered_map(settings.mode, interior.len(), |i| {
        manufactured_sources(case.exact.as_ref(), interior.point(i), &case.phys, f)
    })
    .into_iter()
    .collect::<Result<Vec<SourceTerms>, AdError>>()?;
    problem.set_interior(net, &interior.points, sources)?;

    let flat = exact_flat(case);
    let target = TargetFn {
        names: field_names(d),
        f: &flat,
    };
    let mask = BoundaryMask::preset(settings.mask, case.domain.face_count());
    let mut boundary = sample_boundary(&case.domain, settings.counts.boundary_per_face, &mask, Some(&target), seed)?;
    if mask.has_noise() && settings.noise_ratio > 0.0 {
        apply_noise(
            &mut boundary,
            &NoiseSpec {
                amplitude_ratio: settings.noise_ratio,
                seed: settings.seeds.noise,
            },
        );
    }
    problem.set_boundary(net, &boundary, &case.face_kinds)?;

    if unsteady && settings.counts.initial > 0 {
        let initial = sample_initial(&case.domain, settings.counts.initial, Some(&target), seed)?;
        problem.set_initial(net, &initial)?;
    }
    Ok(problem)
}

/// Predictions and exact values on one grid block; predicted pressure is
/// already shifted by the case's gauge.
pub struct BlockEvaluation {
    pub block: GridBlock,
    pub pred: Vec<ExactFields<f64>>,
    pub exact: Vec<ExactFields<f64>>,
}

pub struct Evaluation {
    pub metrics: MetricsReport,
    /// Blocks written to the prediction grid file.
    pub blocks: Vec<BlockEvaluation>,
}

fn grid_description(case: &BenchmarkCase, resolution: usize) -> String {
    let d = case.dim();
    let pts = vec![resolution.to_string(); d].join("x");
    if case.unsteady() {
        let t: Vec<String> = case.time_slices.iter().map(|t| t.to_string()).collect();
        format!("{pts} uniform, t in {{{}}}", t.join(", "))
    } else {
        format!("{pts} uniform")
    }
}

/// Relative L2 errors of `params` on the case's evaluation grid.
pub fn evaluate_case(
    case: &BenchmarkCase,
    settings: &RunSettings,
    net: &MultiscaleNetwork,
    params: &[f64],
) -> Result<Evaluation, BenchmarkError> {
    let (d, unsteady, f) = (case.dim(), case.unsteady(), settings.formulation);
    let grid = evaluation_grid(&case.domain, settings.resolution, &case.time_slices).map_err(BenchmarkError::Config)?;
    let mut sections = Vec::new();
    if case.id == CaseId::Unsteady3d {
        let t = case.time_slices.last().copied();
        for (axis, v) in [(2, -0.5), (2, 0.5), (1, -0.5), (1, 0.5)] {
            sections.push(section_grid(&case.domain, axis, v, settings.resolution, t));
        }
    }
    let grid_rows = grid.len();
    let keep_grid = d == 2;
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for (i, block) in grid.into_iter().chain(sections).enumerate() {
        let mut pred = predict_fields(net, params, f, d, unsteady, &block.points, settings.mode)?;
        let exact: Vec<ExactFields<f64>> = (0..block.len()).map(|p| case.exact.eval_f64(block.point(p))).collect();
        rows.push(MetricRow::compute(&block.label, block.time, &pred, &exact, case.gauge));
        if keep_grid || i >= grid_rows {
            let shift = pressure_shift(&pred, &exact, case.gauge);
            pred.iter_mut().for_each(|p| p.p += shift);
            blocks.push(BlockEvaluation { block, pred, exact });
        }
    }
    let mut metrics = MetricsReport {
        case: case.id.name().into(),
        formulation: f.name().into(),
        architecture: settings.architecture.kind.name().into(),
        grid: grid_description(case, settings.resolution),
        components: metric_names(d),
        gauge: case.gauge,
        rows,
        grid_rows,
        temporal_mean: None,
    };
    metrics.finish();
    Ok(Evaluation { metrics, blocks })
}

/// Columns: block label, coordinates, then predicted, exact and absolute
/// error of each metric component.
pub fn write_grid_csv<W: Write>(mut w: W, case: &BenchmarkCase, blocks: &[BlockEvaluation]) -> io::Result<()> {
    let comps = metric_names(case.dim());
    let mut header = vec!["block".to_string()];
    header.extend(case.domain.coordinate_names().iter().map(|s| s.to_string()));
    for prefix in ["pred", "exact", "abs_err"] {
        header.extend(comps.iter().map(|c| format!("{prefix}_{c}")));
    }
    writeln!(w, "{}", header.join(","))?;
    let values = |f: &ExactFields<f64>| {
        let mut v = [f.u.clone(), f.b.clone()].concat();
        v.push(f.p);
        v
    };
    for b in blocks {
        for i in 0..b.block.len() {
            let p = values(&b.pred[i]);
            let e = values(&b.exact[i]);
            let mut line = format!("\"{}\"", b.block.label);
            for v in b.block.point(i) {
                line.push_str(&format!(",{v}"));
            }
            for v in p.iter().chain(&e) {
                line.push_str(&format!(",{v:e}"));
            }
            for (a, c) in p.iter().zip(&e) {
                line.push_str(&format!(",{:e}", (a - c).abs()));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

pub struct BenchmarkRun {
    pub net: MultiscaleNetwork,
    pub outcome: TrainOutcome,
    pub evaluation: Evaluation,
}

/// Samples, trains and evaluates. A diverged run is evaluated at its last
/// finite parameters.
pub fn run_benchmark(
    case: &BenchmarkCase,
    settings: &RunSettings,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<BenchmarkRun, BenchmarkError> {
    settings.schedule.validate().map_err(BenchmarkError::Config)?;
    settings.weights.validate().map_err(BenchmarkError::Config)?;
    for k in case.face_kinds.iter().flatten() {
        k.check(settings.formulation).map_err(BenchmarkError::Config)?;
    }
    let net = build_network(case, settings)?;
    let problem = build_problem(case, settings, &net)?;
    let params = net.init_params(settings.seeds.init).into_values();
    let obj = MhdObjective::new(&net, &problem, &settings.weights, settings.mode)?;
    let outcome = train(&obj, params, &settings.schedule, observer)?;
    let evaluation = evaluate_case(case, settings, &net, &outcome.params)?;
    Ok(BenchmarkRun {
        net,
        outcome,
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(case: &BenchmarkCase) -> RunSettings {
        let mut s = RunSettings::for_case(case);
        s.architecture.subnets = 2;
        s.architecture.layers = 2;
        s.architecture.width = Some(6);
        s.architecture.frequencies = 4;
        s.counts = SamplingCounts::new(40, 6, if case.unsteady() { 10 } else { 0 });
        s.schedule = Schedule {
            n_adam: 5,
            n_lbfgs: 3,
            ..Default::default()
        };
        s.resolution = 5;
        s
    }

    #[test]
    fn every_case_runs_end_to_end() {
        for id in CaseId::ALL {
            let case = BenchmarkCase::standard(id);
            let s = tiny(&case);
            let mut seen = 0;
            let run = run_benchmark(&case, &s, &mut |_| seen += 1).unwrap();
            assert!(seen >= 5, "{}", id.name());
            let m = &run.evaluation.metrics;
            assert!(m.rows.iter().all(|r| r.errors.iter().all(|e| e.is_finite())));
            let expect_rows = if case.unsteady() { 4 } else { 1 } + if case.dim() == 3 { 4 } else { 0 };
            assert_eq!(m.rows.len(), expect_rows, "{}", id.name());
            assert_eq!(m.temporal_mean.is_some(), case.unsteady());
        }
    }

    #[test]
    fn grid_csv_has_one_line_per_point() {
        let case = BenchmarkCase::standard(CaseId::Steady2d);
        let s = tiny(&case);
        let net = build_network(&case, &s).unwrap();
        let params = net.init_params(1).into_values();
        let ev = evaluate_case(&case, &s, &net, &params).unwrap();
        let mut out = Vec::new();
        write_grid_csv(&mut out, &case, &ev.blocks).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 1 + 2 + 3 * 5);
        assert_eq!(lines.count(), 25);
    }

    #[test]
    fn baseline_architecture_builds() {
        let case = BenchmarkCase::standard(CaseId::Hartmann);
        let mut s = tiny(&case);
        s.architecture.kind = ArchitectureKind::PinnBaseline;
        s.architecture.baseline_width = 8;
        let net = build_network(&case, &s).unwrap();
        assert!(!net.init_params(0).into_values().is_empty());
    }

    #[test]
    fn bad_architecture_is_rejected() {
        let case = BenchmarkCase::standard(CaseId::Steady2d);
        let mut s = tiny(&case);
        s.architecture.subnets = 0;
        assert!(matches!(build_network(&case, &s), Err(BenchmarkError::Config(_))));
    }
}
