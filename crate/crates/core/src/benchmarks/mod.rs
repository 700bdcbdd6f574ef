//! Benchmark families with closed-form solutions, evaluation grids and
//! relative L2 metrics.

mod exact;
mod metrics;
mod run;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Domain;
use crate::mhd::{BoundaryKind, ExactSolution, Formulation, PhysParams};

pub use exact::{Beltrami, Hartmann, Kovasznay, PolynomialUnsteady};
pub use metrics::{
    evaluation_grid, metric_names, predict_fields, pressure_shift, relative_l2, section_grid, ComponentError, GridBlock, MetricRow,
    MetricsReport, PressureGauge,
};
pub use run::{
    build_network, build_problem, evaluate_case, run_benchmark, write_grid_csv, ArchitectureConfig, ArchitectureKind,
    BenchmarkError, BenchmarkRun, BlockEvaluation, Evaluation, RunSettings, SamplingCounts, Seeds,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    Steady2d,
    Unsteady2d,
    Hartmann,
    Unsteady3d,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Steady2d, CaseId::Unsteady2d, CaseId::Hartmann, CaseId::Unsteady3d];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Steady2d => "steady2d",
            CaseId::Unsteady2d => "unsteady2d",
            CaseId::Hartmann => "hartmann",
            CaseId::Unsteady3d => "unsteady3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Physical parameters a case may take from configuration. Unset values
/// fall back to the case defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseParams {
    pub re: Option<f64>,
    pub rm: Option<f64>,
    pub s: Option<f64>,
    pub g: Option<f64>,
}

/// The four Hartmann parameter sets `(Re = Rm, s)`.
pub const HARTMANN_SETS: [(f64, f64); 4] = [(1.0, 1.0), (20.0, 4.0), (40.0, 2.0), (50.0, 2.0)];

pub const HARTMANN_LENGTH: f64 = 4.0;

#[derive(Clone)]
pub struct BenchmarkCase {
    pub id: CaseId,
    pub domain: Domain,
    pub phys: PhysParams,
    pub exact: Arc<dyn ExactSolution>,
    pub counts: SamplingCounts,
    /// Conditions per boundary face, in face order.
    pub face_kinds: Vec<Vec<BoundaryKind>>,
    pub formulation: Formulation,
    pub subnet_width: usize,
    pub time_slices: Vec<f64>,
    pub gauge: PressureGauge,
}

impl std::fmt::Debug for BenchmarkCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkCase")
            .field("id", &self.id)
            .field("domain", &self.domain)
            .field("phys", &self.phys)
            .finish_non_exhaustive()
    }
}

const SLICES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

impl BenchmarkCase {
    pub fn standard(id: CaseId) -> Self {
        Self::with_params(id, &CaseParams::default()).expect("defaults are valid")
    }

    pub fn with_params(id: CaseId, p: &CaseParams) -> Result<Self, String> {
        let dirichlet = |faces: usize| vec![vec![BoundaryKind::VelocityDirichlet, BoundaryKind::MagneticDirichlet]; faces];
        let case = match id {
            CaseId::Steady2d => {
                let re = p.re.unwrap_or(40.0);
                BenchmarkCase {
                    id,
                    // the second interval is read as [-0.5, 0.5]
                    domain: Domain::new(vec![-0.5, -0.5], vec![1.0, 0.5], None).map_err(|e| e.to_string())?,
                    phys: PhysParams::new(re, p.rm.unwrap_or(1.0), 1.0, 1.0),
                    exact: Arc::new(Kovasznay { re }),
                    counts: SamplingCounts::new(2500, 100, 0),
                    face_kinds: dirichlet(4),
                    formulation: Formulation::A2,
                    subnet_width: 50,
                    time_slices: Vec::new(),
                    gauge: PressureGauge::MeanFree,
                }
            }
            CaseId::Unsteady2d => BenchmarkCase {
                id,
                domain: Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], Some(1.0)).map_err(|e| e.to_string())?,
                phys: PhysParams::new(p.re.unwrap_or(1.0), p.rm.unwrap_or(1.0), 1.0, 1.0),
                exact: Arc::new(PolynomialUnsteady),
                counts: SamplingCounts::new(2500, 100, 100),
                face_kinds: dirichlet(4),
                formulation: Formulation::B,
                subnet_width: 50,
                time_slices: SLICES.to_vec(),
                gauge: PressureGauge::MeanFree,
            },
            CaseId::Hartmann => {
                let re = p.re.unwrap_or(1.0);
                let rm = p.rm.unwrap_or(re);
                let s = p.s.unwrap_or(1.0);
                let g = p.g.unwrap_or(0.1);
                let walls = vec![BoundaryKind::VelocityDirichlet, BoundaryKind::MagneticTangential];
                let ends = vec![BoundaryKind::Traction, BoundaryKind::MagneticTangential];
                BenchmarkCase {
                    id,
                    domain: Domain::new(vec![0.0, -1.0], vec![HARTMANN_LENGTH, 1.0], None).map_err(|e| e.to_string())?,
                    phys: PhysParams::hartmann(re, rm, s, g),
                    exact: Arc::new(Hartmann { re, rm, s, g, p0: 0.0 }),
                    counts: SamplingCounts::new(2500, 100, 0),
                    face_kinds: vec![ends.clone(), ends, walls.clone(), walls],
                    formulation: Formulation::A2,
                    subnet_width: 100,
                    time_slices: Vec::new(),
                    gauge: PressureGauge::Absolute,
                }
            }
            CaseId::Unsteady3d => BenchmarkCase {
                id,
                domain: Domain::new(vec![-1.0; 3], vec![1.0; 3], Some(1.0)).map_err(|e| e.to_string())?,
                phys: PhysParams::new(p.re.unwrap_or(40.0), p.rm.unwrap_or(1.0), 1.0, 1.0),
                exact: Arc::new(Beltrami { a: 1.0, d: 1.0 }),
                counts: SamplingCounts::new(500, 67, 100),
                face_kinds: dirichlet(6),
                formulation: Formulation::A2,
                subnet_width: 50,
                time_slices: SLICES.to_vec(),
                gauge: PressureGauge::MeanFree,
            },
        };
        if id != CaseId::Hartmann && (p.s.is_some() || p.g.is_some()) {
            return Err(format!("case {} takes no `s` or `g` parameter", id.name()));
        }
        case.phys.validate()?;
        Ok(case)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn unsteady(&self) -> bool {
        self.domain.is_unsteady()
    }
}
