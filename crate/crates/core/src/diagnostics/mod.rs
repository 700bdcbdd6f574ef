//! Training diagnostics: per-layer gradient histograms for each loss term
//! and the empirical neural tangent kernel of scalar networks.

mod histogram;
mod ntk;

pub use histogram::{gradient_histograms, write_histograms_csv, GradientHistogram, DEFAULT_BINS, HISTOGRAM_HEADER};
pub use ntk::{
    empirical_ntk, gd_error_trajectory, jacobi_eigen, ntk_error_prediction, trajectory_error, write_spectrum_csv, Eigen,
    NetworkModel, NtkReport, ScalarModel, TrajectoryComparison, SPECTRUM_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("invalid diagnostic input: {0}")]
    Invalid(String),
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps (off-diagonal {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}
