//! Maxima extraction, sweeps, noise ensembles and power-law fits.

pub mod fit;
pub mod maxima;
pub mod noise;
pub mod sweep;

pub use fit::{fit_power_law, fit_power_law_in, fit_two_segment, FitResult, SegmentBounds, TwoSegmentFit};
pub use maxima::{find_maxima, refine_maxima, MaximaPair, Peak};
pub use noise::{noise_ensemble, EnsembleStat, NoisePlan, NoiseReport};
pub use sweep::{
    default_window, log_sizes, maxima_with_window, run_sweep, Axis, PointOutcome, PointValue, SweepPlan, SweepRow,
    WindowPolicy,
};
