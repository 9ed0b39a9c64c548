//! Synthetic covariate-shift experiments comparing residual-as-teacher (RaT)
//! with soft matching (SM).
//!
//! A run samples problems from a preset over a grid of source sizes,
//! evaluates both estimators, writes one CSV row per (size, trial, method),
//! fits log–log rates to the per-size medians and can draw them as SVG.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod rates;
pub mod records;
pub mod sampling;
pub mod svg;

pub use config::{ExperimentConfig, GammaPolicy, MseMode, Overrides, Preset};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, run_experiment_with, ExperimentOutput, MeasuredSpectra};
pub use rates::{cell_medians, fit_rates, CellMedians, RateFit};
pub use records::{emit_csv, parse_csv, read_csv, write_csv, MethodTag, RecordWriter, TrialRecord, CSV_HEADER};
pub use sampling::{sample_dataset, PresetParams, Sample};
pub use svg::{emit_svg_plot, render_svg};
