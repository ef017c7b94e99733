//! Desk-scale training and evaluation harness: dataset ingestion and
//! patch sampling, the two-stage training loop, and quality-factor
//! sweeps with CSV/SVG reporting.

mod dataset;
mod plot;
mod sweep;
mod trainer;

pub use dataset::{ingest_dataset, sample_batch, Batch, CropRef, SampleStore};
pub use plot::svg_line_chart;
pub use sweep::{resolution_sweep, sweep_eval, write_resolution_svg, SweepResult, SweepRow};
pub use trainer::{train, LossPoint, LrSchedule, StageConfig, TrainConfig, TrainReport};
