//! Experiment protocols built on the influence measures: outlier screening,
//! layer-wise and dataset-wide scans, pixel-level maps and one-pixel attacks.

mod attack;
mod curves;
mod outliers;
mod percentiles;
mod pixels;
mod scan;

pub use attack::{attack_pixel, one_pixel_attack, random_pixel_attacks, AttackOutcome, ValueCandidate, DEFAULT_VALUE_GRID};
pub use curves::{roc_pr, CurveKind, ScoredCurve};
pub use outliers::{overlay_max, shift_image, simulate_outliers, OutlierOrigin, OutlierSpec, SimulatedOutliers};
pub use percentiles::{percentile_report, PercentileRow};
pub use pixels::{pixel_fi_map, ChannelMode, PixelFiMap};
pub use scan::{layer_sensitivity, score_dataset, LayerSensitivity};
