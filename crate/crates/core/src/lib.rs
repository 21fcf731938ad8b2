//! Conformal risk control for binary image segmentation.
//!
//! Four calibration methods are provided, all controlling the expected
//! false negative rate (FNR) of pixel-level prediction sets:
//!
//! - **CRC**: a single threshold on raw pixel probabilities.
//! - **CRA**: a single threshold on the adaptive mass score, so each image
//!   keeps the top pixels carrying a fixed fraction of its predicted mass.
//! - **CCRA**: CRA on probabilities recalibrated by isotonic regression.
//! - **CCRA-S**: CCRA with separate thresholds per stratum of total
//!   predicted mass.
//!
//! Thresholds are found exactly as weighted quantiles of pixel scores
//! ([`risk_quantile`]), with a grid search kept as an oracle. The
//! [`synthetic`] and [`evaluation`] modules reproduce the repeated-split
//! protocol on generated data with known pixel probabilities.

pub mod cli;
pub mod dataset_io;
pub mod error;
pub mod evaluation;
pub mod methods;
pub mod prob_calibration;
pub mod risk_quantile;
pub mod scores;
pub mod stratification;
pub mod synthetic;

pub use dataset_io::{GroundTruthMask, ProbabilityMap};
pub use error::{Error, Result};
pub use methods::{FittedMethod, MethodKind, MethodSpec};
pub use scores::{PredictionSet, ScoreField, ScoreKind};
