//! Battery health prognostics.
//!
//! The pipeline turns per-cycle capacity measurements into state-of-health
//! estimates, remaining-useful-life predictions, and confidence intervals:
//!
//! 1. [`dataset`] ingests cycling data and builds leave-one-battery-out splits.
//! 2. [`vmd`] decomposes a capacity series into band-limited mode functions,
//!    with [`pso`]-driven search for the decomposition parameters.
//! 3. [`features`] classifies modes into low/high-frequency groups by
//!    zero-crossing rate and builds normalized sliding-window tensors.
//! 4. [`neural`] is the dual-stream predictor: CNN-LSTM over the
//!    low-frequency group, bidirectional GRU over the high-frequency group,
//!    attention fusion, dense head. Trained from scratch, no framework.
//! 5. [`degradation`] is the knowledge model: a double-exponential capacity
//!    law whose parameters are tracked by a particle filter.
//! 6. [`prognosis`] runs the cycle-by-cycle forecast loop until end of life,
//!    combining the neural predictor with the particle filter.
//! 7. [`metrics`] computes MAE/RMSE/MAPE reports for the evaluation tasks.
//! 8. [`pipeline`] glues decomposition, windowing, and the model together
//!    for fleet training and inference.

pub mod dataset;
pub mod degradation;
pub mod features;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod prognosis;
pub mod pso;
pub mod vmd;

pub use dataset::{CapacitySeries, DatasetError, FleetSplit};
pub use degradation::{DegradationParams, DegradationError, ParticleEnsemble, PfConfig};
pub use features::{BandPartition, FeatureError, WindowedDataset};
pub use metrics::{EvalReport, MetricsError};
pub use neural::{DualStreamModel, ModelConfig, NeuralError, TrainConfig};
pub use pipeline::{PipelineError, PipelineSpec, TrainedArtifact};
pub use prognosis::{CapacityPredictor, Prognosis, PrognosisError};
pub use vmd::{ImfSet, VmdConfig, VmdError};
