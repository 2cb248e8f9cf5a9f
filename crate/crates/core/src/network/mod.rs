//! Two point-set encoders, the cross point-set attention block and the
//! movement head, with the "no correspondence" and "closest point" variants.

pub mod check;
pub mod config;
pub mod cpsa;
pub mod encoder;
pub mod model;
pub mod params;

pub use config::{CpsaConfig, EncoderConfig, ModelConfig, Preset, Variant};
pub use cpsa::{cpsa_correlation, movement_features, predict_movement, transform_movement};
pub use encoder::{encode_pointset, EncoderPlan};
pub use model::{CaseInputs, Model, Prediction};
pub use params::{ModelParams, ParamVars};
