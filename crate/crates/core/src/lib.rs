//! Causal attribution of household transport emissions to the built
//! environment: ingestion, feature building, cross-fitted double machine
//! learning with a causal forest, SHAP moderation analysis and housing
//! allocation scenarios.

pub mod boosted_trees;
pub mod causal_dml;
pub mod emissions;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod tree;

pub use scalar::Scalar;

/// Double-precision aliases for the generic model types.
pub type CausalForest = causal_dml::CausalForestModel<f64>;
pub type Effect = causal_dml::EffectEstimate<f64>;
pub type Residuals = causal_dml::ResidualizedData<f64>;
pub type GbtModel = boosted_trees::GbtModel<f64>;
pub type RegressionTree = tree::RegressionTree<f64>;
pub type Standardizer = features::Standardizer<f64>;
pub type EmissionFactors = emissions::EmissionFactorTable<f64>;
