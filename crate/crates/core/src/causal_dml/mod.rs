//! Double machine learning: cross-fitted nuisances, a causal-forest final
//! stage for θ(x), per-neighborhood effects and their decomposition.

mod crossfit;
mod effects;
mod forest;

use thiserror::Error;

use crate::boosted_trees::GbtError;

pub use crossfit::{crossfit_residualize, pooled_effect, CrossfitParams, ResidualizedData};
pub use effects::{
    decompose_effect, estimate_effects, fit_metrics, Decomposition, EffectEstimate, FitMetrics, Share,
    FIVE_D_GROUPS,
};
pub use forest::{
    fit_causal_forest, CausalForestModel, CausalForestParams, CausalLeaf, CausalTree, FOREST_SCHEMA_VERSION,
};

#[derive(Debug, Error, PartialEq)]
pub enum DmlError {
    #[error("{n} units, at least {needed} required")]
    TooFewUnits { n: usize, needed: usize },
    #[error("inconsistent row or column counts")]
    DimensionMismatch,
    #[error("invalid causal forest parameters")]
    InvalidParams,
    #[error("every effect component is zero")]
    AllZeroEffects,
    #[error(transparent)]
    Nuisance(#[from] GbtError),
    #[error("model document: {0}")]
    Document(String),
}
