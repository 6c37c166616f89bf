//! SHAP attributions of the effect surface to the confounders.

mod moderation;
mod treeshap;

pub use moderation::*;
pub use treeshap::{ensemble_shap, tree_shap};
