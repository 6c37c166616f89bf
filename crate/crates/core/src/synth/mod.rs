//! Synthetic data with known ground truth.

mod city;
mod dgp;

pub use city::{generate_city, read_truth_csv, write_truth_csv, CitySpec, SyntheticCity, TruthRow};
pub use dgp::{generate_matrix, naive_slope, EffectRule, SyntheticData, SyntheticSpec};
