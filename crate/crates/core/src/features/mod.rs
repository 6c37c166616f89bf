//! Neighborhood-level confounders, built-environment characteristics and
//! treatment encoding.

mod aggregate;
mod built_env;
mod geo;
mod profile;
mod standardize;

use thiserror::Error;

use crate::emissions::EmissionsError;

pub use aggregate::{aggregate_neighborhood, Aggregate, ConfounderVector, TripIndex, CONFOUNDER_NAMES};
pub use built_env::{
    build_built_env, poi_density, rank_centers, transit_accessibility, transit_accessibility_from,
    BuiltEnvVector, Centers, GravityParams, TransitIndex, BUILT_ENV_NAMES, N_SUBCENTERS,
};
pub use geo::{haversine_km, WalkModel, EARTH_RADIUS_KM};
pub use profile::{
    build_profiles, confounder_matrix, encode_treatments, nearest_station_minutes, read_features_csv,
    treatment_matrix, write_features_csv, FeatureInputs, FeatureOptions, FeatureSet, NeighborhoodProfile,
    PROFILE_SCHEMA_VERSION,
};
pub use standardize::{Standardizer, FLIPPED};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("neighborhood `{0}` has no surveyed households")]
    EmptyNeighborhood(String),
    #[error("neighborhood `{0}` has no adult residents in the sample")]
    NoAdults(String),
    #[error("no green vote share for neighborhood `{0}`")]
    MissingGreenShare(String),
    #[error("household references unknown neighborhood `{0}`")]
    UnknownNeighborhood(String),
    #[error("neighborhood `{0}` has zero built-up area")]
    ZeroBuiltUpArea(String),
    #[error("neighborhood `{0}` has zero population")]
    ZeroPopulation(String),
    #[error("no neighborhoods")]
    NoNeighborhoods,
    #[error("{n} neighborhoods, at least {min} required")]
    TooFewNeighborhoods { n: usize, min: usize },
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error(transparent)]
    Emissions(#[from] EmissionsError),
    #[error("features table: {0}")]
    Table(String),
}
