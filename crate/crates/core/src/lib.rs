//! One-shot object-to-object affordance grounding.
//!
//! The crate covers the whole pipeline: fusing multi-view 2D features onto
//! point clouds ([`fusion`]), building annotated object pairs ([`data`]),
//! the joint cross-attention affordance network ([`model`]), evaluation
//! metrics ([`metrics`]) and affordance-conditioned pose optimization
//! ([`planner`]).

pub mod cloud;
pub mod data;
pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod model;
pub mod planner;
pub mod se3;

pub use cloud::{
    denormalize_cloud, denormalize_pair, normalize_cloud, normalize_pair, AffordanceCategory,
    FeatureCloud, NormalizeRecord, ObjectPair, Point3,
};
pub use error::{Error, Result};
pub use io::{load_cloud, save_cloud};
pub use se3::{se3_apply, se3_from_params, se3_to_params, RigidTransform};
