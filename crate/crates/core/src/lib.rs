pub mod bethe;
pub mod covers;
pub mod error;
pub mod gf;
pub mod graph;
pub mod hom;
pub mod io;
pub mod lattice;
pub mod marginals;
pub mod matroid;
pub mod model;
pub mod potts;
pub mod scalar;
pub mod verify;

pub use bethe::{
    maximize_bethe, mean_field, run_bp, BetheOptions, BetheSolution, BpOptions, BpResult,
    MeanFieldSolution,
};
pub use error::{Error, Result};
pub use gf::{GFMatrix, GaloisField};
pub use graph::Graph;
pub use hom::HomModel;
pub use lattice::BitVector;
pub use marginals::PseudoMarginals;
pub use model::FactorGraph;
pub use potts::PottsModel;
pub use scalar::Scalar;

pub type FactorGraph64 = FactorGraph<f64>;
pub type FactorGraph32 = FactorGraph<f32>;
pub type PottsModel64 = PottsModel<f64>;
pub type PottsModel32 = PottsModel<f32>;
pub type HomModel64 = HomModel<f64>;
pub type HomModel32 = HomModel<f32>;
pub type PseudoMarginals64 = PseudoMarginals<f64>;
pub type PseudoMarginals32 = PseudoMarginals<f32>;
