//! Path-integral tensor-network dynamics for finite driven transverse-field
//! Ising chains whose spins couple through their y and z components to
//! local bosonic baths.
//!
//! The pipeline runs model -> bath -> eta -> influence -> evolution, with
//! `observables::brute` as an exhaustive path-sum reference.

pub mod bath;
pub mod eta;
pub mod evolution;
pub mod influence;
pub mod model;
pub mod observables;
pub mod phasefactor;
pub mod quadrature;
pub mod scalar;
pub mod tncore;

use thiserror::Error;

pub use num_complex::Complex;
pub use scalar::Real;

/// Double precision complex number, the element type of every tensor.
pub type C64 = Complex<f64>;

pub type SystemModel = model::SystemModel<f64>;
pub type TimeScalar = model::TimeScalar<f64>;
pub type BathModel = bath::BathModel<f64>;
pub type SpectralComponent = bath::SpectralComponent<f64>;
pub type EtaCaches = eta::EtaCaches<f64>;
pub type QuadResult = quadrature::QuadResult<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Quad(#[from] quadrature::QuadError<f64>),
    #[error(transparent)]
    Eta(#[from] eta::EtaError),
    #[error(transparent)]
    Tn(#[from] tncore::TnError),
    #[error(transparent)]
    Influence(#[from] influence::InfluenceError),
    #[error(transparent)]
    Evolution(#[from] evolution::EvolutionError),
    #[error(transparent)]
    Observable(#[from] observables::ObservableError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
