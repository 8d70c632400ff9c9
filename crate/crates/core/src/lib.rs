//! Critical bond percolation on high-dimensional discrete tori.
//!
//! Every level `p` is realized at once through one uniform weight per edge
//! (see [`coupling`]). On top of that the crate provides cluster statistics
//! and Kruskal-style sweeps ([`components`]), the closed-edge matrix between
//! large clusters with its spectral functionals ([`delta`]), the component
//! graph couplings ([`coalescent`]), sampling of the excursion limit
//! ([`zlambda`]), two-point-function convolutions ([`diagrams`]) and exact
//! enumeration on tiny graphs ([`oracle`]).

pub mod coalescent;
pub mod components;
pub mod coupling;
pub mod delta;
pub mod diagrams;
mod error;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod unionfind;
pub mod zlambda;

pub use error::{Error, Result};
