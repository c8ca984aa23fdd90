//! Numerical tensor calculus for weighted Riemannian almost-product manifolds.
//!
//! A manifold is a single coordinate chart with a metric given by
//! [`expr::Expr`] entries. Metric derivatives come from second-order jets,
//! so Christoffel symbols and curvature are exact up to roundoff.
//!
//! Curvature convention: `R(u,v)w = ∇_u∇_v w − ∇_v∇_u w − ∇_[u,v] w` and
//! `K(u,v) = R(u,v,v,u) / (|u|²|v|² − g(u,v)²)`, so the round sphere has
//! `K = +1`.
//!
//! The crate is `no_std` with `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod almost_product;
pub mod bench;
pub mod bounds;
pub mod error;
pub mod expr;
pub mod gallery;
pub mod geodesic;
pub mod jet;
pub mod linalg;
pub mod manifold;
pub mod weighted;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;
