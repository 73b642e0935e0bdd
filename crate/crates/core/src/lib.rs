//! Domination certificates for linear cocycles and matrix group representations.
//!
//! The crate is organised bottom-up: [`matgeo`] holds the singular value and
//! Grassmannian machinery, [`cocycle`] works with finite matrix sequences,
//! [`group`] provides word problems and geodesic automata, [`reprcheck`] and
//! [`multicone`] check representations, and [`morse`] audits orbits in the
//! symmetric space of SL(d,R).

pub mod cocycle;
pub mod error;
pub mod group;
pub mod io;
pub mod matgeo;
pub mod morse;
pub mod multicone;
pub mod reprcheck;

pub use error::{Error, Result};
