//! Safety-aware evaluation of 3D object detectors.
//!
//! A prediction is judged not only by overlap with the ground truth but by
//! whether it covers the object as seen from the ego vehicle: in the image
//! plane ([`usc::pv_constraint`]) and in bird's-eye view
//! ([`usc::bev_constraint`]). [`usc::usc_score`] turns the two views into a
//! score in `[0, 1]`, [`evaluation::evaluate`] aggregates it over a dataset
//! next to mAP and NDS, and [`loss`] provides a training objective that
//! rewards covering predictions.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod usc;

pub use error::{Error, Result};
