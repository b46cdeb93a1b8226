//! Euler–Maruyama simulation of the small-noise SDE.

mod path;
mod rng;

pub use path::{simulate_conjugated_u, simulate_path, simulate_trajectory, ExitObservation, PathConfig, PathMode, MAX_DT};
pub(crate) use path::{Advance, PathRunner};
pub use rng::{draw_increments, RngStream, PATH_DOMAIN};
