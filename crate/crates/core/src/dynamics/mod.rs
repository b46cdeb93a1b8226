//! Vector fields given through explicit linearizing conjugacies, their
//! deterministic flows, and exit-domain geometry.

mod domain;
mod flow;
mod model;

pub use domain::{sphere_directions, BoxDomain, Domain, LevelSet, SmoothDomain};
pub use flow::{
    box_boundary_samples, default_t_cap, exit_time_deterministic, flow, transversality_check, travel_time_bounds,
    FlowOptions, DEFAULT_FACE_POINTS,
};
pub(crate) use flow::{exit_time_from_inside, DomainProbe};
pub use model::{
    ConjugacyVariant, Conjugacy, ConjugateFieldModel, CustomConjugacy, NoiseForm, NoiseModel,
    QUADRATIC_RADIUS_MARGIN,
};
