//! Interpretable, differentiable control: decision trees, logical neural
//! networks, STRIPS world models and differentiable predictive control for
//! building HVAC tasks.

pub mod autodiff;
pub mod ddt;
pub mod grounding;
pub mod lnn;
pub mod optim;
pub mod planner;
pub mod sim;
pub mod training;
pub mod worldmodel;
