//! Planning-based device-control agent: a text-graph world model of an app,
//! model-emitted plans executed by a closed interpreter, a deterministic
//! device simulator, model backends, and a benchmark harness.

pub mod agent;
pub mod device_sim;
pub mod harness;
pub mod model_backend;
pub mod plan_dsl;
pub mod prompts;
pub mod world_model;
