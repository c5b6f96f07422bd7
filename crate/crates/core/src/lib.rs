//! Hallucination detection, measurement and removal for machine-generated
//! visual instruction data.

pub mod chairmetrics;
pub mod corpus;
pub mod crosscheck;
pub mod experts;
pub mod pipeline;
pub mod probegen;
pub mod seesaw;
pub mod sgparse;
pub mod text;
