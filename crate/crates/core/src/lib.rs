pub mod cli;
pub mod error;
pub mod geo;
pub mod mdt;
pub mod pipeline;
pub mod positioning;
pub mod radio;
pub mod scenario;
pub mod spatial;
pub mod stats;
