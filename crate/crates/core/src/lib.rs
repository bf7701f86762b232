//! Weaving engine for Aspects of Assembly.
pub mod analysis;
pub mod assembly;
pub mod export;
pub mod lang;
pub mod manifest;
pub mod merge;
pub mod orchestrator;
pub mod sim;
pub mod weaving;
