//! File formats, external processes, experiment orchestration and reporting
//! around `contractlab-core`.

pub mod artifacts;
pub mod experiment;
pub mod llm;
pub mod report;
pub mod sandbox;
pub mod scenario_io;
