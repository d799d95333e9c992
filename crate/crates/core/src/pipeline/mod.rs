//! Pipeline documents and their execution.
//!
//! Every node processes schedule entry `j` at tick `j + lag`, where the lag of
//! a node is the largest accumulated latency of its predecessors. Filters
//! with latency (the time derivative) therefore see aligned inputs without
//! any buffering outside the filter itself.

pub mod exec;
pub mod graph;
pub mod nodes;
pub mod schedule;
pub mod xml;

pub use exec::{Pipeline, RunSummary, TraceEvent};
pub use schedule::{resolve_schedule, ScheduleEntry};
pub use xml::{parse_pipeline, PipelineDoc, StepValueDefinition};
