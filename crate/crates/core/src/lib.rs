//! Core of the situational-graph mission system: the graph model, a 2D
//! world simulator, graph recording from perception, behavior-graph
//! planning and behavior execution.

pub mod executor;
pub mod fixtures;
pub mod geometry;
pub mod graph;
pub mod grid;
pub mod planner;
pub mod recording;
pub mod world;
