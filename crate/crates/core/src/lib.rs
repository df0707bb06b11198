//! Multi-robot motion planning by discrete-guided diffusion.
//!
//! The pipeline decomposes the free space into convex regions, solves a
//! grid MAPF instance, splits the plan into per-region subproblems, samples
//! each with a constrained score-based model and repairs the result.

pub mod geometry;
pub mod decomposition;
pub mod mapf;
pub mod assignment;
pub mod trajectory;
pub mod diffusion;
pub mod repair;
pub mod harness;
