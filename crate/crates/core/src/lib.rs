//! Solvers for embedding a rooted tree into the plane (or `R^d`) so that
//! every node lands in its neighborhood and the total routed length is
//! minimal. Routes fanning out of one node may share trunk segments through
//! auxiliary junction points.
//!
//! Two domains are covered:
//!
//! * continuous: exact branch-and-bound over neighborhood components and
//!   junction topologies with convex inner solves ([`continuous`]);
//! * discrete: routing on a geometric graph such as a Hanan grid
//!   ([`grid`], [`discrete`]).
//!
//! [`milp`] writes the mixed-integer models for external solvers and
//! [`bench`] holds the instance generator and experiment harness.

pub mod augment;
pub mod bench;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod milp;
pub mod model;
pub mod svg;

pub use error::{Error, Result};
pub use model::{
    metric_dist, parse_instance, project_to_box, region_dist_lb, AxisBox, Instance, Metric,
    Neighborhood, Point, RootedTopology, Segment, Solution, SolveStats, Status,
};
