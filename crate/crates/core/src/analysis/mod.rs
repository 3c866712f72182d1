//! Trajectory trees, distribution statistics and noise sweeps.

pub mod stats;
pub mod sweep;
pub mod tree;

pub use stats::{distribution_stats, DistributionStats, Herald, Summary};
pub use sweep::{run_sweep, SweepCell, SweepGrid, SweepSpec};
pub use tree::{enumerate_tree, tree_report, TrajectoryTree, TreeLeaf, TreeRow};
