//! Layer-graph IR, the aliasing lint pass, and filter-placement rewrites.

pub mod fixtures;
pub mod ir;
pub mod lint;
pub mod rewrite;

pub use ir::{ActivationKind, LayerGraph, LayerNode, NodeKind};
pub use lint::{capacity_check, find_critical_paths, lint, BoundaryKind, CriticalPath, LintReport};
pub use rewrite::{rewrite, Policy, Rewrite, Variant};
