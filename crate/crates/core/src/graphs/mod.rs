//! Finite random graphs `G(n, κ)`: sampling, components and experiments.

mod components;
mod experiments;
mod paths;
mod sample;

pub use components::{components, ComponentStats, UnionFind};
pub use experiments::{
    empirical_nk_convergence, mean_se, plant_atoms_experiment, replicate, scan, NkRow, PlantRow, ScanRow,
};
pub use paths::{count_paths, PATH_COUNT_MAX_N};
pub use sample::{
    planted_count, sample_chkns_family, sample_graph, ChknsVariant, EdgeRule, GraphSample, Strategy, VertexSpec,
};
