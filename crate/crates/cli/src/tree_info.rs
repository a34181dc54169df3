use crate::config::RunConfig;
use crate::{format, output_dir, tree_params, Failure};
use serde::Serialize;
use sptree::tree::build_tree;

#[derive(Debug, Serialize)]
pub struct TreeInfo {
    pub gamma: f64,
    pub depth: usize,
    /// Sparse positions L ≤ D.
    pub sparse_positions: Vec<u64>,
    pub g: Vec<u64>,
    pub alpha: Vec<u64>,
    pub vertex_count: u64,
}

pub fn tree_info(cfg: &RunConfig) -> Result<TreeInfo, Failure> {
    let params = tree_params(cfg)?;
    let tree = build_tree(&params)?;
    let depth = cfg.tree.depth as u64;
    Ok(TreeInfo {
        gamma: params.gamma,
        depth: cfg.tree.depth,
        sparse_positions: params.sparse_positions.iter().copied().take_while(|&l| l <= depth).collect(),
        g: tree.g,
        alpha: tree.alpha,
        vertex_count: tree.vertex_count,
    })
}

pub fn run(cfg: &RunConfig) -> Result<i32, Failure> {
    let info = tree_info(cfg)?;
    let dir = output_dir(cfg)?;
    format::write_json(&dir.join("tree_info.json"), &info)?;
    Ok(0)
}
