pub mod experiments;
pub mod tools;

use crate::errors::{CliError, CliResult};
use lsem_core::graph::MixedGraph;
use lsem_core::instances::GeneratorConfig;
use lsem_core::recovery::RecoveryError;
use lsem_core::stability::StabilityError;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream-separated generator: all stochastic work under one --seed draws
/// from distinct ChaCha streams, so stages stay independent of each other's
/// draw counts.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn numerical_from_recovery(e: RecoveryError) -> CliError {
    CliError::numerical(format!("recovery failed: {e}"))
}

pub fn map_stability(e: StabilityError) -> CliError {
    match e {
        StabilityError::BaselineRecoveryFailed(_) | StabilityError::AllZeroReference => {
            CliError::numerical(e.to_string())
        }
        other => CliError::validation(other.to_string()),
    }
}

/// Graph family selection shared by `generate` and the experiment commands.
pub enum Family {
    Path,
    Clique,
    Layered,
}

impl Family {
    pub fn parse(name: &str) -> CliResult<Family> {
        match name {
            "path" => Ok(Family::Path),
            "clique" => Ok(Family::Clique),
            "layered" => Ok(Family::Layered),
            other => Err(CliError::validation(format!(
                "unknown family {other:?} (expected path, clique or layered)"
            ))),
        }
    }

    /// Builds the graph; layered families consume the given rng.
    pub fn build(
        &self,
        n: usize,
        k: usize,
        p: f64,
        rng: &mut ChaCha8Rng,
    ) -> CliResult<MixedGraph> {
        let g = match self {
            Family::Path => MixedGraph::path_graph(n),
            Family::Clique => MixedGraph::clique_of_paths(n, k),
            Family::Layered => MixedGraph::layered_graph(n, k, p, rng),
        };
        g.map_err(|e| CliError::validation(e.to_string()))
    }

    pub fn ortho_depth(&self, k: usize) -> usize {
        match self {
            Family::Path => 1,
            Family::Clique | Family::Layered => k.max(1),
        }
    }
}

pub fn generator_config(h: f64, d: usize, depth: usize) -> CliResult<GeneratorConfig> {
    GeneratorConfig::with_depth(h, d, depth).map_err(|e| CliError::validation(e.to_string()))
}
