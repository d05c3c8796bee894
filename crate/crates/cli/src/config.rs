//! Flag resolution: command-line flags override the optional TOML file,
//! which overrides built-in defaults.

use serde::Deserialize;

use clustervis_core::pipeline::PipelineParams;

use crate::{invalid, read, CliResult, GlobalArgs};

/// Keys accepted in `--config` files.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    trials: Option<usize>,
    alpha: Option<f64>,
    largest_component: Option<bool>,
    strict_bottom: Option<bool>,
    local_move_passes: Option<usize>,
    layout_iterations: Option<usize>,
    weighted_attraction: Option<bool>,
    jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub params: PipelineParams,
    /// Seed given explicitly by flag or file, if any.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> CliResult<Self> {
        let file: ConfigFile = match &args.config {
            Some(path) => toml::from_str(&read(path)?)
                .map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?,
            None => ConfigFile::default(),
        };
        let defaults = PipelineParams::default();
        let seed = args.seed.or(file.seed);
        let params = PipelineParams {
            seed: seed.unwrap_or(defaults.seed),
            trials: args.trials.or(file.trials).unwrap_or(defaults.trials),
            alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            largest_component: args.largest_component || file.largest_component.unwrap_or(false),
            strict_bottom: args.strict_bottom || file.strict_bottom.unwrap_or(false),
            local_move_passes: file.local_move_passes.unwrap_or(defaults.local_move_passes),
            layout_iterations: file.layout_iterations.unwrap_or(defaults.layout_iterations),
            weighted_attraction: file.weighted_attraction.unwrap_or(false),
        };
        params.validate()?;
        let jobs = args.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(invalid("jobs must be at least 1"));
        }
        Ok(Settings { params, seed, jobs })
    }
}
