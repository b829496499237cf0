//! The `run` command.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dsac::trainer::{Checkpoint, NoHooks};

use crate::config::RunConfig;
use crate::metrics::MetricsWriter;
use crate::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config-resolved.echo";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub iterations: usize,
    pub rows: usize,
    pub final_global_utility: Option<f64>,
    pub output_dir: PathBuf,
}

fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CliError> {
    let text = checkpoint.to_json().map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

/// Train as configured and write metrics, the resolved config and
/// checkpoints into the output directory.
pub fn execute(mut cfg: RunConfig, overrides: &RunOverrides, threads: usize) -> Result<RunSummary, CliError> {
    if let Some(seed) = overrides.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.run.output_dir = out.clone();
    }
    let problem = cfg.build()?;
    let dsac = problem.dsac.with_threads(threads).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = cfg.run.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.to_toml()).map_err(|e| CliError::io("writing resolved config", e))?;

    let file = File::create(dir.join(METRICS_FILE)).map_err(|e| CliError::io("creating metrics file", e))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file), dsac.mdp().n_agents(), cfg.run.wall_clock)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let interval = cfg.run.metrics_interval;
    let ckpt_interval = cfg.run.checkpoint_interval;
    let mut rows = 0;
    let mut last = None;
    let mut side_error: Option<CliError> = None;
    let result = dsac.run(dsac.initial_state(cfg.run.seed), &mut NoHooks, |state, m| {
        last = Some(m.global_utility);
        if m.k % interval == 0 {
            if let Err(e) = writer.write(m) {
                side_error = Some(CliError::Runtime(format!("writing metrics: {e}")));
                return Err(dsac::Error::Domain("metrics output failed".into()));
            }
            rows += 1;
        }
        if ckpt_interval > 0 && state.k % ckpt_interval == 0 {
            let path = dir.join(format!("checkpoint_{}.json", state.k));
            if let Err(e) = write_checkpoint(&path, &Checkpoint::from_state(state)) {
                side_error = Some(e);
                return Err(dsac::Error::Domain("checkpoint output failed".into()));
            }
        }
        Ok(())
    });
    writer.flush().map_err(|e| CliError::io("writing metrics", e))?;
    if let Some(e) = side_error {
        return Err(e);
    }
    let (state, metrics) = result.map_err(|e| CliError::Runtime(e.to_string()))?;
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &Checkpoint::from_state(&state))?;
    Ok(RunSummary {
        iterations: metrics.len(),
        rows,
        final_global_utility: last,
        output_dir: dir,
    })
}
