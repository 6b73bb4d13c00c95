//! Parallel dataset runs. Clip-level rayon maps over the pure per-clip
//! pipeline; collection preserves clip order, so results are identical to
//! the sequential reference regardless of `--jobs`.

use rayon::prelude::*;
use trackpipe_core::metrics::{count_accuracy, CountLabels, SpatialPattern};
use trackpipe_core::pipeline::{run_clip, DatasetRun, Evaluated, PipelineCtx, TimeBreakdown};
use trackpipe_core::tuner::Configuration;

use crate::errors::CliError;

pub fn par_run_dataset(
    ctx: &PipelineCtx<'_>,
    config: &Configuration,
) -> Result<DatasetRun, CliError> {
    let clip_count = ctx.dataset.clips.len() as u32;
    let runs = (0..clip_count)
        .into_par_iter()
        .map(|clip| run_clip(ctx, config, clip))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = DatasetRun { tracks_per_clip: Vec::with_capacity(runs.len()), time: TimeBreakdown::default() };
    for run in runs {
        out.time.add(&run.time);
        out.tracks_per_clip.push(run.tracks);
    }
    Ok(out)
}

pub fn par_evaluate(
    ctx: &PipelineCtx<'_>,
    config: &Configuration,
    patterns: &[SpatialPattern],
    labels: &CountLabels,
) -> Result<Evaluated, CliError> {
    let run = par_run_dataset(ctx, config)?;
    let accuracy = count_accuracy(&run.tracks_per_clip, patterns, labels)?;
    Ok(Evaluated { accuracy, runtime: run.time.total() })
}
