//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use trackpipe_core::cost::{ArchId, DetectorCost, ProxyLevelId};
use trackpipe_core::geometry::Track;
use trackpipe_core::metrics::{
    count_accuracy, limit_query, CountLabels, SpatialPattern,
};
use trackpipe_core::pipeline::{
    build_proxy_frame_cache, reference_frame_detections, PipelineCtx, Refiner,
};
use trackpipe_core::refine::{
    build_clusters, default_eps, refine, PathGridIndex, DEFAULT_INDEX_CELL, DEFAULT_MIN_PTS,
};
use trackpipe_core::sim::{generate_clip, stream_rng, SceneSpec, SimProfile, SyntheticDataset, STREAM_PROXY};
use trackpipe_core::sim::proxy_scores;
use trackpipe_core::tracker::{
    sample_training_examples, train_scorer, GapSequence, TrainOptions,
};
use trackpipe_core::tuner::{
    cache_phase, select_theta_best, tune, Configuration, ThetaBest, TuneCaches, TuneOptions,
};
use trackpipe_core::windows::{
    est_time, group_cells, recall_runtime, select_window_sizes, threshold,
};

use crate::args::*;
use crate::errors::CliError;
use crate::files::*;
use crate::runs::{par_evaluate, par_run_dataset};

fn load_dataset(path: &Path) -> Result<SyntheticDataset, CliError> {
    let ds: SyntheticDataset = load_json(path)?;
    ds.spec.validate().map_err(CliError::from)?;
    if ds.clips.len() != ds.spec.clip_count as usize {
        return Err(CliError::invalid(format!(
            "dataset has {} clips but its spec says {}",
            ds.clips.len(),
            ds.spec.clip_count
        )));
    }
    Ok(ds)
}

/// Profile from `--cost` or the defaults for the dataset's frame size.
fn load_profile(path: Option<&PathBuf>, ds: &SyntheticDataset) -> Result<SimProfile, CliError> {
    match path {
        Some(p) => load_json(p),
        None => Ok(SimProfile::default_for(ds.spec.frame)),
    }
}

/// Heaviest architecture = the slowest full-frame pass.
fn slowest_arch(profile: &SimProfile, ds: &SyntheticDataset) -> Result<ArchId, CliError> {
    let full = ds.spec.frame.full_window();
    profile
        .cost
        .archs()
        .map(|arch| profile.cost.detect_time(arch, full).map(|t| (arch, t)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(arch, _)| arch)
        .ok_or_else(|| CliError::invalid("cost model has no detector architectures"))
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut spec: SceneSpec = load_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    spec.validate()?;
    let clips = (0..spec.clip_count)
        .into_par_iter()
        .map(|i| generate_clip(&spec, i))
        .collect();
    let ds = SyntheticDataset { spec, clips };
    save_json(&args.out, &ds)?;
    if let Some(path) = &args.labels_out {
        save_json(path, &ds.labels())?;
    }
    if let Some(path) = &args.patterns_out {
        save_json(path, &ds.spec.patterns())?;
    }
    RunManifest::new("generate", ds.spec.rng_seed)
        .input("spec", Some(&args.spec))
        .save_beside(&args.out)?;
    let objects: usize = ds.clips.iter().map(|c| c.tracks.len()).sum();
    println!(
        "generated {} clips x {} frames, {} objects -> {}",
        ds.clips.len(),
        ds.spec.duration,
        objects,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_select_best(args: &SelectBestArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.dataset)?;
    let labels: CountLabels = load_json(&args.labels)?;
    let patterns: Vec<SpatialPattern> = load_json(&args.patterns)?;
    let profile = load_profile(args.cost.as_ref(), &ds)?;
    let gaps = GapSequence::up_to(args.max_gap)?;
    let dims = ds.spec.frame;

    let ctx = PipelineCtx::new(&ds, &profile, args.seed);
    let start = Configuration::slowest(slowest_arch(&profile, &ds)?, dims, args.confidence);
    let theta = select_theta_best(start, dims, &gaps, |config| {
        par_evaluate(&ctx, config, &patterns, &labels)
    })?;

    println!(
        "theta_best: arch {:?} res {}x{} gap {} -> accuracy {:.4}",
        theta.config.arch,
        theta.config.resolution.w,
        theta.config.resolution.h,
        theta.config.gap,
        theta.accuracy
    );
    save_json(&args.out, &theta)?;
    RunManifest::new("select-best", args.seed)
        .input("dataset", Some(&args.dataset))
        .input("labels", Some(&args.labels))
        .input("patterns", Some(&args.patterns))
        .input("cost", args.cost.as_ref())
        .save_beside(&args.out)
}

pub fn cmd_train_scorer(args: &TrainScorerArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.dataset)?;
    let theta: ThetaBest = load_json(&args.theta)?;
    let profile = load_profile(args.cost.as_ref(), &ds)?;
    let gaps = GapSequence::up_to(args.max_gap)?;

    let ctx = PipelineCtx::new(&ds, &profile, args.seed);
    let run = par_run_dataset(&ctx, &theta.config)?;
    let examples =
        sample_training_examples(&run.tracks_per_clip, &gaps, args.examples, args.seed)?;
    let trained = train_scorer(&examples, ds.spec.frame, &TrainOptions::default())?;

    println!(
        "trained on {} examples; held-out accuracy {:.4} ({} held out)",
        trained.train_examples, trained.heldout_accuracy, trained.heldout_examples
    );
    save_json(
        &args.out,
        &ScorerFile {
            scorer: trained.scorer,
            heldout_accuracy: trained.heldout_accuracy,
            train_examples: trained.train_examples,
            heldout_examples: trained.heldout_examples,
        },
    )?;
    RunManifest::new("train-scorer", args.seed)
        .input("dataset", Some(&args.dataset))
        .input("theta", Some(&args.theta))
        .input("cost", args.cost.as_ref())
        .save_beside(&args.out)
}

pub fn cmd_cache(args: &CacheArgs) -> Result<(), CliError> {
    let train = load_dataset(&args.train)?;
    let val = load_dataset(&args.val)?;
    if train.spec.frame != val.spec.frame {
        return Err(CliError::invalid("training and validation frame sizes differ"));
    }
    let theta: ThetaBest = load_json(&args.theta)?;
    let labels: CountLabels = load_json(&args.labels)?;
    let patterns: Vec<SpatialPattern> = load_json(&args.patterns)?;
    let profile = load_profile(args.cost.as_ref(), &train)?;
    let dims = train.spec.frame;

    // Training-set products: reference tracks -> clusters; reference
    // detections -> window-size set.
    let train_ctx = PipelineCtx::new(&train, &profile, args.seed);
    let train_run = par_run_dataset(&train_ctx, &theta.config)?;
    let pooled: Vec<Track> = train_run.tracks_per_clip.into_iter().flatten().collect();
    let (clusters, skipped) = build_clusters(&pooled, default_eps(dims), DEFAULT_MIN_PTS)?;
    if !skipped.is_empty() {
        eprintln!("note: {} single-detection reference tracks skipped", skipped.len());
    }

    let reference_dets = reference_frame_detections(&train_ctx, &theta.config)?;
    let det_cost = DetectorCost::new(&profile.cost, theta.config.arch, dims, theta.config.resolution);
    let sizes = select_window_sizes(&reference_dets, args.window_sizes, &det_cost, dims, args.max_frames)?;
    println!(
        "window sizes: {:?}; {} reference clusters",
        sizes.sizes().iter().map(|s| format!("{}x{}", s.w, s.h)).collect::<Vec<_>>(),
        clusters.len()
    );

    // Validation-set caches.
    let val_ctx = PipelineCtx::new(&val, &profile, args.seed);
    let frame_cache = build_proxy_frame_cache(&val_ctx, &theta.config)?;
    let archs: Vec<ArchId> = profile.cost.archs().collect();
    let levels: Vec<ProxyLevelId> = profile.cost.proxy_levels().collect();
    let caches: TuneCaches = cache_phase(
        &theta.config,
        &archs,
        dims,
        &levels,
        |config| par_evaluate(&val_ctx, config, &patterns, &labels),
        |level, b| {
            Ok(recall_runtime(&frame_cache, level, b, &sizes, &det_cost, dims)?)
        },
    )?;

    save_json(
        &args.out,
        &CachesFile {
            theta,
            sizes,
            clusters,
            index_cell: DEFAULT_INDEX_CELL,
            detection: caches.detection,
            proxy: caches.proxy,
        },
    )?;
    RunManifest::new("cache", args.seed)
        .input("train", Some(&args.train))
        .input("val", Some(&args.val))
        .input("theta", Some(&args.theta))
        .input("labels", Some(&args.labels))
        .input("patterns", Some(&args.patterns))
        .input("cost", args.cost.as_ref())
        .save_beside(&args.out)
}

pub fn cmd_tune(args: &TuneArgs) -> Result<(), CliError> {
    let val = load_dataset(&args.val)?;
    let caches: CachesFile = load_json(&args.caches)?;
    let scorer: ScorerFile = load_json(&args.scorer)?;
    let labels: CountLabels = load_json(&args.labels)?;
    let patterns: Vec<SpatialPattern> = load_json(&args.patterns)?;
    let profile = load_profile(args.cost.as_ref(), &val)?;
    let gaps = GapSequence::up_to(args.max_gap)?;
    let dims = val.spec.frame;
    let index = PathGridIndex::build(&caches.clusters, caches.index_cell);

    let mut ctx = PipelineCtx::new(&val, &profile, args.seed);
    ctx.sizes = Some(&caches.sizes);
    ctx.scorer = Some(&scorer.scorer);
    ctx.refiner = Some(Refiner::new(&caches.clusters, &index));

    let tune_caches = TuneCaches { detection: caches.detection.clone(), proxy: caches.proxy.clone() };
    let opts = TuneOptions { speedup: args.speedup, max_iters: args.max_iters };
    let result = tune(
        &caches.theta.config,
        &tune_caches,
        &profile.cost,
        dims,
        &gaps,
        &opts,
        |configs: &[Configuration]| {
            configs
                .iter()
                .map(|c| par_evaluate(&ctx, c, &patterns, &labels))
                .collect::<Result<Vec<_>, CliError>>()
        },
    )?;

    for p in &result.curve {
        println!("{}: runtime {:.1} accuracy {:.4}", p.id, p.runtime, p.accuracy);
    }
    println!(
        "{} points, {} iterations, {} pipeline evaluations",
        result.curve.len(),
        result.iterations,
        result.evaluations
    );

    save_json(
        &args.out,
        &CurveFile {
            speedup: args.speedup,
            evaluations: result.evaluations,
            iterations: result.iterations,
            points: result.curve.clone(),
        },
    )?;
    if let Some(csv_path) = &args.csv_out {
        let mut wtr = csv::Writer::from_path(csv_path)
            .map_err(|e| CliError::invalid(format!("{}: {e}", csv_path.display())))?;
        wtr.write_record(["runtime", "accuracy", "config_id"])
            .and_then(|_| {
                for p in &result.curve {
                    wtr.write_record(&[
                        format!("{}", p.runtime),
                        format!("{}", p.accuracy),
                        p.id.clone(),
                    ])?;
                }
                wtr.flush()?;
                Ok(())
            })
            .map_err(|e| CliError::invalid(format!("{}: {e}", csv_path.display())))?;
    }
    RunManifest::new("tune", args.seed)
        .input("val", Some(&args.val))
        .input("caches", Some(&args.caches))
        .input("scorer", Some(&args.scorer))
        .input("labels", Some(&args.labels))
        .input("patterns", Some(&args.patterns))
        .input("cost", args.cost.as_ref())
        .save_beside(&args.out)
}

/// Resolve the configuration to execute: an explicit curve point, the
/// best-accuracy configuration, or a manifest replay.
fn resolve_config(args: &PipelineArgs) -> Result<(Configuration, String), CliError> {
    if let (Some(curve_path), Some(id)) = (&args.curve, &args.config_id) {
        let curve: CurveFile = load_json(curve_path)?;
        let point = curve
            .points
            .iter()
            .find(|p| &p.id == id)
            .ok_or_else(|| CliError::missing(format!("config id `{id}` not in curve file")))?;
        return Ok((point.config.clone(), point.id.clone()));
    }
    if let Some(theta_path) = &args.theta {
        let theta: ThetaBest = load_json(theta_path)?;
        return Ok((theta.config, "theta-best".into()));
    }
    Err(CliError::missing(
        "no configuration: pass --curve with --config-id, or --theta, or --manifest",
    ))
}

pub fn cmd_pipeline(args: &PipelineArgs) -> Result<(), CliError> {
    // A manifest supplies defaults; explicit flags override.
    let mut args = args.clone();
    if let Some(manifest_path) = &args.manifest {
        let manifest: RunManifest = load_json(manifest_path)?;
        manifest.validate()?;
        if args.dataset.is_none() {
            args.dataset = Some(manifest.get("dataset")?.clone());
        }
        if args.curve.is_none() {
            args.curve = manifest.inputs.get("curve").cloned();
        }
        if args.theta.is_none() {
            args.theta = manifest.inputs.get("theta").cloned();
        }
        if args.caches.is_none() {
            args.caches = manifest.inputs.get("caches").cloned();
        }
        if args.scorer.is_none() {
            args.scorer = manifest.inputs.get("scorer").cloned();
        }
        if args.cost.is_none() {
            args.cost = manifest.inputs.get("cost").cloned();
        }
        if args.config_id.is_none() {
            args.config_id = manifest.config_id.clone();
        }
        if args.seed == 0 {
            args.seed = manifest.seed;
        }
    }
    let dataset_path = args
        .dataset
        .clone()
        .ok_or_else(|| CliError::missing("no dataset: pass --dataset or --manifest"))?;
    let ds = load_dataset(&dataset_path)?;
    let profile = load_profile(args.cost.as_ref(), &ds)?;
    let (config, config_id) = resolve_config(&args)?;

    let caches: Option<CachesFile> = match &args.caches {
        Some(p) => Some(load_json(p)?),
        None => None,
    };
    let scorer: Option<ScorerFile> = match &args.scorer {
        Some(p) => Some(load_json(p)?),
        None => None,
    };
    let index = caches
        .as_ref()
        .map(|c| PathGridIndex::build(&c.clusters, c.index_cell));

    let mut ctx = PipelineCtx::new(&ds, &profile, args.seed);
    if let Some(c) = &caches {
        ctx.sizes = Some(&c.sizes);
        if !args.no_refine {
            ctx.refiner = Some(Refiner::new(&c.clusters, index.as_ref().unwrap()));
        }
    }
    if let Some(s) = &scorer {
        ctx.scorer = Some(&s.scorer);
    }

    let run = par_run_dataset(&ctx, &config)?;
    let out = TracksFile {
        config_id: config_id.clone(),
        clip_duration: ds.spec.duration,
        clips: run
            .tracks_per_clip
            .into_iter()
            .enumerate()
            .map(|(i, tracks)| ClipTracks { clip: i as u32, tracks })
            .collect(),
        time: run.time,
        total_time: run.time.total(),
    };
    println!(
        "executed {} on {} clips: proxy {:.1} detect {:.1} track {:.1} refine {:.1} total {:.1}",
        config_id,
        out.clips.len(),
        out.time.proxy,
        out.time.detect,
        out.time.track,
        out.time.refine,
        out.total_time
    );
    save_json(&args.out, &out)?;
    RunManifest::new("pipeline", args.seed)
        .input("dataset", Some(&dataset_path))
        .input("curve", args.curve.as_ref())
        .input("theta", args.theta.as_ref())
        .input("caches", args.caches.as_ref())
        .input("scorer", args.scorer.as_ref())
        .input("cost", args.cost.as_ref())
        .config(Some(config_id))
        .save_beside(&args.out)
}

pub fn cmd_refine_run(args: &RefineRunArgs) -> Result<(), CliError> {
    let tracks: TracksFile = load_json(&args.tracks)?;
    let caches: CachesFile = load_json(&args.caches)?;
    let index = PathGridIndex::build(&caches.clusters, caches.index_cell);
    let k = args.k_neighbors;
    let refined = TracksFile {
        config_id: format!("{}+refined", tracks.config_id),
        clip_duration: tracks.clip_duration,
        clips: tracks
            .clips
            .iter()
            .map(|entry| ClipTracks {
                clip: entry.clip,
                tracks: entry
                    .tracks
                    .iter()
                    .map(|t| refine(t, &index, &caches.clusters, k, tracks.clip_duration).0)
                    .collect(),
            })
            .collect(),
        time: tracks.time,
        total_time: tracks.total_time,
    };
    save_json(&args.out, &refined)?;
    println!("refined {} clips -> {}", refined.clips.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct IndexCellDump {
    cell: (i64, i64),
    clusters: Vec<usize>,
}

#[derive(Serialize)]
struct RefineInspectDump<'a> {
    index_cell: f64,
    clusters: &'a [trackpipe_core::refine::TrackCluster],
    cells: Vec<IndexCellDump>,
}

pub fn cmd_refine_inspect(args: &RefineInspectArgs) -> Result<(), CliError> {
    let caches: CachesFile = load_json(&args.caches)?;
    let index = PathGridIndex::build(&caches.clusters, caches.index_cell);
    let dump = RefineInspectDump {
        index_cell: index.cell,
        clusters: &caches.clusters,
        cells: index
            .cells
            .iter()
            .map(|(cell, ids)| IndexCellDump { cell: *cell, clusters: ids.clone() })
            .collect(),
    };
    match &args.out {
        Some(path) => save_json(path, &dump)?,
        None => println!("{}", serde_json::to_string_pretty(&dump).unwrap()),
    }
    Ok(())
}

#[derive(Serialize)]
struct PlanDump {
    clip: u32,
    frame: u32,
    level: u32,
    b_proxy: f64,
    positive_cells: Vec<(u32, u32)>,
    rects: Vec<trackpipe_core::geometry::Rect>,
    est_time: f64,
    proxy_time: f64,
}

pub fn cmd_plan_dump(args: &PlanDumpArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.dataset)?;
    let caches: CachesFile = load_json(&args.caches)?;
    let profile = load_profile(args.cost.as_ref(), &ds)?;
    let dims = ds.spec.frame;
    let clip = ds
        .clips
        .get(args.clip as usize)
        .ok_or_else(|| CliError::invalid(format!("clip {} out of range", args.clip)))?;
    let gt = clip
        .frames
        .get(args.frame as usize)
        .ok_or_else(|| CliError::invalid(format!("frame {} out of range", args.frame)))?;
    let level_id = ProxyLevelId(args.level);
    let level = profile
        .proxy_level(level_id)
        .ok_or_else(|| CliError::missing(format!("proxy level {} not in profile", args.level)))?;

    let mut rng = stream_rng(
        args.seed,
        &[STREAM_PROXY, u64::from(args.clip), u64::from(args.frame), u64::from(args.level)],
    );
    let grid = proxy_scores(gt, dims, level, &mut rng);
    let cells = threshold(&grid, args.b_proxy);
    let theta = &caches.theta.config;
    let det_cost = DetectorCost::new(&profile.cost, theta.arch, dims, theta.resolution);
    let plan = group_cells(&cells, &caches.sizes, &det_cost, dims)?;
    let dump = PlanDump {
        clip: args.clip,
        frame: args.frame,
        level: args.level,
        b_proxy: args.b_proxy,
        positive_cells: cells.iter().copied().collect(),
        est_time: est_time(&plan.rects, &det_cost)?,
        rects: plan.rects,
        proxy_time: profile.cost.proxy_time(level_id)?,
    };
    match &args.out {
        Some(path) => save_json(path, &dump)?,
        None => println!("{}", serde_json::to_string_pretty(&dump).unwrap()),
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    count_accuracy: f64,
    clips: usize,
    per_clip: Vec<ClipAccuracy>,
}

#[derive(Serialize)]
struct ClipAccuracy {
    clip: u32,
    accuracy: f64,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let tracks: TracksFile = load_json(&args.tracks)?;
    let labels: CountLabels = load_json(&args.labels)?;
    let patterns: Vec<SpatialPattern> = load_json(&args.patterns)?;
    let per_clip_tracks = tracks.tracks_per_clip()?;
    let overall = count_accuracy(&per_clip_tracks, &patterns, &labels)?;
    let per_clip = per_clip_tracks
        .iter()
        .enumerate()
        .map(|(i, clip_tracks)| {
            let single = count_accuracy(
                std::slice::from_ref(clip_tracks),
                &patterns,
                &CountLabels {
                    clips: [(0u32, labels.clips.get(&(i as u32)).cloned().unwrap_or_default())]
                        .into_iter()
                        .collect(),
                },
            )?;
            Ok(ClipAccuracy { clip: i as u32, accuracy: single })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = EvalReport { count_accuracy: overall, clips: per_clip.len(), per_clip };
    println!("count accuracy: {:.4} over {} clips", report.count_accuracy, report.clips);
    if let Some(path) = &args.out {
        save_json(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct QueryReport {
    frames: Vec<u64>,
    hits: Vec<QueryHit>,
}

#[derive(Serialize)]
struct QueryHit {
    clip: u32,
    frame: u32,
}

pub fn cmd_query_limit(args: &QueryLimitArgs) -> Result<(), CliError> {
    let tracks_file: TracksFile = load_json(&args.tracks)?;
    let region: Vec<(f64, f64)> = load_json(&args.region)?;
    if region.len() < 3 {
        return Err(CliError::invalid("region polygon needs at least 3 vertices"));
    }
    // Globalize frame indices across clips so spacing applies dataset-wide.
    let duration = tracks_file.clip_duration;
    let mut globalized: Vec<Track> = Vec::new();
    for entry in &tracks_file.clips {
        let offset = entry.clip * duration;
        for t in &entry.tracks {
            let mut shifted = t.clone();
            for d in &mut shifted.detections {
                d.frame += offset;
            }
            globalized.push(shifted);
        }
    }
    let frames = limit_query(&globalized, &region, args.min_count, args.spacing, args.limit);
    let report = QueryReport {
        frames: frames.iter().map(|&f| u64::from(f)).collect(),
        hits: frames
            .iter()
            .map(|&f| QueryHit { clip: f / duration, frame: f % duration })
            .collect(),
    };
    println!(
        "{} frames with >= {} in-region detections (spacing {})",
        report.frames.len(),
        args.min_count,
        args.spacing
    );
    for hit in &report.hits {
        println!("clip {} frame {}", hit.clip, hit.frame);
    }
    if let Some(path) = &args.out {
        save_json(path, &report)?;
    }
    Ok(())
}
