use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use ndarray::Array3;
use smite_consistency::vote_all;
use smite_core::config::{read_table, reject_unknown};
use smite_core::pngio::write_rgb;
use smite_core::{load_reference_set, Category, GuidanceConfig, TrackTable, VideoClip, WasMapStack};
use smite_diffusion::{inflate, DiffusionBackend, MiniLdm, MiniLdmConfig, SegModelState};
use smite_eval::{
    evaluate_dirs, load_annotations, run_ablation, variant_model, variant_state, write_report, AblationInputs,
    EvalRecord, Variant, DEFAULT_TOLERANCE,
};
use smite_guidance::{crop_refine, run_inference, run_long_video, GuidanceError, InferenceOutput};
use smite_tracking::{
    project_tracks, track_video, BlockMatchTracker, ExternalTracker, PointTracker, QueryPlan, WindowLayout, TRACKER_ENV,
};
use smite_train::{train, write_loss_csv, TrainConfig};

#[derive(Parser)]
#[command(
    name = "smite",
    version,
    about = "Few-shot video segmentation with diffusion attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn segment embeddings and cross-attention weights from reference images.
    Train(TrainArgs),
    /// Track points through a video and write a track table.
    Track(TrackArgs),
    /// Segment a video with a trained checkpoint.
    Segment(SegmentArgs),
    /// Score predicted masks against sparse ground truth.
    Eval(EvalArgs),
    /// Segment and score one video under an ablation variant.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Pixels per latent cell.
    #[arg(long, default_value_t = 8)]
    latent_factor: usize,
}

impl ModelArgs {
    fn load(&self, model_id: Option<&str>) -> Result<MiniLdm> {
        let mut cfg = MiniLdmConfig {
            latent_factor: self.latent_factor,
            ..Default::default()
        };
        if let Some(id) = model_id {
            cfg.model_id = id.to_string();
        }
        Ok(MiniLdm::load(cfg)?)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of reference images with `<stem>.png` / `<stem>_mask.png` pairs.
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Voting window the queries are planned for.
    #[arg(long, default_value_t = 15)]
    window: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct GuidanceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Flat key-value config; guidance and training keys may share one file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a category preset before applying the config file.
    #[arg(long)]
    category: Option<Category>,
    /// Precomputed track table; tracks are computed on the fly otherwise.
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    guidance: GuidanceArgs,
    /// Read out the attention scores once, without guided denoising.
    #[arg(long)]
    no_guidance: bool,
    /// Re-segment a crop around the foreground of the first pass.
    #[arg(long)]
    crop_refine: bool,
    /// Write score and voted-score grids (frames × segments) as PNGs.
    #[arg(long)]
    dump_maps: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args)]
struct AblateArgs {
    /// per-frame, +inflation, +ca-tuning, +tracking, +lp-reg, or all.
    #[arg(long, default_value = "all")]
    variant: String,
    #[arg(long)]
    video: PathBuf,
    /// Directory of ground-truth masks named by frame index.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[command(flatten)]
    guidance: GuidanceArgs,
}

fn guidance_config(args: &GuidanceArgs) -> Result<GuidanceConfig> {
    let mut cfg = args.category.map(GuidanceConfig::for_category).unwrap_or_default();
    if let Some(path) = &args.config {
        let table = read_table(path)?;
        reject_unknown(&table, &[GuidanceConfig::FIELDS, TrainConfig::FIELDS])?;
        // keys in the file override the preset
        let mut merged: toml::Table = toml::Table::try_from(&cfg)?;
        merged.extend(
            table
                .into_iter()
                .filter(|(k, _)| GuidanceConfig::FIELDS.contains(&k.as_str())),
        );
        cfg = GuidanceConfig::from_table(&merged)?;
    }
    Ok(cfg)
}

fn load_state(args: &GuidanceArgs) -> Result<(SegModelState, MiniLdm)> {
    let state =
        SegModelState::load(&args.ckpt).with_context(|| format!("loading checkpoint {}", args.ckpt.display()))?;
    let base = args.model.load(Some(&state.base_model_id))?;
    Ok((state, base))
}

fn tracker() -> Result<Box<dyn PointTracker>> {
    if std::env::var_os(TRACKER_ENV).is_some() {
        Ok(Box::new(ExternalTracker::from_env()?))
    } else {
        Ok(Box::new(BlockMatchTracker::default()))
    }
}

fn compute_tracks(video: &VideoClip, attn: (usize, usize), window: usize, stride: usize) -> Result<TrackTable> {
    let tracker = tracker()?;
    info!("tracking {} frames with {}", video.len(), tracker.name());
    Ok(track_video(
        video,
        tracker.as_ref(),
        &QueryPlan::new(attn, window, stride),
    )?)
}

fn tracks_for(
    args: &GuidanceArgs,
    video: &VideoClip,
    backend: &dyn DiffusionBackend,
    cfg: &GuidanceConfig,
) -> Result<Option<TrackTable>> {
    if let Some(path) = &args.tracks {
        let table = TrackTable::load(path)?;
        if table.frames != video.len() {
            bail!(
                "{} covers {} frames, video has {}",
                path.display(),
                table.frames,
                video.len()
            );
        }
        return Ok(Some(table));
    }
    if !cfg.guidance_enabled() || cfg.lambda_tracking == 0.0 {
        return Ok(None);
    }
    Ok(Some(compute_tracks(
        video,
        score_grid(backend, video)?,
        cfg.window_size,
        cfg.vote_stride,
    )?))
}

/// Attention grid the backend scores this video's frames on.
fn score_grid(backend: &dyn DiffusionBackend, video: &VideoClip) -> Result<(usize, usize)> {
    Ok(backend.score_resolution(&backend.encode_video(&video.slice(0..1)?)?))
}

/// Runs the whole clip at once and falls back to slices of 2T frames,
/// halving T, while the attention estimate exceeds the memory budget.
fn segment_clip(
    backend: &dyn DiffusionBackend,
    video: &VideoClip,
    state: &SegModelState,
    cfg: &GuidanceConfig,
    tracks: Option<&TrackTable>,
) -> Result<InferenceOutput> {
    match run_inference(backend, video, state, cfg, tracks) {
        Err(GuidanceError::OutOfMemory { needed, budget }) => {
            let mut t = (video.len() / 4).max(2);
            loop {
                warn!(
                    "attention needs {needed} bytes of {budget}; retrying in slices of {} frames",
                    2 * t
                );
                match run_long_video(backend, video, state, cfg, tracks, t) {
                    Err(GuidanceError::OutOfMemory { .. }) if t > 2 => t /= 2,
                    other => return Ok(other?),
                }
            }
        }
        other => Ok(other?),
    }
}

/// One grayscale tile per (frame, segment), frames down, segments across.
fn write_grid(path: &Path, stack: &WasMapStack) -> Result<()> {
    let (m, c, h, w) = stack.scores.dim();
    let mut img = Array3::<u8>::zeros((m * h, c * w, 3));
    for ((f, k, y, x), v) in stack.scores.indexed_iter() {
        let px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        for ch in 0..3 {
            img[[f * h + y, k * w + x, ch]] = px;
        }
    }
    Ok(write_rgb(path, &img)?)
}

fn dump_maps(
    dir: &Path,
    out: &InferenceOutput,
    video: &VideoClip,
    tracks: Option<&TrackTable>,
    cfg: &GuidanceConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_grid(&dir.join("scores.png"), &out.scores)?;
    if let Some(table) = tracks {
        let layout = WindowLayout {
            window_size: cfg.window_size,
            stride: cfg.vote_stride,
        };
        let projected = project_tracks(table, video.frame_size(), out.scores.resolution(), layout)?;
        let voted = vote_all(&out.scores, &projected, cfg.window_size, cfg.vote_stride)?;
        write_grid(&dir.join("tracked.png"), &voted.scores)?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let refs = load_reference_set(&args.refs)?;
    let model = args.model.load(None)?;
    info!("training on {} references, K = {}", refs.len(), refs[0].num_segments);
    let outcome = train(&refs, &model, &cfg)?;
    outcome.state.save(&args.out)?;
    write_loss_csv(&outcome.log, &args.out.join("loss.csv"))?;
    if let Some(last) = outcome.log.last() {
        info!(
            "final loss {:.6} after {} iterations",
            last.parts.total,
            outcome.log.len()
        );
    }
    Ok(())
}

fn cmd_track(args: TrackArgs) -> Result<()> {
    let video = VideoClip::load_dir(&args.video)?;
    let model = args.model.load(None)?;
    let table = compute_tracks(&video, score_grid(&model, &video)?, args.window, 1)?;
    table.save(&args.out)?;
    info!("wrote {} trajectories", table.len());
    Ok(())
}

fn cmd_segment(args: SegmentArgs) -> Result<()> {
    let video = VideoClip::load_dir(&args.video)?;
    let mut cfg = guidance_config(&args.guidance)?;
    if args.no_guidance {
        cfg.guidance_iters_per_step = 0;
    }
    let (state, base) = load_state(&args.guidance)?;
    let model = inflate(&base)?;
    let tracks = tracks_for(&args.guidance, &video, &model, &cfg)?;
    let mut out = segment_clip(&model, &video, &state, &cfg, tracks.as_ref())?;
    if args.crop_refine {
        let refined = crop_refine(&model, &video, &out.labels, &state, &cfg, tracks.as_ref())?;
        out.labels = refined.labels;
        if let Some(run) = refined.run {
            out.manifest.crops = run.manifest.crops;
        }
    }
    out.labels.save_dir(&args.out)?;
    out.manifest.save(&args.out.join("meta.json"))?;
    if let Some(dir) = &args.dump_maps {
        dump_maps(dir, &out, &video, tracks.as_ref(), &cfg)?;
    }
    info!("wrote {} label frames to {}", out.labels.frames(), args.out.display());
    Ok(())
}

fn print_records(records: &[EvalRecord]) {
    for r in records {
        println!("{}\t{}\tmIoU {:.4}\tF {:.4}", r.video, r.category, r.miou, r.f_measure);
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let records = evaluate_dirs(&args.pred, &args.gt, args.tolerance)?;
    write_report(&records, &args.out)?;
    print_records(&records);
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let variants = if args.variant == "all" {
        Variant::ALL.to_vec()
    } else {
        vec![Variant::parse(&args.variant)?]
    };
    let video = VideoClip::load_dir(&args.video)?;
    let cfg = guidance_config(&args.guidance)?;
    let (state, base) = load_state(&args.guidance)?;
    let ann = load_annotations(&args.gt, Some(state.num_segments()), Some(video.len()))?;
    let name = args
        .video
        .file_name()
        .map_or_else(|| "video".into(), |n| n.to_string_lossy().into_owned());
    let category = args
        .guidance
        .category
        .map_or_else(|| "unknown".to_string(), |c| format!("{c:?}").to_lowercase());
    let mut records = Vec::new();
    for variant in variants {
        let model = variant_model(&base, variant)?;
        let vstate = variant_state(&state, &base, variant)?;
        let tracks = if variant.tracking() {
            tracks_for(&args.guidance, &video, &model, &cfg)?
        } else {
            None
        };
        let inputs = AblationInputs {
            name: &name,
            category: &category,
            video: &video,
            gt: &ann.gt,
            annotated: &ann.annotated,
            tracks: tracks.as_ref(),
            tolerance: args.tolerance,
        };
        let mut rec = run_ablation(&model, &vstate, &cfg, variant, inputs)?;
        rec.video = format!("{name}:{}", variant.name());
        records.push(rec);
    }
    write_report(&records, &args.out)?;
    print_records(&records);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(a) => cmd_train(a),
        Command::Track(a) => cmd_track(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}
