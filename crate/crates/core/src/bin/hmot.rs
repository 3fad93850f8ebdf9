//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or configuration
//! errors. `HMOT_LOG` sets the log filter (default `warn`).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use hmot::evaluation::MatchCriterion;
use hmot::io::{read_detections, read_tracks, write_detections, write_tracks, FrameDetections};
use hmot::metrics::nms;
use hmot::pipeline::{evaluate_records, run_tracking};
use hmot::simulation::{generate, preset, ScenarioSpec, PRESETS};
use hmot::{ConfigFile, Mode, ObjectClass};

#[derive(Debug, Parser)]
#[command(name = "hmot", version, about = "Online 2D/3D multi-object tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track a detection file and write a track file.
    Track(TrackArgs),
    /// Score a track file against ground truth with CLEAR-MOT.
    Eval(EvalArgs),
    /// Generate synthetic ground truth and detections.
    Simulate(SimulateArgs),
    /// Merge detection files with per-class non-maximum suppression.
    NmsMerge(NmsArgs),
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    dets: PathBuf,
    /// JSON configuration; tuned defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
    /// Disable association against secondary detections.
    #[arg(long)]
    no_stage3: bool,
    /// Use IoU instead of appearance in the first 2D stage.
    #[arg(long)]
    no_reid: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    mode: Mode,
    /// Minimum IoU of a 2D match.
    #[arg(long, conflicts_with = "dist_thresh")]
    iou_thresh: Option<f64>,
    /// Maximum center distance of a 3D match, meters.
    #[arg(long)]
    dist_thresh: Option<f64>,
    /// Also write the CSV report to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Named scenario.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Scenario specification in JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the seed of the spec; presets default to 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_gt: PathBuf,
    #[arg(long)]
    out_dets: PathBuf,
}

#[derive(Debug, Args)]
struct NmsArgs {
    #[arg(long, num_args = 1.., required = true)]
    dets: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Misuse of flags that clap cannot express.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn track(a: TrackArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ConfigFile::default(),
    };
    let mut cfg = file.resolve(a.mode)?;
    if a.no_stage3 {
        cfg.stage3 = false;
    }
    if a.no_reid {
        cfg.reid = false;
    }
    let frames = read_detections(&a.dets)?;
    if let Some(m) = frames.iter().find_map(FrameDetections::mode) {
        if m != a.mode {
            bail!(hmot::Error::Config(format!("{} contains {m} boxes but --mode is {}", a.dets.display(), a.mode)));
        }
    }
    let has_features = frames.iter().flat_map(|f| &f.detections).any(|d| d.embedding.is_some());
    if cfg.mode == Mode::D2 && cfg.reid && !has_features && frames.iter().any(|f| !f.detections.is_empty()) {
        warn!("no detection carries an embedding; first stage falls back to IoU");
        cfg.reid = false;
    }
    let run = run_tracking(&frames, &cfg)?;
    write_tracks(&a.out, a.mode, &run.records)?;
    for ((seq, cam), s) in &run.streams {
        let cam = cam.map(|c| format!(" [{c}]")).unwrap_or_default();
        eprintln!(
            "{seq}{cam}: {} frames, {} detections, matches stage1 {} stage2 {} stage3 {}, {} tracks",
            s.frames, s.detections, s.stage_matches[0], s.stage_matches[1], s.stage_matches[2], s.tracks_created
        );
    }
    info!("wrote {} track rows to {}", run.records.len(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let criterion = match (a.mode, a.iou_thresh, a.dist_thresh) {
        (Mode::D2, Some(t), None) => MatchCriterion::Iou(t),
        (Mode::D3, None, Some(t)) => MatchCriterion::CenterDistance(t),
        (m, None, None) => MatchCriterion::default_for(m),
        (Mode::D2, _, Some(_)) => return Err(usage("--dist-thresh applies to 3d evaluation")),
        (Mode::D3, Some(_), _) => return Err(usage("--iou-thresh applies to 2d evaluation")),
    };
    let (gt_mode, gt) = read_tracks(&a.gt)?;
    let (hyp_mode, hyp) = read_tracks(&a.hyp)?;
    if gt_mode != a.mode || hyp_mode != a.mode {
        bail!(hmot::Error::Config(format!(
            "--mode is {} but ground truth is {gt_mode} and hypotheses are {hyp_mode}",
            a.mode
        )));
    }
    let report = evaluate_records(&gt, &hyp, criterion)?;
    print!("{}\n{}", report.to_table(), report.to_csv());
    if let Some(p) = &a.csv {
        std::fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = match (&a.preset, &a.spec) {
        (Some(name), _) => preset(name, a.seed.unwrap_or(0)).map_err(|e| {
            usage(format!("{e}; presets: {}", PRESETS.join(", ")))
        })?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut spec = ScenarioSpec::from_json(&text).with_context(|| format!("invalid spec {}", p.display()))?;
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            spec
        }
        (None, None) => return Err(usage("one of --preset and --spec is required")),
    };
    let sim = generate(&spec)?;
    write_tracks(&a.out_gt, sim.mode, &sim.ground_truth)?;
    write_detections(&a.out_dets, &sim.detections)?;
    let n: usize = sim.detections.iter().map(|f| f.detections.len()).sum();
    eprintln!(
        "{}: {} frames, {} ground-truth boxes, {} detections",
        spec.sequence_id,
        sim.detections.len(),
        sim.ground_truth.len(),
        n
    );
    Ok(())
}

fn nms_merge(a: NmsArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(usage("--iou must lie in [0, 1]"));
    }
    let mut merged: BTreeMap<(String, u64, Option<hmot::Camera>), Vec<hmot::Detection>> = BTreeMap::new();
    for p in &a.dets {
        for f in read_detections(p)? {
            merged.entry((f.sequence_id, f.frame, f.camera)).or_default().extend(f.detections);
        }
    }
    let mut out = Vec::with_capacity(merged.len());
    for ((sequence_id, frame, camera), dets) in merged {
        if dets.iter().any(|d| d.bbox.mode() == Mode::D3) {
            bail!(hmot::Error::Input("nms-merge expects 2D detections".into()));
        }
        let mut kept = Vec::with_capacity(dets.len());
        for class in ObjectClass::ALL {
            let of_class: Vec<_> = dets.iter().filter(|d| d.class == class).cloned().collect();
            kept.extend(nms(&of_class, a.iou)?);
        }
        kept.sort_by(|x, y| y.score.total_cmp(&x.score));
        out.push(FrameDetections {
            sequence_id,
            frame,
            camera,
            detections: kept,
        });
    }
    write_detections(&a.out, &out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HMOT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::NmsMerge(a) => nms_merge(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 1 } else { 2 })
        }
    }
}
