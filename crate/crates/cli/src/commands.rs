use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uavsense::config::{DerivedParams, RadarConfig};
use uavsense::dataset::{self, DatasetConfig, DatasetStats};
use uavsense::echo::{synthesize_capture, Frame};
use uavsense::identifier::preprocess::{Label, Segment, Threshold, RAW_CAPTURE_THRESHOLD};
use uavsense::identifier::{labeled_views, ClassMetrics, Confusion, LstmDetector, TrainConfig, DEFAULT_LAYERS};
use uavsense::io::{self, ModelManifest, TrackRow, TruthRow};
use uavsense::pipeline::{
    extract_segments, noise_std_for_line_snr, run_tracking, truth_series, Background, Confidence, SegmentConfig,
    TrackingConfig,
};
use uavsense::seed::derive_seed;
use uavsense::tracker::{relative_range_error, NoiseSource};

use crate::config::ExperimentConfig;
use crate::{Cli, Command, DatasetCommand, Usage};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out).map_err(|e| uavsense::Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    match &cli.command {
        Command::Simulate(a) => simulate(cli, &cfg, &a.scenario, a.frames),
        Command::Track(a) => track(cli, &cfg, a),
        Command::Identify(a) => identify(cli, &cfg, a),
        Command::Train(a) => train(cli, &cfg, a),
        Command::Evaluate(a) => evaluate(cli, &a.track, &a.truth, a.budget),
        Command::Dataset(DatasetCommand::Gen { uav, other }) => dataset_gen(cli, &cfg, *uav, *other),
        Command::Dataset(DatasetCommand::Split {
            dataset,
            train_fraction,
        }) => dataset_split(cli, &cfg, dataset, *train_fraction),
        Command::Dataset(DatasetCommand::Stats { dataset }) => {
            let stats = dataset::stats(&io::read_dataset(dataset)?);
            println!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| uavsense::Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}

fn simulate(cli: &Cli, cfg: &ExperimentConfig, scenario: &Path, frames: Option<usize>) -> Result<()> {
    let file = io::load_scenario(scenario)?;
    let radar = &cfg.radar;
    let mut scene = file.scene.clone();
    if let Some(seed) = cli.seed {
        scene.rng_seed = derive_seed(seed, "simulate");
    }
    if let Some(snr) = file.snr_db {
        scene.noise_std = noise_std_for_line_snr(&scene, radar, snr)?;
    }
    let scene = scene
        .validate(radar)
        .with_context(|| format!("scenario {}", scenario.display()))?;
    let n = frames.or(file.frames).unwrap_or(radar.frames_per_capture);
    let capture = synthesize_capture(&scene, radar, n)?;
    io::write_frames(&cli.out.join("frames.bin"), radar, &capture)?;
    match truth_series(&scene, radar, n) {
        Ok(rows) => io::write_truth(&cli.out.join("truth.csv"), &rows)?,
        Err(uavsense::Error::Empty(_)) => log::info!("scene has no UAV; no truth written"),
        Err(e) => return Err(e.into()),
    }
    log::info!("wrote {n} frames (noise_std {:.4})", scene.noise_std);
    Ok(())
}

fn load_capture(path: &Path, int16: bool, radar: &RadarConfig) -> Result<(RadarConfig, Vec<Frame>)> {
    if int16 {
        Ok((radar.clone(), io::read_int16_frames(path, radar)?))
    } else {
        let (header, frames) = io::read_frames(path)?;
        Ok((header.radar()?, frames))
    }
}

fn load_background(path: Option<&Path>, int16: bool, radar: &RadarConfig) -> Result<Option<Vec<Frame>>> {
    let Some(path) = path else { return Ok(None) };
    let (bg_radar, frames) = load_capture(path, int16, radar)?;
    if bg_radar.chirps_per_frame != radar.chirps_per_frame || bg_radar.samples_per_chirp != radar.samples_per_chirp {
        return Err(Usage(format!("background {} does not match the capture's frame shape", path.display())).into());
    }
    Ok(Some(frames))
}

#[derive(Debug, Serialize)]
struct TruthSummary {
    mean_relative_error: f64,
    mean_relative_error_unfiltered: f64,
    mean_abs_error_bins: f64,
}

#[derive(Debug, Serialize)]
struct TrackSummary {
    frames: usize,
    range_bin_size_m: f64,
    k_bins: usize,
    j_min: usize,
    j_max: usize,
    noise_source: NoiseSource,
    confidence: Confidence,
    low_confidence: bool,
    particle_filter: bool,
    degenerate_resets: usize,
    truth: Option<TruthSummary>,
}

fn track(cli: &Cli, cfg: &ExperimentConfig, a: &crate::TrackArgs) -> Result<()> {
    let (radar, frames) = load_capture(&a.capture.frames, a.capture.int16, &cfg.radar)?;
    let background = load_background(a.capture.background.as_deref(), a.capture.int16, &radar)?;
    let tcfg = TrackingConfig {
        j_min: a.j_min.unwrap_or(cfg.tracking.j_min),
        j_max: a.j_max.unwrap_or(cfg.tracking.j_max),
        k_bins: a.k_bins.or(cfg.tracking.k_bins),
        particle_filter: cfg.tracking.particle_filter && !a.no_filter,
        ..cfg.tracking.clone()
    };
    let bg = match &background {
        Some(f) => Background::Frames(f),
        None => Background::None,
    };
    let run = run_tracking(&frames, bg, &radar, &tcfg, derive_seed(cli.seed(), "track"))?;
    io::write_track(&cli.out.join("track.csv"), &run.track)?;
    if a.dump_rpmm {
        io::write_rpmm(&cli.out.join("rpmm.csv"), &run.rpmm)?;
    }
    if a.dump_rd {
        io::write_rd_maps(&cli.out.join("rd_maps.csv"), &run.maps)?;
    }
    let truth = match &a.truth {
        Some(p) => {
            let rows = io::read_truth(p)?;
            let g: Vec<f64> = rows.iter().map(|r| r.range_m).collect();
            let filtered = if run.track.filtered_ranges_m.is_empty() {
                &run.track.ranges_m
            } else {
                &run.track.filtered_ranges_m
            };
            let mae = run
                .track
                .ranges_m
                .iter()
                .zip(&g)
                .map(|(t, g)| (t - g).abs())
                .sum::<f64>()
                / g.len().max(1) as f64;
            Some(TruthSummary {
                mean_relative_error: relative_range_error(filtered, &g)?,
                mean_relative_error_unfiltered: relative_range_error(&run.track.ranges_m, &g)?,
                mean_abs_error_bins: mae / run.derived.range_bin_size_m,
            })
        }
        None => None,
    };
    let summary = TrackSummary {
        frames: run.track.len(),
        range_bin_size_m: run.derived.range_bin_size_m,
        k_bins: run.k_bins,
        j_min: tcfg.j_min,
        j_max: tcfg.j_max,
        noise_source: run.noise.source,
        low_confidence: run.confidence.low_confidence,
        confidence: run.confidence,
        particle_filter: run.filter.is_some(),
        degenerate_resets: run.filter.as_ref().map_or(0, |f| f.degenerate_resets),
        truth,
    };
    write_json(&cli.out.join("summary.json"), &summary)
}

#[derive(Debug, Serialize)]
struct LabelRow {
    index: usize,
    start_frame: usize,
    passed_filter: bool,
    max_folding_result: f64,
    predicted: Label,
    uav_probability: f64,
    label: Label,
}

#[derive(Debug, Serialize)]
struct IdentifySummary {
    /// `uav`, `other` or `no-detection`.
    verdict: String,
    segments: usize,
    classified: usize,
    threshold: f64,
    metrics: Option<ClassMetrics>,
}

fn identify(cli: &Cli, cfg: &ExperimentConfig, a: &crate::IdentifyArgs) -> Result<()> {
    let (model, manifest) = io::read_model(&a.model)?;
    let threshold = match a.threshold.as_str() {
        "model" => manifest
            .threshold
            .map(|t| t.value())
            .ok_or_else(|| Usage("model file stores no threshold; pass --threshold".into()))?,
        "fixed" => RAW_CAPTURE_THRESHOLD,
        v => v
            .parse::<f64>()
            .map_err(|_| Usage(format!("--threshold: expected model, fixed or a number, got `{v}`")))?,
    };
    let (segments, candidates) = if let Some(path) = &a.dataset {
        let segs = io::read_dataset(path)?;
        let all: Vec<usize> = (0..segs.len()).collect();
        (segs, all)
    } else if let Some(path) = &a.frames {
        let (radar, frames) = load_capture(path, a.int16, &cfg.radar)?;
        let background = load_background(a.background.as_deref(), a.int16, &radar)?;
        let bg = match &background {
            Some(f) => Background::Frames(f),
            None => Background::None,
        };
        let run = run_tracking(&frames, bg, &radar, &cfg.tracking, derive_seed(cli.seed(), "track"))?;
        let scfg = SegmentConfig {
            normalize: manifest.normalize,
            ..cfg.segments.clone()
        };
        let w = run.derived.segment_frames(scfg.segment_s);
        if w != manifest.segment_frames {
            return Err(Usage(format!(
                "model expects {}-frame segments, configuration gives {w}",
                manifest.segment_frames
            ))
            .into());
        }
        let (segs, _) = extract_segments(&run.maps, &run.track, &run.derived, &scfg, threshold, Label::Unlabeled)?;
        let passed = (0..segs.len()).filter(|&i| segs[i].passed_filter).collect();
        (segs, passed)
    } else {
        return Err(Usage("identify needs --dataset or --frames".into()).into());
    };
    if let Some(s) = segments.first() {
        if s.data.ncols() != model.input_dim || s.data.nrows() != manifest.segment_frames {
            return Err(Usage(format!(
                "segments are [{} x {}], model expects [{} x {}]",
                s.data.nrows(),
                s.data.ncols(),
                manifest.segment_frames,
                model.input_dim
            ))
            .into());
        }
    }
    let mut rows = Vec::with_capacity(candidates.len());
    let mut confusion = Confusion::default();
    let mut uav_votes = 0;
    for &i in &candidates {
        let s: &Segment = &segments[i];
        let p = model.uav_probability(s.data.view())?;
        let predicted = Label::from_class(model.predict(s.data.view())?);
        uav_votes += usize::from(predicted == Label::Uav);
        if let Some(y) = s.label.class_index() {
            confusion.record(predicted == Label::Uav, y == 1);
        }
        rows.push(LabelRow {
            index: i,
            start_frame: s.start_frame,
            passed_filter: s.passed_filter,
            max_folding_result: s.max_folding_result,
            predicted,
            uav_probability: p,
            label: s.label,
        });
    }
    io::write_rows(&cli.out.join("labels.csv"), &rows)?;
    let verdict = if rows.is_empty() {
        "no-detection"
    } else if 2 * uav_votes >= rows.len() {
        "uav"
    } else {
        "other"
    };
    let summary = IdentifySummary {
        verdict: verdict.into(),
        segments: segments.len(),
        classified: rows.len(),
        threshold,
        metrics: (confusion.total() > 0).then(|| confusion.metrics()),
    };
    write_json(&cli.out.join("metrics.json"), &summary)
}

/// Sidecar written by `dataset gen`.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    threshold: Threshold,
    normalize: bool,
    train: DatasetStats,
    test: DatasetStats,
    config: DatasetConfig,
}

#[derive(Debug, Serialize)]
struct LossRow {
    epoch: usize,
    train_loss: f64,
    validation_loss: Option<f64>,
}

fn train(cli: &Cli, cfg: &ExperimentConfig, a: &crate::TrainArgs) -> Result<()> {
    let segments = io::read_dataset(&a.dataset)?;
    let validation = match &a.validation {
        Some(p) => io::read_dataset(p)?,
        None => Vec::new(),
    };
    let first = segments
        .first()
        .ok_or_else(|| Usage(format!("{} holds no segments", a.dataset.display())))?;
    let (w, l) = first.data.dim();
    if let Some(bad) = segments.iter().chain(&validation).find(|s| s.data.dim() != (w, l)) {
        return Err(Usage(format!("mixed segment shapes: [{w} x {l}] and {:?}", bad.data.dim())).into());
    }
    let meta_path: Option<PathBuf> = a.meta.clone().or_else(|| {
        let p = a.dataset.parent()?.join("meta.json");
        p.exists().then_some(p)
    });
    let meta: Option<DatasetMeta> = match meta_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| uavsense::Error::Io { path: p.clone(), source: e })?;
            Some(serde_json::from_str(&text).map_err(|e| uavsense::Error::Format {
                kind: "dataset metadata",
                detail: format!("{}: {e}", p.display()),
            })?)
        }
        None => None,
    };
    let tcfg = TrainConfig {
        epochs: a.epochs.unwrap_or(cfg.train.epochs),
        seed: cli.seed(),
        ..cfg.train.clone()
    };
    let all: Vec<usize> = (0..segments.len()).collect();
    let train_set = labeled_views(&segments, &all);
    let val_all: Vec<usize> = (0..validation.len()).collect();
    let val_set = labeled_views(&validation, &val_all);
    let mut model = LstmDetector::new(l, a.hidden, DEFAULT_LAYERS, cli.seed())?;
    let report = model.train(&train_set, &val_set, &tcfg)?;
    let manifest = ModelManifest {
        schema_version: uavsense::config::SCHEMA_VERSION,
        input_dim: l,
        hidden: a.hidden,
        layers: DEFAULT_LAYERS,
        segment_frames: w,
        normalize: meta.as_ref().map_or(cfg.segments.normalize, |m| m.normalize),
        seed: cli.seed(),
        train: Some(tcfg),
        threshold: meta.map(|m| m.threshold),
        tensors: model.layout().to_vec(),
    };
    io::write_model(&cli.out.join("model.bin"), &model, &manifest)?;
    let rows: Vec<LossRow> = report
        .train_loss
        .iter()
        .enumerate()
        .map(|(epoch, &train_loss)| LossRow {
            epoch,
            train_loss,
            validation_loss: report.validation_loss.get(epoch).copied(),
        })
        .collect();
    Ok(io::write_rows(&cli.out.join("loss.csv"), &rows)?)
}

#[derive(Debug, Serialize)]
struct Evaluation {
    samples: usize,
    mean_relative_error: f64,
    mean_relative_error_unfiltered: f64,
    mean_abs_error_m: f64,
    budget: f64,
    within_budget: bool,
}

fn evaluate(cli: &Cli, track: &Path, truth: &Path, budget: f64) -> Result<()> {
    let rows: Vec<TrackRow> = io::read_track(track)?;
    let truth: Vec<TruthRow> = io::read_truth(truth)?;
    let g: Vec<f64> = truth.iter().map(|r| r.range_m).collect();
    let filtered: Vec<f64> = rows.iter().map(|r| r.filtered_range_m).collect();
    let raw: Vec<f64> = rows.iter().map(|r| r.range_m).collect();
    let err = relative_range_error(&filtered, &g)?;
    let report = Evaluation {
        samples: g.len(),
        mean_relative_error: err,
        mean_relative_error_unfiltered: relative_range_error(&raw, &g)?,
        mean_abs_error_m: filtered.iter().zip(&g).map(|(t, g)| (t - g).abs()).sum::<f64>() / g.len() as f64,
        budget,
        within_budget: err <= budget,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_json(&cli.out.join("evaluation.json"), &report)
}

fn write_split(cli: &Cli, segments: &[Segment], fraction: f64, seed: u64) -> Result<(DatasetStats, DatasetStats)> {
    let (train_idx, test_idx) = dataset::train_test_split(segments.len(), fraction, seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| segments[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&train_idx), pick(&test_idx));
    io::write_dataset(&cli.out.join("train.bin"), &train)?;
    io::write_dataset(&cli.out.join("test.bin"), &test)?;
    Ok((dataset::stats(&train), dataset::stats(&test)))
}

fn dataset_gen(cli: &Cli, cfg: &ExperimentConfig, uav: Option<usize>, other: Option<usize>) -> Result<()> {
    let dcfg = DatasetConfig {
        uav_segments: uav.unwrap_or(cfg.dataset.uav_segments),
        other_segments: other.unwrap_or(cfg.dataset.other_segments),
        ..cfg.dataset.clone()
    };
    let generated = dataset::generate(&cfg.radar, &dcfg, cli.seed())?;
    let derived = DerivedParams::derive(&cfg.radar, dcfg.tracking.v_max_m_per_s)?;
    log::info!(
        "{} segments of {} frames",
        generated.segments.len(),
        derived.segment_frames(dcfg.segments.segment_s)
    );
    let (train, test) = write_split(cli, &generated.segments, dcfg.train_fraction, cli.seed())?;
    let meta = DatasetMeta {
        threshold: generated.threshold,
        normalize: dcfg.segments.normalize,
        train,
        test,
        config: dcfg,
    };
    write_json(&cli.out.join("meta.json"), &meta)
}

fn dataset_split(cli: &Cli, cfg: &ExperimentConfig, path: &Path, fraction: Option<f64>) -> Result<()> {
    let segments = io::read_dataset(path)?;
    let fraction = fraction.unwrap_or(cfg.dataset.train_fraction);
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Usage(format!("--train-fraction must lie in (0, 1), got {fraction}")).into());
    }
    let (train, test) = write_split(cli, &segments, fraction, cli.seed())?;
    println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "train": train, "test": test }))?);
    Ok(())
}
