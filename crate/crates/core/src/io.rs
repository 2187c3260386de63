//! On-disk formats: frame files, configs, scenarios, CSV dumps, segment
//! datasets and model files.
//!
//! Frame file layout: a 256-byte header block holding space-padded JSON
//! (`magic`, `schema_version`, `L`, `N_s`, `f_s`, `T_c`, `f_c`, `K`,
//! `frames`), followed by little-endian `f32` pairs `(re, im)` in
//! `[frame][chirp][sample]` order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{RadarConfig, SCHEMA_VERSION};
use crate::echo::{Frame, SceneSpec};
use crate::error::{Error, Result};
use crate::identifier::lstm::{LstmDetector, TensorSpec, TrainConfig};
use crate::identifier::preprocess::{Label, Segment, Threshold};
use crate::pmm::RPmmDiagram;
use crate::rd::RangeDopplerMap;
use crate::tracker::Track;

pub const FRAME_MAGIC: &str = "UAVSENSE-FRAMES";
pub const FRAME_HEADER_BYTES: usize = 256;
const DATASET_MAGIC: &[u8; 8] = b"UAVSDS01";
const MODEL_MAGIC: &[u8; 8] = b"UAVSMD01";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_err(kind: &'static str, detail: impl std::fmt::Display) -> Error {
    Error::Format {
        kind,
        detail: detail.to_string(),
    }
}

fn check_schema(kind: &'static str, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(format_err(
            kind,
            format!("schema_version {found}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameHeader {
    pub magic: String,
    pub schema_version: u32,
    #[serde(rename = "L")]
    pub chirps_per_frame: usize,
    #[serde(rename = "N_s")]
    pub samples_per_chirp: usize,
    #[serde(rename = "f_s")]
    pub adc_rate_hz: f64,
    #[serde(rename = "T_c")]
    pub chirp_duration_s: f64,
    #[serde(rename = "f_c")]
    pub carrier_freq_hz: f64,
    #[serde(rename = "K")]
    pub chirp_slope_hz_per_s: f64,
    pub frames: usize,
}

impl FrameHeader {
    pub fn new(radar: &RadarConfig, frames: usize) -> Self {
        Self {
            magic: FRAME_MAGIC.into(),
            schema_version: SCHEMA_VERSION,
            chirps_per_frame: radar.chirps_per_frame,
            samples_per_chirp: radar.samples_per_chirp,
            adc_rate_hz: radar.adc_rate_hz,
            chirp_duration_s: radar.chirp_duration_s,
            carrier_freq_hz: radar.carrier_freq_hz,
            chirp_slope_hz_per_s: radar.chirp_slope_hz_per_s,
            frames,
        }
    }

    /// Radar description implied by the header; other fields keep defaults.
    pub fn radar(&self) -> Result<RadarConfig> {
        RadarConfig {
            carrier_freq_hz: self.carrier_freq_hz,
            chirp_slope_hz_per_s: self.chirp_slope_hz_per_s,
            chirp_duration_s: self.chirp_duration_s,
            chirps_per_frame: self.chirps_per_frame,
            adc_rate_hz: self.adc_rate_hz,
            samples_per_chirp: self.samples_per_chirp,
            frames_per_capture: self.frames,
            ..RadarConfig::default()
        }
        .validate()
    }
}

pub fn write_frames(path: &Path, radar: &RadarConfig, frames: &[Frame]) -> Result<()> {
    let mut w = create(path)?;
    let header = serde_json::to_string(&FrameHeader::new(radar, frames.len()))
        .map_err(|e| format_err("frame header", e))?;
    if header.len() >= FRAME_HEADER_BYTES {
        return Err(format_err("frame header", "encoded header exceeds 255 bytes"));
    }
    let mut block = header.into_bytes();
    block.resize(FRAME_HEADER_BYTES - 1, b' ');
    block.push(b'\n');
    let io = |e| Error::io(path, e);
    w.write_all(&block).map_err(io)?;
    for f in frames {
        if f.chirps() != radar.chirps_per_frame || f.samples_per_chirp() != radar.samples_per_chirp {
            return Err(Error::ShapeMismatch {
                context: "write_frames",
                expected: format!("[{} x {}]", radar.chirps_per_frame, radar.samples_per_chirp),
                actual: format!("[{} x {}]", f.chirps(), f.samples_per_chirp()),
            });
        }
        for z in f.samples.iter() {
            w.write_all(&(z.re as f32).to_le_bytes()).map_err(io)?;
            w.write_all(&(z.im as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn frames_from_values(
    values: impl Iterator<Item = (f64, f64)>,
    radar: &RadarConfig,
    n_frames: usize,
) -> Vec<Frame> {
    let (l, n) = (radar.chirps_per_frame, radar.samples_per_chirp);
    let td = radar.frame_duration_s();
    let mut values = values;
    (0..n_frames)
        .map(|k| {
            let samples = Array2::from_shape_simple_fn((l, n), || {
                let (re, im) = values.next().expect("length checked by caller");
                Complex64::new(re, im)
            });
            Frame {
                frame_index: k,
                start_time_s: k as f64 * td,
                samples,
            }
        })
        .collect()
}

/// Reads a frame file written by [`write_frames`].
pub fn read_frames(path: &Path) -> Result<(FrameHeader, Vec<Frame>)> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < FRAME_HEADER_BYTES {
        return Err(format_err("frame file", "shorter than its header"));
    }
    let text = std::str::from_utf8(&bytes[..FRAME_HEADER_BYTES])
        .map_err(|_| format_err("frame header", "not UTF-8"))?;
    let header: FrameHeader =
        serde_json::from_str(text.trim_end()).map_err(|e| format_err("frame header", e))?;
    if header.magic != FRAME_MAGIC {
        return Err(format_err("frame header", format!("bad magic {:?}", header.magic)));
    }
    check_schema("frame header", header.schema_version)?;
    let radar = header.radar()?;
    let body = &bytes[FRAME_HEADER_BYTES..];
    let per_frame = radar.chirps_per_frame * radar.samples_per_chirp * 8;
    if body.len() != per_frame * header.frames {
        return Err(format_err(
            "frame file",
            format!(
                "payload is {} bytes, header implies {}",
                body.len(),
                per_frame * header.frames
            ),
        ));
    }
    let values = body.chunks_exact(8).map(|c| {
        let re = f32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
        let im = f32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
        (re as f64, im as f64)
    });
    let frames = frames_from_values(values, &radar, header.frames);
    if frames.iter().any(|f| f.samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::NonFinite("frame file samples"));
    }
    Ok((header, frames))
}

/// Reads headerless little-endian `i16` pairs `(re, im)` laid out as
/// `[frame][chirp][sample]`; the shape comes from `radar`. A trailing
/// partial frame is an error.
pub fn read_int16_frames(path: &Path, radar: &RadarConfig) -> Result<Vec<Frame>> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let per_frame = radar.chirps_per_frame * radar.samples_per_chirp * 4;
    if bytes.is_empty() || bytes.len() % per_frame != 0 {
        return Err(format_err(
            "int16 capture",
            format!("{} bytes is not a multiple of the {per_frame}-byte frame", bytes.len()),
        ));
    }
    let values = bytes.chunks_exact(4).map(|c| {
        let re = i16::from_le_bytes([c[0], c[1]]);
        let im = i16::from_le_bytes([c[2], c[3]]);
        (re as f64, im as f64)
    });
    Ok(frames_from_values(values, radar, bytes.len() / per_frame))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarFile {
    pub schema_version: u32,
    pub radar: RadarConfig,
}

pub fn load_radar_config(path: &Path) -> Result<RadarConfig> {
    let file: RadarFile = toml::from_str(&read_text(path)?)
        .map_err(|e| format_err("radar config", format!("{}: {e}", path.display())))?;
    check_schema("radar config", file.schema_version)?;
    file.radar.validate()
}

pub fn save_radar_config(path: &Path, radar: &RadarConfig) -> Result<()> {
    let file = RadarFile {
        schema_version: SCHEMA_VERSION,
        radar: radar.clone(),
    };
    let text = toml::to_string(&file).map_err(|e| format_err("radar config", e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Scenario file: a scene plus the number of frames to synthesize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub frames: Option<usize>,
    /// When set, overrides `scene.noise_std` with the value giving this
    /// per-line SNR.
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub scene: SceneSpec,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let file: ScenarioFile = toml::from_str(&read_text(path)?)
        .map_err(|e| format_err("scenario", format!("{}: {e}", path.display())))?;
    check_schema("scenario", file.schema_version)?;
    Ok(file)
}

pub fn save_scenario(path: &Path, scenario: &ScenarioFile) -> Result<()> {
    let text = toml::to_string(scenario).map_err(|e| format_err("scenario", e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        format_err("csv", format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub frame_index: usize,
    pub time_s: f64,
    pub range_bin: usize,
    pub range_m: f64,
    pub filtered_range_m: f64,
    pub score: f64,
}

/// Rows of a track; `filtered_range_m` falls back to `range_m` when the
/// track was not filtered.
pub fn track_rows(track: &Track) -> Vec<TrackRow> {
    (0..track.len())
        .map(|t| TrackRow {
            frame_index: track.frame_indices[t],
            time_s: track.timestamps_s[t],
            range_bin: track.range_bins[t],
            range_m: track.ranges_m[t],
            filtered_range_m: track.filtered_ranges_m.get(t).copied().unwrap_or(track.ranges_m[t]),
            score: track.scores[t],
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

pub fn write_track(path: &Path, track: &Track) -> Result<()> {
    write_rows(path, &track_rows(track))
}

pub fn read_track(path: &Path) -> Result<Vec<TrackRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub time_s: f64,
    pub range_m: f64,
    pub velocity_m_per_s: f64,
}

pub fn write_truth(path: &Path, rows: &[TruthRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    read_rows(path)
}

/// Matrix dump: header row of frame timestamps, one row per range bin.
pub fn write_rpmm(path: &Path, rpmm: &RPmmDiagram) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| csv_err(path, err);
    w.write_record(rpmm.timestamps_s.iter().map(|t| format!("{t}")))
        .map_err(e)?;
    for row in rpmm.values.rows() {
        w.write_record(row.iter().map(|v| format!("{v}"))).map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Long-format dump `(frame_index, range_bin, doppler_bin, magnitude)`.
pub fn write_rd_maps(path: &Path, maps: &[RangeDopplerMap]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| csv_err(path, err);
    w.write_record(["frame_index", "range_bin", "doppler_bin", "magnitude"])
        .map_err(e)?;
    for m in maps {
        for ((r, d), v) in m.magnitudes.indexed_iter() {
            w.write_record([
                m.frame_index.to_string(),
                r.to_string(),
                d.to_string(),
                format!("{v}"),
            ])
            .map_err(e)?;
        }
    }
    w.flush().map_err(|err| Error::io(path, err))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordHeader {
    #[serde(rename = "W")]
    frames: usize,
    #[serde(rename = "L")]
    doppler_bins: usize,
    label: Label,
    provenance: String,
    max_folding_result: f64,
    passed_filter: bool,
    start_frame: usize,
}

/// Dataset file: magic, then per record a `u32` header length, the JSON
/// header and `W·L` little-endian `f32` values (row-major).
pub fn write_dataset(path: &Path, segments: &[Segment]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(DATASET_MAGIC).map_err(io)?;
    for s in segments {
        let header = RecordHeader {
            frames: s.data.nrows(),
            doppler_bins: s.data.ncols(),
            label: s.label,
            provenance: s.provenance.clone(),
            max_folding_result: s.max_folding_result,
            passed_filter: s.passed_filter,
            start_frame: s.start_frame,
        };
        let json = serde_json::to_vec(&header).map_err(|e| format_err("dataset", e))?;
        w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for v in s.data.iter() {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, kind: &'static str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(format_err(kind, "truncated"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Segment>> {
    let mut buf = Vec::new();
    open(path)?
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let mut bytes = buf.as_slice();
    if take(&mut bytes, 8, "dataset")? != DATASET_MAGIC {
        return Err(format_err("dataset", "bad magic"));
    }
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let len = u32::from_le_bytes(take(&mut bytes, 4, "dataset")?.try_into().expect("4 bytes"));
        let header: RecordHeader = serde_json::from_slice(take(&mut bytes, len as usize, "dataset")?)
            .map_err(|e| format_err("dataset", e))?;
        let n = header.frames * header.doppler_bins;
        let raw = take(&mut bytes, 4 * n, "dataset")?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let data = Array2::from_shape_vec((header.frames, header.doppler_bins), values)
            .map_err(|e| format_err("dataset", e))?;
        out.push(Segment {
            data,
            label: header.label,
            max_folding_result: header.max_folding_result,
            passed_filter: header.passed_filter,
            start_frame: header.start_frame,
            provenance: header.provenance,
        });
    }
    Ok(out)
}

/// Everything needed to rebuild and apply a trained detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub schema_version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Segment length `W` the model was trained on.
    pub segment_frames: usize,
    pub normalize: bool,
    pub seed: u64,
    pub train: Option<TrainConfig>,
    /// Folding threshold the training data was filtered with.
    pub threshold: Option<Threshold>,
    pub tensors: Vec<TensorSpec>,
}

/// Model file: magic, `u32` manifest length, JSON manifest, then the flat
/// parameter vector as little-endian `f64`.
pub fn write_model(path: &Path, model: &LstmDetector, manifest: &ModelManifest) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let json = serde_json::to_vec(manifest).map_err(|e| format_err("model manifest", e))?;
    w.write_all(MODEL_MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for p in &model.params {
        w.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_model(path: &Path) -> Result<(LstmDetector, ModelManifest)> {
    let mut buf = Vec::new();
    open(path)?
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let mut bytes = buf.as_slice();
    if take(&mut bytes, 8, "model")? != MODEL_MAGIC {
        return Err(format_err("model", "bad magic"));
    }
    let len = u32::from_le_bytes(take(&mut bytes, 4, "model")?.try_into().expect("4 bytes"));
    let manifest: ModelManifest = serde_json::from_slice(take(&mut bytes, len as usize, "model")?)
        .map_err(|e| format_err("model manifest", e))?;
    check_schema("model manifest", manifest.schema_version)?;
    if bytes.len() % 8 != 0 {
        return Err(format_err("model", "parameter blob is not a whole number of f64"));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = LstmDetector::from_params(manifest.input_dim, manifest.hidden, manifest.layers, params)?;
    if model.layout() != manifest.tensors.as_slice() {
        return Err(format_err("model manifest", "tensor layout does not match dims"));
    }
    Ok((model, manifest))
}
