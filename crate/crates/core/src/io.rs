//! File formats.
//!
//! Detections are newline-delimited JSON, one object per frame and camera:
//!
//! ```text
//! {"sequence_id":"s0","frame":0,"camera":"front","detections":[
//!   {"class":"pedestrian","box2d":[640.0,360.0,40.0,90.0],"score":0.9,"embedding":null,"src_gt":3}]}
//! ```
//!
//! Tracks (and ground truth) are CSV with a header. The column set depends on
//! the mode:
//!
//! ```text
//! sequence_id,frame,camera,track_id,class,cx,cy,w,h,score
//! sequence_id,frame,camera,track_id,class,cx,cy,cz,h,w,l,theta,score
//! ```
//!
//! The camera column is empty in 3D. Floats are written with 9 significant
//! digits, so reading a written file and writing it again is byte-identical.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Box2D, Box3D, Camera, Detection, Embedding, Mode, ObjectClass};

/// Rounds to 9 significant digits.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionEntry {
    class: ObjectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    box2d: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    box3d: Option<[f64; 7]>,
    score: f64,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    src_gt: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    sequence_id: String,
    frame: u64,
    #[serde(default)]
    camera: Option<Camera>,
    detections: Vec<DetectionEntry>,
}

/// Detections of one frame of one camera (or of the 3D sensor).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub sequence_id: String,
    pub frame: u64,
    pub camera: Option<Camera>,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn mode(&self) -> Option<Mode> {
        self.detections.first().map(|d| d.bbox.mode())
    }
}

fn entry_to_detection(e: DetectionEntry, camera: Option<Camera>) -> Result<Detection> {
    let bbox = match (e.box2d, e.box3d) {
        (Some([cx, cy, w, h]), None) => BoundingBox::D2(Box2D::new(cx, cy, w, h)?),
        (None, Some([cx, cy, cz, h, w, l, theta])) => BoundingBox::D3(Box3D::new(cx, cy, cz, h, w, l, theta)?),
        _ => return Err(Error::Input("a detection needs exactly one of box2d and box3d".into())),
    };
    let embedding = e.embedding.map(Embedding::new).transpose()?;
    let mut det = Detection::new(bbox, e.score, e.class, camera, embedding)?;
    det.src_gt = e.src_gt;
    Ok(det)
}

fn detection_to_entry(d: &Detection) -> DetectionEntry {
    let r = |v: &[f64]| v.iter().copied().map(round_sig9).collect::<Vec<_>>();
    let (box2d, box3d) = match &d.bbox {
        BoundingBox::D2(b) => (Some(r(&b.to_array()).try_into().expect("4 values")), None),
        BoundingBox::D3(b) => (None, Some(r(&b.to_array()).try_into().expect("7 values"))),
    };
    DetectionEntry {
        class: d.class,
        box2d,
        box3d,
        score: round_sig9(d.score),
        embedding: d.embedding.as_ref().map(|e| r(e.as_slice())),
        src_gt: d.src_gt,
    }
}

/// Parses a detection stream. Every line is validated; frames must strictly
/// increase per (sequence, camera) and all boxes must share one mode.
pub fn parse_detections(reader: impl Read, name: &str) -> Result<Vec<FrameDetections>> {
    let mut out = Vec::new();
    let mut last_frame: HashMap<(String, Option<Camera>), u64> = HashMap::new();
    let mut mode: Option<Mode> = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let err = |message: String| Error::Parse {
            path: name.to_string(),
            line: lineno,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let key = (rec.sequence_id.clone(), rec.camera);
        if let Some(&prev) = last_frame.get(&key) {
            if rec.frame <= prev {
                return Err(err(format!("frame {} does not follow frame {prev}", rec.frame)));
            }
        }
        last_frame.insert(key, rec.frame);
        let detections = rec
            .detections
            .into_iter()
            .map(|e| entry_to_detection(e, rec.camera))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| err(e.to_string()))?;
        for d in &detections {
            let m = d.bbox.mode();
            match mode {
                Some(prev) if prev != m => return Err(err(format!("{m} box in a {prev} file"))),
                _ => mode = Some(m),
            }
        }
        out.push(FrameDetections {
            sequence_id: rec.sequence_id,
            frame: rec.frame,
            camera: rec.camera,
            detections,
        });
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<FrameDetections>> {
    parse_detections(File::open(path)?, &path.display().to_string())
}

pub fn write_detections_to(mut w: impl Write, frames: &[FrameDetections]) -> Result<()> {
    for f in frames {
        let line = DetectionLine {
            sequence_id: f.sequence_id.clone(),
            frame: f.frame,
            camera: f.camera,
            detections: f.detections.iter().map(detection_to_entry).collect(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_detections(path: &Path, frames: &[FrameDetections]) -> Result<()> {
    write_detections_to(BufWriter::new(File::create(path)?), frames)
}

/// One row of a track or ground-truth file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub sequence_id: String,
    pub frame: u64,
    pub camera: Option<Camera>,
    pub track_id: u64,
    pub class: ObjectClass,
    pub bbox: BoundingBox,
    pub score: f64,
}

const COMMON: [&str; 5] = ["sequence_id", "frame", "camera", "track_id", "class"];
const BOX_2D: [&str; 4] = ["cx", "cy", "w", "h"];
const BOX_3D: [&str; 7] = ["cx", "cy", "cz", "h", "w", "l", "theta"];

pub fn track_header(mode: Mode) -> Vec<&'static str> {
    let boxes: &[&str] = match mode {
        Mode::D2 => &BOX_2D,
        Mode::D3 => &BOX_3D,
    };
    COMMON.iter().chain(boxes).chain(&["score"]).copied().collect()
}

fn fmt_f64(v: f64) -> String {
    round_sig9(v).to_string()
}

/// Writes a header and the records; an empty slice gives a header-only file.
pub fn write_tracks_to(w: impl Write, mode: Mode, records: &[TrackRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wr.write_record(track_header(mode)).map_err(csv_err)?;
    for r in records {
        if r.bbox.mode() != mode {
            return Err(Error::Input(format!("{} box in a {mode} track file", r.bbox.mode())));
        }
        let mut row = vec![
            r.sequence_id.clone(),
            r.frame.to_string(),
            r.camera.map(|c| c.to_string()).unwrap_or_default(),
            r.track_id.to_string(),
            r.class.to_string(),
        ];
        row.extend(r.bbox.values().into_iter().map(fmt_f64));
        row.push(fmt_f64(r.score));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_tracks(path: &Path, mode: Mode, records: &[TrackRecord]) -> Result<()> {
    write_tracks_to(BufWriter::new(File::create(path)?), mode, records)
}

/// Parses a track file; the mode follows from the header.
pub fn parse_tracks(reader: impl Read, name: &str) -> Result<(Mode, Vec<TrackRecord>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let perr = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mode = [Mode::D2, Mode::D3]
        .into_iter()
        .find(|m| track_header(*m) == header)
        .ok_or_else(|| perr(1, format!("unrecognized header {}", header.join(","))))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let parsed = parse_track_row(&rec, mode).map_err(|e| perr(line, e.to_string()))?;
        if !seen.insert((parsed.sequence_id.clone(), parsed.camera, parsed.frame, parsed.track_id)) {
            return Err(perr(line, format!("track {} repeated in frame {}", parsed.track_id, parsed.frame)));
        }
        out.push(parsed);
    }
    Ok((mode, out))
}

fn parse_track_row(rec: &csv::StringRecord, mode: Mode) -> Result<TrackRecord> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let num = |i: usize| -> Result<f64> {
        field(i)
            .parse::<f64>()
            .map_err(|_| Error::Input(format!("column {} is not a number: '{}'", i + 1, field(i))))
    };
    let int = |i: usize| -> Result<u64> {
        field(i)
            .parse::<u64>()
            .map_err(|_| Error::Input(format!("column {} is not an integer: '{}'", i + 1, field(i))))
    };
    let camera = match field(2) {
        "" => None,
        s => Some(s.parse::<Camera>()?),
    };
    let class: ObjectClass = field(4).parse()?;
    let bbox = match mode {
        Mode::D2 => {
            if camera.is_none() {
                return Err(Error::Input("2D rows need a camera".into()));
            }
            BoundingBox::D2(Box2D::new(num(5)?, num(6)?, num(7)?, num(8)?)?)
        }
        Mode::D3 => {
            if camera.is_some() {
                return Err(Error::Input("3D rows must not name a camera".into()));
            }
            BoundingBox::D3(Box3D::new(num(5)?, num(6)?, num(7)?, num(8)?, num(9)?, num(10)?, num(11)?)?)
        }
    };
    let score = num(rec.len() - 1)?;
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::InvalidValue(format!("score {score} outside [0, 1]")));
    }
    Ok(TrackRecord {
        sequence_id: field(0).to_string(),
        frame: int(1)?,
        camera,
        track_id: int(3)?,
        class,
        bbox,
        score,
    })
}

pub fn read_tracks(path: &Path) -> Result<(Mode, Vec<TrackRecord>)> {
    parse_tracks(File::open(path)?, &path.display().to_string())
}

/// Sorted, de-duplicated (sequence, camera) keys of a record set.
pub fn stream_keys(records: &[TrackRecord]) -> BTreeSet<(String, Option<Camera>)> {
    records.iter().map(|r| (r.sequence_id.clone(), r.camera)).collect()
}
