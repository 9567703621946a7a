//! Line-oriented JSON sequence files (`ctxtrack-seq/1`).
//!
//! Line 1 is a header:
//!
//! ```text
//! {"schema":"ctxtrack-seq/1","frameWidth":640.0,"frameHeight":480.0,"bins":64,"dominantK":3,"frameCount":700,"annotated":true}
//! ```
//!
//! Every following non-blank line is one record. Records carrying `objectId`
//! are annotations, the others are detections:
//!
//! ```text
//! {"frame":0,"id":3,"objectId":7,"x":1.0,"y":2.0,"w":10.0,"h":20.0,"contrast":0.4,
//!  "histogram":[...B values...],"covariance":[c00,c01,c02,c11,c12,c22],"dominant":[[bin,weight],...]}
//! ```
//!
//! Boxes are clipped to the frame on load. An empty file is a valid sequence
//! with zero frames.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{AnnotatedObject, Appearance, BBox, Detection, Sequence};

pub const SEQ_SCHEMA: &str = "ctxtrack-seq/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Header {
    schema: String,
    frame_width: f64,
    frame_height: f64,
    bins: usize,
    dominant_k: usize,
    #[serde(default)]
    frame_count: usize,
    #[serde(default)]
    annotated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Record {
    frame: usize,
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_id: Option<u64>,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    contrast: f64,
    histogram: Vec<f64>,
    covariance: [f64; 6],
    dominant: Vec<(usize, f64)>,
}

impl Record {
    fn from_detection(d: &Detection, object_id: Option<u64>) -> Self {
        Record {
            frame: d.frame,
            id: d.id,
            object_id,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            contrast: d.appearance.contrast,
            histogram: d.appearance.histogram.clone(),
            covariance: d.appearance.covariance,
            dominant: d.appearance.dominant.clone(),
        }
    }
}

/// Parses a sequence from any buffered reader.
pub fn read_sequence<R: BufRead>(reader: R) -> Result<Sequence> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Ok(Sequence::new(0.0, 0.0, 0)),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let h: Header = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad header: {e}"),
                })?;
                break (i + 1, h);
            }
        }
    };
    let (header_line, header) = header;
    if header.schema != SEQ_SCHEMA {
        return Err(Error::Schema {
            expected: SEQ_SCHEMA.into(),
            found: header.schema,
        });
    }
    if !(header.frame_width > 0.0 && header.frame_height > 0.0) {
        return Err(Error::InvalidRecord {
            line: header_line,
            message: "frame dimensions must be positive".into(),
        });
    }

    let mut seq = Sequence::new(header.frame_width, header.frame_height, header.frame_count);
    seq.bins = header.bins;
    seq.dominant_k = header.dominant_k;
    let mut annotations: Vec<Vec<AnnotatedObject>> = vec![Vec::new(); header.frame_count];
    let mut annotated = header.annotated;
    let mut det_ids = HashSet::new();
    let mut ann_ids = HashSet::new();
    let mut frame_objects = HashSet::new();

    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let invalid = |message: String| Error::InvalidRecord {
            line: lineno,
            message: format!("record frame={} id={}: {message}", rec.frame, rec.id),
        };
        let raw = BBox::new(rec.x, rec.y, rec.w, rec.h);
        if !raw.is_valid() {
            return Err(invalid(format!("box must have w > 0 and h > 0 (w={}, h={})", rec.w, rec.h)));
        }
        let bbox = raw
            .clamp_to(header.frame_width, header.frame_height)
            .ok_or_else(|| invalid("box lies entirely outside the frame".into()))?;
        let appearance = Appearance {
            histogram: rec.histogram.clone(),
            covariance: rec.covariance,
            dominant: rec.dominant.clone(),
            contrast: rec.contrast,
        };
        appearance
            .validate(header.bins, header.dominant_k)
            .map_err(invalid)?;
        let det = Detection {
            frame: rec.frame,
            id: rec.id,
            bbox,
            appearance,
        };
        if rec.frame >= seq.frames.len() {
            seq.frames.resize(rec.frame + 1, Vec::new());
            annotations.resize(rec.frame + 1, Vec::new());
        }
        match rec.object_id {
            Some(object_id) => {
                annotated = true;
                if !ann_ids.insert(rec.id) {
                    return Err(invalid("duplicate annotation id".into()));
                }
                if !frame_objects.insert((rec.frame, object_id)) {
                    return Err(invalid(format!("object {object_id} annotated twice in this frame")));
                }
                annotations[rec.frame].push(AnnotatedObject {
                    detection: det,
                    object_id,
                });
            }
            None => {
                if !det_ids.insert(rec.id) {
                    return Err(invalid("duplicate detection id".into()));
                }
                seq.frames[rec.frame].push(det);
            }
        }
    }
    if annotated {
        annotations.resize(seq.frames.len(), Vec::new());
        seq.annotations = Some(annotations);
    }
    Ok(seq)
}

pub fn write_sequence<W: Write>(seq: &Sequence, mut out: W) -> Result<()> {
    let header = Header {
        schema: SEQ_SCHEMA.into(),
        frame_width: seq.frame_width,
        frame_height: seq.frame_height,
        bins: seq.bins,
        dominant_k: seq.dominant_k,
        frame_count: seq.frames.len(),
        annotated: seq.annotations.is_some(),
    };
    let io = |e| Error::io("<sequence writer>", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for (f, dets) in seq.frames.iter().enumerate() {
        for d in dets {
            serde_json::to_writer(&mut out, &Record::from_detection(d, None))?;
            out.write_all(b"\n").map_err(io)?;
        }
        if let Some(ann) = seq.annotations.as_ref().and_then(|a| a.get(f)) {
            for a in ann {
                serde_json::to_writer(
                    &mut out,
                    &Record::from_detection(&a.detection, Some(a.object_id)),
                )?;
                out.write_all(b"\n").map_err(io)?;
            }
        }
    }
    Ok(())
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<Sequence> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sequence(std::io::BufReader::new(file))
}

pub fn save_sequence(seq: &Sequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_sequence(seq, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn sequence_to_string(seq: &Sequence) -> String {
    let mut buf = Vec::new();
    write_sequence(seq, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(frame: usize, id: u64, w: f64) -> String {
        let mut hist = vec![0.0; 4];
        hist[0] = 1.0;
        format!(
            r#"{{"frame":{frame},"id":{id},"x":1.0,"y":1.0,"w":{w},"h":5.0,"contrast":0.5,"histogram":{hist:?},"covariance":[1,0,0,1,0,1],"dominant":[[0,1.0]]}}"#
        )
    }

    const HEADER: &str = r#"{"schema":"ctxtrack-seq/1","frameWidth":100.0,"frameHeight":80.0,"bins":4,"dominantK":3}"#;

    #[test]
    fn two_frames() {
        let text = format!("{HEADER}\n{}\n{}\n", record(0, 1, 5.0), record(1, 2, 5.0));
        let seq = read_sequence(text.as_bytes()).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frames[1][0].id, 2);
        assert!(seq.annotations.is_none());
    }

    #[test]
    fn zero_width_box_names_record() {
        let text = format!("{HEADER}\n{}\n{}\n", record(0, 1, 5.0), record(0, 9, 0.0));
        let err = read_sequence(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("id=9"), "{err}");
    }

    #[test]
    fn empty_file_is_empty_sequence() {
        let seq = read_sequence("".as_bytes()).unwrap();
        assert_eq!(seq.len(), 0);
    }

    #[test]
    fn overflowing_box_is_clamped() {
        let text = format!("{HEADER}\n{}\n", record(0, 1, 500.0));
        let seq = read_sequence(text.as_bytes()).unwrap();
        assert_eq!(seq.frames[0][0].bbox.w, 99.0);
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = HEADER.replace("ctxtrack-seq/1", "ctxtrack-seq/9");
        assert!(matches!(
            read_sequence(text.as_bytes()),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn duplicate_detection_id_rejected() {
        let text = format!("{HEADER}\n{}\n{}\n", record(0, 1, 5.0), record(1, 1, 5.0));
        assert!(read_sequence(text.as_bytes()).is_err());
    }

    #[test]
    fn header_frame_count_keeps_trailing_empty_frames() {
        let header = HEADER.replace("}", r#","frameCount":5}"#);
        let text = format!("{header}\n{}\n", record(1, 1, 5.0));
        let seq = read_sequence(text.as_bytes()).unwrap();
        assert_eq!(seq.len(), 5);
        let again = read_sequence(sequence_to_string(&seq).as_bytes()).unwrap();
        assert_eq!(again, seq);
    }
}
