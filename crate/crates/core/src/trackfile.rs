//! Tracker output as MOT-style text: one `frame,trackId,x,y,w,h` line per
//! observation, ordered by frame then track id.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{Appearance, BBox, Detection, Trajectory};

pub fn write_tracks<W: Write>(tracks: &[Trajectory], mut out: W) -> Result<()> {
    let mut rows: Vec<(usize, u64, BBox)> = tracks
        .iter()
        .flat_map(|t| t.observations.iter().map(move |d| (d.frame, t.track_id, d.bbox)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (frame, id, b) in rows {
        writeln!(out, "{frame},{id},{},{},{},{}", b.x, b.y, b.w, b.h).map_err(|e| Error::io("<tracks>", e))?;
    }
    Ok(())
}

/// Reads tracks back. Observations carry boxes only; appearance is empty.
pub fn read_tracks<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut by_id: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<tracks>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected frame,trackId,x,y,w,h, got {} fields", fields.len()),
            });
        }
        let bad = |what: &str| Error::Parse {
            line: lineno,
            message: format!("invalid {what}"),
        };
        let frame: usize = fields[0].parse().map_err(|_| bad("frame"))?;
        let id: u64 = fields[1].parse().map_err(|_| bad("track id"))?;
        let mut v = [0.0; 4];
        for (k, name) in ["x", "y", "w", "h"].iter().enumerate() {
            v[k] = fields[2 + k].parse().map_err(|_| bad(name))?;
        }
        let bbox = BBox::new(v[0], v[1], v[2], v[3]);
        if !bbox.is_valid() {
            return Err(Error::InvalidRecord {
                line: lineno,
                message: format!("track {id} at frame {frame} has a degenerate box"),
            });
        }
        let obs = by_id.entry(id).or_default();
        if obs.iter().any(|d| d.frame == frame) {
            return Err(Error::InvalidRecord {
                line: lineno,
                message: format!("track {id} appears twice in frame {frame}"),
            });
        }
        obs.push(Detection {
            frame,
            id: lineno as u64,
            bbox,
            appearance: Appearance::default(),
        });
    }
    Ok(by_id
        .into_iter()
        .map(|(track_id, mut observations)| {
            observations.sort_by_key(|d| d.frame);
            Trajectory { track_id, observations }
        })
        .collect())
}

pub fn save_tracks(tracks: &[Trajectory], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tracks(tracks, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_tracks(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracks(std::io::BufReader::new(file))
}
