//! Per-speaker scalar cue channels that ride along with the voice activity
//! as extra frontend dimensions. A value of exactly 0 marks a frame where
//! the speaker is silent.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use vap_core::{FrameRate, Speaker};

use crate::HarnessError;

pub const PITCH: &str = "pitch";
pub const INTENSITY: &str = "intensity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueChannel {
    pub name: String,
    /// Values for speaker A and speaker B.
    pub values: [Vec<f32>; 2],
}

impl CueChannel {
    pub fn track(&self, speaker: Speaker) -> &[f32] {
        &self.values[speaker.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueTracks {
    pub frame_rate: FrameRate,
    pub channels: Vec<CueChannel>,
}

impl CueTracks {
    pub fn new(frame_rate: FrameRate, channels: Vec<CueChannel>) -> Result<Self, HarnessError> {
        let tracks = CueTracks { frame_rate, channels };
        tracks.validate()?;
        Ok(tracks)
    }

    /// All-silent channels with the given names.
    pub fn silent(frame_rate: FrameRate, frames: usize, names: &[&str]) -> Self {
        let channels = names
            .iter()
            .map(|n| CueChannel { name: n.to_string(), values: [vec![0.0; frames], vec![0.0; frames]] })
            .collect();
        CueTracks { frame_rate, channels }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let len = self.len();
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].iter().any(|o| o.name == c.name) {
                return Err(HarnessError::Invalid(format!("duplicate cue channel `{}`", c.name)));
            }
            if c.values.iter().any(|v| v.len() != len) {
                return Err(HarnessError::Invalid(format!("cue channel `{}` length mismatch", c.name)));
            }
            if c.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(HarnessError::Invalid(format!("cue channel `{}` is not finite", c.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.values[0].len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn channel(&self, name: &str) -> Option<&CueChannel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_mut(&mut self, name: &str) -> Result<&mut CueChannel, HarnessError> {
        self.channels
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| HarnessError::UnknownCue(name.to_string()))
    }

    /// Frontend extra dimensions: two columns (A, B) per channel.
    pub fn dims(&self) -> usize {
        2 * self.channels.len()
    }

    /// `[frames x dims]` matrix laid out as `c0_A, c0_B, c1_A, ...`.
    pub fn to_features(&self) -> Array2<f32> {
        Array2::from_shape_fn((self.len(), self.dims()), |(t, j)| self.channels[j / 2].values[j % 2][t])
    }

    /// CSV with one `<name>_a,<name>_b` column pair per channel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> =
            self.channels.iter().flat_map(|c| [format!("{}_a", c.name), format!("{}_b", c.name)]).collect();
        out.write_record(&header)?;
        for t in 0..self.len() {
            out.write_record(self.channels.iter().flat_map(|c| [c.values[0][t].to_string(), c.values[1][t].to_string()]))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, frame_rate: FrameRate) -> Result<Self, HarnessError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.is_empty() || header.len() % 2 != 0 {
            return Err(HarnessError::Invalid("cue CSV needs `<name>_a,<name>_b` column pairs".into()));
        }
        let mut channels = Vec::new();
        for pair in header.iter().collect::<Vec<_>>().chunks(2) {
            let name = pair[0].strip_suffix("_a");
            if name.is_none() || Some(pair[1].strip_suffix("_b").unwrap_or("")) != name {
                return Err(HarnessError::Invalid(format!("bad cue column pair `{}`,`{}`", pair[0], pair[1])));
            }
            channels.push(CueChannel { name: name.unwrap().to_string(), values: [Vec::new(), Vec::new()] });
        }
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let v: f32 = field
                    .trim()
                    .parse()
                    .map_err(|_| HarnessError::Invalid(format!("cue CSV row {}: bad value `{field}`", line + 1)))?;
                channels[j / 2].values[j % 2].push(v);
            }
        }
        CueTracks::new(frame_rate, channels)
    }
}

fn map_active(tracks: &CueTracks, name: &str, f: impl Fn(&[f32]) -> Box<dyn Fn(f32) -> f32>) -> Result<CueTracks, HarnessError> {
    let mut out = tracks.clone();
    let channel = out.channel_mut(name)?;
    for track in channel.values.iter_mut() {
        let g = f(track);
        track.iter_mut().filter(|v| **v != 0.0).for_each(|v| *v = g(*v));
    }
    Ok(out)
}

/// Replaces the named channel by its per-speaker mean over active (nonzero)
/// frames. Silent frames stay 0 and every other channel is untouched.
pub fn ablate_cue(tracks: &CueTracks, name: &str) -> Result<CueTracks, HarnessError> {
    map_active(tracks, name, |track| {
        let (sum, n) = track.iter().filter(|v| **v != 0.0).fold((0.0f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
        let mean = if n == 0 { 0.0 } else { (sum / n as f64) as f32 };
        Box::new(move |_| mean)
    })
}

/// Adds `delta` to every active frame of the named channel. On the log2
/// pitch channel `delta = log2(factor)` scales the underlying F0.
pub fn offset_cue(tracks: &CueTracks, name: &str, delta: f64) -> Result<CueTracks, HarnessError> {
    let delta = delta as f32;
    map_active(tracks, name, |_| Box::new(move |v| {
        let out = v + delta;
        // keep the channel's silence marker unambiguous
        if out == 0.0 { f32::MIN_POSITIVE } else { out }
    }))
}
