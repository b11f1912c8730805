//! Voice activity annotation files.
//!
//! JSON: `[{"speaker": "A", "start": 0.0, "end": 1.2}, ...]`.
//! CSV: a `speaker,start,end` header followed by one segment per row.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::va::{Speaker, VaError, VaSegment};

#[derive(Deserialize)]
struct RawSegment {
    speaker: String,
    start: f64,
    end: f64,
}

fn convert(raw: Vec<RawSegment>) -> Result<Vec<VaSegment>, VaError> {
    raw.into_iter()
        .enumerate()
        .map(|(index, r)| {
            let speaker = Speaker::parse(&r.speaker)
                .ok_or(VaError::UnknownSpeaker { index, value: r.speaker })?;
            Ok(VaSegment::new(speaker, r.start, r.end))
        })
        .collect()
}

pub fn read_segments_json<R: Read>(reader: R) -> Result<Vec<VaSegment>, VaError> {
    let raw: Vec<RawSegment> =
        serde_json::from_reader(reader).map_err(|e| VaError::Parse(e.to_string()))?;
    convert(raw)
}

pub fn read_segments_csv<R: Read>(reader: R) -> Result<Vec<VaSegment>, VaError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let raw = rdr
        .deserialize()
        .collect::<Result<Vec<RawSegment>, _>>()
        .map_err(|e| VaError::Parse(e.to_string()))?;
    convert(raw)
}

/// Reads an annotation file, choosing the format by extension.
pub fn read_segments(path: &Path) -> Result<Vec<VaSegment>, VaError> {
    let reader = BufReader::new(File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_segments_csv(reader),
        _ => read_segments_json(reader),
    }
}

#[derive(Serialize)]
struct OutSegment {
    speaker: Speaker,
    start: f64,
    end: f64,
}

pub fn write_segments_json<W: Write>(segments: &[VaSegment], writer: W) -> Result<(), VaError> {
    let out: Vec<_> = segments
        .iter()
        .map(|s| OutSegment { speaker: s.speaker, start: s.start, end: s.end })
        .collect();
    serde_json::to_writer_pretty(writer, &out).map_err(|e| VaError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv_agree() {
        let json = r#"[{"speaker":"A","start":0.0,"end":1.5},{"speaker":"B","start":2.0,"end":3.0}]"#;
        let csv = "speaker,start,end\nA,0.0,1.5\nB, 2.0, 3.0\n";
        let a = read_segments_json(json.as_bytes()).unwrap();
        let b = read_segments_csv(csv.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], VaSegment::new(Speaker::B, 2.0, 3.0));

        let mut buf = Vec::new();
        write_segments_json(&a, &mut buf).unwrap();
        assert_eq!(read_segments_json(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn unknown_speaker_is_identified() {
        let json = r#"[{"speaker":"A","start":0.0,"end":1.0},{"speaker":"C","start":2.0,"end":3.0}]"#;
        match read_segments_json(json.as_bytes()) {
            Err(VaError::UnknownSpeaker { index, value }) => {
                assert_eq!(index, 1);
                assert_eq!(value, "C");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
