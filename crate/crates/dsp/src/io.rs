//! WAV, phone alignment and phone-mean files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use hound::{SampleFormat, WavSpec};
use vap_core::Speaker;

use crate::duration::{Phone, PhoneAlignment};
use crate::{DspError, Waveform};

/// Reads a WAV file. Channel 0 belongs to speaker A, channel 1 to B; a
/// mono file is assigned to `mono_speaker`.
pub fn read_wav(path: &Path, mono_speaker: Speaker) -> Result<Vec<Waveform>, DspError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(DspError::InvalidWave(format!("{channels} channels; expected mono or stereo")));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect::<Result<_, _>>()?
        }
    };
    let speakers: &[Speaker] = if channels == 1 { &[mono_speaker] } else { &Speaker::BOTH };
    speakers
        .iter()
        .enumerate()
        .map(|(c, &spk)| {
            let samples = interleaved.iter().skip(c).step_by(channels).copied().collect();
            Waveform::new(spec.sample_rate, samples, spk)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Writes one channel per wave; all waves must share rate and length.
pub fn write_wav(path: &Path, waves: &[&Waveform], format: WavFormat) -> Result<(), DspError> {
    let first = waves.first().ok_or_else(|| DspError::InvalidWave("nothing to write".into()))?;
    if waves.iter().any(|w| w.sample_rate != first.sample_rate || w.len() != first.len()) {
        return Err(DspError::InvalidWave("channels differ in rate or length".into()));
    }
    let spec = WavSpec {
        channels: waves.len() as u16,
        sample_rate: first.sample_rate,
        bits_per_sample: if format == WavFormat::Pcm16 { 16 } else { 32 },
        sample_format: if format == WavFormat::Pcm16 { SampleFormat::Int } else { SampleFormat::Float },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for i in 0..first.len() {
        for w in waves {
            let v = w.samples[i].clamp(-1.0, 1.0);
            match format {
                WavFormat::Pcm16 => writer.write_sample((v * 32767.0).round() as i16)?,
                WavFormat::Float32 => writer.write_sample(v as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

/// `phone,start,end` rows with a header.
pub fn read_alignment_csv<R: Read>(reader: R) -> Result<PhoneAlignment, DspError> {
    #[derive(serde::Deserialize)]
    struct Row {
        phone: String,
        start: f64,
        end: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = rdr.deserialize().collect::<Result<Vec<Row>, _>>().map_err(|e| DspError::Parse(e.to_string()))?;
    PhoneAlignment::new(rows.into_iter().map(|r| Phone { label: r.phone, start: r.start, end: r.end }).collect())
}

pub fn read_alignment(path: &Path) -> Result<PhoneAlignment, DspError> {
    read_alignment_csv(BufReader::new(File::open(path)?))
}

/// JSON object mapping phone labels to mean durations in seconds.
pub fn read_phone_means<R: Read>(reader: R) -> Result<BTreeMap<String, f64>, DspError> {
    serde_json::from_reader(reader).map_err(|e| DspError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let a = Waveform::new(16000, vec![0.0, 0.5, -0.5, 1.0], Speaker::A).unwrap();
        let b = Waveform::new(16000, vec![0.25, 0.0, -1.0, 0.1], Speaker::B).unwrap();
        write_wav(&path, &[&a, &b], WavFormat::Float32).unwrap();
        let back = read_wav(&path, Speaker::A).unwrap();
        assert_eq!(back.len(), 2);
        for (orig, got) in [&a, &b].iter().zip(&back) {
            assert_eq!(got.speaker, orig.speaker);
            for (x, y) in orig.samples.iter().zip(&got.samples) {
                assert!((x - y).abs() < 1e-7);
            }
        }
        write_wav(&path, &[&a], WavFormat::Pcm16).unwrap();
        let mono = read_wav(&path, Speaker::B).unwrap();
        assert_eq!(mono[0].speaker, Speaker::B);
        assert!((mono[0].samples[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn alignment_and_means_parse() {
        let al = read_alignment_csv("phone,start,end\nh,0.0,0.1\nai, 0.1, 0.3\n".as_bytes()).unwrap();
        assert_eq!(al.phones()[1].label, "ai");
        let means = read_phone_means(r#"{"h": 0.08, "ai": 0.15}"#.as_bytes()).unwrap();
        assert_eq!(means["ai"], 0.15);
    }
}
