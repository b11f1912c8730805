use std::fs;
use std::path::Path;

use vap_core::{FrameRate, Metric, Speaker};
use vap_dsp::io::{write_wav, WavFormat};
use vap_dsp::Waveform;
use vap_harness::cues::ablate_cue;
use vap_harness::pipeline::{dialog_features, DialogSource, ScpInput};
use vap_harness::{
    generate_corpus, load_dialog, read_manifest, read_report, run_pipeline, run_scp, synth_scp_pairs, write_report,
    CueTracks, Dialog, DialogEntry, HarnessError, Perturbation, PipelineOptions, RunReport, SynthDialogSpec, Variant,
    PITCH,
};
use vap_model::{Checkpoint, Frontend, ModelConfig, TrainingMetadata, VapModel};

const ALL: [Metric; 3] = [Metric::ShiftHold, Metric::ShiftPrediction, Metric::BcPrediction];

fn config(frontend: Frontend) -> ModelConfig {
    ModelConfig {
        frame_rate: FrameRate::HZ50,
        layers: 1,
        heads: 2,
        dim: 16,
        dropout: 0.0,
        frontend,
        context: 10.0,
        overlap: 1.0,
        ..ModelConfig::default()
    }
}

fn checkpoint(frontend: Frontend) -> Checkpoint<f32> {
    Checkpoint {
        model: VapModel::new(config(frontend), 4).unwrap(),
        metadata: TrainingMetadata { epoch: 1, ..TrainingMetadata::default() },
    }
}

fn cue_checkpoint() -> Checkpoint<f32> {
    checkpoint(Frontend::VaOnly { extra_dims: 4 })
}

fn dialogs(count: usize, seed: u64) -> Vec<Dialog> {
    let spec = SynthDialogSpec { duration: 40.0, seed, ..SynthDialogSpec::default() };
    generate_corpus(&spec, count)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, d)| Dialog::from_synth(format!("d{i}"), d))
        .collect()
}

fn ablate_pitch() -> Perturbation {
    Perturbation::AblateCue { cue: PITCH.into() }
}

#[test]
fn empty_perturbation_set_reports_original_only() {
    let report = run_pipeline(&dialogs(2, 0), &cue_checkpoint(), &[], &ALL, &PipelineOptions::default()).unwrap();
    assert_eq!(report.results.len(), 1);
    assert!(report.results[0].perturbation.is_original());
    assert_eq!(report.results[0].reports.len(), 3);
}

#[test]
fn original_is_listed_once_and_first() {
    let ps = [ablate_pitch(), Perturbation::Original, ablate_pitch()];
    let report = run_pipeline(&dialogs(2, 0), &cue_checkpoint(), &ps, &ALL, &PipelineOptions::default()).unwrap();
    let names: Vec<String> = report.results.iter().map(|r| r.perturbation.to_string()).collect();
    assert_eq!(names, ["original", "ablate:pitch"]);
}

#[test]
fn same_inputs_same_report() {
    let ds = dialogs(3, 1);
    let ck = cue_checkpoint();
    let opts = PipelineOptions { seed: 11, ..PipelineOptions::default() };
    let ps = [ablate_pitch(), Perturbation::cue_f0_shift(0.9)];
    let a = run_pipeline(&ds, &ck, &ps, &ALL, &opts).unwrap();
    let b = run_pipeline(&ds, &ck, &ps, &ALL, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.provenance.seed, 11);
    assert_eq!(a.provenance.checkpoint_id.len(), 64);
}

#[test]
fn events_are_shared_across_perturbations() {
    let ps = [ablate_pitch(), Perturbation::cue_f0_shift(0.5)];
    let report = run_pipeline(&dialogs(3, 2), &cue_checkpoint(), &ps, &ALL, &PipelineOptions::default()).unwrap();
    for m in ALL {
        let counts: Vec<_> = report
            .results
            .iter()
            .map(|r| {
                let c = r.reports.iter().find(|e| e.metric == m).unwrap().confusion;
                (c.positives(), c.negatives())
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]), "{m:?}: {counts:?}");
        assert!(counts[0].0 > 0, "{m:?} has no positives");
    }
}

#[test]
fn ablating_a_constant_channel_changes_nothing() {
    let mut ds = dialogs(2, 3);
    for d in &mut ds {
        let DialogSource::Cues(cues) = &mut d.source else { unreachable!() };
        *cues = ablate_cue(cues, PITCH).unwrap();
    }
    let report = run_pipeline(&ds, &cue_checkpoint(), &[ablate_pitch()], &ALL, &PipelineOptions::default()).unwrap();
    assert_eq!(report.results[0].reports, report.results[1].reports);
}

#[test]
fn ablated_channel_has_no_variance_over_active_frames() {
    let d = &dialogs(1, 4)[0];
    let DialogSource::Cues(cues) = &d.source else { unreachable!() };
    let ablated = ablate_cue(cues, PITCH).unwrap();
    for s in [Speaker::A, Speaker::B] {
        let active: Vec<f32> = ablated.channel(PITCH).unwrap().track(s).iter().copied().filter(|&v| v != 0.0).collect();
        let mean = active.iter().map(|&v| v as f64).sum::<f64>() / active.len() as f64;
        let var = active.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / active.len() as f64;
        assert!(var < 1e-12, "{s:?}: {var}");
        let before: Vec<f32> = cues.channel(PITCH).unwrap().track(s).iter().copied().filter(|&v| v != 0.0).collect();
        let before_mean = before.iter().map(|&v| v as f64).sum::<f64>() / before.len() as f64;
        assert!((mean - before_mean).abs() < 1e-5);
    }
}

#[test]
fn unknown_cue_is_a_validation_error() {
    let bad = Perturbation::AblateCue { cue: "tempo".into() };
    let err = run_pipeline(&dialogs(1, 0), &cue_checkpoint(), &[bad], &ALL, &PipelineOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("d0"), "{err}");
    let HarnessError::Stage { source, .. } = err else { panic!("no stage") };
    assert!(matches!(*source, HarnessError::UnknownCue(_)));
}

#[test]
fn audio_perturbations_need_audio() {
    let err = run_pipeline(&dialogs(1, 0), &cue_checkpoint(), &[Perturbation::F0Flat], &ALL, &PipelineOptions::default())
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn frame_rate_mismatch_is_rejected() {
    let spec = SynthDialogSpec { frame_rate: FrameRate::HZ20, duration: 30.0, ..SynthDialogSpec::default() };
    let d = Dialog::from_synth("slow", &generate_corpus(&spec, 1).unwrap()[0]);
    let err = run_pipeline(&[d], &cue_checkpoint(), &[], &ALL, &PipelineOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

fn svg_attr(svg: &str, attr: &str) -> f64 {
    let at = svg.find(&format!("{attr}=\"")).unwrap() + attr.len() + 2;
    svg[at..at + svg[at..].find('"').unwrap()].parse().unwrap()
}

#[test]
fn written_report_round_trips_and_plots_match() {
    let dir = tempfile::tempdir().unwrap();
    let ps = [ablate_pitch()];
    let report = run_pipeline(&dialogs(3, 5), &cue_checkpoint(), &ps, &ALL, &PipelineOptions::default()).unwrap();
    write_report(&report, dir.path()).unwrap();

    let mut back = read_report(&dir.path().join("report.json")).unwrap();
    let mut expected = report.clone();
    expected.results.iter_mut().for_each(|r| r.scores.clear());
    back.results.iter_mut().for_each(|r| r.scores.clear());
    assert_eq!(back, expected);

    for m in ALL {
        let svg = fs::read_to_string(dir.path().join(format!("{}.svg", m.name()))).unwrap();
        let original = report.report(&Perturbation::Original, m).unwrap();
        assert!((svg_attr(&svg, "data-baseline") - original.baseline_weighted_f1).abs() < 1e-6, "{m:?}");
        assert!((svg_attr(&svg, "data-value") - original.weighted_f1).abs() < 1e-6, "{m:?}");
    }

    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 3);
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    let events: usize = report.results.iter().flat_map(|r| &r.reports).map(|e| e.confusion.total()).sum();
    assert_eq!(scores.lines().count(), 1 + events);
    assert!(scores.starts_with("perturbation,dialog,event_id,kind,label,score,decision"));
}

#[test]
fn flushing_leaves_a_readable_report() {
    let dir = tempfile::tempdir().unwrap();
    let opts = PipelineOptions { flush_dir: Some(dir.path().to_path_buf()), ..PipelineOptions::default() };
    let report = run_pipeline(&dialogs(1, 6), &cue_checkpoint(), &[ablate_pitch()], &ALL, &opts).unwrap();
    let back = read_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(back.results.len(), report.results.len());
}

fn write_synth_manifest(dir: &Path, ds: &[vap_harness::SynthDialog]) {
    let mut entries = Vec::new();
    for (i, d) in ds.iter().enumerate() {
        let va = dir.join(format!("d{i}.json"));
        vap_core::io::write_segments_json(&d.grid.to_segments(), fs::File::create(&va).unwrap()).unwrap();
        d.cues.write_csv(fs::File::create(dir.join(format!("d{i}.csv"))).unwrap()).unwrap();
        entries.push(serde_json::json!({
            "name": format!("d{i}"),
            "va": format!("d{i}.json"),
            "features": format!("d{i}.csv"),
            "duration": d.grid.duration(),
        }));
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string(&entries).unwrap()).unwrap();
}

#[test]
fn manifest_dialogs_match_in_memory_ones() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthDialogSpec { duration: 30.0, seed: 8, ..SynthDialogSpec::default() };
    let ds = generate_corpus(&spec, 2).unwrap();
    write_synth_manifest(dir.path(), &ds);
    let entries: Vec<DialogEntry> = read_manifest(&dir.path().join("manifest.json")).unwrap();
    let cfg = config(Frontend::VaOnly { extra_dims: 4 });
    for (e, d) in entries.iter().zip(&ds) {
        let loaded = load_dialog(e, &cfg).unwrap();
        assert_eq!(loaded.grid, d.grid);
        assert_eq!(loaded.source, DialogSource::Cues(d.cues.clone()));
    }
    let from_disk: Vec<Dialog> = entries.iter().map(|e| load_dialog(e, &cfg).unwrap()).collect();
    let in_memory: Vec<Dialog> = ds.iter().enumerate().map(|(i, d)| Dialog::from_synth(format!("d{i}"), d)).collect();
    let ck = cue_checkpoint();
    let a = run_pipeline(&from_disk, &ck, &[], &ALL, &PipelineOptions::default()).unwrap();
    let b = run_pipeline(&in_memory, &ck, &[], &ALL, &PipelineOptions::default()).unwrap();
    assert_eq!(a.results, b.results);
}

#[test]
fn missing_manifest_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), r#"[{"va": "nowhere.json"}]"#).unwrap();
    let entries: Vec<DialogEntry> = read_manifest(&dir.path().join("manifest.json")).unwrap();
    let err = load_dialog(&entries[0], &config(Frontend::VaOnly { extra_dims: 0 })).unwrap_err();
    assert!(err.to_string().contains("nowhere.json"), "{err}");
}

/// Two channels of 16 kHz tones, voiced where each speaker is active.
fn voiced_audio(d: &vap_harness::SynthDialog, rate: u32) -> Vec<Waveform> {
    let fr = d.grid.frame_rate().as_f64();
    let n = (d.grid.duration() * rate as f64) as usize;
    [Speaker::A, Speaker::B]
        .map(|s| {
            let f0 = if s == Speaker::A { 120.0 } else { 210.0 };
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    let frame = ((t * fr) as usize).min(d.grid.len() - 1);
                    if d.grid.is_active(s, frame) {
                        0.3 * (2.0 * std::f64::consts::PI * f0 * t).sin()
                    } else {
                        0.0
                    }
                })
                .collect();
            Waveform::new(rate, samples, s).unwrap()
        })
        .into()
}

#[test]
fn audio_dialogs_run_every_audio_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthDialogSpec { duration: 20.0, seed: 12, ..SynthDialogSpec::default() };
    let d = &generate_corpus(&spec, 1).unwrap()[0];
    let va = dir.path().join("va.json");
    vap_core::io::write_segments_json(&d.grid.to_segments(), fs::File::create(&va).unwrap()).unwrap();
    let waves = voiced_audio(d, 16000);
    let wav = dir.path().join("a.wav");
    write_wav(&wav, &[&waves[0], &waves[1]], WavFormat::Float32).unwrap();
    let entry = DialogEntry { name: None, va, audio: Some(wav), features: None, alignment: None, duration: None };
    let ck = checkpoint(Frontend::LogMel { mels: 20 });
    let dialog = load_dialog(&entry, &ck.model.config).unwrap();
    assert!(matches!(&dialog.source, DialogSource::Audio(w) if w.len() == 2));
    let ps: Vec<Perturbation> =
        ["f0_flat", "f0_shift:0.9", "intensity_flat", "low_pass:400"].iter().map(|s| s.parse().unwrap()).collect();
    let report = run_pipeline(&[dialog.clone()], &ck, &ps, &[Metric::ShiftHold], &PipelineOptions::default()).unwrap();
    assert_eq!(report.results.len(), 5);
    let original = dialog_features(&dialog, &Perturbation::Original, &ck.model.config, None).unwrap();
    let lowpassed = dialog_features(&dialog, &ps[3], &ck.model.config, None).unwrap();
    assert_eq!(original.speech.dim(), lowpassed.speech.dim());
    assert_ne!(original.speech, lowpassed.speech);
    let err = run_pipeline(&[dialog], &ck, &[Perturbation::DurationAvg], &[Metric::ShiftHold], &PipelineOptions::default())
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn scp_regions_cover_both_variants() {
    let pairs = synth_scp_pairs(&SynthDialogSpec::default(), 4, 1).unwrap();
    let inputs = ScpInput::from_pairs(&pairs);
    assert_eq!(inputs.len(), 8);
    let out = run_scp(&inputs, &cue_checkpoint(), &[ablate_pitch()], &PipelineOptions::default()).unwrap();
    assert_eq!(out.len(), 4);
    for r in &out {
        assert_eq!(r.count, 4);
        for v in [r.mean.hold, r.mean.predictive, r.mean.reactive] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let report = RunReport {
        provenance: run_pipeline(&[], &cue_checkpoint(), &[], &ALL, &PipelineOptions::default()).unwrap().provenance,
        results: Vec::new(),
        scp: out,
    };
    assert!(report.scp_result(&Perturbation::Original, Variant::Long).is_some());
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("scp_regions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("scp_regions.svg").exists());
}

#[test]
fn cue_csv_rejects_ragged_rows() {
    let text = "pitch_a,pitch_b\n0.5,0\n0.4\n";
    assert!(CueTracks::read_csv(text.as_bytes(), FrameRate::HZ50).is_err());
}
