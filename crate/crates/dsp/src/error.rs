use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid waveform: {0}")]
    InvalidWave(String),
    #[error("sample rate {sample_rate} Hz is below 4 x f0_max ({f0_max} Hz)")]
    SampleRateTooLow { sample_rate: u32, f0_max: f64 },
    #[error("cutoff {cutoff} Hz must be positive and below Nyquist ({nyquist} Hz)")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contour does not describe this waveform: {0}")]
    ContourMismatch(String),
    #[error("phone alignment is empty")]
    EmptyAlignment,
    #[error("invalid phone {index}: {reason}")]
    InvalidAlignment { index: usize, reason: String },
    #[error("no mean duration for phone '{0}'")]
    MissingPhoneMean(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
