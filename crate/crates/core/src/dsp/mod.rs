//! Waveform I/O, mel-spectrogram analysis and Griffin-Lim synthesis.

pub mod griffin_lim;
pub mod mel;
pub mod stft;
pub mod wav;

pub use griffin_lim::{griffin_lim, griffin_lim_with_trace, DEFAULT_ITERS};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_spectrogram_with, mel_to_hz, MelConfig, MelSpectrogram};
pub use stft::{frame_count, hann_window, StftPlan};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, Waveform, CANONICAL_SAMPLE_RATE};
