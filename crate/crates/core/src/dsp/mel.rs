//! Log-mel spectrogram analysis.
//!
//! Canonical settings: 16 kHz input, 64 ms Hann window (1024 samples),
//! 10 ms hop (160 samples), 128 mel bands over 0..8000 Hz on the HTK mel
//! scale, natural log with a 1e-5 floor.

use crate::dsp::stft::StftPlan;
use crate::dsp::wav::{Waveform, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::mat::Mat;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate_hz: CANONICAL_SAMPLE_RATE,
            n_fft: 1024, // 64 ms at 16 kHz
            hop: 160,    // 10 ms at 16 kHz
            n_mels: 128,
            f_min_hz: 0.0,
            f_max_hz: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.hop as f64 / self.sample_rate_hz as f64
    }

    pub fn window_ms(&self) -> f64 {
        1000.0 * self.n_fft as f64 / self.sample_rate_hz as f64
    }
}

/// Log-mel energies, `frames` is T_m x n_mels.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub frames: Mat,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn n_mels(&self) -> usize {
        self.frames.cols()
    }
}

/// Triangular mel filterbank, `n_mels x (n_fft/2 + 1)`.
///
/// Band edges are spaced uniformly on the mel scale; every row is
/// guaranteed to hit at least one FFT bin.
pub fn mel_filterbank(
    sample_rate_hz: u32,
    n_fft: usize,
    n_mels: usize,
    f_min_hz: f64,
    f_max_hz: f64,
) -> Result<Mat> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    if n_mels == 0 {
        return Err(Error::config("n_mels must be at least 1"));
    }
    if !(0.0 <= f_min_hz && f_min_hz < f_max_hz && f_max_hz <= nyquist) {
        return Err(Error::config(format!(
            "invalid frequency range [{f_min_hz}, {f_max_hz}] for nyquist {nyquist}"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(f_min_hz);
    let mel_hi = hz_to_mel(f_max_hz);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate_hz as f64 / n_fft as f64;

    let mut bank = Mat::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = bank.row_mut(m);
        let mut any = false;
        for (j, w) in row.iter_mut().enumerate() {
            let f = j as f64 * bin_hz;
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
            any |= *w > 0.0;
        }
        if !any {
            return Err(Error::config(format!(
                "mel band {m} ({left:.1}..{right:.1} Hz) covers no FFT bin; \
                 reduce n_mels or increase n_fft"
            )));
        }
    }
    Ok(bank)
}

/// Log-mel spectrogram with the canonical parameters.
pub fn mel_spectrogram(waveform: &Waveform) -> Result<MelSpectrogram> {
    mel_spectrogram_with(waveform, &MelConfig::default())
}

pub fn mel_spectrogram_with(waveform: &Waveform, config: &MelConfig) -> Result<MelSpectrogram> {
    if waveform.sample_rate_hz != config.sample_rate_hz {
        return Err(Error::data(format!(
            "waveform is {} Hz, expected {} Hz (no resampler; resample upstream)",
            waveform.sample_rate_hz, config.sample_rate_hz
        )));
    }
    let bank = mel_filterbank(
        config.sample_rate_hz,
        config.n_fft,
        config.n_mels,
        config.f_min_hz,
        config.f_max_hz,
    )?;
    let plan = StftPlan::new(config.n_fft, config.hop)?;
    let spectrum = plan.stft(&waveform.samples)?;

    let mut frames = Mat::zeros(spectrum.len(), config.n_mels);
    let mut power = vec![0.0; plan.bins()];
    for (t, frame) in spectrum.iter().enumerate() {
        for (p, c) in power.iter_mut().zip(frame) {
            *p = c.norm_sqr();
        }
        let out = frames.row_mut(t);
        bank.matvec(&power, out);
        for v in out.iter_mut() {
            *v = v.max(config.log_floor).ln();
        }
    }
    Ok(MelSpectrogram {
        frames,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn htk_mel_of_700_hz() {
        // 2595 * log10(2)
        assert!((hz_to_mel(700.0) - 781.1742).abs() < 1e-3);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filterbank_nonnegative_and_covering() {
        let bank = mel_filterbank(16_000, 1024, 128, 0.0, 8000.0).unwrap();
        assert_eq!(bank.rows(), 128);
        assert_eq!(bank.cols(), 513);
        for row in bank.row_iter() {
            assert!(row.iter().all(|&w| w >= 0.0 && w.is_finite()));
            assert!(row.iter().any(|&w| w > 0.0));
        }
    }

    #[test]
    fn filter_peaks_strictly_increase() {
        let bank = mel_filterbank(16_000, 1024, 128, 0.0, 8000.0).unwrap();
        let argmax = |row: &[f64]| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let peaks: Vec<usize> = bank.row_iter().map(argmax).collect();
        for w in peaks.windows(2) {
            assert!(w[0] < w[1], "peaks not strictly increasing: {:?}", w);
        }
    }

    #[test]
    fn invalid_range_rejected() {
        assert!(mel_filterbank(16_000, 1024, 128, 4000.0, 2000.0).is_err());
        assert!(mel_filterbank(16_000, 1024, 128, 0.0, 9000.0).is_err());
    }

    #[test]
    fn silence_hits_log_floor() {
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        let mel = mel_spectrogram(&w).unwrap();
        let floor = 1e-5f64.ln();
        assert!(mel.frames.data().iter().all(|&v| (v - floor).abs() < 1e-12));
    }

    #[test]
    fn window_and_hop_sample_counts() {
        let config = MelConfig::default();
        assert_eq!(config.n_fft, 1024);
        assert_eq!(config.hop, 160);
        assert!((config.window_ms() - 64.0).abs() < 1e-12);
        assert!((config.hop_ms() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn pure_tone_peaks_in_nearest_band() {
        let sr = 16_000u32;
        let samples: Vec<f64> = (0..sr as usize)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr as f64).sin() * 0.5)
            .collect();
        let w = Waveform::new(samples, sr).unwrap();
        let mel = mel_spectrogram(&w).unwrap();

        // Which band's filter peaks closest to 1 kHz?
        let bank = mel_filterbank(16_000, 1024, 128, 0.0, 8000.0).unwrap();
        let bin_hz = 16_000.0 / 1024.0;
        let expected = (0..bank.rows())
            .min_by(|&a, &b| {
                let fa = bank.row(a).iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0 as f64 * bin_hz;
                let fb = bank.row(b).iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0 as f64 * bin_hz;
                (fa - 1000.0).abs().partial_cmp(&(fb - 1000.0).abs()).unwrap()
            })
            .unwrap();

        for t in 0..mel.len() {
            let row = mel.frames.row(t);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, expected, "frame {t}");
        }
    }

    #[test]
    fn wrong_sample_rate_rejected() {
        let w = Waveform::new(vec![0.0; 44_100], 44_100).unwrap();
        assert!(mel_spectrogram(&w).is_err());
    }
}
