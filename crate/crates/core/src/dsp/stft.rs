//! Short-time Fourier analysis with frames fully inside the signal
//! (no center padding).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

/// Number of analysis frames for a signal of `n_samples`, or None if the
/// signal is shorter than one window.
pub fn frame_count(n_samples: usize, n_fft: usize, hop: usize) -> Option<usize> {
    if n_samples < n_fft {
        None
    } else {
        Some((n_samples - n_fft) / hop + 1)
    }
}

/// Reusable forward/inverse FFT plan with its window.
pub struct StftPlan {
    pub n_fft: usize,
    pub hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        if n_fft == 0 || hop == 0 {
            return Err(Error::config("n_fft and hop must be positive"));
        }
        let mut planner = FftPlanner::new();
        Ok(StftPlan {
            n_fft,
            hop,
            window: hann_window(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        })
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// One-sided STFT: `frame_count x (n_fft/2 + 1)` complex values.
    pub fn stft(&self, samples: &[f64]) -> Result<Vec<Vec<Complex<f64>>>> {
        let n_frames = frame_count(samples.len(), self.n_fft, self.hop).ok_or_else(|| {
            Error::data(format!(
                "signal of {} samples is shorter than one {}-sample window",
                samples.len(),
                self.n_fft
            ))
        })?;
        let mut buffer = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut frames = Vec::with_capacity(n_frames);
        for m in 0..n_frames {
            let start = m * self.hop;
            for (i, slot) in buffer.iter_mut().enumerate() {
                *slot = Complex::new(samples[start + i] * self.window[i], 0.0);
            }
            self.forward.process(&mut buffer);
            frames.push(buffer[..self.bins()].to_vec());
        }
        Ok(frames)
    }

    /// Weighted overlap-add inverse of a one-sided STFT. Output length is
    /// `(frames - 1) * hop + n_fft`.
    pub fn istft(&self, frames: &[Vec<Complex<f64>>]) -> Result<Vec<f64>> {
        if frames.is_empty() {
            return Err(Error::data("cannot invert an empty spectrogram"));
        }
        let bins = self.bins();
        let out_len = (frames.len() - 1) * self.hop + self.n_fft;
        let mut output = vec![0.0; out_len];
        let mut weight = vec![0.0; out_len];
        let mut buffer = vec![Complex::new(0.0, 0.0); self.n_fft];
        let scale = 1.0 / self.n_fft as f64;
        for (m, frame) in frames.iter().enumerate() {
            if frame.len() != bins {
                return Err(Error::data(format!(
                    "frame {m} has {} bins, expected {bins}",
                    frame.len()
                )));
            }
            buffer[..bins].copy_from_slice(frame);
            // Rebuild the conjugate-symmetric upper half.
            for k in 1..self.n_fft / 2 {
                buffer[self.n_fft - k] = frame[k].conj();
            }
            self.inverse.process(&mut buffer);
            let start = m * self.hop;
            for i in 0..self.n_fft {
                let w = self.window[i];
                output[start + i] += buffer[i].re * scale * w;
                weight[start + i] += w * w;
            }
        }
        for (o, w) in output.iter_mut().zip(&weight) {
            if *w > 1e-12 {
                *o /= *w;
            } else {
                *o = 0.0;
            }
        }
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_is_periodic() {
        let w = hann_window(8);
        assert!(w[0].abs() < 1e-15);
        assert!((w[4] - 1.0).abs() < 1e-12);
        // Periodic window: w[1] != w[7] would be symmetric; periodic has w[k] = w[n-k].
        assert!((w[1] - w[7]).abs() < 1e-12);
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_count(1024, 1024, 160), Some(1));
        assert_eq!(frame_count(1023, 1024, 160), None);
        assert_eq!(frame_count(16_000, 1024, 160), Some((16_000 - 1024) / 160 + 1));
    }

    #[test]
    fn stft_istft_reconstructs_interior() {
        let plan = StftPlan::new(256, 64).unwrap();
        let n = 256 + 64 * 20;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 13.0 * i as f64 / 256.0).sin() * 0.4)
            .collect();
        let frames = plan.stft(&samples).unwrap();
        let back = plan.istft(&frames).unwrap();
        assert_eq!(back.len(), (frames.len() - 1) * 64 + 256);
        // Interior samples (full window coverage) match closely.
        for i in 256..back.len() - 256 {
            assert!(
                (back[i] - samples[i]).abs() < 1e-9,
                "sample {i}: {} vs {}",
                back[i],
                samples[i]
            );
        }
    }

    #[test]
    fn too_short_signal_is_error() {
        let plan = StftPlan::new(1024, 160).unwrap();
        assert!(plan.stft(&vec![0.0; 512]).is_err());
    }
}
