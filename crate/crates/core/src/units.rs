//! Discrete content encoder: speaker normalization, k-means unit
//! discovery, and nearest-centroid encoding.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{squared_distance, Mat};
use crate::tensor::{read_sidecar, read_tensor_expect, write_sidecar, write_tensor, TensorKind};
use crate::types::{FeatureSequence, UnitSequence};

pub const DEFAULT_CLUSTERS: usize = 100;

/// Dictionary of discrete speech units: one centroid per unit.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub centroids: Mat,
    pub seed: u64,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }
}

/// Per-speaker, per-dimension standardization over the pooled frames of
/// each speaker. Dimensions with zero variance map to zero through the
/// epsilon guard.
pub fn speaker_normalize(features: &[FeatureSequence]) -> Result<Vec<FeatureSequence>> {
    const EPS: f64 = 1e-8;

    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, seq) in features.iter().enumerate() {
        seq.validate()?;
        by_speaker.entry(seq.speaker_id.as_str()).or_default().push(i);
    }

    let mut output: Vec<FeatureSequence> = features.to_vec();
    for (speaker, indices) in by_speaker {
        let dim = features[indices[0]].dim();
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        for &i in &indices {
            let seq = &features[i];
            if seq.dim() != dim {
                return Err(Error::data(format!(
                    "speaker '{speaker}' mixes feature dimensions {dim} and {}",
                    seq.dim()
                )));
            }
            for frame in seq.frames.row_iter() {
                for (m, &x) in mean.iter_mut().zip(frame) {
                    *m += x;
                }
                count += 1;
            }
        }
        if count < 2 {
            return Err(Error::data(format!(
                "speaker '{speaker}' has {count} pooled frame(s); need at least 2 to standardize"
            )));
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }

        let mut var = vec![0.0; dim];
        for &i in &indices {
            for frame in features[i].frames.row_iter() {
                for (v, (&x, &m)) in var.iter_mut().zip(frame.iter().zip(&mean)) {
                    let d = x - m;
                    *v += d * d;
                }
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / ((v / count as f64).sqrt().max(EPS)))
            .collect();

        for &i in &indices {
            let frames = &mut output[i].frames;
            for t in 0..frames.rows() {
                for (x, (&m, &s)) in frames.row_mut(t).iter_mut().zip(mean.iter().zip(&inv_std)) {
                    *x = (*x - m) * s;
                }
            }
        }
    }
    Ok(output)
}

#[derive(Debug, Clone, Copy)]
pub struct KmeansOptions {
    /// Stop when the relative inertia improvement falls below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions {
            tol: 1e-4,
            max_iters: 100,
        }
    }
}

/// Result of a k-means fit, with per-iteration inertia for diagnostics.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub codebook: Codebook,
    pub inertia: f64,
    pub iterations: usize,
    pub inertia_trace: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ initialization. Deterministic given
/// `(frames, k, seed)`; empty clusters are reseeded to the point farthest
/// from its assigned centroid.
pub fn kmeans_fit(frames: &Mat, k: usize, seed: u64) -> Result<KmeansFit> {
    kmeans_fit_with(frames, k, seed, &KmeansOptions::default())
}

pub fn kmeans_fit_with(frames: &Mat, k: usize, seed: u64, opts: &KmeansOptions) -> Result<KmeansFit> {
    let n = frames.rows();
    let dim = frames.cols();
    if k == 0 {
        return Err(Error::data("k must be at least 1"));
    }
    if n < k {
        return Err(Error::data(format!("{n} frames cannot support {k} clusters")));
    }
    if !frames.is_finite() {
        return Err(Error::data("frames contain non-finite values"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(frames, k, &mut rng);

    let mut assignment = vec![0usize; n];
    let mut inertia_trace = Vec::new();
    let mut prev_inertia = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;

        // Assignment step: nearest centroid, ties to the lowest index.
        let mut inertia = 0.0;
        for (t, frame) in frames.row_iter().enumerate() {
            let (best, d2) = nearest_row(&centroids, frame);
            assignment[t] = best;
            inertia += d2;
        }
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12,
            "Lloyd inertia increased: {prev_inertia} -> {inertia}"
        );
        inertia_trace.push(inertia);

        // Update step.
        let mut sums = Mat::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (t, frame) in frames.row_iter().enumerate() {
            let c = assignment[t];
            counts[c] += 1;
            for (s, &x) in sums.row_mut(c).iter_mut().zip(frame) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (out, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *out = s * inv;
                }
            }
        }
        // Reseed empty clusters to the points farthest from their centroids.
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut residuals: Vec<(usize, f64)> = frames
                .row_iter()
                .enumerate()
                .map(|(t, frame)| (t, squared_distance(frame, centroids.row(assignment[t]))))
                .collect();
            residuals.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for (slot, &c) in empties.iter().enumerate() {
                let (t, _) = residuals[slot];
                let frame = frames.row(t).to_vec();
                centroids.row_mut(c).copy_from_slice(&frame);
            }
        }

        let relative = if prev_inertia.is_finite() && prev_inertia > 0.0 {
            (prev_inertia - inertia) / prev_inertia
        } else if inertia == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        prev_inertia = inertia;
        if relative.abs() < opts.tol && empties.is_empty() {
            break;
        }
    }

    // Final inertia against the final centroids.
    let mut inertia = 0.0;
    for frame in frames.row_iter() {
        inertia += nearest_row(&centroids, frame).1;
    }

    for a in 0..k {
        for b in a + 1..k {
            if centroids.row(a) == centroids.row(b) {
                return Err(Error::data(format!(
                    "degenerate fit: centroids {a} and {b} are identical (duplicate-heavy input?)"
                )));
            }
        }
    }

    Ok(KmeansFit {
        codebook: Codebook {
            centroids,
            seed,
        },
        inertia,
        iterations,
        inertia_trace,
    })
}

fn plus_plus_init(frames: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = frames.rows();
    let mut centroids = Mat::zeros(k, frames.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(frames.row(first));

    let mut d2: Vec<f64> = frames
        .row_iter()
        .map(|f| squared_distance(f, centroids.row(0)))
        .collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (t, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = t;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(frames.row(pick));
        for (t, frame) in frames.row_iter().enumerate() {
            let d = squared_distance(frame, centroids.row(c));
            if d < d2[t] {
                d2[t] = d;
            }
        }
    }
    centroids
}

fn nearest_row(centroids: &Mat, frame: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (c, row) in centroids.row_iter().enumerate() {
        let d2 = squared_distance(frame, row);
        if d2 < best_d2 {
            best_d2 = d2;
            best = c;
        }
    }
    (best, best_d2)
}

/// Map each frame to its Euclidean-nearest centroid (ties break to the
/// lowest centroid index).
pub fn encode_discrete(features: &FeatureSequence, codebook: &Codebook) -> Result<UnitSequence> {
    if features.dim() != codebook.dim() {
        return Err(Error::data(format!(
            "feature dimension {} does not match codebook dimension {}",
            features.dim(),
            codebook.dim()
        )));
    }
    let units = features
        .frames
        .row_iter()
        .map(|frame| nearest_row(&codebook.centroids, frame).0 as u16)
        .collect();
    UnitSequence::new(features.utterance_id.clone(), units, codebook.k())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub inertia: f64,
}

pub fn write_codebook(fit: &KmeansFit, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_tensor(TensorKind::Codebook, &fit.codebook.centroids, path)?;
    write_sidecar(
        path,
        &CodebookMeta {
            k: fit.codebook.k(),
            d: fit.codebook.dim(),
            seed: fit.codebook.seed,
            inertia: fit.inertia,
        },
    )
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let centroids = read_tensor_expect(path, TensorKind::Codebook)?;
    let meta: CodebookMeta = read_sidecar(path)?;
    if meta.k != centroids.rows() || meta.d != centroids.cols() {
        return Err(Error::format(format!(
            "codebook sidecar says {}x{} but tensor is {}x{}",
            meta.k,
            meta.d,
            centroids.rows(),
            centroids.cols()
        )));
    }
    Ok(Codebook {
        centroids,
        seed: meta.seed,
    })
}
