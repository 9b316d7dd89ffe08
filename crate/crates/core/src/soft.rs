//! Soft content encoder: a linear projection producing soft units, each of
//! which parameterizes a distribution over the discrete-unit dictionary
//! through a temperature-scaled cosine softmax against a trainable
//! embedding table. Trained by cross-entropy against k-means labels.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, TrainConfig};
use crate::error::{Error, Result};
use crate::mat::{dot, norm, Mat};
use crate::tensor::{read_sidecar, write_sidecar, Container, TensorKind};
use crate::types::{FeatureSequence, SoftUnitSequence, UnitSequence};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_SOFT_DIM: usize = 256;

const NORM_EPS: f64 = 1e-8;

/// Trainable parameters of the soft content encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftEncoderParams {
    /// Projection W, soft_dim x input_dim.
    pub projection: Mat,
    /// Bias b, length soft_dim.
    pub bias: Vec<f64>,
    /// Embedding table E, one row per discrete unit, k x soft_dim.
    pub embeddings: Mat,
    /// Softmax temperature; fixed, not trained.
    pub tau: f64,
}

impl SoftEncoderParams {
    /// Seeded initialization: W uniform in (-1/sqrt(D_in), 1/sqrt(D_in)),
    /// b zero, E rows drawn Gaussian and normalized to unit length.
    pub fn init(input_dim: usize, soft_dim: usize, k: usize, tau: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || soft_dim == 0 || k == 0 {
            return Err(Error::config("soft encoder dimensions must be positive"));
        }
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::config("temperature must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (input_dim as f64).sqrt();
        let mut projection = Mat::zeros(soft_dim, input_dim);
        for w in projection.data_mut() {
            *w = rng.random_range(-bound..bound);
        }
        let mut embeddings = Mat::zeros(k, soft_dim);
        for row in 0..k {
            let r = embeddings.row_mut(row);
            for e in r.iter_mut() {
                *e = StandardNormal.sample(&mut rng);
            }
            let n = norm(r).max(NORM_EPS);
            for e in r.iter_mut() {
                *e /= n;
            }
        }
        Ok(SoftEncoderParams {
            projection,
            bias: vec![0.0; soft_dim],
            embeddings,
            tau,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn soft_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn k(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::config("temperature must be positive"));
        }
        if self.embeddings.cols() != self.soft_dim() {
            return Err(Error::data(format!(
                "embedding dim {} does not match soft dim {}",
                self.embeddings.cols(),
                self.soft_dim()
            )));
        }
        if self.bias.len() != self.soft_dim() {
            return Err(Error::data("bias length does not match soft dim"));
        }
        if !self.projection.is_finite()
            || !self.embeddings.is_finite()
            || !self.bias.iter().all(|v| v.is_finite())
        {
            return Err(Error::data("soft encoder parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.projection.data().len() + self.bias.len() + self.embeddings.data().len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(self.projection.data());
        flat.extend_from_slice(&self.bias);
        flat.extend_from_slice(self.embeddings.data());
        flat
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let (w, rest) = flat.split_at(self.projection.data().len());
        let (b, e) = rest.split_at(self.bias.len());
        self.projection.data_mut().copy_from_slice(w);
        self.bias.copy_from_slice(b);
        self.embeddings.data_mut().copy_from_slice(e);
    }
}

/// Cosine similarity with epsilon-guarded norms; always in [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::data(format!(
            "cosine similarity dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dot(a, b) / (norm(a).max(NORM_EPS) * norm(b).max(NORM_EPS)))
}

fn softmax_from_logits(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

/// Distribution over the unit dictionary parameterized by a soft unit:
/// `p_i = softmax(sim(s, e_i) / tau)`.
pub fn soft_distribution(soft_unit: &[f64], embeddings: &Mat, tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::config("temperature must be positive"));
    }
    let mut logits = Vec::with_capacity(embeddings.rows());
    for e in embeddings.row_iter() {
        logits.push(cosine_similarity(soft_unit, e)? / tau);
    }
    Ok(softmax_from_logits(&logits))
}

/// Cross-entropy of a distribution against a discrete target: -ln(p_label).
pub fn cross_entropy(dist: &[f64], label: u16) -> Result<f64> {
    let label = label as usize;
    if label >= dist.len() {
        return Err(Error::data(format!(
            "label {label} out of range for {}-way distribution",
            dist.len()
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || dist.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
        return Err(Error::data("input is not a normalized probability vector"));
    }
    Ok(-dist[label].ln())
}

/// Project features to soft units and compute their unit distributions.
/// Returns the soft units and a T x K distribution matrix.
pub fn soft_forward(
    features: &FeatureSequence,
    params: &SoftEncoderParams,
) -> Result<(SoftUnitSequence, Mat)> {
    params.validate()?;
    if features.dim() != params.input_dim() {
        return Err(Error::data(format!(
            "feature dimension {} does not match encoder input dimension {}",
            features.dim(),
            params.input_dim()
        )));
    }
    let t_frames = features.len();
    let mut soft = Mat::zeros(t_frames, params.soft_dim());
    let mut dists = Mat::zeros(t_frames, params.k());
    for (t, frame) in features.frames.row_iter().enumerate() {
        let s = soft.row_mut(t);
        params.projection.matvec(frame, s);
        for (v, &b) in s.iter_mut().zip(&params.bias) {
            *v += b;
        }
        let dist = soft_distribution(s, &params.embeddings, params.tau)?;
        dists.row_mut(t).copy_from_slice(&dist);
    }
    Ok((
        SoftUnitSequence {
            utterance_id: features.utterance_id.clone(),
            vectors: soft,
        },
        dists,
    ))
}

/// As [`soft_forward`], returning only the soft units.
pub fn encode_soft(features: &FeatureSequence, params: &SoftEncoderParams) -> Result<SoftUnitSequence> {
    soft_forward(features, params).map(|(seq, _)| seq)
}

/// Gradients of the batch-mean cross-entropy, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct SoftGradients {
    pub projection: Mat,
    pub bias: Vec<f64>,
    pub embeddings: Mat,
}

impl SoftGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat =
            Vec::with_capacity(self.projection.data().len() + self.bias.len() + self.embeddings.data().len());
        flat.extend_from_slice(self.projection.data());
        flat.extend_from_slice(&self.bias);
        flat.extend_from_slice(self.embeddings.data());
        flat
    }
}

/// Analytic gradients of the batch-mean loss through
/// cross-entropy ∘ softmax ∘ cosine ∘ affine. Returns the gradients and
/// the batch-mean loss (computed from the stable log-softmax).
pub fn soft_gradients(
    params: &SoftEncoderParams,
    frames: &Mat,
    labels: &[u16],
) -> Result<(SoftGradients, f64)> {
    params.validate()?;
    if frames.rows() == 0 {
        return Err(Error::data("gradient batch must not be empty"));
    }
    if frames.rows() != labels.len() {
        return Err(Error::data(format!(
            "batch has {} frames but {} labels",
            frames.rows(),
            labels.len()
        )));
    }
    if frames.cols() != params.input_dim() {
        return Err(Error::data(format!(
            "feature dimension {} does not match encoder input dimension {}",
            frames.cols(),
            params.input_dim()
        )));
    }
    let k = params.k();
    let d_s = params.soft_dim();
    let tau = params.tau;

    let mut grad_w = Mat::zeros(d_s, params.input_dim());
    let mut grad_b = vec![0.0; d_s];
    let mut grad_e = Mat::zeros(k, d_s);
    let mut total_loss = 0.0;

    let mut soft = vec![0.0; d_s];
    let mut logits = vec![0.0; k];
    let mut grad_s = vec![0.0; d_s];

    for (t, frame) in frames.row_iter().enumerate() {
        let label = labels[t] as usize;
        if label >= k {
            return Err(Error::data(format!(
                "label {label} out of range for dictionary of size {k}"
            )));
        }

        params.projection.matvec(frame, &mut soft);
        for (v, &b) in soft.iter_mut().zip(&params.bias) {
            *v += b;
        }
        let s_norm_raw = norm(&soft);
        let s_norm = s_norm_raw.max(NORM_EPS);

        for (i, e) in params.embeddings.row_iter().enumerate() {
            logits[i] = dot(&soft, e) / (s_norm * norm(e).max(NORM_EPS)) / tau;
        }
        total_loss += log_sum_exp(&logits) - logits[label];
        let probs = softmax_from_logits(&logits);

        grad_s.iter_mut().for_each(|g| *g = 0.0);
        for (i, e) in params.embeddings.row_iter().enumerate() {
            // d(loss)/d(logit_i), before the 1/tau factor from the chain rule.
            let g_logit = (probs[i] - if i == label { 1.0 } else { 0.0 }) / tau;
            let e_norm_raw = norm(e);
            let e_norm = e_norm_raw.max(NORM_EPS);
            let dotp = dot(&soft, e);
            let inv = 1.0 / (s_norm * e_norm);

            // d(sim)/d(s): e/(|s||e|) - (s.e) s/(|s|^3 |e|); the second term
            // vanishes when the epsilon guard freezes |s|.
            let s_corr = if s_norm_raw > NORM_EPS {
                dotp / (s_norm * s_norm)
            } else {
                0.0
            };
            for j in 0..d_s {
                grad_s[j] += g_logit * inv * (e[j] - s_corr * soft[j]);
            }

            // d(sim)/d(e_i), symmetric.
            let e_corr = if e_norm_raw > NORM_EPS {
                dotp / (e_norm * e_norm)
            } else {
                0.0
            };
            let ge = grad_e.row_mut(i);
            for j in 0..d_s {
                ge[j] += g_logit * inv * (soft[j] - e_corr * e[j]);
            }
        }

        // Affine backprop: dL/dW = grad_s x^T, dL/db = grad_s.
        for j in 0..d_s {
            let gs = grad_s[j];
            grad_b[j] += gs;
            for (gw, &x) in grad_w.row_mut(j).iter_mut().zip(frame) {
                *gw += gs * x;
            }
        }
    }

    let inv_t = 1.0 / frames.rows() as f64;
    for g in grad_w.data_mut() {
        *g *= inv_t;
    }
    for g in grad_b.iter_mut() {
        *g *= inv_t;
    }
    for g in grad_e.data_mut() {
        *g *= inv_t;
    }

    Ok((
        SoftGradients {
            projection: grad_w,
            bias: grad_b,
            embeddings: grad_e,
        },
        total_loss * inv_t,
    ))
}

/// One utterance of training material: frames plus their k-means labels.
#[derive(Debug, Clone)]
pub struct LabeledFrames {
    pub frames: Mat,
    pub labels: Vec<u16>,
}

impl LabeledFrames {
    pub fn from_pair(features: &FeatureSequence, units: &UnitSequence) -> Result<Self> {
        if features.len() != units.len() {
            return Err(Error::data(format!(
                "'{}': {} frames but {} labels",
                features.utterance_id,
                features.len(),
                units.len()
            )));
        }
        Ok(LabeledFrames {
            frames: features.frames.clone(),
            labels: units.units.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SoftTrainResult {
    pub params: SoftEncoderParams,
    /// Batch-mean loss recorded at every step.
    pub loss_curve: Vec<f64>,
}

/// Train the soft encoder head with Adam on seeded, shuffled frame batches.
/// Deterministic given the config seed.
pub fn train_soft_encoder(
    dataset: &[LabeledFrames],
    init: SoftEncoderParams,
    config: &TrainConfig,
) -> Result<SoftTrainResult> {
    config.validate()?;
    init.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("training set must not be empty"));
    }
    let k = init.k();
    let d_in = init.input_dim();
    let mut frames_total = 0usize;
    for item in dataset {
        if item.frames.cols() != d_in {
            return Err(Error::data(format!(
                "dataset feature dimension {} does not match encoder input dimension {d_in}",
                item.frames.cols()
            )));
        }
        if item.frames.rows() != item.labels.len() {
            return Err(Error::data("frames and labels disagree in length"));
        }
        if let Some(&bad) = item.labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::config(format!(
                "label {bad} out of range: labels were produced for a different dictionary size than {k}"
            )));
        }
        frames_total += item.frames.rows();
    }
    if frames_total == 0 {
        return Err(Error::data("training set contains no frames"));
    }

    // Flatten to one frame pool; batches are drawn from a seeded shuffle.
    let mut pool_frames = Mat::zeros(frames_total, d_in);
    let mut pool_labels = Vec::with_capacity(frames_total);
    let mut row = 0;
    for item in dataset {
        for (t, frame) in item.frames.row_iter().enumerate() {
            pool_frames.row_mut(row).copy_from_slice(frame);
            pool_labels.push(item.labels[t]);
            row += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..frames_total).collect();
    shuffle(&mut order, &mut rng);
    let mut cursor = 0usize;

    let mut params = init;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), config);
    let batch = config.batch_frames.min(frames_total);
    let mut batch_frames = Mat::zeros(batch, d_in);
    let mut batch_labels = vec![0u16; batch];
    let mut loss_curve = Vec::with_capacity(config.steps);

    for _ in 0..config.steps {
        for slot in 0..batch {
            if cursor == frames_total {
                shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            batch_frames.row_mut(slot).copy_from_slice(pool_frames.row(idx));
            batch_labels[slot] = pool_labels[idx];
        }
        let (grads, loss) = soft_gradients(&params, &batch_frames, &batch_labels)?;
        adam.step(&mut flat, &grads.flatten());
        params.assign_from_flat(&flat);
        loss_curve.push(loss);
    }

    Ok(SoftTrainResult { params, loss_curve })
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    // Fisher-Yates; kept local so the draw sequence is pinned by this crate.
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SoftCheckpointMeta {
    pub d_in: usize,
    pub d_s: usize,
    pub k: usize,
    pub tau: f64,
    pub seed: u64,
    pub step: u64,
}

pub fn write_soft_checkpoint(
    params: &SoftEncoderParams,
    seed: u64,
    step: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    params.validate()?;
    let mut container = Container::new();
    container.push("W", TensorKind::SoftCheckpoint, params.projection.clone());
    container.push(
        "b",
        TensorKind::SoftCheckpoint,
        Mat::from_vec(1, params.bias.len(), params.bias.clone())?,
    );
    container.push("E", TensorKind::SoftCheckpoint, params.embeddings.clone());
    container.write(path)?;
    write_sidecar(
        path,
        &SoftCheckpointMeta {
            d_in: params.input_dim(),
            d_s: params.soft_dim(),
            k: params.k(),
            tau: params.tau,
            seed,
            step,
        },
    )
}

pub fn read_soft_checkpoint(path: impl AsRef<Path>) -> Result<(SoftEncoderParams, SoftCheckpointMeta)> {
    let path = path.as_ref();
    let container = Container::read(path)?;
    let meta: SoftCheckpointMeta = read_sidecar(path)?;
    let projection = container.get("W")?.clone();
    let bias_mat = container.get("b")?;
    let embeddings = container.get("E")?.clone();
    if projection.rows() != meta.d_s || projection.cols() != meta.d_in {
        return Err(Error::format("checkpoint W shape disagrees with sidecar"));
    }
    if embeddings.rows() != meta.k || embeddings.cols() != meta.d_s {
        return Err(Error::format("checkpoint E shape disagrees with sidecar"));
    }
    if bias_mat.rows() != 1 || bias_mat.cols() != meta.d_s {
        return Err(Error::format("checkpoint b shape disagrees with sidecar"));
    }
    let params = SoftEncoderParams {
        projection,
        bias: bias_mat.data().to_vec(),
        embeddings,
        tau: meta.tau,
    };
    params.validate()?;
    Ok((params, meta))
}
