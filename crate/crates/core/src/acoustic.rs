//! Acoustic model: a small feed-forward network mapping unit sequences
//! (discrete or soft) to target-speaker log-mel frames, plus the composed
//! conversion pipeline (features -> units -> mel -> waveform).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, TrainConfig};
use crate::dsp::griffin_lim::griffin_lim;
use crate::dsp::mel::{MelConfig, MelSpectrogram};
use crate::dsp::wav::Waveform;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::soft::{encode_soft, SoftEncoderParams};
use crate::tensor::{read_sidecar, write_sidecar, Container, TensorKind};
use crate::types::{FeatureSequence, SoftUnitSequence, UnitSequence};
use crate::units::{encode_discrete, Codebook};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_UPSAMPLE: usize = 2;
pub const DEFAULT_MEL_BINS: usize = 128;

/// First stage of the model: how unit sequences become hidden vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum InputMap {
    /// Embedding table, k x hidden; one row per discrete unit.
    Discrete { embedding: Mat },
    /// Projection, hidden x soft_dim, applied to each soft unit.
    Soft { projection: Mat },
}

/// Parameters of the unit-to-mel network: input map, two ReLU hidden
/// stages, and an affine output head.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticParams {
    pub input_map: InputMap,
    pub hidden1_w: Mat,
    pub hidden1_b: Vec<f64>,
    pub hidden2_w: Mat,
    pub hidden2_b: Vec<f64>,
    pub output_w: Mat,
    pub output_b: Vec<f64>,
    pub upsample_factor: usize,
}

impl AcousticParams {
    pub fn init_discrete(k: usize, hidden: usize, mel_bins: usize, upsample_factor: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("dictionary size must be positive"));
        }
        Self::init(InputDims::Discrete(k), hidden, mel_bins, upsample_factor, seed)
    }

    pub fn init_soft(soft_dim: usize, hidden: usize, mel_bins: usize, upsample_factor: usize, seed: u64) -> Result<Self> {
        if soft_dim == 0 {
            return Err(Error::config("soft-unit dimension must be positive"));
        }
        Self::init(InputDims::Soft(soft_dim), hidden, mel_bins, upsample_factor, seed)
    }

    fn init(input: InputDims, hidden: usize, mel_bins: usize, upsample_factor: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || mel_bins == 0 {
            return Err(Error::config("hidden and mel dimensions must be positive"));
        }
        if upsample_factor < 1 {
            return Err(Error::config("upsample factor must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform_mat = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut m = Mat::zeros(rows, cols);
            for v in m.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
            m
        };
        let input_map = match input {
            InputDims::Discrete(k) => InputMap::Discrete {
                embedding: uniform_mat(k, hidden, hidden),
            },
            InputDims::Soft(d_s) => InputMap::Soft {
                projection: uniform_mat(hidden, d_s, d_s),
            },
        };
        let hidden1_w = uniform_mat(hidden, hidden, hidden);
        let hidden2_w = uniform_mat(hidden, hidden, hidden);
        let output_w = uniform_mat(mel_bins, hidden, hidden);
        Ok(AcousticParams {
            input_map,
            hidden1_w,
            hidden1_b: vec![0.0; hidden],
            hidden2_w,
            hidden2_b: vec![0.0; hidden],
            output_w,
            output_b: vec![0.0; mel_bins],
            upsample_factor,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden1_w.rows()
    }

    pub fn mel_bins(&self) -> usize {
        self.output_w.rows()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.input_map, InputMap::Discrete { .. })
    }

    pub fn n_params(&self) -> usize {
        let input = match &self.input_map {
            InputMap::Discrete { embedding } => embedding.data().len(),
            InputMap::Soft { projection } => projection.data().len(),
        };
        input
            + self.hidden1_w.data().len()
            + self.hidden1_b.len()
            + self.hidden2_w.data().len()
            + self.hidden2_b.len()
            + self.output_w.data().len()
            + self.output_b.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        match &self.input_map {
            InputMap::Discrete { embedding } => flat.extend_from_slice(embedding.data()),
            InputMap::Soft { projection } => flat.extend_from_slice(projection.data()),
        }
        flat.extend_from_slice(self.hidden1_w.data());
        flat.extend_from_slice(&self.hidden1_b);
        flat.extend_from_slice(self.hidden2_w.data());
        flat.extend_from_slice(&self.hidden2_b);
        flat.extend_from_slice(self.output_w.data());
        flat.extend_from_slice(&self.output_b);
        flat
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s
        };
        match &mut self.input_map {
            InputMap::Discrete { embedding } => {
                let n = embedding.data().len();
                embedding.data_mut().copy_from_slice(take(n));
            }
            InputMap::Soft { projection } => {
                let n = projection.data().len();
                projection.data_mut().copy_from_slice(take(n));
            }
        }
        let n = self.hidden1_w.data().len();
        self.hidden1_w.data_mut().copy_from_slice(take(n));
        let n = self.hidden1_b.len();
        self.hidden1_b.copy_from_slice(take(n));
        let n = self.hidden2_w.data().len();
        self.hidden2_w.data_mut().copy_from_slice(take(n));
        let n = self.hidden2_b.len();
        self.hidden2_b.copy_from_slice(take(n));
        let n = self.output_w.data().len();
        self.output_w.data_mut().copy_from_slice(take(n));
        let n = self.output_b.len();
        self.output_b.copy_from_slice(take(n));
        debug_assert_eq!(at, flat.len());
    }
}

enum InputDims {
    Discrete(usize),
    Soft(usize),
}

/// Unit input to the acoustic model, borrowed in either mode.
#[derive(Debug, Clone, Copy)]
pub enum UnitInput<'a> {
    Discrete(&'a UnitSequence),
    Soft(&'a SoftUnitSequence),
}

impl<'a> UnitInput<'a> {
    pub fn len(&self) -> usize {
        match self {
            UnitInput::Discrete(u) => u.len(),
            UnitInput::Soft(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Repeat every element of a sequence `factor` times, order preserved.
pub fn upsample_units<T: Clone>(seq: &[T], factor: usize) -> Result<Vec<T>> {
    if factor < 1 {
        return Err(Error::config("upsample factor must be at least 1"));
    }
    let mut out = Vec::with_capacity(seq.len() * factor);
    for item in seq {
        for _ in 0..factor {
            out.push(item.clone());
        }
    }
    Ok(out)
}

/// Row-wise upsampling for soft-unit matrices.
pub fn upsample_rows(mat: &Mat, factor: usize) -> Result<Mat> {
    if factor < 1 {
        return Err(Error::config("upsample factor must be at least 1"));
    }
    let mut out = Mat::zeros(mat.rows() * factor, mat.cols());
    for (t, row) in mat.row_iter().enumerate() {
        for r in 0..factor {
            out.row_mut(t * factor + r).copy_from_slice(row);
        }
    }
    Ok(out)
}

fn input_vector(params: &AcousticParams, input: UnitInput, t: usize, out: &mut [f64]) -> Result<()> {
    match (&params.input_map, input) {
        (InputMap::Discrete { embedding }, UnitInput::Discrete(seq)) => {
            let unit = seq.units[t] as usize;
            if unit >= embedding.rows() {
                return Err(Error::data(format!(
                    "unit id {unit} out of range for embedding table of size {}",
                    embedding.rows()
                )));
            }
            out.copy_from_slice(embedding.row(unit));
        }
        (InputMap::Soft { projection }, UnitInput::Soft(seq)) => {
            if seq.vectors.cols() != projection.cols() {
                return Err(Error::data(format!(
                    "soft unit dimension {} does not match projection input {}",
                    seq.vectors.cols(),
                    projection.cols()
                )));
            }
            projection.matvec(seq.vectors.row(t), out);
        }
        (InputMap::Discrete { .. }, UnitInput::Soft(_)) => {
            return Err(Error::data("model expects discrete units but got soft units"));
        }
        (InputMap::Soft { .. }, UnitInput::Discrete(_)) => {
            return Err(Error::data("model expects soft units but got discrete units"));
        }
    }
    Ok(())
}

struct FrameActivations {
    h0: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    y: Vec<f64>,
}

fn forward_frame(params: &AcousticParams, input: UnitInput, t: usize) -> Result<FrameActivations> {
    let hidden = params.hidden();
    let mut h0 = vec![0.0; hidden];
    input_vector(params, input, t, &mut h0)?;

    let mut a1 = vec![0.0; hidden];
    params.hidden1_w.matvec(&h0, &mut a1);
    for (a, &b) in a1.iter_mut().zip(&params.hidden1_b) {
        *a += b;
    }
    let h1: Vec<f64> = a1.iter().map(|&a| a.max(0.0)).collect();

    let mut a2 = vec![0.0; hidden];
    params.hidden2_w.matvec(&h1, &mut a2);
    for (a, &b) in a2.iter_mut().zip(&params.hidden2_b) {
        *a += b;
    }
    let h2: Vec<f64> = a2.iter().map(|&a| a.max(0.0)).collect();

    let mut y = vec![0.0; params.mel_bins()];
    params.output_w.matvec(&h2, &mut y);
    for (v, &b) in y.iter_mut().zip(&params.output_b) {
        *v += b;
    }
    Ok(FrameActivations { h0, a1, h1, a2, h2, y })
}

/// Map a unit sequence to predicted log-mel frames
/// (`input length * upsample_factor` rows).
pub fn acoustic_forward(input: UnitInput, params: &AcousticParams) -> Result<MelSpectrogram> {
    if input.is_empty() {
        return Err(Error::data("unit sequence must not be empty"));
    }
    let t_in = input.len();
    let factor = params.upsample_factor;
    let mut frames = Mat::zeros(t_in * factor, params.mel_bins());
    for t in 0..t_in {
        let acts = forward_frame(params, input, t)?;
        for r in 0..factor {
            frames.row_mut(t * factor + r).copy_from_slice(&acts.y);
        }
    }
    Ok(MelSpectrogram {
        frames,
        config: MelConfig {
            n_mels: params.mel_bins(),
            ..MelConfig::default()
        },
    })
}

/// Gradients of mean-squared error over the given (unit, target-frame)
/// pairs, flattened in parameter order. Also returns the MSE.
pub fn acoustic_gradients(
    params: &AcousticParams,
    input: UnitInput,
    target: &Mat,
) -> Result<(Vec<f64>, f64)> {
    let factor = params.upsample_factor;
    let t_out = input.len() * factor;
    if target.rows() != t_out {
        return Err(Error::data(format!(
            "target has {} frames but the model produces {t_out}",
            target.rows()
        )));
    }
    if target.cols() != params.mel_bins() {
        return Err(Error::data(format!(
            "target has {} bins but the model produces {}",
            target.cols(),
            params.mel_bins()
        )));
    }

    let hidden = params.hidden();
    let mel_bins = params.mel_bins();
    let mut grad = AcousticParams {
        input_map: match &params.input_map {
            InputMap::Discrete { embedding } => InputMap::Discrete {
                embedding: Mat::zeros(embedding.rows(), embedding.cols()),
            },
            InputMap::Soft { projection } => InputMap::Soft {
                projection: Mat::zeros(projection.rows(), projection.cols()),
            },
        },
        hidden1_w: Mat::zeros(hidden, hidden),
        hidden1_b: vec![0.0; hidden],
        hidden2_w: Mat::zeros(hidden, hidden),
        hidden2_b: vec![0.0; hidden],
        output_w: Mat::zeros(mel_bins, hidden),
        output_b: vec![0.0; mel_bins],
        upsample_factor: factor,
    };

    let scale = 1.0 / (t_out * mel_bins) as f64;
    let mut total_se = 0.0;
    let mut gy = vec![0.0; mel_bins];
    let mut gh2 = vec![0.0; hidden];
    let mut ga2 = vec![0.0; hidden];
    let mut gh1 = vec![0.0; hidden];
    let mut ga1 = vec![0.0; hidden];
    let mut gh0 = vec![0.0; hidden];

    for t in 0..input.len() {
        let acts = forward_frame(params, input, t)?;
        for r in 0..factor {
            let target_row = target.row(t * factor + r);
            for (g, (&y, &want)) in gy.iter_mut().zip(acts.y.iter().zip(target_row)) {
                let d = y - want;
                total_se += d * d;
                *g = 2.0 * d * scale;
            }

            // Output layer.
            for (m, &g) in gy.iter().enumerate() {
                grad.output_b[m] += g;
                for (gw, &h) in grad.output_w.row_mut(m).iter_mut().zip(&acts.h2) {
                    *gw += g * h;
                }
            }
            gh2.iter_mut().for_each(|g| *g = 0.0);
            params.output_w.matvec_transpose_add(&gy, &mut gh2);

            // Second hidden stage.
            for j in 0..hidden {
                ga2[j] = if acts.a2[j] > 0.0 { gh2[j] } else { 0.0 };
            }
            for (j, &g) in ga2.iter().enumerate() {
                grad.hidden2_b[j] += g;
                for (gw, &h) in grad.hidden2_w.row_mut(j).iter_mut().zip(&acts.h1) {
                    *gw += g * h;
                }
            }
            gh1.iter_mut().for_each(|g| *g = 0.0);
            params.hidden2_w.matvec_transpose_add(&ga2, &mut gh1);

            // First hidden stage.
            for j in 0..hidden {
                ga1[j] = if acts.a1[j] > 0.0 { gh1[j] } else { 0.0 };
            }
            for (j, &g) in ga1.iter().enumerate() {
                grad.hidden1_b[j] += g;
                for (gw, &h) in grad.hidden1_w.row_mut(j).iter_mut().zip(&acts.h0) {
                    *gw += g * h;
                }
            }
            gh0.iter_mut().for_each(|g| *g = 0.0);
            params.hidden1_w.matvec_transpose_add(&ga1, &mut gh0);

            // Input map.
            match (&mut grad.input_map, input) {
                (InputMap::Discrete { embedding }, UnitInput::Discrete(seq)) => {
                    let unit = seq.units[t] as usize;
                    for (ge, &g) in embedding.row_mut(unit).iter_mut().zip(&gh0) {
                        *ge += g;
                    }
                }
                (InputMap::Soft { projection }, UnitInput::Soft(seq)) => {
                    let s = seq.vectors.row(t);
                    for (j, &g) in gh0.iter().enumerate() {
                        for (gp, &x) in projection.row_mut(j).iter_mut().zip(s) {
                            *gp += g * x;
                        }
                    }
                }
                _ => unreachable!("mode checked in forward_frame"),
            }
        }
    }

    Ok((grad.flatten(), total_se * scale))
}

/// One training pair: a unit sequence and its target mel frames, already
/// length-aligned.
#[derive(Debug, Clone)]
pub struct AcousticPair {
    pub input: OwnedUnits,
    pub target: Mat,
}

#[derive(Debug, Clone)]
pub enum OwnedUnits {
    Discrete(UnitSequence),
    Soft(SoftUnitSequence),
}

impl OwnedUnits {
    pub fn as_input(&self) -> UnitInput<'_> {
        match self {
            OwnedUnits::Discrete(u) => UnitInput::Discrete(u),
            OwnedUnits::Soft(s) => UnitInput::Soft(s),
        }
    }

    fn len(&self) -> usize {
        self.as_input().len()
    }

    fn truncate(&mut self, len: usize) {
        match self {
            OwnedUnits::Discrete(u) => u.units.truncate(len),
            OwnedUnits::Soft(s) => {
                let rows: Vec<Vec<f64>> = s.vectors.row_iter().take(len).map(|r| r.to_vec()).collect();
                s.vectors = Mat::from_rows(&rows).expect("non-empty truncation");
            }
        }
    }
}

impl AcousticPair {
    /// Align a unit sequence with its target mel. With `strict` set, any
    /// length mismatch is an error; otherwise both sides are truncated to
    /// the shorter and the number of dropped mel frames is returned.
    pub fn new(mut input: OwnedUnits, target: &Mat, factor: usize, strict: bool) -> Result<(Self, usize)> {
        if factor < 1 {
            return Err(Error::config("upsample factor must be at least 1"));
        }
        let want_mel = input.len() * factor;
        if strict && target.rows() != want_mel {
            return Err(Error::data(format!(
                "target has {} mel frames but units produce {want_mel}",
                target.rows()
            )));
        }
        let usable_units = input.len().min(target.rows() / factor);
        if usable_units == 0 {
            return Err(Error::data("pair has no usable frames after alignment"));
        }
        let mel_rows = usable_units * factor;
        let dropped = target.rows().saturating_sub(mel_rows) + (want_mel.saturating_sub(target.rows()));
        input.truncate(usable_units);
        let rows: Vec<Vec<f64>> = target.row_iter().take(mel_rows).map(|r| r.to_vec()).collect();
        Ok((
            AcousticPair {
                input,
                target: Mat::from_rows(&rows)?,
            },
            dropped,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct AcousticTrainResult {
    pub params: AcousticParams,
    pub loss_curve: Vec<f64>,
    /// Lowest validation MSE seen, when a validation set was supplied.
    pub best_val_loss: Option<f64>,
}

/// Mean-squared error of the model over a set of pairs.
pub fn acoustic_mse(params: &AcousticParams, pairs: &[AcousticPair]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in pairs {
        let pred = acoustic_forward(pair.input.as_input(), params)?;
        for (p_row, t_row) in pred.frames.row_iter().zip(pair.target.row_iter()) {
            for (p, t) in p_row.iter().zip(t_row) {
                let d = p - t;
                total += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::data("no frames to evaluate"));
    }
    Ok(total / count as f64)
}

/// Adam training over per-utterance gradients, with the lowest-validation
/// checkpoint retained when a validation set is supplied. Deterministic
/// given the config seed.
pub fn train_acoustic(
    pairs: &[AcousticPair],
    validation: Option<&[AcousticPair]>,
    init: AcousticParams,
    config: &TrainConfig,
) -> Result<AcousticTrainResult> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::data("training set must not be empty"));
    }
    for pair in pairs {
        // Surface mode/shape mismatches before the loop.
        input_vector(&init, pair.input.as_input(), 0, &mut vec![0.0; init.hidden()])?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = pairs.len(); // trigger shuffle on first step

    let mut params = init;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), config);
    let mut loss_curve = Vec::with_capacity(config.steps);

    let mut best_val: Option<(f64, Vec<f64>)> = None;
    let val_every = 25usize;

    for step in 0..config.steps {
        if cursor == pairs.len() {
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            cursor = 0;
        }
        let pair = &pairs[order[cursor]];
        cursor += 1;

        let (grads, loss) = acoustic_gradients(&params, pair.input.as_input(), &pair.target)?;
        adam.step(&mut flat, &grads);
        params.assign_from_flat(&flat);
        loss_curve.push(loss);

        if let Some(val) = validation {
            if (step + 1) % val_every == 0 || step + 1 == config.steps {
                let val_loss = acoustic_mse(&params, val)?;
                let better = best_val.as_ref().map_or(true, |(best, _)| val_loss < *best);
                if better {
                    best_val = Some((val_loss, flat.clone()));
                }
            }
        }
    }

    if let Some((val_loss, best_flat)) = best_val {
        params.assign_from_flat(&best_flat);
        return Ok(AcousticTrainResult {
            params,
            loss_curve,
            best_val_loss: Some(val_loss),
        });
    }
    Ok(AcousticTrainResult {
        params,
        loss_curve,
        best_val_loss: None,
    })
}

/// Content encoder choice for the conversion pipeline.
#[derive(Debug, Clone, Copy)]
pub enum ContentEncoder<'a> {
    Discrete(&'a Codebook),
    Soft(&'a SoftEncoderParams),
}

/// Full any-to-one conversion: features -> units -> mel -> waveform.
/// Deterministic end to end (Griffin-Lim phase starts at zero).
pub fn convert(
    features: &FeatureSequence,
    content: ContentEncoder,
    acoustic: &AcousticParams,
    griffin_lim_iters: usize,
) -> Result<Waveform> {
    let mel = convert_to_mel(features, content, acoustic)?;
    griffin_lim(&mel, griffin_lim_iters).map_err(|e| e.in_stage("vocoder"))
}

/// The pipeline up to the predicted mel, for callers that want the
/// spectrogram itself.
pub fn convert_to_mel(
    features: &FeatureSequence,
    content: ContentEncoder,
    acoustic: &AcousticParams,
) -> Result<MelSpectrogram> {
    match content {
        ContentEncoder::Discrete(codebook) => {
            let units = encode_discrete(features, codebook).map_err(|e| e.in_stage("content-encoder"))?;
            acoustic_forward(UnitInput::Discrete(&units), acoustic).map_err(|e| e.in_stage("acoustic-model"))
        }
        ContentEncoder::Soft(params) => {
            let units = encode_soft(features, params).map_err(|e| e.in_stage("content-encoder"))?;
            acoustic_forward(UnitInput::Soft(&units), acoustic).map_err(|e| e.in_stage("acoustic-model"))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AcousticCheckpointMeta {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_s: Option<usize>,
    pub h: usize,
    pub mel_bins: usize,
    pub upsample_factor: usize,
    pub seed: u64,
    pub step: u64,
}

pub fn write_acoustic_checkpoint(
    params: &AcousticParams,
    seed: u64,
    step: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut container = Container::new();
    let (mode, k, d_s) = match &params.input_map {
        InputMap::Discrete { embedding } => {
            container.push("embed", TensorKind::AcousticCheckpoint, embedding.clone());
            ("discrete".to_string(), Some(embedding.rows()), None)
        }
        InputMap::Soft { projection } => {
            container.push("proj", TensorKind::AcousticCheckpoint, projection.clone());
            ("soft".to_string(), None, Some(projection.cols()))
        }
    };
    container.push("h1_w", TensorKind::AcousticCheckpoint, params.hidden1_w.clone());
    container.push("h1_b", TensorKind::AcousticCheckpoint, Mat::from_vec(1, params.hidden1_b.len(), params.hidden1_b.clone())?);
    container.push("h2_w", TensorKind::AcousticCheckpoint, params.hidden2_w.clone());
    container.push("h2_b", TensorKind::AcousticCheckpoint, Mat::from_vec(1, params.hidden2_b.len(), params.hidden2_b.clone())?);
    container.push("out_w", TensorKind::AcousticCheckpoint, params.output_w.clone());
    container.push("out_b", TensorKind::AcousticCheckpoint, Mat::from_vec(1, params.output_b.len(), params.output_b.clone())?);
    container.write(path)?;
    write_sidecar(
        path,
        &AcousticCheckpointMeta {
            mode,
            k,
            d_s,
            h: params.hidden(),
            mel_bins: params.mel_bins(),
            upsample_factor: params.upsample_factor,
            seed,
            step,
        },
    )
}

pub fn read_acoustic_checkpoint(path: impl AsRef<Path>) -> Result<(AcousticParams, AcousticCheckpointMeta)> {
    let path = path.as_ref();
    let container = Container::read(path)?;
    let meta: AcousticCheckpointMeta = read_sidecar(path)?;
    let input_map = match meta.mode.as_str() {
        "discrete" => InputMap::Discrete {
            embedding: container.get("embed")?.clone(),
        },
        "soft" => InputMap::Soft {
            projection: container.get("proj")?.clone(),
        },
        other => return Err(Error::format(format!("unknown acoustic mode '{other}'"))),
    };
    let params = AcousticParams {
        input_map,
        hidden1_w: container.get("h1_w")?.clone(),
        hidden1_b: container.get("h1_b")?.data().to_vec(),
        hidden2_w: container.get("h2_w")?.clone(),
        hidden2_b: container.get("h2_b")?.data().to_vec(),
        output_w: container.get("out_w")?.clone(),
        output_b: container.get("out_b")?.data().to_vec(),
        upsample_factor: meta.upsample_factor,
    };
    if params.hidden() != meta.h || params.mel_bins() != meta.mel_bins {
        return Err(Error::format("acoustic checkpoint shapes disagree with sidecar"));
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_seq(units: Vec<u16>, k: usize) -> UnitSequence {
        UnitSequence::new("u", units, k).unwrap()
    }

    #[test]
    fn upsample_examples() {
        assert_eq!(upsample_units(&[5u16, 7], 2).unwrap(), vec![5, 5, 7, 7]);
        assert_eq!(upsample_units(&[1u16, 2, 3], 1).unwrap(), vec![1, 2, 3]);
        assert!(upsample_units(&[1u16], 0).is_err());
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let up = upsample_rows(&m, 2).unwrap();
        assert_eq!(up.rows(), 4);
        assert_eq!(up.row(0), up.row(1));
        assert_eq!(up.row(2), &[3.0, 4.0]);
    }

    #[test]
    fn zero_params_give_zero_mel() {
        let mut params = AcousticParams::init_discrete(4, 8, 5, 2, 0).unwrap();
        let zeros = vec![0.0; params.n_params()];
        params.assign_from_flat(&zeros);
        let mel = acoustic_forward(UnitInput::Discrete(&unit_seq(vec![0, 1, 2], 4)), &params).unwrap();
        assert_eq!(mel.frames.rows(), 6);
        assert_eq!(mel.frames.cols(), 5);
        assert!(mel.frames.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_frame_count_contract() {
        let params = AcousticParams::init_discrete(4, 8, 5, 2, 0).unwrap();
        let units = unit_seq((0..10).map(|i| (i % 4) as u16).collect(), 4);
        let mel = acoustic_forward(UnitInput::Discrete(&units), &params).unwrap();
        assert_eq!(mel.frames.rows(), 20);
    }

    #[test]
    fn mode_mismatch_rejected() {
        let params = AcousticParams::init_discrete(4, 8, 5, 2, 0).unwrap();
        let soft = SoftUnitSequence::new("u", Mat::zeros(3, 8)).unwrap();
        assert!(matches!(
            acoustic_forward(UnitInput::Soft(&soft), &params),
            Err(Error::Data(_))
        ));
    }

    fn fd_check(params: &AcousticParams, input: UnitInput, target: &Mat) {
        let (analytic, _) = acoustic_gradients(params, input, target).unwrap();
        let h = 1e-4;
        let flat = params.flatten();
        let mut probe = params.clone();
        let mut loss_at = |theta: &[f64]| -> f64 {
            probe.assign_from_flat(theta);
            let pred = acoustic_forward(input, &probe).unwrap();
            let mut total = 0.0;
            for (p, t) in pred.frames.data().iter().zip(target.data()) {
                let d = p - t;
                total += d * d;
            }
            total / target.data().len() as f64
        };
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel <= 1e-4, "param {i}: analytic {a}, fd {fd}, rel {rel}");
        }
    }

    #[test]
    fn discrete_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = AcousticParams::init_discrete(3, 4, 3, 2, 5).unwrap();
        let units = unit_seq(vec![0, 2, 1, 0], 3);
        let mut target = Mat::zeros(8, 3);
        for v in target.data_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        fd_check(&params, UnitInput::Discrete(&units), &target);
    }

    #[test]
    fn soft_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = AcousticParams::init_soft(5, 4, 3, 2, 6).unwrap();
        let mut soft = Mat::zeros(3, 5);
        for v in soft.data_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let soft = SoftUnitSequence::new("u", soft).unwrap();
        let mut target = Mat::zeros(6, 3);
        for v in target.data_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        fd_check(&params, UnitInput::Soft(&soft), &target);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let params = AcousticParams::init_discrete(3, 4, 3, 2, 5).unwrap();
        let target = Mat::zeros(4, 3);
        let (pair, dropped) = AcousticPair::new(
            OwnedUnits::Discrete(unit_seq(vec![0, 1], 3)),
            &target,
            2,
            true,
        )
        .unwrap();
        assert_eq!(dropped, 0);
        let config = TrainConfig {
            learning_rate: 0.0,
            steps: 5,
            ..TrainConfig::default()
        };
        let result = train_acoustic(&[pair], None, params.clone(), &config).unwrap();
        assert_eq!(result.params, params);
    }

    #[test]
    fn same_seed_same_curve() {
        let params = AcousticParams::init_discrete(3, 4, 3, 2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut pairs = Vec::new();
        for _ in 0..3 {
            let units: Vec<u16> = (0..4).map(|_| rng.random_range(0..3u16)).collect();
            let mut target = Mat::zeros(8, 3);
            for v in target.data_mut() {
                *v = rng.random::<f64>();
            }
            let (pair, _) = AcousticPair::new(OwnedUnits::Discrete(unit_seq(units, 3)), &target, 2, true).unwrap();
            pairs.push(pair);
        }
        let config = TrainConfig {
            learning_rate: 1e-3,
            steps: 20,
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train_acoustic(&pairs, None, params.clone(), &config).unwrap();
        let b = train_acoustic(&pairs, None, params, &config).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn strict_length_mismatch_rejected() {
        let target = Mat::zeros(5, 3);
        let result = AcousticPair::new(OwnedUnits::Discrete(unit_seq(vec![0, 1], 3)), &target, 2, true);
        assert!(matches!(result, Err(Error::Data(_))));
        // Non-strict truncates to 4 mel frames and reports the drop.
        let (pair, dropped) =
            AcousticPair::new(OwnedUnits::Discrete(unit_seq(vec![0, 1], 3)), &target, 2, false).unwrap();
        assert_eq!(pair.target.rows(), 4);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (name, params) in [
            ("d.ckpt", AcousticParams::init_discrete(5, 6, 4, 2, 9).unwrap()),
            ("s.ckpt", AcousticParams::init_soft(3, 6, 4, 2, 9).unwrap()),
        ] {
            let path = dir.path().join(name);
            write_acoustic_checkpoint(&params, 9, 50, &path).unwrap();
            let (back, meta) = read_acoustic_checkpoint(&path).unwrap();
            assert_eq!(meta.upsample_factor, 2);
            let path2 = dir.path().join(format!("{name}.again"));
            write_acoustic_checkpoint(&back, 9, 50, &path2).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let params = AcousticParams::init_discrete(3, 4, 3, 2, 5).unwrap();
        let config = TrainConfig::default();
        assert!(matches!(
            train_acoustic(&[], None, params, &config),
            Err(Error::Data(_))
        ));
    }
}
