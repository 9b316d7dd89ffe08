use crate::error::{Error, Result};
use crate::mat::Mat;

/// Per-utterance frame matrix produced by an external feature backbone.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub utterance_id: String,
    pub speaker_id: String,
    /// T x D, one feature vector per frame.
    pub frames: Mat,
    pub frame_period_ms: f64,
}

pub const DEFAULT_FRAME_PERIOD_MS: f64 = 20.0;

impl FeatureSequence {
    pub fn new(utterance_id: impl Into<String>, speaker_id: impl Into<String>, frames: Mat) -> Result<Self> {
        let seq = FeatureSequence {
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.into(),
            frames,
            frame_period_ms: DEFAULT_FRAME_PERIOD_MS,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.rows() == 0 || self.frames.cols() == 0 {
            return Err(Error::data(format!(
                "feature sequence '{}' must have at least one frame and dimension",
                self.utterance_id
            )));
        }
        if !self.frames.is_finite() {
            return Err(Error::data(format!(
                "feature sequence '{}' contains non-finite values",
                self.utterance_id
            )));
        }
        if self.frame_period_ms <= 0.0 {
            return Err(Error::data("frame period must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Discrete unit ids for one utterance, each in `[0, dictionary_size)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSequence {
    pub utterance_id: String,
    pub units: Vec<u16>,
    pub dictionary_size: usize,
}

impl UnitSequence {
    pub fn new(utterance_id: impl Into<String>, units: Vec<u16>, dictionary_size: usize) -> Result<Self> {
        let seq = UnitSequence {
            utterance_id: utterance_id.into(),
            units,
            dictionary_size,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::data(format!(
                "unit sequence '{}' must not be empty",
                self.utterance_id
            )));
        }
        if let Some(&bad) = self.units.iter().find(|&&u| (u as usize) >= self.dictionary_size) {
            return Err(Error::data(format!(
                "unit id {bad} out of range for dictionary of size {}",
                self.dictionary_size
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Continuous soft units for one utterance, T x D_s.
#[derive(Debug, Clone)]
pub struct SoftUnitSequence {
    pub utterance_id: String,
    pub vectors: Mat,
}

impl SoftUnitSequence {
    pub fn new(utterance_id: impl Into<String>, vectors: Mat) -> Result<Self> {
        let seq = SoftUnitSequence {
            utterance_id: utterance_id.into(),
            vectors,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vectors.rows() == 0 {
            return Err(Error::data(format!(
                "soft unit sequence '{}' must have at least one frame",
                self.utterance_id
            )));
        }
        if !self.vectors.is_finite() {
            return Err(Error::data(format!(
                "soft unit sequence '{}' contains non-finite values",
                self.utterance_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }
}
