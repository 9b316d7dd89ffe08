//! Binary tensor files and checkpoint containers.
//!
//! Layout of a tensor file (all integers little-endian):
//!
//! ```text
//! magic: 4 ASCII bytes | version: u32 | rows: u32 | cols: u32
//! payload: rows * cols IEEE-754 f32, row-major
//! ```
//!
//! Unit sequences use their own magic (`VCUN`) with u16 ids, and checkpoint
//! containers (`VCCK`) bundle several named tensor streams in one file.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;

pub const TENSOR_VERSION: u32 = 1;

/// What a tensor file carries, encoded in its magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorKind {
    /// `VCFT` — backbone features or soft units, T x D.
    Features,
    /// `VCML` — log-mel spectrogram, T_m x M.
    Mel,
    /// `VCCB` — k-means codebook, K x D.
    Codebook,
    /// `VCSE` — soft-encoder checkpoint tensor.
    SoftCheckpoint,
    /// `VCAC` — acoustic-model checkpoint tensor.
    AcousticCheckpoint,
    /// `VCEM` — speaker embedding, 1 x D.
    Embedding,
}

impl TensorKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            TensorKind::Features => *b"VCFT",
            TensorKind::Mel => *b"VCML",
            TensorKind::Codebook => *b"VCCB",
            TensorKind::SoftCheckpoint => *b"VCSE",
            TensorKind::AcousticCheckpoint => *b"VCAC",
            TensorKind::Embedding => *b"VCEM",
        }
    }

    pub fn from_magic(magic: &[u8; 4]) -> Option<Self> {
        match magic {
            b"VCFT" => Some(TensorKind::Features),
            b"VCML" => Some(TensorKind::Mel),
            b"VCCB" => Some(TensorKind::Codebook),
            b"VCSE" => Some(TensorKind::SoftCheckpoint),
            b"VCAC" => Some(TensorKind::AcousticCheckpoint),
            b"VCEM" => Some(TensorKind::Embedding),
            _ => None,
        }
    }
}

/// Serialize a matrix to the tensor byte layout. Values are narrowed to f32.
pub fn tensor_bytes(kind: TensorKind, matrix: &Mat) -> Result<Vec<u8>> {
    if matrix.rows() == 0 || matrix.cols() == 0 {
        return Err(Error::data("tensor must have at least one row and column"));
    }
    if !matrix.is_finite() {
        return Err(Error::data("tensor contains NaN or infinite values"));
    }
    let mut out = Vec::with_capacity(16 + matrix.rows() * matrix.cols() * 4);
    out.extend_from_slice(&kind.magic());
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for &v in matrix.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parse a tensor byte stream, validating magic, version and payload length.
pub fn tensor_from_bytes(bytes: &[u8]) -> Result<(TensorKind, Mat)> {
    let mut cursor = Cursor::new(bytes);
    let (kind, mat) = read_tensor_stream(&mut cursor)?;
    if cursor.position() as usize != bytes.len() {
        return Err(Error::format(format!(
            "trailing bytes after tensor payload ({} extra)",
            bytes.len() - cursor.position() as usize
        )));
    }
    Ok((kind, mat))
}

fn read_tensor_stream(reader: &mut impl Read) -> Result<(TensorKind, Mat)> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::format("truncated tensor header"))?;
    let kind = TensorKind::from_magic(&magic).ok_or_else(|| {
        Error::format(format!("unknown magic {:?}", String::from_utf8_lossy(&magic)))
    })?;
    let version = read_u32(reader)?;
    if version != TENSOR_VERSION {
        return Err(Error::format(format!("unsupported tensor version {version}")));
    }
    let rows = read_u32(reader)? as usize;
    let cols = read_u32(reader)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(format!("invalid tensor shape {rows}x{cols}")));
    }
    let mut payload = vec![0u8; rows * cols * 4];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::format(format!("truncated payload for {rows}x{cols} tensor")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if v.is_nan() {
            return Err(Error::data("tensor payload contains NaN"));
        }
        data.push(v as f64);
    }
    Ok((kind, Mat::from_vec(rows, cols, data)?))
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::format("truncated tensor header"))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_tensor(kind: TensorKind, matrix: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = tensor_bytes(kind, matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(TensorKind, Mat)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    tensor_from_bytes(&bytes)
}

/// Read a tensor and check it carries the expected kind.
pub fn read_tensor_expect(path: impl AsRef<Path>, expect: TensorKind) -> Result<Mat> {
    let path = path.as_ref();
    let (kind, mat) = read_tensor(path)?;
    if kind != expect {
        return Err(Error::format(format!(
            "{}: expected {expect:?} tensor, found {kind:?}",
            path.display()
        )));
    }
    Ok(mat)
}

const UNIT_MAGIC: [u8; 4] = *b"VCUN";

/// Serialize a unit id sequence: magic `VCUN`, version, T, then T u16 ids.
pub fn unit_bytes(units: &[u16]) -> Result<Vec<u8>> {
    if units.is_empty() {
        return Err(Error::data("unit sequence must not be empty"));
    }
    let mut out = Vec::with_capacity(12 + units.len() * 2);
    out.extend_from_slice(&UNIT_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(units.len() as u32).to_le_bytes());
    for &u in units {
        out.extend_from_slice(&u.to_le_bytes());
    }
    Ok(out)
}

pub fn units_from_bytes(bytes: &[u8]) -> Result<Vec<u16>> {
    if bytes.len() < 12 {
        return Err(Error::format("truncated unit-sequence header"));
    }
    if bytes[0..4] != UNIT_MAGIC {
        return Err(Error::format(format!(
            "unknown magic {:?}",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(Error::format(format!("unsupported unit-sequence version {version}")));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if payload.len() != count * 2 {
        return Err(Error::format(format!(
            "unit payload is {} bytes, expected {}",
            payload.len(),
            count * 2
        )));
    }
    Ok(payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn write_units(units: &[u16], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, unit_bytes(units)?).map_err(|e| Error::io(path, e))
}

pub fn read_units(path: impl AsRef<Path>) -> Result<Vec<u16>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    units_from_bytes(&bytes)
}

const CONTAINER_MAGIC: [u8; 4] = *b"VCCK";

/// A checkpoint container: named tensor streams in one file.
///
/// Layout: magic `VCCK`, version u32, entry count u32, then per entry a
/// u32 name length, the UTF-8 name, a u32 blob length and the blob (a full
/// tensor byte stream as produced by [`tensor_bytes`]).
#[derive(Debug, Clone)]
pub struct Container {
    entries: Vec<(String, TensorKind, Mat)>,
}

impl Container {
    pub fn new() -> Self {
        Container { entries: Vec::new() }
    }

    pub fn push(&mut self, name: &str, kind: TensorKind, matrix: Mat) {
        self.entries.push((name.to_string(), kind, matrix));
    }

    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, m)| m)
            .ok_or_else(|| Error::format(format!("container missing entry '{name}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CONTAINER_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, kind, mat) in &self.entries {
            let blob = tensor_bytes(*kind, mat)?;
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            out.extend_from_slice(&blob);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cursor
            .read_exact(&mut magic)
            .map_err(|_| Error::format("truncated container header"))?;
        if magic != CONTAINER_MAGIC {
            return Err(Error::format(format!(
                "unknown container magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(&mut cursor)?;
        if version != TENSOR_VERSION {
            return Err(Error::format(format!("unsupported container version {version}")));
        }
        let count = read_u32(&mut cursor)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut cursor)? as usize;
            let mut name = vec![0u8; name_len];
            cursor
                .read_exact(&mut name)
                .map_err(|_| Error::format("truncated container entry name"))?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::format("container entry name is not UTF-8"))?;
            let blob_len = read_u32(&mut cursor)? as usize;
            let mut blob = vec![0u8; blob_len];
            cursor
                .read_exact(&mut blob)
                .map_err(|_| Error::format("truncated container entry blob"))?;
            let (kind, mat) = tensor_from_bytes(&blob)?;
            entries.push((name, kind, mat));
        }
        if cursor.position() as usize != bytes.len() {
            return Err(Error::format("trailing bytes after container entries"));
        }
        Ok(Container { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::from_bytes(&bytes)
    }
}

impl Default for Container {
    fn default() -> Self {
        Self::new()
    }
}

/// Write a JSON sidecar next to a checkpoint (`<path>.json`).
pub fn write_sidecar<T: serde::Serialize>(path: impl AsRef<Path>, meta: &T) -> Result<()> {
    let side = sidecar_path(path.as_ref());
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::format(format!("sidecar serialization failed: {e}")))?;
    let mut f = fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    f.write_all(json.as_bytes()).map_err(|e| Error::io(&side, e))?;
    f.write_all(b"\n").map_err(|e| Error::io(&side, e))
}

pub fn read_sidecar<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let side = sidecar_path(path.as_ref());
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("sidecar {}: {e}", side.display())))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_exact_bytes() {
        let mat = Mat::from_vec(1, 1, vec![1.0]).unwrap();
        let bytes = tensor_bytes(TensorKind::Features, &mat).unwrap();
        assert_eq!(
            bytes,
            vec![
                0x56, 0x43, 0x46, 0x54, // VCFT
                0x01, 0x00, 0x00, 0x00, // version 1
                0x01, 0x00, 0x00, 0x00, // rows 1
                0x01, 0x00, 0x00, 0x00, // cols 1
                0x00, 0x00, 0x80, 0x3F, // 1.0f32
            ]
        );
    }

    #[test]
    fn zero_matrix_payload() {
        let mat = Mat::zeros(2, 2);
        let bytes = tensor_bytes(TensorKind::Mel, &mat).unwrap();
        assert_eq!(bytes.len(), 16 + 16);
        assert!(bytes[16..].iter().all(|&b| b == 0));
    }

    #[test]
    fn unknown_magic_rejected() {
        let mut bytes = tensor_bytes(TensorKind::Features, &Mat::zeros(1, 1)).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        match tensor_from_bytes(&bytes) {
            Err(Error::Format(msg)) => assert!(msg.contains("XXXX")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = tensor_bytes(TensorKind::Features, &Mat::zeros(2, 2)).unwrap();
        // 2x2 needs 16 payload bytes; keep only 12.
        let truncated = &bytes[..16 + 12];
        assert!(matches!(tensor_from_bytes(truncated), Err(Error::Format(_))));
    }

    #[test]
    fn nan_payload_rejected() {
        let mut bytes = tensor_bytes(TensorKind::Features, &Mat::zeros(1, 2)).unwrap();
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(tensor_from_bytes(&bytes), Err(Error::Data(_))));
    }

    #[test]
    fn nan_input_rejected_on_write() {
        let mat = Mat::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(tensor_bytes(TensorKind::Features, &mat).is_err());
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vcft");
        let mat = Mat::from_vec(2, 3, vec![1.5, -2.25, 0.0, 3.5, 4.0, -0.125]).unwrap();
        write_tensor(TensorKind::Features, &mat, &path).unwrap();
        let (kind, back) = read_tensor(&path).unwrap();
        assert_eq!(kind, TensorKind::Features);
        assert_eq!(back, mat);
    }

    #[test]
    fn unit_sequence_roundtrip() {
        let units = vec![0u16, 7, 99, 3];
        let bytes = unit_bytes(&units).unwrap();
        assert_eq!(&bytes[0..4], b"VCUN");
        assert_eq!(units_from_bytes(&bytes).unwrap(), units);
    }

    #[test]
    fn container_roundtrip() {
        let mut c = Container::new();
        c.push("W", TensorKind::SoftCheckpoint, Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        c.push("b", TensorKind::SoftCheckpoint, Mat::from_vec(1, 2, vec![-1.0, 0.5]).unwrap());
        let bytes = c.to_bytes().unwrap();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back.get("W").unwrap(), c.get("W").unwrap());
        assert_eq!(back.get("b").unwrap(), c.get("b").unwrap());
        assert!(back.get("E").is_err());
        // Re-serialization is byte-identical.
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
