// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tensor interchange with external capture tools.
//!
//! One file per (prompt, layer): a 48-byte little-endian header
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `RRTF`               |
//! | 4      | 4    | version (u32, 1)           |
//! | 8      | 4    | dtype (u32, 1 = f32)       |
//! | 12     | 4    | rank (u32, 1..=4)          |
//! | 16     | 32   | dims (4 x u64, unused = 0) |
//!
//! followed by row-major f32 data. A JSON capture manifest lists every file
//! with its shape and SHA-256.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::banks::serialization::sha256_hex;
use crate::banks::{ArityBank, ControlledArityPrompt};
use crate::diagnostics::ArityStates;
use crate::{Error, Matrix, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"RRTF";
pub const TENSOR_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const HEADER_LEN: usize = 48;
pub const CAPTURE_SCHEMA: &str = "relrank.capture";
pub const CAPTURE_VERSION: u32 = 1;

pub fn encode_tensor(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    for d in [m.nrows() as u64, m.ncols() as u64, 0, 0] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Decodes a rank-2 tensor.
pub fn decode_tensor(b: &[u8]) -> Result<Matrix> {
    if b.len() < HEADER_LEN {
        return Err(Error::Schema(format!("tensor file of {} bytes is shorter than the header", b.len())));
    }
    if b[..4] != TENSOR_MAGIC {
        return Err(Error::Schema("bad tensor magic".into()));
    }
    let (version, dtype, rank) = (u32_at(b, 4), u32_at(b, 8), u32_at(b, 12));
    if version != TENSOR_VERSION || dtype != DTYPE_F32 {
        return Err(Error::Schema(format!("unsupported tensor version {version} / dtype {dtype}")));
    }
    if rank != 2 {
        return Err(Error::Schema(format!("expected a rank-2 tensor, found rank {rank}")));
    }
    let (rows, cols) = (u64_at(b, 16) as usize, u64_at(b, 24) as usize);
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Schema("tensor dims overflow".into()))?;
    if b.len() != want {
        return Err(Error::Schema(format!("tensor {rows}x{cols} needs {want} bytes, file has {}", b.len())));
    }
    let data = &b[HEADER_LEN..];
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        let at = 4 * (i * cols + j);
        f32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as f64
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureFile {
    pub prompt_id: usize,
    pub layer: usize,
    pub path: String,
    pub shape: [usize; 2],
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureManifest {
    pub schema: String,
    pub version: u32,
    pub bank_digest: String,
    /// Free-form substrate identifier (checkpoint id, or `glass-box`).
    pub source: String,
    pub hidden_dim: usize,
    pub layers: Vec<usize>,
    pub files: Vec<CaptureFile>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CaptureManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: CaptureManifest = serde_json::from_slice(&bytes)?;
        if m.schema != CAPTURE_SCHEMA || m.version != CAPTURE_VERSION {
            return Err(Error::Schema(format!(
                "expected {CAPTURE_SCHEMA} v{CAPTURE_VERSION}, found {} v{}",
                m.schema, m.version
            )));
        }
        Ok(m)
    }
}

/// Writes one file per (prompt, layer) plus `capture.json`; returns the manifest path.
pub fn write_capture(
    dir: &Path,
    bank_digest: &str,
    source: &str,
    layers: &[usize],
    prompts: &[(usize, Vec<Matrix>)],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hidden_dim = prompts
        .first()
        .and_then(|(_, l)| l.first())
        .map(|m| m.ncols())
        .ok_or_else(|| Error::InvalidArgument("nothing to capture".into()))?;
    let mut files = Vec::new();
    for (id, per_layer) in prompts {
        if per_layer.len() != layers.len() {
            return Err(Error::Dimension(format!(
                "prompt {id}: {} matrices for {} layers",
                per_layer.len(),
                layers.len()
            )));
        }
        for (&layer, m) in layers.iter().zip(per_layer) {
            let name = format!("p{id:05}_l{layer:03}.rrt");
            let bytes = encode_tensor(m);
            let p = dir.join(&name);
            std::fs::write(&p, &bytes).map_err(|e| Error::io(&p, e))?;
            files.push(CaptureFile {
                prompt_id: *id,
                layer,
                path: name,
                shape: [m.nrows(), m.ncols()],
                sha256: sha256_hex(&bytes),
            });
        }
    }
    let m = CaptureManifest {
        schema: CAPTURE_SCHEMA.into(),
        version: CAPTURE_VERSION,
        bank_digest: bank_digest.into(),
        source: source.into(),
        hidden_dim,
        layers: layers.to_vec(),
        files,
        warnings: Vec::new(),
    };
    let path = dir.join("capture.json");
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Captured states for an arity bank, loaded and fully validated up front.
#[derive(Debug, Clone)]
pub struct IngestedStates {
    pub manifest: CaptureManifest,
    n_layers: usize,
    states: BTreeMap<usize, Vec<Matrix>>,
}

impl IngestedStates {
    /// Prompts present in the capture (prompts skipped by the capture tool are absent).
    pub fn prompt_ids(&self) -> Vec<usize> {
        self.states.keys().copied().collect()
    }

    /// Restricts a bank to the captured prompts.
    pub fn covered_bank(&self, bank: &ArityBank) -> ArityBank {
        let mut b = bank.clone();
        b.prompts.retain(|p| self.states.contains_key(&p.prompt_id));
        b
    }
}

pub fn ingest(manifest_path: &Path, bank: &ArityBank, bank_digest: &str) -> Result<IngestedStates> {
    let m = CaptureManifest::read(manifest_path)?;
    if m.bank_digest != bank_digest {
        return Err(Error::DigestMismatch {
            path: manifest_path.to_path_buf(),
            expected: bank_digest.into(),
            found: m.bank_digest.clone(),
        });
    }
    let mut layers = m.layers.clone();
    layers.sort_unstable();
    layers.dedup();
    if layers.len() != m.layers.len() || layers.is_empty() {
        return Err(Error::Schema("capture layer list is empty or has repeats".into()));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let tokens: BTreeMap<usize, usize> = bank.prompts.iter().map(|p| (p.prompt_id, p.tokens.len())).collect();
    let mut by_prompt: BTreeMap<usize, BTreeMap<usize, Matrix>> = BTreeMap::new();
    for f in &m.files {
        let p = dir.join(&f.path);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let found = sha256_hex(&bytes);
        if found != f.sha256 {
            return Err(Error::DigestMismatch { path: p, expected: f.sha256.clone(), found });
        }
        let t = decode_tensor(&bytes)?;
        if [t.nrows(), t.ncols()] != f.shape {
            return Err(Error::Dimension(format!("{}: shape {:?} but manifest says {:?}", f.path, t.shape(), f.shape)));
        }
        let n = *tokens
            .get(&f.prompt_id)
            .ok_or_else(|| Error::Schema(format!("{}: prompt {} is not in the bank", f.path, f.prompt_id)))?;
        if t.nrows() != n || t.ncols() != m.hidden_dim {
            return Err(Error::Dimension(format!(
                "{}: {}x{} states for {n} tokens at hidden dim {}",
                f.path,
                t.nrows(),
                t.ncols(),
                m.hidden_dim
            )));
        }
        if by_prompt.entry(f.prompt_id).or_default().insert(f.layer, t).is_some() {
            return Err(Error::Schema(format!("prompt {} layer {} listed twice", f.prompt_id, f.layer)));
        }
    }
    let n_layers = layers.last().unwrap() + 1;
    let mut states = BTreeMap::new();
    for (id, got) in by_prompt {
        let have: Vec<usize> = got.keys().copied().collect();
        if have != layers {
            return Err(Error::Schema(format!(
                "prompt {id} has layers {have:?} but the manifest lists {:?}",
                m.layers
            )));
        }
        let mut per_layer = vec![Matrix::zeros(0, 0); n_layers];
        for (l, t) in got {
            per_layer[l] = t;
        }
        states.insert(id, per_layer);
    }
    Ok(IngestedStates { manifest: m, n_layers, states })
}

impl ArityStates for IngestedStates {
    fn n_layers(&self) -> usize {
        self.n_layers
    }

    fn model_dim(&self) -> usize {
        self.manifest.hidden_dim
    }

    /// Uncaptured layers come back as 0x0 matrices and are rejected by the cell builder.
    fn states(&self, prompt: &ControlledArityPrompt) -> Result<Vec<Matrix>> {
        self.states
            .get(&prompt.prompt_id)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("prompt {} was not captured", prompt.prompt_id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banks::serialization::{BankBody, BankFile};
    use crate::banks::{gen_arity_bank, ArityBankConfig};
    use crate::harness::planted::{planted_states, PlantedBankConfig};

    fn bank() -> (ArityBank, String) {
        let b = gen_arity_bank(&ArityBankConfig { arities: vec![3], prompts_per_arity: 4, ..Default::default() }).unwrap();
        let digest = BankFile::new(BankBody::Arity(b.clone())).digest().unwrap();
        (b, digest)
    }

    fn capture(dir: &Path, b: &ArityBank, digest: &str) -> (PathBuf, Vec<(usize, Vec<Matrix>)>) {
        let cfg = PlantedBankConfig { hidden_dim: 16, ..Default::default() };
        let layers = [1, 2, 3];
        let data: Vec<(usize, Vec<Matrix>)> = b
            .prompts
            .iter()
            .map(|p| {
                let all = planted_states(p, &cfg).unwrap();
                (p.prompt_id, layers.iter().map(|&l| all[l].clone()).collect())
            })
            .collect();
        (write_capture(dir, digest, "planted", &layers, &data).unwrap(), data)
    }

    #[test]
    fn header_layout() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        let b = encode_tensor(&m);
        assert_eq!(b.len(), 48 + 24);
        assert_eq!(&b[..4], b"RRTF");
        assert_eq!(u64_at(&b, 16), 2);
        assert_eq!(u64_at(&b, 24), 3);
        assert_eq!(f32::from_le_bytes(b[48 + 12..48 + 16].try_into().unwrap()), 4.0);
        assert_eq!(decode_tensor(&b).unwrap(), m);
        assert!(decode_tensor(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn round_trip_is_bitwise_after_f32_cast() {
        let dir = tempfile::tempdir().unwrap();
        let (b, digest) = bank();
        let (path, data) = capture(dir.path(), &b, &digest);
        let ing = ingest(&path, &b, &digest).unwrap();
        assert_eq!(ing.n_layers(), 4);
        for (id, mats) in &data {
            let got = ing.states(&b.prompts[*id]).unwrap();
            assert_eq!(got[0].shape(), (0, 0));
            for (k, m) in mats.iter().enumerate() {
                let want = m.map(|x| x as f32 as f64);
                assert!(got[k + 1].iter().zip(want.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn truncated_file_is_a_digest_error() {
        let dir = tempfile::tempdir().unwrap();
        let (b, digest) = bank();
        let (path, _) = capture(dir.path(), &b, &digest);
        let victim = dir.path().join("p00002_l002.rrt");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(ingest(&path, &b, &digest), Err(Error::DigestMismatch { .. })));
    }

    #[test]
    fn layer_list_mismatch_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let (b, digest) = bank();
        let (path, _) = capture(dir.path(), &b, &digest);
        let mut m = CaptureManifest::read(&path).unwrap();
        m.layers.push(4);
        std::fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(ingest(&path, &b, &digest), Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_bank_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (b, digest) = bank();
        let (path, _) = capture(dir.path(), &b, &digest);
        assert!(matches!(ingest(&path, &b, "00"), Err(Error::DigestMismatch { .. })));
    }
}
