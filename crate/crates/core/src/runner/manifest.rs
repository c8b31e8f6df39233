// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run manifests: config snapshot, generator identity, and a SHA-256 digest
//! for every file a suite wrote. The manifest is always the last file written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::banks::serialization::sha256_hex;
use crate::geometry::svd::SVD_CONVENTION;
use crate::harness::CompetenceReport;
use crate::metrics::EPS_GAP;
use crate::rng::PRNG_IDENTITY;
use crate::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "relrank.manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Method choices every manifest carries so readers can see them without the source.
pub const METHOD_NOTES: &[&str] = &[
    "arity-bank templates 0..=2 are built-in stand-ins differing in carrier phrasing and role-marker order",
    "procrustes path fractions use the closed-form fractional rotation R^t = exp(t log R)",
    "grassmann reconstruction keeps the out-of-subspace residual unchanged",
    "residual contrast: per changed row, normalize(blade(clean col) - blade(corrupt col)), averaged and renormalized",
    "glass-box behavior readout is an option-scoring head, not next-token logits",
    "glass-box layers: patch 5 and readout 9 of 12 stand in for layers 5 and 35 of 80",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Path relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankDigest {
    pub kind: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: u32,
    pub suite: String,
    pub config: serde_json::Value,
    pub prng: String,
    pub svd_convention: String,
    pub eps_gap: f64,
    pub banks: Vec<BankDigest>,
    pub outputs: Vec<OutputDigest>,
    pub exclusions: BTreeMap<String, usize>,
    pub notes: Vec<String>,
    pub gate: Option<CompetenceReport>,
    /// Set when the competence gate failed; results are emitted but are not evidence.
    pub boundary: bool,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_slice(&bytes)?;
        if m.schema != MANIFEST_SCHEMA || m.version != MANIFEST_VERSION {
            return Err(Error::Schema(format!(
                "expected {MANIFEST_SCHEMA} v{MANIFEST_VERSION}, found {} v{}",
                m.schema, m.version
            )));
        }
        Ok(m)
    }

    /// Recomputes every output digest relative to the manifest's directory.
    pub fn verify(path: &Path) -> Result<Self> {
        let m = Self::read(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for o in &m.outputs {
            let p = dir.join(&o.path);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let found = sha256_hex(&bytes);
            if found != o.sha256 {
                return Err(Error::DigestMismatch { path: p, expected: o.sha256.clone(), found });
            }
        }
        Ok(m)
    }

    pub fn output(&self, path: &str) -> Option<&OutputDigest> {
        self.outputs.iter().find(|o| o.path == path)
    }
}

/// An output directory that records a digest for each file it writes.
#[derive(Debug)]
pub struct RunOutputs {
    dir: PathBuf,
    suite: String,
    outputs: Vec<OutputDigest>,
    banks: Vec<BankDigest>,
    pub exclusions: BTreeMap<String, usize>,
    pub notes: Vec<String>,
    pub gate: Option<CompetenceReport>,
    pub boundary: bool,
}

impl RunOutputs {
    pub fn create(dir: &Path, suite: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            suite: suite.into(),
            outputs: Vec::new(),
            banks: Vec::new(),
            exclusions: BTreeMap::new(),
            notes: Vec::new(),
            gate: None,
            boundary: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        if name == MANIFEST_FILE || self.outputs.iter().any(|o| o.path == name) {
            return Err(Error::InvalidArgument(format!("output {name} written twice")));
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let sha = sha256_hex(bytes);
        self.outputs.push(OutputDigest { path: name.into(), sha256: sha.clone(), bytes: bytes.len() as u64 });
        Ok(sha)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn record_bank(&mut self, kind: &str, sha256: String) {
        self.banks.push(BankDigest { kind: kind.into(), sha256 });
    }

    pub fn exclude(&mut self, counter: &str, n: usize) {
        *self.exclusions.entry(counter.into()).or_default() += n;
    }

    /// Writes the manifest and returns its path.
    pub fn seal<C: Serialize>(self, config: &C) -> Result<PathBuf> {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut notes: Vec<String> = METHOD_NOTES.iter().map(|s| s.to_string()).collect();
        for n in self.notes {
            if !notes.contains(&n) {
                notes.push(n);
            }
        }
        let m = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            suite: self.suite,
            config: serde_json::to_value(config)?,
            prng: PRNG_IDENTITY.into(),
            svd_convention: SVD_CONVENTION.into(),
            eps_gap: EPS_GAP,
            banks: self.banks,
            outputs: self.outputs,
            exclusions: self.exclusions,
            notes,
            gate: self.gate,
            boundary: self.boundary,
            created_unix,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seal_then_verify_then_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = RunOutputs::create(dir.path(), "unit").unwrap();
        out.write_bytes("a.csv", b"x,y\n1,2\n").unwrap();
        out.write_bytes("sub/b.txt", b"hello").unwrap();
        out.exclude("undefined", 2);
        let path = out.seal(&serde_json::json!({"seed": 1})).unwrap();
        let m = RunManifest::verify(&path).unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(m.output("a.csv").unwrap().bytes, 8);
        assert_eq!(m.exclusions["undefined"], 2);
        assert_eq!(m.prng, PRNG_IDENTITY);

        std::fs::write(dir.path().join("sub/b.txt"), b"hellp").unwrap();
        match RunManifest::verify(&path) {
            Err(Error::DigestMismatch { path, .. }) => assert!(path.ends_with("sub/b.txt")),
            other => panic!("expected digest mismatch, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = RunOutputs::create(dir.path(), "unit").unwrap();
        out.write_bytes("a", b"1").unwrap();
        assert!(out.write_bytes("a", b"2").is_err());
        assert!(out.write_bytes(MANIFEST_FILE, b"{}").is_err());
    }

    #[test]
    fn wrong_schema_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let out = RunOutputs::create(dir.path(), "unit").unwrap();
        let real = out.seal(&0).unwrap();
        let text = std::fs::read_to_string(real).unwrap().replace(MANIFEST_SCHEMA, "other");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(RunManifest::read(&p), Err(Error::Schema(_))));
    }
}
