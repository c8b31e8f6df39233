// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-describing JSON record files for banks.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::banks::arity::ArityBank;
use crate::banks::edge_grid::EdgeGridBank;
use crate::banks::vocab::Vocab;
use crate::{Error, Result};

pub const BANK_SCHEMA: &str = "relrank.bank";
pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankBody {
    Arity(ArityBank),
    EdgeGrid(EdgeGridBank),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankFile {
    pub schema: String,
    pub version: u32,
    pub vocabulary: Vec<String>,
    pub bank: BankBody,
}

impl BankFile {
    pub fn new(bank: BankBody) -> Self {
        Self {
            schema: BANK_SCHEMA.into(),
            version: BANK_VERSION,
            vocabulary: Vocab::standard().tokens().to_vec(),
            bank,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let f: BankFile = serde_json::from_slice(bytes)?;
        if f.schema != BANK_SCHEMA || f.version != BANK_VERSION {
            return Err(Error::Schema(format!(
                "expected {BANK_SCHEMA} v{BANK_VERSION}, found {} v{}",
                f.schema, f.version
            )));
        }
        if f.vocabulary != Vocab::standard().tokens() {
            return Err(Error::Schema("bank vocabulary differs from the built-in table".into()));
        }
        Ok(f)
    }

    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banks::{gen_arity_bank, gen_edge_grid_bank, ArityBankConfig, EdgeGridConfig};

    #[test]
    fn round_trip_is_byte_identical() {
        let a = BankFile::new(BankBody::Arity(
            gen_arity_bank(&ArityBankConfig {
                prompts_per_arity: 4,
                ..ArityBankConfig::default()
            })
            .unwrap(),
        ));
        let bytes = a.to_bytes().unwrap();
        let back = BankFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let e = BankFile::new(BankBody::EdgeGrid(gen_edge_grid_bank(&EdgeGridConfig::default()).unwrap()));
        let bytes = e.to_bytes().unwrap();
        assert_eq!(BankFile::from_bytes(&bytes).unwrap().to_bytes().unwrap(), bytes);
    }

    #[test]
    fn wrong_schema_rejected() {
        let mut f = BankFile::new(BankBody::EdgeGrid(gen_edge_grid_bank(&EdgeGridConfig::default()).unwrap()));
        f.version = 99;
        let bytes = serde_json::to_vec(&f).unwrap();
        assert!(matches!(BankFile::from_bytes(&bytes), Err(Error::Schema(_))));
    }
}
