// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::{Error, Result};

pub type TokenId = u32;

/// Largest grid the vocabulary has row/column tokens for.
pub const MAX_GRID: usize = 16;
pub const ENTITY_COUNT: usize = 128;
pub const PREDICATE_COUNT: usize = 32;
pub const FILLER_COUNT: usize = 32;
pub const ROLE_MARKERS: usize = 8;

/// Closed token table; ids are indices into a fixed list.
#[derive(Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

const FIXED: &[&str] = &[
    "<bos>", ":", ";", ",", ".", "(", ")", "=", "!", "FACT", "NOTE", "CLAIM", "holds", "for",
    "and", "aside", "GRID", "OPTIONS", "ANSWER", "YES", "NO", "NONE", "ALL", "each", "row",
    "lists", "every", "column", "choose", "the", "map", "that", "matches",
];

impl Vocab {
    pub fn standard() -> &'static Vocab {
        static V: OnceLock<Vocab> = OnceLock::new();
        V.get_or_init(|| {
            let mut tokens: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
            tokens.extend((0..ENTITY_COUNT).map(|i| format!("E{i:03}")));
            tokens.extend((0..PREDICATE_COUNT).map(|i| format!("P{i:02}")));
            tokens.extend((0..FILLER_COUNT).map(|i| format!("W{i:02}")));
            tokens.extend((1..=ROLE_MARKERS).map(|i| format!("R{i}")));
            tokens.extend((0..MAX_GRID).map(|i| format!("A{i:02}")));
            tokens.extend((0..MAX_GRID).map(|i| format!("B{i:02}")));
            tokens.extend(["ANS_A", "ANS_B", "ANS_C", "ANS_D"].map(String::from));
            let index = tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as TokenId))
                .collect();
            Vocab { tokens, index }
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, tok: &str) -> Result<TokenId> {
        self.index
            .get(tok)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("token {tok:?} is not in the vocabulary")))
    }

    /// Id of a token known to be in the fixed table.
    pub fn id(&self, tok: &str) -> TokenId {
        self.index[tok]
    }

    pub fn text(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn entity(&self, i: usize) -> TokenId {
        self.id(&format!("E{i:03}"))
    }

    pub fn predicate(&self, i: usize) -> TokenId {
        self.id(&format!("P{i:02}"))
    }

    pub fn filler(&self, i: usize) -> TokenId {
        self.id(&format!("W{i:02}"))
    }

    pub fn role_marker(&self, role: usize) -> TokenId {
        self.id(&format!("R{}", role + 1))
    }

    pub fn row(&self, i: usize) -> TokenId {
        self.id(&format!("A{i:02}"))
    }

    pub fn col(&self, i: usize) -> TokenId {
        self.id(&format!("B{i:02}"))
    }

    pub fn answer(&self, i: usize) -> TokenId {
        self.id(["ANS_A", "ANS_B", "ANS_C", "ANS_D"][i])
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.text(i)).collect::<Vec<_>>().join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_and_are_unique() {
        let v = Vocab::standard();
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t) as usize, i);
        }
        assert_eq!(v.text(v.row(7)), "A07");
        assert!(v.get("nope").is_err());
    }
}
