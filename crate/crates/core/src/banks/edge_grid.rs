// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::banks::vocab::{TokenId, Vocab, MAX_GRID};
use crate::rng::{label, seeded, stream_id};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Clean,
    Corrupt,
    AllOff,
    AllOn,
}

impl OptionKind {
    pub const ALL: [OptionKind; 4] = [
        OptionKind::Clean,
        OptionKind::Corrupt,
        OptionKind::AllOff,
        OptionKind::AllOn,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Clean,
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub kind: OptionKind,
    pub letter: usize,
    pub answer_token: TokenId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeGridPrompt {
    pub prompt_id: usize,
    pub grid_size: usize,
    pub clean_map: Vec<usize>,
    pub corrupt_map: Vec<usize>,
    pub tokens_clean: Vec<TokenId>,
    pub tokens_corrupt: Vec<TokenId>,
    /// `[row][col]` position of the YES/NO marker token.
    pub marker_positions_clean: Vec<Vec<usize>>,
    pub marker_positions_corrupt: Vec<Vec<usize>>,
    /// Options in the order clean, corrupt, all-off, all-on.
    pub answer_options: Vec<AnswerOption>,
    pub row_token_positions: Vec<usize>,
    /// `[row][col]` position of the column label inside each row's listing.
    pub col_token_positions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeGridConfig {
    pub n_prompts: usize,
    pub grid: usize,
    pub corrupt_mode: String,
    pub seed: u64,
}

impl Default for EdgeGridConfig {
    fn default() -> Self {
        Self {
            n_prompts: 32,
            grid: 8,
            corrupt_mode: "broken".into(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGridBank {
    pub config: EdgeGridConfig,
    pub prompts: Vec<EdgeGridPrompt>,
}

/// Rendered token sequence with its position tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub tokens: Vec<TokenId>,
    pub markers: Vec<Vec<usize>>,
    pub rows: Vec<usize>,
    pub cols: Vec<Vec<usize>>,
}

/// Changed-edge rows and the ordered marker positions `E`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedEdgeSet {
    pub entries: Vec<(usize, usize, usize)>,
    pub marker_positions: Vec<usize>,
}

impl ChangedEdgeSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const INSTRUCTION: &[&str] = &[
    "each", "row", "lists", "every", "column", ";", "choose", "the", "map", "that", "matches", ".",
];

fn render(v: &Vocab, n: usize, map: &[usize], options: &[AnswerOption], clean: &[usize], corrupt: &[usize]) -> Rendered {
    let mut t = vec![v.id("<bos>")];
    t.extend(INSTRUCTION.iter().map(|w| v.id(w)));
    t.push(v.id("GRID"));
    t.push(v.id(":"));
    let mut markers = vec![vec![0; n]; n];
    let mut rows = Vec::with_capacity(n);
    let mut cols = vec![vec![0; n]; n];
    for a in 0..n {
        rows.push(t.len());
        t.push(v.row(a));
        t.push(v.id(":"));
        for b in 0..n {
            cols[a][b] = t.len();
            t.push(v.col(b));
            t.push(v.id("="));
            markers[a][b] = t.len();
            t.push(if map[a] == b { v.id("YES") } else { v.id("NO") });
        }
        t.push(v.id(";"));
    }
    t.push(v.id("OPTIONS"));
    t.push(v.id(":"));
    let mut by_letter: Vec<&AnswerOption> = options.iter().collect();
    by_letter.sort_by_key(|o| o.letter);
    for o in by_letter {
        t.push(o.answer_token);
        t.push(v.id(":"));
        match o.kind {
            OptionKind::Clean => t.extend(clean.iter().map(|&c| v.col(c))),
            OptionKind::Corrupt => t.extend(corrupt.iter().map(|&c| v.col(c))),
            OptionKind::AllOff => t.push(v.id("NONE")),
            OptionKind::AllOn => t.push(v.id("ALL")),
        }
        t.push(v.id(";"));
    }
    t.push(v.id("ANSWER"));
    t.push(v.id(":"));
    Rendered {
        tokens: t,
        markers,
        rows,
        cols,
    }
}

/// Duplicate-target corrupt map: with a seeded row order `σ`, rows
/// `σ(2t)` and `σ(2t+1)` both point at column `σ(2t+2 mod n)`. Every row
/// changes and half the columns are targeted twice.
pub fn broken_map(n: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let mut sigma: Vec<usize> = (0..n).collect();
    sigma.shuffle(rng);
    let mut map = vec![0; n];
    for t in 0..n / 2 {
        let target = sigma[(2 * t + 2) % n];
        map[sigma[2 * t]] = target;
        map[sigma[2 * t + 1]] = target;
    }
    map
}

pub fn gen_edge_grid_bank(cfg: &EdgeGridConfig) -> Result<EdgeGridBank> {
    if cfg.corrupt_mode != "broken" {
        return Err(Error::InvalidArgument(format!(
            "unknown corrupt mode {:?}; known modes: broken",
            cfg.corrupt_mode
        )));
    }
    if cfg.grid < 4 || cfg.grid % 2 != 0 || cfg.grid > MAX_GRID {
        return Err(Error::InvalidArgument(format!(
            "grid size {} must be even and within 4..={MAX_GRID}",
            cfg.grid
        )));
    }
    if cfg.n_prompts == 0 {
        return Err(Error::InvalidArgument("edge-grid bank needs at least one prompt".into()));
    }
    let v = Vocab::standard();
    let n = cfg.grid;
    let mut prompts = Vec::with_capacity(cfg.n_prompts);
    for prompt_id in 0..cfg.n_prompts {
        let mut rng = seeded(cfg.seed, stream_id(&[label("edge-grid"), prompt_id as u64]));
        let clean_map: Vec<usize> = (0..n).collect();
        let corrupt_map = broken_map(n, &mut rng);
        let mut letters = [0usize, 1, 2, 3];
        letters.shuffle(&mut rng);
        let answer_options: Vec<AnswerOption> = OptionKind::ALL
            .iter()
            .zip(letters)
            .map(|(&kind, letter)| AnswerOption {
                kind,
                letter,
                answer_token: v.answer(letter),
            })
            .collect();
        let rc = render(v, n, &clean_map, &answer_options, &clean_map, &corrupt_map);
        let rk = render(v, n, &corrupt_map, &answer_options, &clean_map, &corrupt_map);
        let p = EdgeGridPrompt {
            prompt_id,
            grid_size: n,
            clean_map,
            corrupt_map,
            tokens_clean: rc.tokens,
            tokens_corrupt: rk.tokens,
            marker_positions_clean: rc.markers,
            marker_positions_corrupt: rk.markers,
            answer_options,
            row_token_positions: rc.rows,
            col_token_positions: rc.cols,
        };
        p.audit()?;
        prompts.push(p);
    }
    Ok(EdgeGridBank {
        config: cfg.clone(),
        prompts,
    })
}

pub fn render_prompt(p: &EdgeGridPrompt, which: Which) -> Rendered {
    let map = match which {
        Which::Clean => &p.clean_map,
        Which::Corrupt => &p.corrupt_map,
    };
    p.render_map(map)
}

pub fn changed_edges(p: &EdgeGridPrompt) -> ChangedEdgeSet {
    let mut entries = Vec::new();
    let mut marker_positions = Vec::new();
    for a in 0..p.grid_size {
        let (c, k) = (p.clean_map[a], p.corrupt_map[a]);
        if c != k {
            entries.push((a, c, k));
            marker_positions.push(p.marker_positions_clean[a][c]);
            marker_positions.push(p.marker_positions_clean[a][k]);
        }
    }
    ChangedEdgeSet {
        entries,
        marker_positions,
    }
}

impl EdgeGridPrompt {
    pub fn render_map(&self, map: &[usize]) -> Rendered {
        render(
            Vocab::standard(),
            self.grid_size,
            map,
            &self.answer_options,
            &self.clean_map,
            &self.corrupt_map,
        )
    }

    pub fn tokens(&self, which: Which) -> &[TokenId] {
        match which {
            Which::Clean => &self.tokens_clean,
            Which::Corrupt => &self.tokens_corrupt,
        }
    }

    pub fn option(&self, kind: OptionKind) -> &AnswerOption {
        &self.answer_options[kind as usize]
    }

    /// All 64 (for an 8-grid) marker positions, row-major.
    pub fn all_marker_positions(&self) -> Vec<usize> {
        self.marker_positions_clean.iter().flatten().copied().collect()
    }

    /// 0/1 edge template `[row][col]` an option asserts.
    pub fn option_template(&self, kind: OptionKind) -> Vec<Vec<f64>> {
        let n = self.grid_size;
        let from_map = |m: &[usize]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|a| (0..n).map(|b| if m[a] == b { 1.0 } else { 0.0 }).collect())
                .collect()
        };
        match kind {
            OptionKind::Clean => from_map(&self.clean_map),
            OptionKind::Corrupt => from_map(&self.corrupt_map),
            OptionKind::AllOff => vec![vec![0.0; n]; n],
            OptionKind::AllOn => vec![vec![1.0; n]; n],
        }
    }

    /// Positions that are neither markers, row labels, nor column labels.
    pub fn scaffold_positions(&self) -> Vec<usize> {
        let mut taken: Vec<usize> = self.all_marker_positions();
        taken.extend(&self.row_token_positions);
        taken.extend(self.col_token_positions.iter().flatten());
        taken.sort_unstable();
        (1..self.tokens_clean.len())
            .filter(|p| taken.binary_search(p).is_err())
            .collect()
    }

    pub fn audit(&self) -> Result<()> {
        let n = self.grid_size;
        let id = self.prompt_id;
        if self.clean_map != (0..n).collect::<Vec<_>>() {
            return Err(Error::Audit(format!("edge prompt {id}: clean map is not the identity")));
        }
        let mut counts = vec![0usize; n];
        for &c in &self.corrupt_map {
            counts[c] += 1;
        }
        if !counts.iter().any(|&c| c >= 2) {
            return Err(Error::Audit(format!("edge prompt {id}: corrupt map has no duplicate target")));
        }
        let changed = self.clean_map.iter().zip(&self.corrupt_map).filter(|(a, b)| a != b).count();
        if changed < 4 {
            return Err(Error::Audit(format!("edge prompt {id}: fewer than 4 changed rows")));
        }
        if self.tokens_clean.len() != self.tokens_corrupt.len() {
            return Err(Error::Audit(format!("edge prompt {id}: renderings differ in length")));
        }
        let v = Vocab::standard();
        let (yes, no) = (v.id("YES"), v.id("NO"));
        for (tokens, map) in [(&self.tokens_clean, &self.clean_map), (&self.tokens_corrupt, &self.corrupt_map)] {
            for a in 0..n {
                for b in 0..n {
                    let want = if map[a] == b { yes } else { no };
                    if tokens[self.marker_positions_clean[a][b]] != want {
                        return Err(Error::Audit(format!("edge prompt {id}: marker ({a},{b}) mislabeled")));
                    }
                }
            }
        }
        let mut ids: Vec<TokenId> = self.answer_options.iter().map(|o| o.answer_token).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != 4 {
            return Err(Error::Audit(format!("edge prompt {id}: answer tokens are not distinct")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> EdgeGridBank {
        gen_edge_grid_bank(&EdgeGridConfig::default()).unwrap()
    }

    #[test]
    fn headline_bank() {
        let b = bank();
        assert_eq!(b.prompts.len(), 32);
        assert_eq!(b, bank());
    }

    #[test]
    fn identity_map_marker_counts() {
        let v = Vocab::standard();
        for p in bank().prompts {
            let r = render_prompt(&p, Which::Clean);
            let yes = p.all_marker_positions().iter().filter(|&&m| r.tokens[m] == v.id("YES")).count();
            assert_eq!(yes, 8);
            assert_eq!(p.all_marker_positions().len() - yes, 56);
            for a in 0..8 {
                assert_eq!(r.tokens[p.marker_positions_clean[a][a]], v.id("YES"));
            }
        }
    }

    #[test]
    fn renderings_differ_only_at_changed_markers() {
        for p in bank().prompts {
            let c = render_prompt(&p, Which::Clean);
            let k = render_prompt(&p, Which::Corrupt);
            assert_eq!(c.tokens.len(), k.tokens.len());
            let diff: Vec<usize> = (0..c.tokens.len()).filter(|&i| c.tokens[i] != k.tokens[i]).collect();
            let e = changed_edges(&p);
            assert_eq!(diff.len(), 2 * e.entries.len());
            let mut want = e.marker_positions.clone();
            want.sort_unstable();
            assert_eq!(diff, want);
            assert_eq!(e.marker_positions.len(), 2 * e.entries.len());
            assert_eq!(c.markers, p.marker_positions_clean);
            assert_eq!(k.tokens, p.tokens_corrupt);
        }
    }

    #[test]
    fn changed_edge_edge_cases() {
        let mut p = bank().prompts[0].clone();
        p.corrupt_map = p.clean_map.clone();
        assert!(changed_edges(&p).is_empty());
        p.corrupt_map[3] = 5;
        let e = changed_edges(&p);
        assert_eq!(e.entries, vec![(3, 3, 5)]);
        assert_eq!(e.marker_positions, vec![p.marker_positions_clean[3][3], p.marker_positions_clean[3][5]]);
    }

    #[test]
    fn every_corrupt_map_duplicates_a_target() {
        for p in bank().prompts {
            let mut seen = [0; 8];
            for &c in &p.corrupt_map {
                seen[c] += 1;
            }
            assert!(seen.iter().any(|&s| s >= 2));
            assert_eq!(changed_edges(&p).marker_positions.len(), 16);
        }
    }

    #[test]
    fn unknown_mode_rejected() {
        let cfg = EdgeGridConfig {
            corrupt_mode: "shuffled".into(),
            ..EdgeGridConfig::default()
        };
        assert!(gen_edge_grid_bank(&cfg).is_err());
    }

    #[test]
    fn scaffold_excludes_readout_sites() {
        let p = &bank().prompts[0];
        let s = p.scaffold_positions();
        let e = changed_edges(p).marker_positions;
        assert!(s.iter().all(|x| !e.contains(x) && !p.row_token_positions.contains(x)));
        assert!(s.len() >= 16);
    }
}
