// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::banks::vocab::{TokenId, Vocab, ENTITY_COUNT, FILLER_COUNT, PREDICATE_COUNT, ROLE_MARKERS};
use crate::rng::{label, seeded, stream_id};
use crate::{Error, Result};

/// Tuple-building rule and its expected rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constructor {
    ArgsOnly,
    PredPlusArgs,
}

impl Constructor {
    pub const ALL: [Constructor; 2] = [Constructor::ArgsOnly, Constructor::PredPlusArgs];

    pub fn name(self) -> &'static str {
        match self {
            Constructor::ArgsOnly => "args_only",
            Constructor::PredPlusArgs => "pred_plus_args",
        }
    }

    pub fn expected_rank(self, arity: usize) -> usize {
        match self {
            Constructor::ArgsOnly => arity,
            Constructor::PredPlusArgs => arity + 1,
        }
    }

    /// Largest admissible rank; the admissible set is `1..=max_rank`.
    pub fn max_rank(self, arity: usize) -> usize {
        self.expected_rank(arity)
    }

    pub fn check_rank(self, arity: usize, k: usize) -> Result<()> {
        let max = self.max_rank(arity);
        if k == 0 || k > max {
            return Err(Error::InadmissibleRank {
                constructor: self.name().into(),
                arity,
                k,
                max,
            });
        }
        Ok(())
    }

    /// Token positions of a relation in this constructor's role order.
    pub fn role_positions(self, rel: &RelationInstance) -> Vec<usize> {
        match self {
            Constructor::ArgsOnly => rel.argument_positions.clone(),
            Constructor::PredPlusArgs => {
                let mut v = Vec::with_capacity(rel.arity + 1);
                v.push(rel.predicate_position);
                v.extend(&rel.argument_positions);
                v
            }
        }
    }
}

impl std::str::FromStr for Constructor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "args_only" => Ok(Constructor::ArgsOnly),
            "pred_plus_args" => Ok(Constructor::PredPlusArgs),
            other => Err(Error::InvalidArgument(format!("unknown constructor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub predicate_token: TokenId,
    pub argument_tokens: Vec<TokenId>,
    pub argument_positions: Vec<usize>,
    pub predicate_position: usize,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlledArityPrompt {
    pub prompt_id: usize,
    pub tokens: Vec<TokenId>,
    pub relations: Vec<RelationInstance>,
    pub template_id: usize,
    pub arity: usize,
    pub distractor_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArityBankConfig {
    pub arities: Vec<usize>,
    pub prompts_per_arity: usize,
    pub templates: Vec<usize>,
    pub relations_per_prompt: usize,
    pub distractor_spans: usize,
    pub seed: u64,
}

impl Default for ArityBankConfig {
    fn default() -> Self {
        Self {
            arities: vec![3, 4, 5, 6],
            prompts_per_arity: 100,
            templates: vec![0, 1, 2],
            relations_per_prompt: 8,
            distractor_spans: 2,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArityBank {
    pub config: ArityBankConfig,
    pub prompts: Vec<ControlledArityPrompt>,
}

/// Number of registered surface templates.
pub const TEMPLATE_COUNT: usize = 3;

/// Short description of each template's surface form.
pub fn template_description(id: usize) -> &'static str {
    match id {
        0 => "FACT P ( a1 , a2 , ... ) .",
        1 => "NOTE : P holds for a1 and a2 and ... ;",
        2 => "CLAIM P : R1 a1 R2 a2 ... !",
        _ => "unknown",
    }
}

fn push_relation(
    v: &Vocab,
    template: usize,
    pred: TokenId,
    args: &[TokenId],
    out: &mut Vec<TokenId>,
) -> RelationInstance {
    let mut arg_pos = Vec::with_capacity(args.len());
    let pred_pos;
    match template {
        0 => {
            out.push(v.id("FACT"));
            pred_pos = out.len();
            out.push(pred);
            out.push(v.id("("));
            for (i, &a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(v.id(","));
                }
                arg_pos.push(out.len());
                out.push(a);
            }
            out.push(v.id(")"));
            out.push(v.id("."));
        }
        1 => {
            out.push(v.id("NOTE"));
            out.push(v.id(":"));
            pred_pos = out.len();
            out.push(pred);
            out.push(v.id("holds"));
            out.push(v.id("for"));
            for (i, &a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(v.id("and"));
                }
                arg_pos.push(out.len());
                out.push(a);
            }
            out.push(v.id(";"));
        }
        _ => {
            out.push(v.id("CLAIM"));
            pred_pos = out.len();
            out.push(pred);
            out.push(v.id(":"));
            for (i, &a) in args.iter().enumerate() {
                out.push(v.role_marker(i));
                arg_pos.push(out.len());
                out.push(a);
            }
            out.push(v.id("!"));
        }
    }
    RelationInstance {
        predicate_token: pred,
        argument_tokens: args.to_vec(),
        argument_positions: arg_pos,
        predicate_position: pred_pos,
        arity: args.len(),
    }
}

pub fn gen_arity_bank(cfg: &ArityBankConfig) -> Result<ArityBank> {
    if cfg.templates.is_empty() {
        return Err(Error::InvalidArgument("template set is empty".into()));
    }
    if let Some(&t) = cfg.templates.iter().find(|&&t| t >= TEMPLATE_COUNT) {
        return Err(Error::InvalidArgument(format!("unknown template id {t}")));
    }
    if cfg.prompts_per_arity < 2 {
        return Err(Error::InvalidArgument("need at least 2 prompts per arity".into()));
    }
    if cfg.relations_per_prompt < 2 {
        return Err(Error::InvalidArgument("need at least 2 relations per prompt".into()));
    }
    if cfg.distractor_spans == 0 {
        return Err(Error::InvalidArgument("need at least one distractor span".into()));
    }
    if cfg.relations_per_prompt > PREDICATE_COUNT {
        return Err(Error::InvalidArgument("too many relations per prompt".into()));
    }
    for &r in &cfg.arities {
        if r == 0 || r > ROLE_MARKERS || r * cfg.relations_per_prompt > ENTITY_COUNT {
            return Err(Error::InvalidArgument(format!("unsupported arity {r}")));
        }
    }
    let v = Vocab::standard();
    let mut prompts = Vec::new();
    for &r in &cfg.arities {
        for i in 0..cfg.prompts_per_arity {
            let prompt_id = prompts.len();
            let template_id = cfg.templates[i % cfg.templates.len()];
            let mut rng = seeded(cfg.seed, stream_id(&[label("arity-bank"), prompt_id as u64]));
            let mut entities: Vec<usize> = (0..ENTITY_COUNT).collect();
            entities.shuffle(&mut rng);
            let mut preds: Vec<usize> = (0..PREDICATE_COUNT).collect();
            preds.shuffle(&mut rng);

            let n_rel = cfg.relations_per_prompt;
            let mut after: Vec<usize> = Vec::with_capacity(cfg.distractor_spans);
            for _ in 0..cfg.distractor_spans {
                after.push(rng.random_range(0..n_rel));
            }
            after.sort_unstable();

            let mut tokens = vec![v.id("<bos>")];
            let mut relations = Vec::with_capacity(n_rel);
            let mut distractor_positions = Vec::new();
            for j in 0..n_rel {
                let args: Vec<TokenId> = entities[j * r..(j + 1) * r]
                    .iter()
                    .map(|&e| v.entity(e))
                    .collect();
                let pred = v.predicate(preds[j]);
                relations.push(push_relation(v, template_id, pred, &args, &mut tokens));
                for _ in after.iter().filter(|&&a| a == j) {
                    tokens.push(v.id("aside"));
                    let len = rng.random_range(2..=4);
                    for _ in 0..len {
                        distractor_positions.push(tokens.len());
                        tokens.push(v.filler(rng.random_range(0..FILLER_COUNT)));
                    }
                    tokens.push(v.id("."));
                }
            }
            let prompt = ControlledArityPrompt {
                prompt_id,
                tokens,
                relations,
                template_id,
                arity: r,
                distractor_positions,
            };
            prompt.audit()?;
            prompts.push(prompt);
        }
    }
    Ok(ArityBank {
        config: cfg.clone(),
        prompts,
    })
}

impl ControlledArityPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Positions used by any relation's predicate or arguments.
    pub fn relation_positions(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .relations
            .iter()
            .flat_map(|r| std::iter::once(r.predicate_position).chain(r.argument_positions.iter().copied()))
            .collect();
        v.sort_unstable();
        v
    }

    /// Positions eligible for random control tuples.
    pub fn random_pool(&self) -> Vec<usize> {
        let used = self.relation_positions();
        (0..self.tokens.len())
            .filter(|p| used.binary_search(p).is_err())
            .collect()
    }

    /// Structural self-check.
    pub fn audit(&self) -> Result<()> {
        if self.relations.len() < 2 {
            return Err(Error::Audit(format!("prompt {} has fewer than 2 relations", self.prompt_id)));
        }
        if self.distractor_positions.is_empty() {
            return Err(Error::Audit(format!("prompt {} has no distractor span", self.prompt_id)));
        }
        for rel in &self.relations {
            if rel.arity != self.arity || rel.argument_positions.len() != self.arity {
                return Err(Error::Audit(format!("prompt {} mixes arities", self.prompt_id)));
            }
            let mut last = rel.predicate_position;
            for &p in &rel.argument_positions {
                if p <= last {
                    return Err(Error::Audit(format!(
                        "prompt {} has role positions out of order",
                        self.prompt_id
                    )));
                }
                last = p;
            }
            for (&p, &t) in rel.argument_positions.iter().zip(&rel.argument_tokens) {
                if self.tokens.get(p) != Some(&t) {
                    return Err(Error::Audit(format!("prompt {} position table is stale", self.prompt_id)));
                }
            }
            if self.tokens.get(rel.predicate_position) != Some(&rel.predicate_token) {
                return Err(Error::Audit(format!("prompt {} predicate position is stale", self.prompt_id)));
            }
        }
        let pos = self.relation_positions();
        if pos.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Audit(format!("prompt {} relations overlap", self.prompt_id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ArityBankConfig {
        ArityBankConfig {
            arities: vec![3],
            prompts_per_arity: 100,
            seed,
            ..ArityBankConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_arity_bank(&small(11)).unwrap(), gen_arity_bank(&small(11)).unwrap());
        assert_ne!(gen_arity_bank(&small(11)).unwrap(), gen_arity_bank(&small(12)).unwrap());
    }

    #[test]
    fn headline_bank_size_and_ids() {
        let bank = gen_arity_bank(&ArityBankConfig::default()).unwrap();
        assert_eq!(bank.prompts.len(), 400);
        for (i, p) in bank.prompts.iter().enumerate() {
            assert_eq!(p.prompt_id, i);
            p.audit().unwrap();
            assert!(!p.random_pool().is_empty());
            assert!(p.random_pool().len() >= 7);
            assert_eq!(p.template_id, [0, 1, 2][(i % 100) % 3]);
        }
        assert_eq!(bank.prompts[150].arity, 4);
    }

    #[test]
    fn rejects_empty_templates() {
        let cfg = ArityBankConfig {
            templates: vec![],
            ..ArityBankConfig::default()
        };
        assert!(gen_arity_bank(&cfg).is_err());
    }

    #[test]
    fn rank_admissibility() {
        assert!(Constructor::ArgsOnly.check_rank(3, 3).is_ok());
        assert!(Constructor::ArgsOnly.check_rank(3, 4).is_err());
        assert!(Constructor::PredPlusArgs.check_rank(3, 4).is_ok());
        assert!(Constructor::PredPlusArgs.check_rank(3, 0).is_err());
    }
}
