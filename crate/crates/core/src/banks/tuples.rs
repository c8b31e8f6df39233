// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::banks::arity::{Constructor, ControlledArityPrompt};
use crate::rng::{label, seeded, stream_id, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    True,
    Scrambled,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleSet {
    pub selector: Selector,
    pub constructor: Constructor,
    pub k: usize,
    pub tuples: Vec<Vec<usize>>,
    pub budget: usize,
}

/// One budgeted tuple: a relation instance and a role-ordered role subset.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Slot {
    relation: usize,
    roles: Vec<usize>,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn stream(prompt: &ControlledArityPrompt, constructor: Constructor, k: usize, what: &str) -> u64 {
    stream_id(&[
        label(what),
        prompt.prompt_id as u64,
        label(constructor.name()),
        k as u64,
    ])
}

fn slots(prompt: &ControlledArityPrompt, constructor: Constructor, k: usize, budget: usize, seed: u64) -> Result<Vec<Slot>> {
    constructor.check_rank(prompt.arity, k)?;
    if budget == 0 {
        return Err(Error::InvalidArgument("tuple budget must be positive".into()));
    }
    let subsets: Vec<Vec<usize>> = match constructor {
        Constructor::ArgsOnly => combinations(prompt.arity, k),
        Constructor::PredPlusArgs => combinations(prompt.arity, k - 1)
            .into_iter()
            .map(|s| std::iter::once(0).chain(s.into_iter().map(|i| i + 1)).collect())
            .collect(),
    };
    let all: Vec<Slot> = (0..prompt.relations.len())
        .flat_map(|j| {
            subsets.iter().map(move |s| Slot {
                relation: j,
                roles: s.clone(),
            })
        })
        .collect();
    if all.len() <= budget {
        return Ok(all);
    }
    let mut rng = seeded(seed, stream(prompt, constructor, k, "tuple-budget"));
    let mut keep = sample(&mut rng, all.len(), budget).into_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| all[i].clone()).collect())
}

/// True relation tuples, role-ordered, budgeted by seeded sampling.
pub fn enumerate_tuples(
    prompt: &ControlledArityPrompt,
    constructor: Constructor,
    k: usize,
    budget: usize,
    seed: u64,
) -> Result<TupleSet> {
    let roles: Vec<Vec<usize>> = prompt
        .relations
        .iter()
        .map(|r| constructor.role_positions(r))
        .collect();
    let tuples = slots(prompt, constructor, k, budget, seed)?
        .into_iter()
        .map(|s| s.roles.iter().map(|&role| roles[s.relation][role]).collect())
        .collect();
    Ok(TupleSet {
        selector: Selector::True,
        constructor,
        k,
        tuples,
        budget,
    })
}

/// Donor-relation shift for each role of the constructor.
///
/// Role `s` of a scrambled tuple comes from relation `(j + shift_s) mod R`
/// with `shift_s = 1 + (offset + s) mod (R - 1)`, so no role stays in its
/// own relation and, for `R > 2`, consecutive roles come from different
/// donors. With two relations this is the plain shift by one.
pub fn role_shifts(n_relations: usize, n_roles: usize, offset: usize) -> Vec<usize> {
    (0..n_roles)
        .map(|s| 1 + (offset + s) % (n_relations - 1))
        .collect()
}

fn scramble_offset(prompt: &ControlledArityPrompt, constructor: Constructor, k: usize, seed: u64) -> usize {
    let n = prompt.relations.len();
    let mut rng: Rng = seeded(seed, stream(prompt, constructor, k, "scramble-offset"));
    rng.random_range(0..n - 1)
}

/// Scrambled controls mirroring the true set tuple for tuple.
pub fn scrambled_tuples(
    prompt: &ControlledArityPrompt,
    constructor: Constructor,
    k: usize,
    budget: usize,
    seed: u64,
) -> Result<TupleSet> {
    let n = prompt.relations.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "prompt {} has a single relation; scrambling needs a donor",
            prompt.prompt_id
        )));
    }
    let roles: Vec<Vec<usize>> = prompt
        .relations
        .iter()
        .map(|r| constructor.role_positions(r))
        .collect();
    let shifts = role_shifts(n, roles[0].len(), scramble_offset(prompt, constructor, k, seed));
    let tuples = slots(prompt, constructor, k, budget, seed)?
        .into_iter()
        .map(|s| {
            s.roles
                .iter()
                .map(|&role| roles[(s.relation + shifts[role]) % n][role])
                .collect()
        })
        .collect();
    Ok(TupleSet {
        selector: Selector::Scrambled,
        constructor,
        k,
        tuples,
        budget,
    })
}

/// Random control tuples from positions outside every relation, matched in
/// count to the true set. The set depends only on `(prompt, constructor, k,
/// budget, seed)`, so both sides of the contrast share it.
pub fn random_tuples(
    prompt: &ControlledArityPrompt,
    constructor: Constructor,
    k: usize,
    budget: usize,
    seed: u64,
) -> Result<TupleSet> {
    let count = slots(prompt, constructor, k, budget, seed)?.len();
    let pool = prompt.random_pool();
    if pool.len() < k {
        return Err(Error::InvalidArgument(format!(
            "random pool of {} positions is smaller than rank {k}",
            pool.len()
        )));
    }
    let mut rng = seeded(seed, stream(prompt, constructor, k, "random-tuples"));
    let tuples = (0..count)
        .map(|_| {
            let mut idx = sample(&mut rng, pool.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pool[i]).collect()
        })
        .collect();
    Ok(TupleSet {
        selector: Selector::Random,
        constructor,
        k,
        tuples,
        budget,
    })
}
