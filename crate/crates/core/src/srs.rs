//! The seeded randomness table: one short block per seed value.
//!
//! Running the seeded extractor on a fixed input `x1` over *every* seed
//! `j ∈ {0,1}^d` produces a table of blocks
//!
//! ```text
//!     S'_j = rule(Ext(x1, j))   (the first m' bits under the prefix rule),
//! ```
//!
//! which downstream modules consume as a "somewhere-good" randomness supply:
//! when `x1` comes from a source with enough min-entropy, most blocks are
//! close to uniform even though no single block is trusted.
//!
//! [`certify_seeded_table`] measures this directly for an explicit source
//! distribution: the exact total-variation distance of every block from
//! uniform, the mean distance (compared against ε), and the number of blocks
//! within √ε of uniform (compared against the 2^d·(1 − √ε) count bound).
//!
//! Bench-scale instances may enumerate a truncated seed range `2^{d_enum}`
//! with the high seed bits pinned to zero; tables carry an explicit
//! `truncated` flag so reports can say so.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{distance_from_uniform, BitString, Distribution};
use crate::error::{Error, Result};
use crate::trevisan::TrevisanExtractor;

/// Hard cap on the number of blocks a table may hold.
pub const MAX_BLOCKS: usize = 1 << 22;

/// Hard cap on (source support) × (blocks) work during certification.
const MAX_CERTIFY_OPS: u128 = 1 << 26;

/// How a block is cut out of the extractor output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubstringRule {
    /// Take the first m' bits.
    #[default]
    Prefix,
}

impl SubstringRule {
    pub fn apply(&self, full: &BitString, m_prime: usize) -> Result<BitString> {
        match self {
            SubstringRule::Prefix => full.substring(0, m_prime),
        }
    }
}

/// A fully materialized seeded randomness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededTable {
    /// Block length in bits.
    pub m_prime: usize,
    /// log2 of the number of blocks actually enumerated.
    pub d_enum: usize,
    /// Seed length of the underlying extractor.
    pub d_full: usize,
    /// True when `d_enum < d_full` (high seed bits pinned to zero).
    pub truncated: bool,
    pub rule: SubstringRule,
    /// Block `j` at index `j`.
    pub blocks: Vec<BitString>,
}

impl SeededTable {
    pub fn block(&self, j: u64) -> Result<&BitString> {
        self.blocks.get(j as usize).ok_or_else(|| {
            Error::parameter(format!("block index {j} outside 0..{}", self.blocks.len()))
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Plain-text rendering: a header line with the table geometry followed
    /// by one `seed<TAB>block` line per block.
    pub fn to_text(&self) -> String {
        let rule = match self.rule {
            SubstringRule::Prefix => "prefix",
        };
        let mut out = format!(
            "m_prime={} d_enum={} d_full={} truncated={} rule={}\n",
            self.m_prime, self.d_enum, self.d_full, self.truncated, rule
        );
        for (j, block) in self.blocks.iter().enumerate() {
            let seed = BitString::from_index(j as u64, self.d_enum)
                .expect("block index fits d_enum bits");
            out.push_str(&format!("{}\t{}\n", seed.to_text(), block.to_text()));
        }
        out
    }

    /// Parses the [`SeededTable::to_text`] format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty table text".to_string()))?;
        let mut m_prime = None;
        let mut d_enum = None;
        let mut d_full = None;
        let mut truncated = None;
        let mut rule = None;
        for item in header.split_whitespace() {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::validation(format!("malformed header item {item:?}"))
            })?;
            match key {
                "m_prime" => m_prime = Some(parse_usize(value)?),
                "d_enum" => d_enum = Some(parse_usize(value)?),
                "d_full" => d_full = Some(parse_usize(value)?),
                "truncated" => {
                    truncated = Some(value.parse::<bool>().map_err(|_| {
                        Error::validation(format!("bad truncated flag {value:?}"))
                    })?)
                }
                "rule" => {
                    rule = Some(match value {
                        "prefix" => SubstringRule::Prefix,
                        other => {
                            return Err(Error::validation(format!(
                                "unknown substring rule {other:?}"
                            )))
                        }
                    })
                }
                other => {
                    return Err(Error::validation(format!(
                        "unknown header key {other:?}"
                    )))
                }
            }
        }
        let (m_prime, d_enum, d_full, truncated, rule) = match
            (m_prime, d_enum, d_full, truncated, rule)
        {
            (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
            _ => return Err(Error::validation("incomplete table header".to_string())),
        };
        let expected = 1usize
            .checked_shl(d_enum as u32)
            .filter(|&v| v <= MAX_BLOCKS)
            .ok_or_else(|| Error::resource(format!("d_enum {d_enum} too large")))?;
        let mut blocks = vec![None; expected];
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (seed, block) = line.split_once('\t').ok_or_else(|| {
                Error::validation(format!("malformed table line {line:?}"))
            })?;
            let seed = BitString::from_text(seed)?;
            if seed.len() != d_enum {
                return Err(Error::validation(format!(
                    "seed {} has {} bits, expected {d_enum}",
                    seed.to_text(),
                    seed.len()
                )));
            }
            let block = BitString::from_text(block)?;
            if block.len() != m_prime {
                return Err(Error::validation(format!(
                    "block for seed {} has {} bits, expected {m_prime}",
                    seed.to_text(),
                    block.len()
                )));
            }
            let idx = seed.to_index()? as usize;
            if blocks[idx].replace(block).is_some() {
                return Err(Error::validation(format!(
                    "seed {} appears twice",
                    seed.to_text()
                )));
            }
        }
        let blocks: Vec<BitString> = blocks
            .into_iter()
            .enumerate()
            .map(|(j, b)| {
                b.ok_or_else(|| Error::validation(format!("missing block for seed {j}")))
            })
            .collect::<Result<_>>()?;
        Ok(SeededTable {
            m_prime,
            d_enum,
            d_full,
            truncated,
            rule,
            blocks,
        })
    }
}

fn parse_usize(value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::validation(format!("bad integer {value:?}")))
}

/// Block length admissible at error ε: the largest m' with m' < −log2(ε),
/// i.e. ⌈−log2 ε⌉ − 1 (assuming ε is not an exact power of two boundary
/// artifact; the strict inequality is re-checked by the certifier).
pub fn support_threshold(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::parameter(format!("error {eps} outside (0, 1)")));
    }
    let limit = -eps.log2();
    let t = limit.ceil() - 1.0;
    Ok(if t < 1.0 { 0 } else { t as usize })
}

/// Builds the table for input `x1`, enumerating `2^{d_enum}` seeds (defaults
/// to the full seed space). When truncated, the high `d_full − d_enum` seed
/// bits are zero.
pub fn build_seeded_table(
    ext: &TrevisanExtractor,
    x1: &BitString,
    m_prime: usize,
    rule: SubstringRule,
    d_enum: Option<usize>,
) -> Result<SeededTable> {
    let params = ext.params();
    let d_full = params.d;
    let d_enum = d_enum.unwrap_or(d_full);
    if d_enum > d_full {
        return Err(Error::parameter(format!(
            "d_enum {d_enum} exceeds the seed length {d_full}"
        )));
    }
    if m_prime == 0 || m_prime > params.m {
        return Err(Error::parameter(format!(
            "block length {m_prime} outside 1..={}",
            params.m
        )));
    }
    let count = 1usize
        .checked_shl(d_enum as u32)
        .filter(|&v| v <= MAX_BLOCKS)
        .ok_or_else(|| {
            Error::resource(format!(
                "2^{d_enum} blocks exceed the {MAX_BLOCKS}-block guard"
            ))
        })?;

    // Indexed parallel map: the output order is by seed value regardless of
    // the number of worker threads.
    let blocks: Vec<BitString> = (0..count as u64)
        .into_par_iter()
        .map(|j| {
            let seed = BitString::from_index(j, d_full)?;
            let full = ext.extract(x1, &seed)?;
            rule.apply(&full, m_prime)
        })
        .collect::<Result<_>>()?;

    Ok(SeededTable {
        m_prime,
        d_enum,
        d_full,
        truncated: d_enum < d_full,
        rule,
        blocks,
    })
}

/// Exact per-block statistics of a table construction over an explicit input
/// source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableCertificate {
    pub eps: f64,
    pub m_prime: usize,
    pub d_enum: usize,
    pub truncated: bool,
    pub rule: SubstringRule,
    /// Exact TV distance from uniform of every block's outcome distribution.
    pub tvs: Vec<f64>,
    pub mean_tv: f64,
    pub max_tv: f64,
    pub min_tv: f64,
    /// Index of a block attaining `min_tv`.
    pub best_block: usize,
    /// Blocks within √ε of uniform count toward the lower bound
    /// 2^{d_enum}·(1 − √ε).
    pub good_threshold: f64,
    pub good_count: usize,
    pub count_bound: f64,
    pub count_bound_holds: bool,
    /// Mean TV compared against ε itself.
    pub mean_within_eps: bool,
    /// Whether *every* block is within ε (the strongest per-block claim).
    pub all_within_eps: bool,
    /// Blocks whose outcome distribution has full support 2^{m'}.
    pub full_support_count: usize,
    pub best_block_full_support: bool,
    /// −log2 ε; the block length must stay strictly below this.
    pub m_prime_limit: f64,
    pub m_prime_admissible: bool,
}

/// Certifies the table construction for `ext` against an explicit source
/// distribution on the extractor input, at error parameter `eps`.
///
/// For every enumerated seed j the exact outcome distribution of block j is
/// accumulated over the source support, and all statistics are exact up to
/// floating-point rounding.
pub fn certify_seeded_table(
    ext: &TrevisanExtractor,
    source: &Distribution,
    m_prime: usize,
    rule: SubstringRule,
    d_enum: Option<usize>,
    eps: f64,
) -> Result<TableCertificate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::parameter(format!("error {eps} outside (0, 1)")));
    }
    let params = ext.params();
    if source.n() != params.n {
        return Err(Error::parameter(format!(
            "source on {} bits, extractor input is {}",
            source.n(),
            params.n
        )));
    }
    let d_full = params.d;
    let d_enum = d_enum.unwrap_or(d_full);
    if d_enum > d_full {
        return Err(Error::parameter(format!(
            "d_enum {d_enum} exceeds the seed length {d_full}"
        )));
    }
    if m_prime == 0 || m_prime > params.m {
        return Err(Error::parameter(format!(
            "block length {m_prime} outside 1..={}",
            params.m
        )));
    }
    let blocks = 1usize
        .checked_shl(d_enum as u32)
        .filter(|&v| v <= MAX_BLOCKS)
        .ok_or_else(|| Error::resource(format!("d_enum {d_enum} too large")))?;
    let support: Vec<u64> = (0..source.probs().len() as u64)
        .filter(|&v| source.prob(v) > 0.0)
        .collect();
    let ops = support.len() as u128 * blocks as u128;
    if ops > MAX_CERTIFY_OPS {
        return Err(Error::resource(format!(
            "certification needs {ops} block evaluations (guard {MAX_CERTIFY_OPS})"
        )));
    }

    // outcome_mass[j][o] = P(block j = o) under the source. The histogram is
    // exact, so the block length must keep 2^{m'} · blocks representable and
    // affordable.
    let outcomes = u32::try_from(m_prime)
        .ok()
        .and_then(|s| 1usize.checked_shl(s))
        .filter(|&v| (v as u128) * (blocks as u128) <= MAX_CERTIFY_OPS)
        .ok_or_else(|| {
            Error::resource(format!(
                "exact certification needs 2^{m_prime} outcome bins per block; \
                 block length {m_prime} is beyond the enumeration guard"
            ))
        })?;
    let mut outcome_mass = vec![vec![0.0f64; outcomes]; blocks];
    for &xv in &support {
        let x = BitString::from_index(xv, params.n)?;
        let px = source.prob(xv);
        for (j, mass) in outcome_mass.iter_mut().enumerate() {
            let seed = BitString::from_index(j as u64, d_full)?;
            let block = rule.apply(&ext.extract(&x, &seed)?, m_prime)?;
            mass[block.to_index()? as usize] += px;
        }
    }

    let mut tvs = Vec::with_capacity(blocks);
    let mut full_support_count = 0usize;
    let mut supports = Vec::with_capacity(blocks);
    for mass in &outcome_mass {
        let dist = Distribution::new(m_prime, mass.clone())?;
        tvs.push(distance_from_uniform(&dist));
        let full = dist.support_size() == outcomes;
        supports.push(full);
        if full {
            full_support_count += 1;
        }
    }

    let mean_tv = tvs.iter().sum::<f64>() / blocks as f64;
    let (mut max_tv, mut min_tv, mut best_block) = (0.0f64, f64::INFINITY, 0usize);
    for (j, &tv) in tvs.iter().enumerate() {
        if tv > max_tv {
            max_tv = tv;
        }
        if tv < min_tv {
            min_tv = tv;
            best_block = j;
        }
    }
    let good_threshold = eps.sqrt();
    let good_count = tvs.iter().filter(|&&tv| tv <= good_threshold + 1e-15).count();
    let count_bound = blocks as f64 * (1.0 - good_threshold);
    let m_prime_limit = -eps.log2();

    Ok(TableCertificate {
        eps,
        m_prime,
        d_enum,
        truncated: d_enum < d_full,
        rule,
        mean_tv,
        max_tv,
        min_tv,
        best_block,
        good_threshold,
        good_count,
        count_bound,
        count_bound_holds: good_count as f64 >= count_bound - 1e-9,
        mean_within_eps: mean_tv <= eps + 1e-15,
        all_within_eps: max_tv <= eps + 1e-15,
        full_support_count,
        best_block_full_support: supports[best_block],
        m_prime_limit,
        m_prime_admissible: (m_prime as f64) < m_prime_limit,
        tvs,
    })
}

// ───────────────────────── tests ─────────────────────────
