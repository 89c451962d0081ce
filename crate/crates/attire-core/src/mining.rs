//! Negative selection for triple construction.
//!
//! The semi-hard rule operates at outfit level: a candidate is semi-hard
//! when its outfit distance lies strictly inside
//! `(D_p, D_p + margin)` — harder than the positive but not by more than
//! the margin. When the band cannot fill the request, the closest
//! candidates beyond the band (still harder than the positive) fill next,
//! and only then random candidates from the too-hard remainder.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{outfit_distance, LossConfig};
use crate::model::{Item, ModelParams};
use crate::rng::Rng;

/// Negative mining strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiningKind {
    Random,
    SemiHard,
}

/// Pick up to `m_neg` semi-hard negatives for `(outfit, positive)` from a
/// same-category candidate pool.
///
/// Selection order (deterministic; distance ties break by ascending item
/// id):
/// 1. candidates inside the semi-hard band, hardest (closest) first;
/// 2. candidates at or beyond `D_p + margin`, closest first;
/// 3. seeded random fill from candidates at distance `<= D_p`.
pub fn select_semi_hard(
    params: &ModelParams,
    outfit: &[Item],
    positive: &Item,
    pool: &[Item],
    cfg: &LossConfig,
    m_neg: usize,
    rng: &mut Rng,
) -> Result<Vec<Item>> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("candidate pool"));
    }
    if m_neg == 0 {
        return Err(Error::InvalidInput(format!("m_neg must be positive")));
    }
    for cand in pool {
        if cand.category != positive.category {
            return Err(Error::InvalidInput(format!(
                "pool item {} category {} differs from positive category {}",
                cand.id, cand.category, positive.category
            )));
        }
    }
    let d_pos = outfit_distance(params, outfit, positive, cfg)?;

    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(pool.len());
    for (i, cand) in pool.iter().enumerate() {
        scored.push((i, outfit_distance(params, outfit, cand, cfg)?));
    }

    let by_distance = |a: &(usize, f64), b: &(usize, f64)| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| pool[a.0].id.cmp(&pool[b.0].id))
    };

    let mut band: Vec<(usize, f64)> = scored
        .iter()
        .copied()
        .filter(|&(_, d)| d > d_pos && d < d_pos + cfg.margin)
        .collect();
    band.sort_by(by_distance);

    let mut selected: Vec<usize> = band.iter().take(m_neg).map(|&(i, _)| i).collect();

    if selected.len() < m_neg {
        let mut beyond: Vec<(usize, f64)> = scored
            .iter()
            .copied()
            .filter(|&(_, d)| d >= d_pos + cfg.margin && d > d_pos)
            .collect();
        beyond.sort_by(by_distance);
        for (i, _) in beyond {
            if selected.len() == m_neg {
                break;
            }
            selected.push(i);
        }
    }

    if selected.len() < m_neg {
        let rest: Vec<usize> = scored
            .iter()
            .filter(|&&(i, d)| d <= d_pos && !selected.contains(&i))
            .map(|&(i, _)| i)
            .collect();
        let need = m_neg - selected.len();
        for pick in rng.sample_indices(rest.len(), need) {
            selected.push(rest[pick]);
        }
    }

    Ok(selected.into_iter().map(|i| pool[i].clone()).collect())
}

/// Uniform sample of up to `m_neg` pool items without replacement.
pub fn select_random(pool: &[Item], m_neg: usize, rng: &mut Rng) -> Result<Vec<Item>> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("candidate pool"));
    }
    if m_neg == 0 {
        return Err(Error::InvalidInput(format!("m_neg must be positive")));
    }
    Ok(rng.sample_indices(pool.len(), m_neg).into_iter().map(|i| pool[i].clone()).collect())
}
