//! Projection onto the rank band `Q = { M : C <= r_A(M) <= C + kappa }`.
//!
//! The closest point of `Q` keeps a subset `S` of the predictions and zeroes
//! the rest (`S'`), maximizing the kept squared mass. Zeroed ("demoted")
//! entries are ranked at the bottom, below every kept entry, in flat-index
//! order; see [`demotion_rank`].
//!
//! Two heuristics move `r_A` into the band:
//!
//! * [`shrink_sum_rank`] when `r_A > C + kappa`: demote a subset of A. Each
//!   A instance contributes a fixed decrement (the number of B instances
//!   ranked below it, ties counting one half), so a subset is scored by a sum.
//!   Subsets are encoded as integers with one bit per A instance, more
//!   significant bits for higher-ranked instances, and the search visits the
//!   window of indices `floor(j) - tau ..= ceil(j) + tau` around
//!   `j = 2^|S_A| * d / Delta`.
//! * [`grow_sum_rank`] when `r_A < C`: greedily demote B instances in
//!   ascending rank order until the accumulated increment lands in the band.
//!
//! All sum-ranks are multiples of one half, so the searches run on integer
//! "half units" and feasibility is decided exactly.

use serde::{Deserialize, Serialize};

use crate::data::Group;
use crate::error::{Error, Result};
use crate::ranking::{
    assign_ranks, rank_with_demotion, sum_rank_partition, ConstraintSpec, RankVector,
};

/// Largest instance accepted by [`brute_force_project`].
pub const ORACLE_LIMIT: usize = 16;

/// Default search breadth of the shrink heuristic.
pub const DEFAULT_TAU: u64 = 10_000_000;

/// Widest enumerated bit block in the shrink search (`2^30` candidates).
const MAX_BLOCK_BITS: u32 = 30;

/// Which branch of the dispatch produced an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Identity,
    Shrink,
    Grow,
    ShrinkThenGrow,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    /// The projected vector: `M_P` on kept entries, 0 on demoted ones.
    pub m_s: Vec<f64>,
    pub demoted: Vec<usize>,
    pub kept: Vec<usize>,
    /// Sum-rank of A under the demotion ranking.
    pub achieved_r_a: f64,
    pub feasible: bool,
    /// Kept squared mass `sum_{i in S} M_P[i]^2`.
    pub objective: f64,
    pub route: Route,
}

impl ProjectionOutcome {
    pub fn demoted_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m_s.len()];
        for &i in &self.demoted {
            mask[i] = true;
        }
        mask
    }

    fn build(
        m_p: &[f64],
        mask: &[bool],
        spec: &ConstraintSpec,
        protected: &[Group],
        route: Route,
    ) -> Result<Self> {
        let (_, r_a) = demotion_rank_mask(m_p, mask, protected)?;
        let (demoted, kept): (Vec<usize>, Vec<usize>) = (0..m_p.len()).partition(|&i| mask[i]);
        let m_s = m_p
            .iter()
            .zip(mask)
            .map(|(&v, &d)| if d { 0.0 } else { v })
            .collect();
        let objective = kept.iter().map(|&i| m_p[i] * m_p[i]).sum();
        Ok(Self {
            m_s,
            demoted,
            kept,
            achieved_r_a: r_a,
            feasible: spec.contains(r_a),
            objective,
            route,
        })
    }
}

/// Ranks of `m_p` with the `demoted` indices forced to the bottom, and the
/// resulting sum-rank of partition A.
pub fn demotion_rank(
    m_p: &[f64],
    demoted: &[usize],
    protected: &[Group],
) -> Result<(RankVector, f64)> {
    let mut mask = vec![false; m_p.len()];
    for &i in demoted {
        if i >= m_p.len() {
            return Err(Error::LengthMismatch {
                expected: m_p.len(),
                actual: i + 1,
            });
        }
        mask[i] = true;
    }
    demotion_rank_mask(m_p, &mask, protected)
}

fn demotion_rank_mask(
    m_p: &[f64],
    mask: &[bool],
    protected: &[Group],
) -> Result<(RankVector, f64)> {
    let ranks = rank_with_demotion(m_p, mask)?;
    let r_a = sum_rank_partition(&ranks, protected, Group::A)?;
    Ok((ranks, r_a))
}

fn check_lengths(m_p: &[f64], protected: &[Group]) -> Result<()> {
    if m_p.len() != protected.len() {
        return Err(Error::LengthMismatch {
            expected: m_p.len(),
            actual: protected.len(),
        });
    }
    Ok(())
}

fn half_units(x: f64) -> i64 {
    (2.0 * x).round() as i64
}

/// Project `M + V` onto the rank band.
///
/// Fails with [`Error::Infeasible`] only when the band lies above the largest
/// attainable sum-rank. A heuristic that cannot reach the band returns its
/// best attempt with `feasible = false`.
pub fn project_onto_q(
    m: &[f64],
    v: &[f64],
    spec: &ConstraintSpec,
    protected: &[Group],
    tau: u64,
) -> Result<ProjectionOutcome> {
    if m.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            actual: v.len(),
        });
    }
    check_lengths(m, protected)?;
    let m_p: Vec<f64> = m.iter().zip(v).map(|(a, b)| a + b).collect();
    if !spec.is_attainable() {
        return Err(Error::Infeasible {
            c: spec.c,
            r_a_most: spec.r_a_most,
        });
    }
    let ranks = assign_ranks(&m_p)?;
    let r_a = sum_rank_partition(&ranks, protected, Group::A)?;
    if spec.contains(r_a) {
        let mask = vec![false; m_p.len()];
        return ProjectionOutcome::build(&m_p, &mask, spec, protected, Route::Identity);
    }
    if r_a > spec.upper() {
        let shrunk = shrink_sum_rank(&m_p, spec, protected, tau)?;
        if shrunk.achieved_r_a < spec.c {
            let mask = shrunk.demoted_mask();
            return grow_from(&m_p, mask, spec, protected, Route::ShrinkThenGrow);
        }
        return Ok(shrunk);
    }
    grow_sum_rank(&m_p, spec, protected)
}

/// Demote a subset of A to bring `r_A` down to `C`.
pub fn shrink_sum_rank(
    m_p: &[f64],
    spec: &ConstraintSpec,
    protected: &[Group],
    tau: u64,
) -> Result<ProjectionOutcome> {
    check_lengths(m_p, protected)?;
    let ranks = assign_ranks(m_p)?;
    let r_a = sum_rank_partition(&ranks, protected, Group::A)?;

    // A instances by ascending rank (ties by flat index) with their decrements.
    let mut order: Vec<usize> = (0..m_p.len()).collect();
    order.sort_by(|&a, &b| m_p[a].total_cmp(&m_p[b]).then(a.cmp(&b)));
    let mut members = Vec::new();
    let mut weights = Vec::new();
    let mut b_below = 0i64;
    let mut start = 0;
    while start < order.len() {
        let value = m_p[order[start]];
        let mut end = start + 1;
        while end < order.len() && m_p[order[end]] == value {
            end += 1;
        }
        let group = &order[start..end];
        let b_tied = group.iter().filter(|&&i| protected[i] == Group::B).count() as i64;
        for &i in group.iter().filter(|&&i| protected[i] == Group::A) {
            members.push(i);
            weights.push(2 * b_below + b_tied);
        }
        b_below += b_tied;
        start = end;
    }
    let masses: Vec<f64> = members.iter().map(|&i| m_p[i] * m_p[i]).collect();

    let target = half_units(r_a - spec.c);
    let total: i64 = weights.iter().sum();
    let mut mask = vec![false; m_p.len()];
    if target >= total {
        for &i in &members {
            mask[i] = true;
        }
        return ProjectionOutcome::build(m_p, &mask, spec, protected, Route::Shrink);
    }

    let mut search = SubsetSearch::new(&weights, &masses, target);
    let covered = search.index_window(total, tau);
    if !covered {
        search.anchored_block(tau);
    }
    for (slot, chosen) in search.best_subset().into_iter().enumerate() {
        if chosen {
            mask[members[slot]] = true;
        }
    }
    ProjectionOutcome::build(m_p, &mask, spec, protected, Route::Shrink)
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    /// A literal subset index.
    Index(u64),
    /// Greedily chosen high bits plus a pattern over the low block.
    Block(u64),
}

/// Closest-subset-sum search over the A decrements.
struct SubsetSearch<'a> {
    weights: &'a [i64],
    masses: &'a [f64],
    target: i64,
    best: Option<(i64, f64, Candidate)>,
    block_bits: usize,
    high: Vec<bool>,
}

impl<'a> SubsetSearch<'a> {
    fn new(weights: &'a [i64], masses: &'a [f64], target: i64) -> Self {
        Self {
            weights,
            masses,
            target,
            best: None,
            block_bits: 0,
            high: Vec::new(),
        }
    }

    /// Closest to the target first; among equals, the smallest demoted mass;
    /// then the first visited.
    fn offer(&mut self, sum: i64, mass: f64, candidate: Candidate) {
        let dist = (sum - self.target).abs();
        let better = match self.best {
            None => true,
            Some((d, m, _)) => dist < d || (dist == d && mass < m),
        };
        if better {
            self.best = Some((dist, mass, candidate));
        }
    }

    fn toggle(&self, slot: usize, on: bool, sum: &mut i64, mass: &mut f64) {
        if on {
            *sum += self.weights[slot];
            *mass += self.masses[slot];
        } else {
            *sum -= self.weights[slot];
            *mass -= self.masses[slot];
        }
    }

    /// Visit the literal index window around `2^n * d / Delta`. Returns true
    /// when the window spans every subset.
    fn index_window(&mut self, total: i64, tau: u64) -> bool {
        let n = self.weights.len();
        if n > 63 {
            return false;
        }
        let space = 1u64 << n;
        let j = space as f64 * (self.target as f64 / total as f64);
        let breadth = tau.min(1u64 << (MAX_BLOCK_BITS - 1));
        let lo = (j.floor() as u64).saturating_sub(breadth).min(space - 1);
        let hi = (j.ceil() as u64).saturating_add(breadth).min(space - 1);

        let (mut sum, mut mass) = (0i64, 0.0f64);
        for slot in 0..n {
            if lo >> slot & 1 == 1 {
                self.toggle(slot, true, &mut sum, &mut mass);
            }
        }
        let mut m = lo;
        loop {
            self.offer(sum, mass, Candidate::Index(m));
            if m == hi {
                break;
            }
            let next = m + 1;
            let mut flipped = m ^ next;
            while flipped != 0 {
                let slot = flipped.trailing_zeros() as usize;
                self.toggle(slot, next >> slot & 1 == 1, &mut sum, &mut mass);
                flipped &= flipped - 1;
            }
            m = next;
        }
        lo == 0 && hi == space - 1
    }

    /// For index spaces too wide for the literal window to be informative:
    /// fix the high bits by a greedy most-significant-first decomposition of
    /// the target over the actual decrements, then enumerate every pattern
    /// of the low block (Gray code order) whose size is bounded by the
    /// window width `2 tau + 2`.
    fn anchored_block(&mut self, tau: u64) {
        let n = self.weights.len();
        let width = tau.saturating_mul(2).saturating_add(2);
        let bits = (63 - width.leading_zeros()).min(MAX_BLOCK_BITS) as usize;
        let bits = bits.min(n);
        self.block_bits = bits;
        self.high = vec![false; n];
        let (mut sum, mut mass) = (0i64, 0.0f64);
        for slot in (bits..n).rev() {
            if sum + self.weights[slot] <= self.target {
                self.high[slot] = true;
                sum += self.weights[slot];
                mass += self.masses[slot];
            }
        }
        self.offer(sum, mass, Candidate::Block(0));
        let mut gray = 0u64;
        for step in 1u64..(1u64 << bits) {
            let slot = step.trailing_zeros() as usize;
            gray ^= 1 << slot;
            self.toggle(slot, gray >> slot & 1 == 1, &mut sum, &mut mass);
            self.offer(sum, mass, Candidate::Block(gray));
        }
    }

    fn best_subset(&self) -> Vec<bool> {
        let n = self.weights.len();
        match self.best.map(|b| b.2) {
            None => vec![false; n],
            Some(Candidate::Index(m)) => (0..n).map(|s| m >> s & 1 == 1).collect(),
            Some(Candidate::Block(g)) => (0..n)
                .map(|s| {
                    if s < self.block_bits {
                        g >> s & 1 == 1
                    } else {
                        self.high[s]
                    }
                })
                .collect(),
        }
    }
}

/// Demote B instances in ascending rank order to raise `r_A` to the band.
pub fn grow_sum_rank(
    m_p: &[f64],
    spec: &ConstraintSpec,
    protected: &[Group],
) -> Result<ProjectionOutcome> {
    check_lengths(m_p, protected)?;
    grow_from(m_p, vec![false; m_p.len()], spec, protected, Route::Grow)
}

/// Greedy B demotion starting from an existing demoted set.
///
/// The increment of demoting B instance `i` is the number of kept A below it
/// (tied A count one half) plus the number of demoted A with a larger flat
/// index, since `i` joins the bottom block in flat-index order.
fn grow_from(
    m_p: &[f64],
    mut mask: Vec<bool>,
    spec: &ConstraintSpec,
    protected: &[Group],
    route: Route,
) -> Result<ProjectionOutcome> {
    let (_, r_a) = demotion_rank_mask(m_p, &mask, protected)?;
    let r_a2 = half_units(r_a);
    let lower = half_units(spec.c) - r_a2;
    // kappa need not be a multiple of one half.
    let upper = ((spec.upper() - r_a) * 2.0).floor() as i64;
    if lower <= 0 {
        return ProjectionOutcome::build(m_p, &mask, spec, protected, route);
    }

    let demoted_a: Vec<usize> = (0..m_p.len())
        .filter(|&i| mask[i] && protected[i] == Group::A)
        .collect();
    let mut kept: Vec<usize> = (0..m_p.len()).filter(|&i| !mask[i]).collect();
    kept.sort_by(|&a, &b| m_p[a].total_cmp(&m_p[b]).then(a.cmp(&b)));

    // (rank position, increment) for each kept B, ascending rank.
    let mut candidates = Vec::new();
    let mut a_below = 0i64;
    let mut start = 0;
    while start < kept.len() {
        let value = m_p[kept[start]];
        let mut end = start + 1;
        while end < kept.len() && m_p[kept[end]] == value {
            end += 1;
        }
        let group = &kept[start..end];
        let a_tied = group.iter().filter(|&&i| protected[i] == Group::A).count() as i64;
        for &i in group.iter().filter(|&&i| protected[i] == Group::B) {
            let above_in_block = (demoted_a.len() - demoted_a.partition_point(|&a| a < i)) as i64;
            candidates.push((i, 2 * a_below + a_tied + 2 * above_in_block));
        }
        a_below += a_tied;
        start = end;
    }

    let distance = |l: i64| {
        if l < lower {
            lower - l
        } else if l > upper {
            l - upper
        } else {
            0
        }
    };
    let mut l = 0i64;
    let mut best = (distance(0), 0usize);
    for (count, &(_, inc)) in candidates.iter().enumerate() {
        l += inc;
        let dist = distance(l);
        if dist < best.0 {
            best = (dist, count + 1);
        }
        if dist == 0 || l > upper {
            break;
        }
    }
    for &(i, _) in &candidates[..best.1] {
        mask[i] = true;
    }
    ProjectionOutcome::build(m_p, &mask, spec, protected, route)
}

/// Exhaustive projection: among all demotion sets that land in the band,
/// the one with the largest kept squared mass. Ties go to the
/// lexicographically smallest demoted index list.
pub fn brute_force_project(
    m_p: &[f64],
    spec: &ConstraintSpec,
    protected: &[Group],
) -> Result<ProjectionOutcome> {
    check_lengths(m_p, protected)?;
    let n = m_p.len();
    if n > ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge {
            size: n,
            limit: ORACLE_LIMIT,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut mask = vec![false; n];
    for bits in 0u32..(1u32 << n) {
        for (i, slot) in mask.iter_mut().enumerate() {
            *slot = bits >> i & 1 == 1;
        }
        let (_, r_a) = demotion_rank_mask(m_p, &mask, protected)?;
        if !spec.contains(r_a) {
            continue;
        }
        let objective: f64 = (0..n).filter(|&i| !mask[i]).map(|i| m_p[i] * m_p[i]).sum();
        let demoted: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let better = match &best {
            None => true,
            Some((obj, set)) => objective > *obj || (objective == *obj && demoted < *set),
        };
        if better {
            best = Some((objective, demoted));
        }
    }
    match best {
        Some((_, demoted)) => {
            let (_, r_a) = demotion_rank(m_p, &demoted, protected)?;
            let mut mask = vec![false; n];
            for &i in &demoted {
                mask[i] = true;
            }
            let mut out = ProjectionOutcome::build(m_p, &mask, spec, protected, Route::Oracle)?;
            debug_assert_eq!(out.achieved_r_a, r_a);
            out.feasible = true;
            Ok(out)
        }
        None => {
            let mut out =
                ProjectionOutcome::build(m_p, &vec![false; n], spec, protected, Route::Oracle)?;
            out.feasible = false;
            Ok(out)
        }
    }
}
