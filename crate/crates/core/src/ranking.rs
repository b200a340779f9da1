//! Rank assignment, partition rank sums and the Mann-Whitney U statistic.
//!
//! Ranks are 1-based and ascending. Tied values share the mean of the ranks
//! they span, so the ranks of `N` values always sum to `N(N+1)/2` and U keeps
//! its pairwise-count meaning (a tie counts one half in each direction).

use serde::{Deserialize, Serialize};

use crate::data::Group;
use crate::error::{Error, Result};

/// Tie-averaged ranks of a value vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    pub ranks: Vec<f64>,
    /// Index sets of size > 1 whose values compare equal.
    pub tie_groups: Vec<Vec<usize>>,
}

impl RankVector {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

/// Rank `values` ascending with average ranks for ties.
pub fn assign_ranks(values: &[f64]) -> Result<RankVector> {
    check_finite(values)?;
    let order = sorted_order(values, |i| values[i]);
    Ok(rank_sorted(&order, values, 0.0))
}

/// Rank with a set of demoted entries forced to the bottom.
///
/// Demoted entries take ranks `1..=|S'|` in ascending flat-index order; the
/// kept entries are tie-average-ranked above them by value. With no demoted
/// entries this is exactly [`assign_ranks`]. Values of demoted entries are
/// ignored.
pub fn rank_with_demotion(values: &[f64], demoted: &[bool]) -> Result<RankVector> {
    if demoted.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: demoted.len(),
        });
    }
    let mut ranks = vec![0.0; values.len()];
    let mut next = 0usize;
    for (i, _) in demoted.iter().enumerate().filter(|(_, &d)| d) {
        next += 1;
        ranks[i] = next as f64;
    }
    let kept: Vec<usize> = (0..values.len()).filter(|&i| !demoted[i]).collect();
    for &i in &kept {
        if !values[i].is_finite() {
            return Err(Error::NonFinite {
                index: i,
                value: values[i],
            });
        }
    }
    let mut order = kept;
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let kept_ranks = rank_sorted(&order, values, next as f64);
    for &i in &order {
        ranks[i] = kept_ranks.ranks[i];
    }
    Ok(RankVector {
        ranks,
        tie_groups: kept_ranks.tie_groups,
    })
}

/// Sum of ranks over the instances labelled `which`.
pub fn sum_rank_partition(ranks: &RankVector, protected: &[Group], which: Group) -> Result<f64> {
    if ranks.len() != protected.len() {
        return Err(Error::LengthMismatch {
            expected: ranks.len(),
            actual: protected.len(),
        });
    }
    Ok(ranks
        .ranks
        .iter()
        .zip(protected)
        .filter(|(_, &g)| g == which)
        .map(|(r, _)| r)
        .sum())
}

/// `U = r_A - n_A(n_A+1)/2`.
pub fn mann_whitney_u(r_a: f64, n_a: usize) -> f64 {
    let n_a = n_a as f64;
    r_a - n_a * (n_a + 1.0) / 2.0
}

/// `U / (n_A n_B)`, the probability that an A instance outranks a B instance.
pub fn auc_from_u(u: f64, n_a: usize, n_b: usize) -> Result<f64> {
    if n_a == 0 {
        return Err(Error::EmptyPartition("A"));
    }
    if n_b == 0 {
        return Err(Error::EmptyPartition("B"));
    }
    Ok(u / (n_a as f64 * n_b as f64))
}

/// How the sum-rank band width is derived from `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaMode {
    /// `kappa = epsilon * n_A * n_B`, which follows from bounding `U/(n_A n_B) - 0.5`.
    #[default]
    Derived,
    /// `kappa = epsilon * n_A * n_A`, kept for compatibility with the printed form.
    Printed,
}

/// Sum-rank feasibility band `[C, C + kappa]` for partition A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub n_a: usize,
    pub n_b: usize,
    pub epsilon: f64,
    pub c: f64,
    pub kappa: f64,
    /// Sum-rank of A when every A instance outranks every B instance.
    pub r_a_most: f64,
}

impl ConstraintSpec {
    pub fn upper(&self) -> f64 {
        self.c + self.kappa
    }

    pub fn contains(&self, r_a: f64) -> bool {
        self.c <= r_a && r_a <= self.upper()
    }

    pub fn is_attainable(&self) -> bool {
        self.r_a_most >= self.c
    }

    /// Smallest possible sum-rank of A, reached when A occupies the bottom ranks.
    pub fn r_a_least(&self) -> f64 {
        triangular(self.n_a)
    }

    /// Replace the lower bound, keeping the band width. Used for testing the
    /// unattainable dispatch branch.
    pub fn with_lower_bound(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

pub fn constraint_bounds(n_a: usize, n_b: usize, epsilon: f64) -> Result<ConstraintSpec> {
    constraint_bounds_with(n_a, n_b, epsilon, KappaMode::Derived)
}

pub fn constraint_bounds_with(
    n_a: usize,
    n_b: usize,
    epsilon: f64,
    mode: KappaMode,
) -> Result<ConstraintSpec> {
    if n_a == 0 {
        return Err(Error::EmptyPartition("A"));
    }
    if n_b == 0 {
        return Err(Error::EmptyPartition("B"));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be finite and >= 0, got {epsilon}"),
        });
    }
    let (a, b) = (n_a as f64, n_b as f64);
    let kappa = match mode {
        KappaMode::Derived => epsilon * a * b,
        KappaMode::Printed => epsilon * a * a,
    };
    Ok(ConstraintSpec {
        n_a,
        n_b,
        epsilon,
        c: triangular(n_a) + a * b / 2.0,
        kappa,
        r_a_most: a * b + triangular(n_a),
    })
}

pub(crate) fn triangular(n: usize) -> f64 {
    let n = n as f64;
    n * (n + 1.0) / 2.0
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn sorted_order(values: &[f64], key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    order
}

/// Ranks for the indices in `order` (already sorted ascending), offset by
/// `base`. Entries not in `order` are left at zero.
fn rank_sorted(order: &[usize], values: &[f64], base: f64) -> RankVector {
    let mut ranks = vec![0.0; values.len()];
    let mut tie_groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let v = values[order[start]];
        let mut end = start + 1;
        // -0.0 and 0.0 tie; total_cmp alone would separate them.
        while end < order.len() && values[order[end]] == v {
            end += 1;
        }
        let avg = base + (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        if end - start > 1 {
            tie_groups.push(order[start..end].to_vec());
        }
        start = end;
    }
    RankVector { ranks, tie_groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Group::{A, B};
    use proptest::prelude::*;

    #[test]
    fn singleton() {
        assert_eq!(assign_ranks(&[5.0]).unwrap().ranks, vec![1.0]);
    }

    #[test]
    fn distinct_values() {
        assert_eq!(
            assign_ranks(&[3.1, 1.2, 2.0]).unwrap().ranks,
            vec![3.0, 1.0, 2.0]
        );
    }

    #[test]
    fn ties_get_average_rank() {
        let r = assign_ranks(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.ranks, vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(r.tie_groups, vec![vec![1, 2]]);
    }

    #[test]
    fn signed_zeros_tie() {
        let r = assign_ranks(&[0.0, -0.0]).unwrap();
        assert_eq!(r.ranks, vec![1.5, 1.5]);
    }

    #[test]
    fn non_finite_reports_index() {
        match assign_ranks(&[1.0, f64::NAN]) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partition_sums() {
        let r = RankVector {
            ranks: vec![1.0, 2.0, 3.0],
            tie_groups: vec![],
        };
        assert_eq!(sum_rank_partition(&r, &[A, A, B], A).unwrap(), 3.0);
        assert_eq!(sum_rank_partition(&r, &[A, A, B], B).unwrap(), 3.0);

        let r = assign_ranks(&[10.0, 20.0, 15.0, 5.0, 30.0]).unwrap();
        assert_eq!(sum_rank_partition(&r, &[A, B, A, B, B], A).unwrap(), 5.0);
        assert!(sum_rank_partition(&r, &[A, B], A).is_err());
    }

    #[test]
    fn u_statistic_examples() {
        // A at the bottom.
        assert_eq!(mann_whitney_u(triangular(4), 4), 0.0);
        // A = {3, 5}, B = {1, 2, 4}: A beats B in 5 pairs.
        assert_eq!(mann_whitney_u(8.0, 2), 5.0);
        // Fairness point for n_A = 4, n_B = 6.
        let spec = constraint_bounds(4, 6, 0.0).unwrap();
        assert_eq!(mann_whitney_u(spec.c, 4), 12.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_from_u(12.0, 4, 6).unwrap(), 0.5);
        assert_eq!(auc_from_u(24.0, 4, 6).unwrap(), 1.0);
        assert!((auc_from_u(5.0, 2, 3).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            auc_from_u(0.0, 0, 3),
            Err(Error::EmptyPartition("A"))
        ));
    }

    #[test]
    fn bounds_examples() {
        let s = constraint_bounds(2, 3, 0.1).unwrap();
        assert_eq!(s.c, 6.0);
        assert!((s.kappa - 0.6).abs() < 1e-12);
        assert_eq!(s.r_a_most, 9.0);

        let s = constraint_bounds(2, 3, 0.0).unwrap();
        assert_eq!(s.kappa, 0.0);
        assert!(s.contains(6.0) && !s.contains(6.5));

        let s = constraint_bounds(10, 10, 0.05).unwrap();
        assert_eq!(s.c, 105.0);
        assert!((s.kappa - 5.0).abs() < 1e-12);

        let p = constraint_bounds_with(2, 3, 0.1, KappaMode::Printed).unwrap();
        assert!((p.kappa - 0.4).abs() < 1e-12);

        assert!(constraint_bounds(0, 3, 0.1).is_err());
        assert!(constraint_bounds(2, 3, -0.1).is_err());
    }

    #[test]
    fn demotion_without_demoted_matches_plain_ranking() {
        let v = [3.0, 1.0, 3.0, -2.0];
        assert_eq!(
            rank_with_demotion(&v, &[false; 4]).unwrap(),
            assign_ranks(&v).unwrap()
        );
    }

    #[test]
    fn demoted_entries_sit_at_the_bottom_by_index() {
        let v = [10.0, 20.0, 30.0, 40.0, 50.0];
        let r = rank_with_demotion(&v, &[false, false, true, false, true]).unwrap();
        assert_eq!(r.ranks, vec![3.0, 4.0, 1.0, 5.0, 2.0]);
    }

    fn brute_force_u(values: &[f64], labels: &[Group]) -> f64 {
        let mut u = 0.0;
        for (i, &vi) in values.iter().enumerate() {
            for (j, &vj) in values.iter().enumerate() {
                if labels[i] == A && labels[j] == B {
                    if vi > vj {
                        u += 1.0;
                    } else if vi == vj {
                        u += 0.5;
                    }
                }
            }
        }
        u
    }

    fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<Group>)> {
        (2..=max).prop_flat_map(|n| {
            (
                prop::collection::vec((0i32..6).prop_map(f64::from), n),
                prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { A } else { B }), n),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_sum_is_triangular(values in prop::collection::vec(-5i32..5, 1..60)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let r = assign_ranks(&values).unwrap();
            prop_assert_eq!(r.ranks.iter().sum::<f64>(), triangular(values.len()));
        }

        #[test]
        fn u_matches_pairwise_count((values, labels) in labelled(12)) {
            let n_a = labels.iter().filter(|&&g| g == A).count();
            let r = assign_ranks(&values).unwrap();
            let r_a = sum_rank_partition(&r, &labels, A).unwrap();
            prop_assert_eq!(mann_whitney_u(r_a, n_a), brute_force_u(&values, &labels));
        }

        #[test]
        fn u_complementary((values, labels) in labelled(40)) {
            let n_a = labels.iter().filter(|&&g| g == A).count();
            let n_b = labels.len() - n_a;
            let r = assign_ranks(&values).unwrap();
            let u_a = mann_whitney_u(sum_rank_partition(&r, &labels, A).unwrap(), n_a);
            let u_b = mann_whitney_u(sum_rank_partition(&r, &labels, B).unwrap(), n_b);
            prop_assert_eq!(u_a + u_b, (n_a * n_b) as f64);
        }

        #[test]
        fn raising_an_a_value_never_lowers_u(
            (values, labels) in labelled(20),
            pick in 0usize..20,
            bump in 0i32..4,
        ) {
            let Some(i) = (0..labels.len()).cycle().skip(pick).take(labels.len()).find(|&i| labels[i] == A) else {
                return Ok(());
            };
            let n_a = labels.iter().filter(|&&g| g == A).count();
            let before = mann_whitney_u(
                sum_rank_partition(&assign_ranks(&values).unwrap(), &labels, A).unwrap(), n_a);
            let mut raised = values.clone();
            raised[i] += f64::from(bump);
            let after = mann_whitney_u(
                sum_rank_partition(&assign_ranks(&raised).unwrap(), &labels, A).unwrap(), n_a);
            prop_assert!(after >= before);
        }
    }
}
