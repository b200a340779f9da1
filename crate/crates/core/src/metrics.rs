//! Fairness and accuracy metrics.
//!
//! AUC here counts A/B pairs directly (sorting B and binary searching), a
//! route independent of the rank-sum form in [`crate::ranking`]. The
//! `*_demoted` variants score projected predictions, where demoted entries
//! rank below every kept entry in flat-index order.

use serde::{Deserialize, Serialize};

use crate::data::Group;
use crate::error::{Error, Result};
use crate::ranking::{assign_ranks, rank_with_demotion, sum_rank_partition, RankVector};

/// Impact rank ratios below this are flagged as discriminatory.
pub const IRR_THRESHOLD: f64 = 0.8;

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

fn split(values: &[f64], protected: &[Group]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(values.len(), protected.len())?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i, value: v });
        }
        match protected[i] {
            Group::A => a.push(v),
            Group::B => b.push(v),
        }
    }
    if a.is_empty() {
        return Err(Error::EmptyPartition("A"));
    }
    if b.is_empty() {
        return Err(Error::EmptyPartition("B"));
    }
    Ok((a, b))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Fraction of A/B pairs in which A ranks higher; ties count one half.
pub fn auc(values: &[f64], protected: &[Group]) -> Result<f64> {
    let (a, mut b) = split(values, protected)?;
    b.sort_by(f64::total_cmp);
    let mut wins2 = 0u64;
    for &x in &a {
        let below = b.partition_point(|&y| y < x) as u64;
        let not_above = b.partition_point(|&y| y <= x) as u64;
        wins2 += 2 * below + (not_above - below);
    }
    Ok(wins2 as f64 / 2.0 / (a.len() as f64 * b.len() as f64))
}

/// [`auc`] under the demotion ranking.
pub fn auc_demoted(values: &[f64], protected: &[Group], demoted: &[bool]) -> Result<f64> {
    check_len(values.len(), demoted.len())?;
    split(values, protected)?;
    let mut kept_b = Vec::new();
    let mut demoted_b = Vec::new();
    for i in 0..values.len() {
        if protected[i] == Group::B {
            if demoted[i] {
                demoted_b.push(i);
            } else {
                kept_b.push(values[i]);
            }
        }
    }
    kept_b.sort_by(f64::total_cmp);
    let (mut wins2, mut n_a) = (0u64, 0u64);
    for i in (0..values.len()).filter(|&i| protected[i] == Group::A) {
        n_a += 1;
        wins2 += if demoted[i] {
            2 * demoted_b.partition_point(|&j| j < i) as u64
        } else {
            let below = kept_b.partition_point(|&y| y < values[i]) as u64;
            let not_above = kept_b.partition_point(|&y| y <= values[i]) as u64;
            2 * (demoted_b.len() as u64 + below) + (not_above - below)
        };
    }
    let n_b = (values.len() as u64 - n_a) as f64;
    Ok(wins2 as f64 / 2.0 / (n_a as f64 * n_b))
}

/// Mean over A minus mean over B.
pub fn mean_difference(values: &[f64], protected: &[Group]) -> Result<f64> {
    let (a, b) = split(values, protected)?;
    Ok(mean(&a) - mean(&b))
}

/// Mean residual `y - y_hat` over A minus the same over B.
pub fn balanced_residuals(y: &[f64], y_hat: &[f64], protected: &[Group]) -> Result<f64> {
    check_len(y.len(), y_hat.len())?;
    let residuals: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    mean_difference(&residuals, protected)
}

fn irr_from_ranks(ranks: &RankVector, protected: &[Group]) -> Result<f64> {
    let n_a = protected.iter().filter(|&&g| g == Group::A).count();
    let n_b = protected.len() - n_a;
    if n_a == 0 {
        return Err(Error::EmptyPartition("A"));
    }
    if n_b == 0 {
        return Err(Error::EmptyPartition("B"));
    }
    let r_a = sum_rank_partition(ranks, protected, Group::A)?;
    let r_b = sum_rank_partition(ranks, protected, Group::B)?;
    Ok((r_a / n_a as f64) / (r_b / n_b as f64))
}

/// Mean rank of A over mean rank of B.
pub fn impact_rank_ratio(values: &[f64], protected: &[Group]) -> Result<f64> {
    check_len(values.len(), protected.len())?;
    irr_from_ranks(&assign_ranks(values)?, protected)
}

/// [`impact_rank_ratio`] under the demotion ranking.
pub fn impact_rank_ratio_demoted(
    values: &[f64],
    protected: &[Group],
    demoted: &[bool],
) -> Result<f64> {
    check_len(values.len(), protected.len())?;
    irr_from_ranks(&rank_with_demotion(values, demoted)?, protected)
}

/// Mean rank of `numerator` over mean rank of the other partition.
pub fn impact_rank_ratio_for(
    values: &[f64],
    protected: &[Group],
    numerator: Group,
    demoted: Option<&[bool]>,
) -> Result<f64> {
    check_len(values.len(), protected.len())?;
    let ranks = match demoted {
        Some(mask) => rank_with_demotion(values, mask)?,
        None => assign_ranks(values)?,
    };
    let irr = irr_from_ranks(&ranks, protected)?;
    Ok(match numerator {
        Group::A => irr,
        Group::B => 1.0 / irr,
    })
}

/// The partition with the lower mean rank of `y` (A on a tie). Reports put
/// it in the IRR numerator so that discrimination reads as a ratio below 1.
pub fn disadvantaged_partition(y: &[f64], protected: &[Group]) -> Result<Group> {
    Ok(if impact_rank_ratio(y, protected)? <= 1.0 {
        Group::A
    } else {
        Group::B
    })
}

pub fn is_discriminatory(irr: f64) -> bool {
    irr < IRR_THRESHOLD
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_len(y.len(), y_hat.len())?;
    if y.is_empty() {
        return Err(Error::InvalidParameter {
            name: "y",
            reason: "rmse of an empty vector".into(),
        });
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// One row of a metrics table, columns in the order AUC, MD, BR, IRR, RMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub auc: f64,
    pub md: f64,
    pub br: f64,
    pub irr: f64,
    pub rmse: f64,
    pub irr_flagged: bool,
    /// Partition whose mean rank is the IRR numerator.
    pub irr_numerator: Group,
    pub n_a: usize,
    pub n_b: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 10] = [
        "label",
        "auc",
        "md",
        "br",
        "irr",
        "rmse",
        "irr_flagged",
        "irr_numerator",
        "n_a",
        "n_b",
    ];

    /// Score `y_hat` against `y`. With a demotion mask, AUC and IRR use the
    /// demotion ranking; MD, BR and RMSE always use the numeric values, which
    /// should be in target units. IRR puts the partition that is
    /// disadvantaged in `y` in the numerator.
    pub fn compute(
        label: impl Into<String>,
        y: &[f64],
        y_hat: &[f64],
        protected: &[Group],
        demoted: Option<&[bool]>,
    ) -> Result<Self> {
        check_len(y.len(), y_hat.len())?;
        let numerator = disadvantaged_partition(y, protected)?;
        let auc = match demoted {
            Some(mask) => auc_demoted(y_hat, protected, mask)?,
            None => auc(y_hat, protected)?,
        };
        let irr = impact_rank_ratio_for(y_hat, protected, numerator, demoted)?;
        let n_a = protected.iter().filter(|&&g| g == Group::A).count();
        Ok(Self {
            label: label.into(),
            auc,
            md: mean_difference(y_hat, protected)?,
            br: balanced_residuals(y, y_hat, protected)?,
            irr,
            rmse: rmse(y, y_hat)?,
            irr_flagged: is_discriminatory(irr),
            irr_numerator: numerator,
            n_a,
            n_b: protected.len() - n_a,
        })
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            self.auc.to_string(),
            self.md.to_string(),
            self.br.to_string(),
            self.irr.to_string(),
            self.rmse.to_string(),
            self.irr_flagged.to_string(),
            self.irr_numerator.to_string(),
            self.n_a.to_string(),
            self.n_b.to_string(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        [self.auc, self.md, self.br, self.irr, self.rmse]
            .iter()
            .all(|x| x.is_finite())
    }
}
