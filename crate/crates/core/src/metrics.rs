//! Rank-correlation and geometric measures of rankability.
//!
//! SRCC is computed as the Pearson correlation of average (fractional)
//! ranks, so tied labels such as coarse age groups are handled exactly.

use serde::{Deserialize, Serialize};

use crate::embstore::{AxisRecord, SplitPart, ValidatedDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// SRCC of one axis on one labelled split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rho: f64,
    pub n: usize,
    pub attribute_name: String,
    pub split_name: String,
    pub axis_id: String,
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("cannot rank an empty list".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!("cannot rank {v}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        // -0.0 and 0.0 compare equal here, unlike under total_cmp
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    Ok(ranks)
}

fn has_two_distinct(values: &[f64]) -> bool {
    values.iter().any(|v| *v != values[0])
}

/// Spearman's rank correlation coefficient.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dim {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "SRCC needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    if !has_two_distinct(x) || !has_two_distinct(y) {
        return Err(Error::DegenerateInput(
            "SRCC is undefined for a constant input".into(),
        ));
    }
    Ok(pearson(&rx, &ry))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dim {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateInput(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Fraction of the gap between a lower reference and the full-data SRCC
/// closed by `rho_few`. Not clamped.
pub fn gap_coverage(rho_few: f64, rho_lower: f64, rho_full: f64) -> Result<f64> {
    if !(rho_full > rho_lower) {
        return Err(Error::DegenerateGap {
            lower: rho_lower,
            full: rho_full,
        });
    }
    Ok((rho_few - rho_lower) / (rho_full - rho_lower))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Only pairs with strictly ordered labels are constrained.
    IgnoreTies,
    /// Label ties must additionally project to exactly equal values.
    Strict,
}

/// Whether the projections order the items exactly as the labels do.
///
/// Runs in `O(n log n)`: items are grouped by label, and every group's
/// smallest projection must be at least the largest projection of all
/// lower-labelled groups.
pub fn exact_rankability_check(
    projections: &[f64],
    labels: &[f64],
    tie_policy: TiePolicy,
) -> Result<bool> {
    if projections.len() != labels.len() {
        return Err(Error::Dim {
            expected: labels.len(),
            found: projections.len(),
        });
    }
    if labels.len() < 2 {
        return Err(Error::DegenerateInput(
            "rankability check needs at least 2 items".into(),
        ));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]));

    let mut max_below = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && labels[order[end]] == labels[order[start]] {
            end += 1;
        }
        let group = order[start..end].iter().map(|&i| projections[i]);
        let (lo, hi) = group.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
        if lo < max_below {
            return Ok(false);
        }
        if tie_policy == TiePolicy::Strict && lo != hi {
            return Ok(false);
        }
        max_below = max_below.max(hi);
        start = end;
    }
    Ok(true)
}

/// Projects a split onto `axis` and reports its SRCC against the labels.
pub fn evaluate_axis(
    axis: &AxisRecord,
    dataset: &ValidatedDataset,
    part: SplitPart,
) -> Result<EvalReport> {
    if axis.dim != dataset.dim() {
        return Err(Error::Dim {
            expected: dataset.dim(),
            found: axis.dim,
        });
    }
    let (x, y) = dataset.xy(part)?;
    let scores: Vec<f64> = x.iter_rows().map(|r| axis.project(r)).collect();
    Ok(EvalReport {
        rho: spearman_rho(&scores, &y)?,
        n: y.len(),
        attribute_name: dataset.attribute_name().to_string(),
        split_name: part.to_string(),
        axis_id: axis.axis_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: rank of v = (#less) + (#equal + 1) / 2.
    fn oracle_ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|v| {
                let less = values.iter().filter(|w| *w < v).count() as f64;
                let equal = values.iter().filter(|w| *w == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn brute_force_rankable(p: &[f64], l: &[f64], strict: bool) -> bool {
        for i in 0..p.len() {
            for j in 0..p.len() {
                if l[i] > l[j] && p[i] < p[j] {
                    return false;
                }
                if strict && l[i] == l[j] && p[i] != p[j] {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn average_ranks_examples() {
        assert_eq!(average_ranks(&[10.0, 20.0, 30.0]).unwrap(), [1.0, 2.0, 3.0]);
        assert_eq!(average_ranks(&[5.0, 5.0]).unwrap(), [1.5, 1.5]);
        let r = average_ranks(&[5.0, 6.0, 7.0, 8.0, 7.0]).unwrap();
        assert_eq!(r, [1.0, 2.0, 3.5, 5.0, 3.5]);
        assert_eq!(r, oracle_ranks(&[5.0, 6.0, 7.0, 8.0, 7.0]));
        assert_eq!(
            average_ranks(&[1.0, f64::NAN]).unwrap_err().code(),
            "InvalidValue"
        );
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap(),
            1.0
        );
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[40.0, 30.0, 20.0, 10.0]).unwrap(),
            -1.0
        );
        let rho = spearman_rho(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 6.0, 7.0, 8.0, 7.0]).unwrap();
        // ranks [1..5] vs [1,2,3.5,5,3.5]: cov 4, var 10 and 9.5 -> 8/sqrt(95)
        assert!((rho - 8.0 / 95f64.sqrt()).abs() < 1e-12);
        assert!((rho - 0.820782).abs() < 1e-6);
    }

    #[test]
    fn spearman_constant_input_is_degenerate() {
        let err = spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.code(), "DegenerateInput");
        let err = spearman_rho(&[1.0], &[1.0]).unwrap_err();
        assert_eq!(err.code(), "DegenerateInput");
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err().code(),
            "DegenerateInput"
        );
    }

    #[test]
    fn gap_coverage_examples() {
        let (lower, full) = (0.31, 0.87);
        assert_eq!(gap_coverage(full, lower, full).unwrap(), 1.0);
        assert_eq!(gap_coverage(lower, lower, full).unwrap(), 0.0);
        assert!((gap_coverage(0.5, 0.2, 0.8).unwrap() - 0.5).abs() < 1e-15);
        assert!(gap_coverage(0.9, 0.2, 0.8).unwrap() > 1.0);
        assert!(gap_coverage(0.1, 0.2, 0.8).unwrap() < 0.0);
        assert_eq!(
            gap_coverage(0.5, 0.8, 0.8).unwrap_err().code(),
            "DegenerateGap"
        );
    }

    #[test]
    fn rankability_examples() {
        use TiePolicy::*;
        let check = exact_rankability_check;
        assert!(check(&[0.1, 0.5, 0.9], &[1.0, 2.0, 3.0], IgnoreTies).unwrap());
        assert!(check(&[0.1, 0.5, 0.9], &[1.0, 2.0, 3.0], Strict).unwrap());
        assert!(!check(&[0.1, 0.9, 0.5], &[1.0, 2.0, 3.0], IgnoreTies).unwrap());
        assert!(check(&[0.2, 0.1, 0.5], &[1.0, 1.0, 2.0], IgnoreTies).unwrap());
        assert!(!check(&[0.2, 0.1, 0.5], &[1.0, 1.0, 2.0], Strict).unwrap());
    }

    #[test]
    fn rankability_matches_pairwise_oracle_exhaustively_small() {
        // all label/projection vectors over {0,1,2} of length 4
        let n = 4;
        let total = 3usize.pow(n as u32);
        let decode = |mut k: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let d = k % 3;
                    k /= 3;
                    d as f64
                })
                .collect()
        };
        for a in 0..total {
            for b in 0..total {
                let (p, l) = (decode(a), decode(b));
                for (policy, strict) in [(TiePolicy::IgnoreTies, false), (TiePolicy::Strict, true)] {
                    assert_eq!(
                        exact_rankability_check(&p, &l, policy).unwrap(),
                        brute_force_rankable(&p, &l, strict),
                        "p={p:?} l={l:?} {policy:?}"
                    );
                }
            }
        }
    }

    fn distinct_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(-50i32..50, n),
                    prop::collection::vec(-50i32..50, n),
                )
            })
            .prop_filter("need two distinct values", |(x, y)| {
                x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0])
            })
            .prop_map(|(x, y)| {
                (
                    x.into_iter().map(f64::from).collect(),
                    y.into_iter().map(|v| f64::from(v) * 0.37).collect(),
                )
            })
    }

    proptest! {
        #[test]
        fn spearman_is_symmetric((x, y) in distinct_pair()) {
            prop_assert_eq!(spearman_rho(&x, &y).unwrap(), spearman_rho(&y, &x).unwrap());
        }

        #[test]
        fn spearman_self_is_one((x, _y) in distinct_pair()) {
            prop_assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn spearman_negation((x, y) in distinct_pair()) {
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            let a = spearman_rho(&x, &y).unwrap();
            let b = spearman_rho(&x, &neg).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn spearman_monotone_invariance(
            (x, y) in distinct_pair(),
            knots in prop::collection::vec(0.01f64..5.0, 1..6),
            shift in -100.0f64..100.0,
        ) {
            // strictly increasing piecewise-linear map with slopes `knots`
            // and breakpoints spread over [-50, 50]
            let step = 100.0 / knots.len() as f64;
            let g = |v: f64| {
                let mut acc = shift;
                for (k, slope) in knots.iter().enumerate() {
                    let lo = -50.0 + k as f64 * step;
                    let seg = (v - lo).clamp(0.0, step);
                    acc += slope * seg;
                }
                acc + if v < -50.0 { v + 50.0 } else { 0.0 }
            };
            let gy: Vec<f64> = y.iter().map(|v| g(*v)).collect();
            let a = spearman_rho(&x, &y).unwrap();
            let b = spearman_rho(&x, &gy).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn average_ranks_match_oracle((x, _y) in distinct_pair()) {
            prop_assert_eq!(average_ranks(&x).unwrap(), oracle_ranks(&x));
        }

        #[test]
        fn rankability_matches_oracle(
            n in 2usize..=8,
            seed in prop::collection::vec((0i32..5, 0i32..5), 8),
        ) {
            let p: Vec<f64> = seed[..n].iter().map(|(a, _)| f64::from(*a)).collect();
            let l: Vec<f64> = seed[..n].iter().map(|(_, b)| f64::from(*b)).collect();
            prop_assert_eq!(
                exact_rankability_check(&p, &l, TiePolicy::IgnoreTies).unwrap(),
                brute_force_rankable(&p, &l, false)
            );
            prop_assert_eq!(
                exact_rankability_check(&p, &l, TiePolicy::Strict).unwrap(),
                brute_force_rankable(&p, &l, true)
            );
        }

        #[test]
        fn rankable_without_label_ties_implies_rho_one(
            p in prop::collection::vec(-10i32..10, 2..20),
        ) {
            let labels: Vec<f64> = (0..p.len()).map(|i| i as f64).collect();
            let p: Vec<f64> = p.into_iter().map(f64::from).collect();
            prop_assume!(p.iter().any(|v| *v != p[0]));
            if exact_rankability_check(&p, &labels, TiePolicy::IgnoreTies).unwrap() {
                // monotone non-decreasing projections with ties are rankable but
                // only reach rho = 1 when projections are strictly increasing
                let strictly = p.windows(2).all(|w| w[0] < w[1]);
                let rho = spearman_rho(&p, &labels).unwrap();
                prop_assert!(!strictly || (rho - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn gap_coverage_affine_invariant(
            few in -1.0f64..1.0, lower in -1.0f64..0.0, width in 0.1f64..1.0,
            scale in 0.1f64..10.0, shift in -1.0f64..1.0,
        ) {
            let full = lower + width;
            let a = gap_coverage(few, lower, full).unwrap();
            let b = gap_coverage(few * scale + shift, lower * scale + shift, full * scale + shift).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
