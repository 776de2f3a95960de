//! Ordered, paginated and percentile views of a collection along an axis.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embstore::{AxisRecord, EmbeddingSet, ItemId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Ascending,
    Descending,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::Ascending => "asc",
            Order::Descending => "desc",
        })
    }
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asc" | "ascending" => Ok(Order::Ascending),
            "desc" | "descending" => Ok(Order::Descending),
            other => Err(Error::InvalidValue(format!(
                "order must be asc or desc, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub item_id: ItemId,
    pub score: f64,
    /// 1-based position in the view.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedView {
    pub axis_id: String,
    pub order: Order,
    pub entries: Vec<RankedEntry>,
}

impl RankedView {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.item_id)
    }

    /// Entry at `index` of the ascending ordering, whatever this view's order.
    pub fn ascending_entry(&self, index: usize) -> &RankedEntry {
        match self.order {
            Order::Ascending => &self.entries[index],
            Order::Descending => &self.entries[self.entries.len() - 1 - index],
        }
    }
}

fn check_axis(embeddings: &EmbeddingSet, axis: &AxisRecord) -> Result<()> {
    axis.validate()?;
    if axis.dim != embeddings.dim() {
        return Err(Error::Dim {
            expected: embeddings.dim(),
            found: axis.dim,
        });
    }
    Ok(())
}

/// Projections in row order of `embeddings`.
pub fn projections(embeddings: &EmbeddingSet, axis: &AxisRecord) -> Result<Vec<f64>> {
    check_axis(embeddings, axis)?;
    let m = embeddings.matrix();
    Ok((0..m.rows())
        .into_par_iter()
        .map(|i| axis.project(m.row(i)))
        .collect())
}

/// `vector · row + offset` for every item.
pub fn project_scores(embeddings: &EmbeddingSet, axis: &AxisRecord) -> Result<BTreeMap<ItemId, f64>> {
    let scores = projections(embeddings, axis)?;
    Ok(embeddings.ids().iter().cloned().zip(scores).collect())
}

/// Sorts `(id, score)` pairs by score in `order`, ties by id ascending.
pub fn rank_scores(axis_id: &str, scored: Vec<(ItemId, f64)>, order: Order) -> RankedView {
    let mut scored = scored;
    scored.par_sort_unstable_by(|(ia, sa), (ib, sb)| {
        let by_score = match order {
            Order::Ascending => sa.total_cmp(sb),
            Order::Descending => sb.total_cmp(sa),
        };
        by_score.then_with(|| ia.cmp(ib))
    });
    RankedView {
        axis_id: axis_id.to_string(),
        order,
        entries: scored
            .into_iter()
            .enumerate()
            .map(|(i, (item_id, score))| RankedEntry {
                item_id,
                score,
                rank: i + 1,
            })
            .collect(),
    }
}

/// Full ordering of the collection along `axis`.
pub fn rank_items(embeddings: &EmbeddingSet, axis: &AxisRecord, order: Order) -> Result<RankedView> {
    let scores = projections(embeddings, axis)?;
    let scored = embeddings.ids().iter().cloned().zip(scores).collect();
    Ok(rank_scores(&axis.axis_id, scored, order))
}

/// Entries `[offset, min(offset + limit, N))`.
pub fn page(view: &RankedView, offset: usize, limit: usize) -> Result<&[RankedEntry]> {
    if limit == 0 {
        return Err(Error::Range("limit must be positive".into()));
    }
    let n = view.len();
    if offset > n {
        return Err(Error::Range(format!("offset {offset} exceeds {n} items")));
    }
    Ok(&view.entries[offset..n.min(offset.saturating_add(limit))])
}

/// Index of the nearest-rank `r`-th percentile in an ascending list of `n`.
pub fn nearest_rank_index(r: f64, n: usize) -> Result<usize> {
    if !(0.0..=100.0).contains(&r) {
        return Err(Error::Range(format!("percentile {r} outside [0, 100]")));
    }
    if n == 0 {
        return Err(Error::EmptyInput("percentile of an empty view".into()));
    }
    let k = (r / 100.0 * n as f64).ceil() as i64 - 1;
    Ok(k.clamp(0, n as i64 - 1) as usize)
}

/// The actual item at the nearest-rank `r`-th percentile of scores.
pub fn percentile_item(view: &RankedView, r: f64) -> Result<(ItemId, f64)> {
    let index = nearest_rank_index(r, view.len())?;
    let entry = view.ascending_entry(index);
    Ok((entry.item_id.clone(), entry.score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::AxisMethod;
    use crate::metrics::{exact_rankability_check, spearman_rho, TiePolicy};
    use proptest::prelude::*;

    fn axis(v: &[f64], offset: f64) -> AxisRecord {
        AxisRecord::from_direction(v, offset, AxisMethod::Raw).unwrap().with_id("t")
    }

    fn ids(view: &RankedView) -> Vec<&str> {
        view.ids().map(|i| i.as_str()).collect()
    }

    fn one_dim(scores: &[(&str, f64)]) -> EmbeddingSet {
        let names: Vec<&str> = scores.iter().map(|s| s.0).collect();
        let rows: Vec<[f64; 2]> = scores.iter().map(|s| [s.1, 0.0]).collect();
        EmbeddingSet::from_rows(&names, &rows).unwrap()
    }

    #[test]
    fn projection_examples() {
        let e = EmbeddingSet::from_rows(&["x"], &[[3.0, 9.0]]).unwrap();
        assert_eq!(project_scores(&e, &axis(&[1.0, 0.0], 0.0)).unwrap()["x"], 3.0);
        let e = EmbeddingSet::from_rows(&["x"], &[[3.0, 4.0]]).unwrap();
        let s = project_scores(&e, &AxisRecord::new(vec![0.6, 0.8], 0.0, AxisMethod::Raw).unwrap())
            .unwrap()["x"];
        assert!((s - 5.0).abs() < 1e-12);
    }

    #[test]
    fn offset_shifts_scores_not_order() {
        let e = one_dim(&[("a", 1.0), ("b", 3.0), ("c", 2.0)]);
        let plain = rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Descending).unwrap();
        let shifted = rank_items(&e, &axis(&[1.0, 0.0], 10.0), Order::Descending).unwrap();
        assert_eq!(ids(&plain), ids(&shifted));
        for (p, s) in plain.entries.iter().zip(&shifted.entries) {
            assert_eq!(s.score, p.score + 10.0);
        }
    }

    #[test]
    fn descending_example() {
        let e = one_dim(&[("a", 1.0), ("b", 3.0), ("c", 2.0)]);
        let v = rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Descending).unwrap();
        assert_eq!(ids(&v), ["b", "c", "a"]);
        assert_eq!(v.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn ties_break_by_id() {
        let e = one_dim(&[("b", 1.0), ("a", 1.0)]);
        let v = rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Ascending).unwrap();
        assert_eq!(ids(&v), ["a", "b"]);
        let v = rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Descending).unwrap();
        assert_eq!(ids(&v), ["a", "b"]);
    }

    #[test]
    fn non_unit_axis_rejected() {
        let e = one_dim(&[("a", 1.0)]);
        let mut a = axis(&[1.0, 0.0], 0.0);
        a.vector = vec![2.0, 0.0];
        assert_eq!(rank_items(&e, &a, Order::Ascending).unwrap_err().code(), "InvariantError");
    }

    #[test]
    fn dim_mismatch() {
        let e = one_dim(&[("a", 1.0)]);
        let a = axis(&[1.0, 0.0, 0.0], 0.0);
        assert_eq!(project_scores(&e, &a).unwrap_err().code(), "DimError");
    }

    fn five() -> RankedView {
        let e = one_dim(&[("a", 5.0), ("b", 4.0), ("c", 3.0), ("d", 2.0), ("e", 1.0)]);
        rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Ascending).unwrap()
    }

    #[test]
    fn page_examples() {
        let v = five();
        assert_eq!(page(&v, 0, 2).unwrap(), &v.entries[..2]);
        assert_eq!(page(&v, 4, 10).unwrap().len(), 1);
        assert!(page(&v, 5, 1).unwrap().is_empty());
        assert_eq!(page(&v, 6, 1).unwrap_err().code(), "RangeError");
    }

    #[test]
    fn percentile_examples() {
        let v = five();
        let at = |r| percentile_item(&v, r).unwrap().0.to_string();
        assert_eq!(at(0.0), "e");
        assert_eq!(at(100.0), "a");
        assert_eq!(at(50.0), "c");
        assert_eq!(nearest_rank_index(50.0, 5).unwrap(), 2);
        assert_eq!(percentile_item(&v, 100.5).unwrap_err().code(), "RangeError");
        assert_eq!(percentile_item(&v, -0.1).unwrap_err().code(), "RangeError");
    }

    #[test]
    fn percentile_ignores_view_order() {
        let e = one_dim(&[("a", 5.0), ("b", 4.0), ("c", 3.0)]);
        let asc = rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Ascending).unwrap();
        let desc = rank_items(&e, &axis(&[1.0, 0.0], 0.0), Order::Descending).unwrap();
        for r in [0.0, 10.0, 33.4, 50.0, 66.7, 100.0] {
            assert_eq!(percentile_item(&asc, r).unwrap(), percentile_item(&desc, r).unwrap());
        }
    }

    fn scored_items() -> impl Strategy<Value = Vec<(ItemId, f64)>> {
        prop::collection::btree_map("[a-z]{1,4}", -3i32..3, 1..40).prop_map(|m| {
            m.into_iter()
                .map(|(k, v)| (ItemId::new(k).unwrap(), f64::from(v) * 0.5))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn view_is_sorted_permutation(items in scored_items(), desc in any::<bool>()) {
            let order = if desc { Order::Descending } else { Order::Ascending };
            let view = rank_scores("a", items.clone(), order);
            let mut got: Vec<&ItemId> = view.ids().collect();
            got.sort();
            let mut want: Vec<&ItemId> = items.iter().map(|p| &p.0).collect();
            want.sort();
            prop_assert_eq!(got, want);
            for (i, e) in view.entries.iter().enumerate() {
                prop_assert_eq!(e.rank, i + 1);
            }
            for w in view.entries.windows(2) {
                let ok = match order {
                    Order::Ascending => w[0].score < w[1].score,
                    Order::Descending => w[0].score > w[1].score,
                } || (w[0].score == w[1].score && w[0].item_id < w[1].item_id);
                prop_assert!(ok);
            }
        }

        #[test]
        fn affine_rescaling_keeps_order(items in scored_items(), alpha in 0.01f64..100.0, beta in -50.0f64..50.0) {
            let scaled: Vec<(ItemId, f64)> = items.iter().map(|(id, s)| (id.clone(), alpha * s + beta)).collect();
            let a = rank_scores("a", items, Order::Ascending);
            let b = rank_scores("a", scaled, Order::Ascending);
            prop_assert!(a.ids().eq(b.ids()));
        }

        #[test]
        fn pages_reconstruct_view(items in scored_items(), limit in 1usize..10) {
            let view = rank_scores("a", items, Order::Descending);
            let mut joined = Vec::new();
            let mut offset = 0;
            while offset < view.len() {
                let p = page(&view, offset, limit).unwrap();
                joined.extend_from_slice(p);
                offset += p.len();
            }
            prop_assert_eq!(joined, view.entries.clone());
        }

        #[test]
        fn percentiles_nondecreasing(items in scored_items(), mut rs in prop::collection::vec(0.0f64..=100.0, 2..20)) {
            let view = rank_scores("a", items, Order::Descending);
            rs.sort_by(f64::total_cmp);
            let scores: Vec<f64> = rs.iter().map(|r| percentile_item(&view, *r).unwrap().1).collect();
            prop_assert!(scores.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn rankable_untied_labels_give_unit_rho(perm in Just((0..12).collect::<Vec<i32>>()).prop_shuffle(), jitter in prop::collection::vec(0.0f64..0.4, 12)) {
            // projections strictly increasing in the labels
            let labels: Vec<f64> = perm.iter().map(|v| f64::from(*v)).collect();
            let proj: Vec<f64> = labels.iter().zip(&jitter).map(|(l, j)| l * 2.0 + j).collect();
            prop_assert!(exact_rankability_check(&proj, &labels, TiePolicy::IgnoreTies).unwrap());
            prop_assert_eq!(spearman_rho(&proj, &labels).unwrap(), 1.0);
        }
    }
}
