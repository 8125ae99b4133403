use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// 1-based ascending ranks with ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Per-dataset ranks (lower metric is better) and their per-method means.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTable {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    /// `metrics[d][m]`.
    pub metrics: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub avg_rank: Vec<f64>,
}

impl RankTable {
    pub fn avg_rank_of(&self, method: &str) -> Option<f64> {
        self.methods
            .iter()
            .position(|m| m == method)
            .map(|i| self.avg_rank[i])
    }

    /// Metric column of one method in dataset order.
    pub fn column(&self, method: &str) -> Option<Vec<f64>> {
        let i = self.methods.iter().position(|m| m == method)?;
        Some(self.metrics.iter().map(|row| row[i]).collect())
    }

    /// `dataset,<method>...` rows of ranks, then an `avg_rank` row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("dataset,{}\n", self.methods.join(","));
        for (d, row) in self.datasets.iter().zip(&self.ranks) {
            let cells: Vec<String> = row.iter().map(|r| r.to_string()).collect();
            out.push_str(&format!("{d},{}\n", cells.join(",")));
        }
        let avg: Vec<String> = self.avg_rank.iter().map(|r| format!("{r:.3}")).collect();
        out.push_str(&format!("avg_rank,{}\n", avg.join(",")));
        out
    }
}

/// Datasets and methods keep their order of first appearance in `cells`.
pub fn rank_aggregate<D, M>(cells: &[(D, M, f64)]) -> Result<RankTable>
where
    D: AsRef<str>,
    M: AsRef<str>,
{
    let mut datasets: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut values: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (d, m, v) in cells {
        let (d, m) = (d.as_ref(), m.as_ref());
        let di = position_or_push(&mut datasets, d);
        let mi = position_or_push(&mut methods, m);
        if !v.is_finite() {
            return Err(Error::Domain(format!("metric for {d}/{m} is not finite")));
        }
        if values.insert((di, mi), *v).is_some() {
            return Err(Error::Config(format!("duplicate result for {d}/{m}")));
        }
    }
    if datasets.is_empty() {
        return Err(Error::IncompleteGrid(vec!["no results".into()]));
    }
    let mut missing = BTreeSet::new();
    for (di, d) in datasets.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            if !values.contains_key(&(di, mi)) {
                missing.insert(format!("{d}/{m}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing.into_iter().collect()));
    }
    let metrics: Vec<Vec<f64>> = (0..datasets.len())
        .map(|di| (0..methods.len()).map(|mi| values[&(di, mi)]).collect())
        .collect();
    let ranks: Vec<Vec<f64>> = metrics.iter().map(|row| midranks(row)).collect();
    let avg_rank = (0..methods.len())
        .map(|mi| ranks.iter().map(|r| r[mi]).sum::<f64>() / datasets.len() as f64)
        .collect();
    Ok(RankTable {
        datasets,
        methods,
        metrics,
        ranks,
        avg_rank,
    })
}

fn position_or_push(list: &mut Vec<String>, name: &str) -> usize {
    match list.iter().position(|x| x == name) {
        Some(i) => i,
        None => {
            list.push(name.to_string());
            list.len() - 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(midranks(&[0.5, 0.5]), vec![1.5, 1.5]);
    }

    #[test]
    fn dominating_method_ranks_first() {
        let cells = vec![
            ("A", "x", 0.1),
            ("A", "y", 0.2),
            ("B", "x", 0.3),
            ("B", "y", 0.9),
        ];
        let t = rank_aggregate(&cells).unwrap();
        assert_eq!(t.avg_rank_of("x"), Some(1.0));
        assert_eq!(t.avg_rank_of("y"), Some(2.0));
        assert_eq!(t.column("y"), Some(vec![0.2, 0.9]));
    }

    #[test]
    fn missing_cell_is_reported() {
        let cells = vec![("A", "x", 0.1), ("A", "y", 0.2), ("B", "x", 0.3)];
        match rank_aggregate(&cells) {
            Err(Error::IncompleteGrid(m)) => assert_eq!(m, vec!["B/y".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_method_and_identical_columns() {
        let t = rank_aggregate(&[("A", "x", 0.4), ("B", "x", 0.1)]).unwrap();
        assert_eq!(t.avg_rank, vec![1.0]);
        let t = rank_aggregate(&[("A", "x", 0.4), ("A", "y", 0.4)]).unwrap();
        assert_eq!(t.avg_rank, vec![1.5, 1.5]);
    }

    proptest! {
        #[test]
        fn monotone_transform_preserves_ranks(vals in prop::collection::vec(-5f64..5.0, 2..8)) {
            let cells: Vec<(&str, String, f64)> =
                vals.iter().enumerate().map(|(i, &v)| ("D", format!("m{i}"), v)).collect();
            let moved: Vec<(&str, String, f64)> =
                cells.iter().map(|(d, m, v)| (*d, m.clone(), v.exp() * 3.0 + 1.0)).collect();
            let a = rank_aggregate(&cells).unwrap();
            let b = rank_aggregate(&moved).unwrap();
            prop_assert_eq!(a.ranks, b.ranks);
        }
    }
}
