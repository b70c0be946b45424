//! Exact optimal transport between equal-size samples.
//!
//! With uniform weights on `n` points per side, an optimal coupling can be
//! taken to be a permutation, so the problem reduces to linear assignment.

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{cost_matrix, CostFunction, FeatureMatrix, GroupedDataset};
use crate::error::{Error, Result};
use crate::rng;

/// A minimum-cost bijection from `S` onto `S'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMap {
    /// `assignment[i]` is the position in `S'` matched to position `i` of `S`.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    pub mean_cost: f64,
}

impl ExactMap {
    fn from_assignment(costs: &Array2<f64>, assignment: Vec<usize>) -> Self {
        let total_cost: f64 = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| costs[[i, j]])
            .sum();
        let n = assignment.len();
        Self {
            assignment,
            total_cost,
            mean_cost: total_cost / n as f64,
        }
    }

    /// Wrap a given bijection of `data`, recomputing its cost under `c`.
    pub fn evaluate(data: &GroupedDataset, c: CostFunction, assignment: Vec<usize>) -> Result<Self> {
        let n = check_sizes(data)?;
        let mut seen = vec![false; n];
        if assignment.len() != n || assignment.iter().any(|&j| j >= n || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::ShapeMismatch(format!("assignment is not a bijection on {n} points")));
        }
        let total_cost: f64 = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| c.cost(data.group_a.row(i), data.group_b.row(j)))
            .sum::<Result<f64>>()?;
        Ok(Self {
            assignment,
            total_cost,
            mean_cost: total_cost / n as f64,
        })
    }

    /// Inverse bijection, i.e. the exact map from `S'` back onto `S`.
    /// Every supported cost is symmetric, so the totals carry over.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.assignment.len()];
        for (i, &j) in self.assignment.iter().enumerate() {
            inv[j] = i;
        }
        Self {
            assignment: inv,
            total_cost: self.total_cost,
            mean_cost: self.mean_cost,
        }
    }
}

fn check_sizes(data: &GroupedDataset) -> Result<usize> {
    let (na, nb) = (data.group_a.rows(), data.group_b.rows());
    if na != nb {
        return Err(Error::UnequalSizes(na, nb));
    }
    if na == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(na)
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Shortest augmenting paths with row/column potentials, `O(n^3)`. Returns
/// `assignment[row] = column`.
pub fn solve_assignment(costs: &Array2<f64>) -> Vec<usize> {
    let n = costs.nrows();
    assert_eq!(n, costs.ncols(), "assignment needs a square cost matrix");
    if n == 0 {
        return Vec::new();
    }

    // 1-based with a virtual column 0, as in the classical formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);

        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = costs.row(i0 - 1);
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;

            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }

            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }

            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }

        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact optimal transport map from `group_a` onto `group_b`.
pub fn solve_exact(data: &GroupedDataset, c: CostFunction) -> Result<ExactMap> {
    check_sizes(data)?;
    let costs = cost_matrix(c, &data.group_a, &data.group_b)?;
    let assignment = solve_assignment(&costs);
    Ok(ExactMap::from_assignment(&costs, assignment))
}

/// Exhaustive minimization over all `n!` bijections (test oracle, `n <= 9`).
///
/// Permutations are visited in lexicographic order and only strictly
/// better ones replace the incumbent, so ties resolve to the
/// lexicographically smallest assignment.
pub fn brute_force_exact(data: &GroupedDataset, c: CostFunction) -> Result<ExactMap> {
    let n = check_sizes(data)?;
    if n > 9 {
        return Err(Error::TooLarge(n));
    }
    let costs = cost_matrix(c, &data.group_a, &data.group_b)?;
    let total = |perm: &[usize]| -> f64 {
        perm.iter().enumerate().map(|(i, &j)| costs[[i, j]]).sum()
    };

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    while next_permutation(&mut perm) {
        let t = total(&perm);
        if t < best_cost {
            best_cost = t;
            best.copy_from_slice(&perm);
        }
    }
    Ok(ExactMap::from_assignment(&costs, best))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `k` rows drawn uniformly without replacement; deterministic per seed.
pub fn subsample(data: &FeatureMatrix, k: usize, seed: u64) -> Result<FeatureMatrix> {
    let n = data.rows();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = rng::substream(seed, "subsample");
    let picks = index::sample(&mut rng, n, k).into_vec();
    Ok(data.select(&picks))
}

/// Make both groups the same size by subsampling the larger one.
pub fn equalize(data: &GroupedDataset, seed: u64) -> Result<GroupedDataset> {
    let (na, nb) = (data.group_a.rows(), data.group_b.rows());
    let k = na.min(nb);
    let pick = |m: &FeatureMatrix, labels: &Option<Vec<u8>>, label: &str| -> Result<(FeatureMatrix, Option<Vec<u8>>)> {
        if m.rows() == k {
            return Ok((m.clone(), labels.clone()));
        }
        let mut rng = rng::substream(seed, label);
        let mut picks = index::sample(&mut rng, m.rows(), k).into_vec();
        picks.sort_unstable();
        let labels = labels
            .as_ref()
            .map(|l| picks.iter().map(|&i| l[i]).collect());
        Ok((m.select(&picks), labels))
    };
    let (group_a, labels_a) = pick(&data.group_a, &data.labels_a, "equalize-a")?;
    let (group_b, labels_b) = pick(&data.group_b, &data.labels_b, "equalize-b")?;
    Ok(GroupedDataset {
        group_a,
        group_b,
        labels_a,
        labels_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn grouped(a: &[f64], b: &[f64]) -> GroupedDataset {
        let fa = FeatureMatrix::unnamed(Array2::from_shape_vec((a.len(), 1), a.to_vec()).unwrap()).unwrap();
        let fb = FeatureMatrix::unnamed(Array2::from_shape_vec((b.len(), 1), b.to_vec()).unwrap()).unwrap();
        GroupedDataset::new(fa, fb).unwrap()
    }

    #[test]
    fn two_point_example() {
        let ds = grouped(&[0.0, 2.0], &[1.0, 3.0]);
        let m = solve_exact(&ds, CostFunction::SquaredL1).unwrap();
        assert_eq!(m.assignment, vec![0, 1]);
        assert_eq!(m.total_cost, 2.0);
        assert_eq!(m.mean_cost, 1.0);
        let o = brute_force_exact(&ds, CostFunction::SquaredL1).unwrap();
        assert_eq!(o.total_cost, 2.0);
    }

    #[test]
    fn evaluate_given_assignment() {
        let ds = grouped(&[0.0, 2.0], &[1.0, 3.0]);
        let crossed = ExactMap::evaluate(&ds, CostFunction::SquaredL1, vec![1, 0]).unwrap();
        assert_eq!(crossed.total_cost, 10.0);
        assert!(ExactMap::evaluate(&ds, CostFunction::SquaredL1, vec![0, 0]).is_err());
        assert!(ExactMap::evaluate(&ds, CostFunction::SquaredL1, vec![0]).is_err());
    }

    #[test]
    fn identical_sets_cost_nothing() {
        let ds = grouped(&[3.0, -1.0, 7.0], &[3.0, -1.0, 7.0]);
        let m = solve_exact(&ds, CostFunction::SquaredL1).unwrap();
        assert_eq!(m.mean_cost, 0.0);
        assert_eq!(m.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn oracle_single_point_and_ties() {
        let one = grouped(&[5.0], &[-5.0]);
        let o = brute_force_exact(&one, CostFunction::SquaredL1).unwrap();
        assert_eq!(o.assignment, vec![0]);
        assert_eq!(o.total_cost, 100.0);

        let flat = grouped(&[1.0; 4], &[1.0; 4]);
        let o = brute_force_exact(&flat, CostFunction::SquaredL1).unwrap();
        assert_eq!(o.assignment, vec![0, 1, 2, 3]);
        assert_eq!(o.total_cost, 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            solve_exact(&grouped(&[1.0, 2.0], &[1.0]), CostFunction::L1),
            Err(Error::UnequalSizes(2, 1))
        ));
        assert!(matches!(
            solve_exact(&grouped(&[], &[]), CostFunction::L1),
            Err(Error::EmptyDataset)
        ));
        let ten: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(
            brute_force_exact(&grouped(&ten, &ten), CostFunction::L1),
            Err(Error::TooLarge(10))
        ));
    }

    #[test]
    fn subsample_contract() {
        let m = FeatureMatrix::unnamed(Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64)).unwrap();
        let all = subsample(&m, 10, 1).unwrap();
        let mut ids = all.row_ids().to_vec();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());

        let none = subsample(&m, 0, 1).unwrap();
        assert_eq!(none.rows(), 0);
        assert_eq!(none.names(), m.names());

        assert_eq!(subsample(&m, 4, 9).unwrap(), subsample(&m, 4, 9).unwrap());
        assert!(matches!(subsample(&m, 11, 0), Err(Error::KTooLarge { k: 11, n: 10 })));
    }

    #[test]
    fn equalize_trims_larger_group() {
        let ds = grouped(&[0.0, 1.0, 2.0, 3.0, 4.0], &[9.0, 8.0]);
        let eq = equalize(&ds, 3).unwrap();
        assert_eq!(eq.group_a.rows(), 2);
        assert_eq!(eq.group_b, ds.group_b);
    }

    fn instance(max_n: usize, max_d: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
        (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
            (
                Just(n),
                Just(d),
                proptest::collection::vec((-5i32..=5).prop_map(f64::from), n * d),
                proptest::collection::vec((-5i32..=5).prop_map(f64::from), n * d),
            )
        })
    }

    fn to_ds(n: usize, d: usize, a: Vec<f64>, b: Vec<f64>) -> GroupedDataset {
        GroupedDataset::new(
            FeatureMatrix::unnamed(Array2::from_shape_vec((n, d), a).unwrap()).unwrap(),
            FeatureMatrix::unnamed(Array2::from_shape_vec((n, d), b).unwrap()).unwrap(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn solver_matches_oracle((n, d, a, b) in instance(7, 3)) {
            let ds = to_ds(n, d, a, b);
            for c in [CostFunction::SquaredL1, CostFunction::L1, CostFunction::SquaredL2] {
                let fast = solve_exact(&ds, c).unwrap();
                let slow = brute_force_exact(&ds, c).unwrap();
                prop_assert_eq!(fast.total_cost, slow.total_cost);
                let mut seen = fast.assignment.clone();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn target_order_does_not_change_cost((n, d, a, b) in instance(7, 3), shift in 0usize..7) {
            let ds = to_ds(n, d, a, b);
            let mut order: Vec<usize> = (0..n).collect();
            order.rotate_left(shift % n);
            order.reverse();
            let permuted = GroupedDataset::new(ds.group_a.clone(), ds.group_b.select(&order)).unwrap();
            let c = CostFunction::SquaredL1;
            prop_assert_eq!(solve_exact(&ds, c).unwrap().total_cost, solve_exact(&permuted, c).unwrap().total_cost);
        }

        #[test]
        fn no_explicit_bijection_beats_solver((n, d, a, b) in instance(7, 2), rot in 0usize..7) {
            let ds = to_ds(n, d, a, b);
            let c = CostFunction::SquaredL1;
            let m = solve_exact(&ds, c).unwrap();
            let costs = cost_matrix(c, &ds.group_a, &ds.group_b).unwrap();
            let candidate: f64 = (0..n).map(|i| costs[[i, (i + rot) % n]]).sum();
            prop_assert!(m.mean_cost <= candidate / n as f64);
        }
    }
}
