//! Exact min-cost rectangular assignment (Hungarian method with potentials).
//!
//! Works over any totally ordered additive group, so exact rationals and
//! lexicographic pairs can be used as costs without rounding.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

use crate::scalar::Scalar;

pub trait Cost: Clone + Ord + Add<Output = Self> + Sub<Output = Self> {
    fn zero() -> Self;
}

impl Cost for i64 {
    fn zero() -> Self {
        0
    }
}

/// Lexicographic cost: primary scalar, then an integer tie-breaker.
#[derive(Clone, Debug)]
pub struct Lex<S>(pub S, pub i64);

impl<S: Scalar> PartialEq for Lex<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: Scalar> Eq for Lex<S> {}
impl<S: Scalar> PartialOrd for Lex<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Scalar> Ord for Lex<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<S: Scalar> Add for Lex<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Lex(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl<S: Scalar> Sub for Lex<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Lex(self.0 - rhs.0, self.1 - rhs.1)
    }
}

impl<S: Scalar> Cost for Lex<S> {
    fn zero() -> Self {
        Lex(S::zero(), 0)
    }
}

/// Assign every row of an `n x m` matrix (`n <= m`) to a distinct column at
/// minimum total cost. Returns the column of each row.
pub fn min_cost_assignment<C: Cost>(cost: &[Vec<C>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs at least as many columns as rows");
    assert!(cost.iter().all(|r| r.len() == m), "ragged cost matrix");

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![C::zero(); n + 1];
    let mut v = vec![C::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<C>> = vec![None; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta: Option<C> = None;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1].clone() - u[i0].clone() - v[j].clone();
                if minv[j].as_ref().is_none_or(|mv| cur < *mv) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].as_ref().expect("just set");
                if delta.as_ref().is_none_or(|d| mj < d) {
                    delta = Some(mj.clone());
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column remains while rows are unmatched");
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] = u[owner[j]].clone() + delta.clone();
                    v[j] = v[j].clone() - delta.clone();
                } else if let Some(mv) = minv[j].take() {
                    minv[j] = Some(mv - delta.clone());
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(cost: &[Vec<i64>]) -> i64 {
        fn go(cost: &[Vec<i64>], row: usize, used: &mut Vec<bool>) -> i64 {
            if row == cost.len() {
                return 0;
            }
            let mut best = i64::MAX;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost[0].len()])
    }

    #[test]
    fn classic_square_instance() {
        let c = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = min_cost_assignment(&c);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn empty_and_single() {
        assert!(min_cost_assignment::<i64>(&[]).is_empty());
        assert_eq!(min_cost_assignment(&[vec![7, -2, 3]]), vec![1]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            n in 1usize..5,
            extra in 0usize..3,
            seed in proptest::collection::vec(-20i64..20, 40),
        ) {
            let m = n + extra;
            let c: Vec<Vec<i64>> = (0..n).map(|i| (0..m).map(|j| seed[(i * m + j) % seed.len()] * (1 + (i as i64 ^ j as i64))).collect()).collect();
            let a = min_cost_assignment(&c);
            let mut cols = a.clone();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(cols.len(), n);
            let total: i64 = a.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
            prop_assert_eq!(total, brute(&c));
        }
    }
}
