//! Training-set partitions with bounded group unions, for per-group sparse
//! `Θ_k` accumulators.

use crate::learning::{sparse_accumulate, ThetaAccumulator};
use crate::model::{Kernel, Subset, TrainingSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    /// Every group's union has fewer than `z` items.
    pub z: usize,
    /// Subset indices per group, ascending within each group.
    pub groups: Vec<Vec<usize>>,
    /// Union of each group's subsets, sorted.
    pub unions: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Checks disjoint cover of `t`, correct unions and the strict bound.
    pub fn validate(&self, t: &TrainingSet) -> Result<()> {
        if self.groups.len() != self.unions.len() {
            return Err(Error::InvalidArgument("groups and unions differ in length".into()));
        }
        let mut seen = vec![false; t.len()];
        for (g, (members, union)) in self.groups.iter().zip(&self.unions).enumerate() {
            for &i in members {
                if i >= t.len() {
                    return Err(Error::IndexOutOfRange { index: i, size: t.len() });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!("subset {i} appears twice")));
                }
            }
            if union_of(t, members) != *union {
                return Err(Error::InvalidArgument(format!("group {g} union is wrong")));
            }
            if union.len() >= self.z {
                return Err(Error::InvalidArgument(format!(
                    "group {g} union has {} items, bound is < {}",
                    union.len(),
                    self.z
                )));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("subset {i} is in no group")));
        }
        Ok(())
    }

    /// Entries stored by the per-group accumulators, `Σ_k |union_k|²`.
    pub fn storage_entries(&self) -> usize {
        self.unions.iter().map(|u| u.len() * u.len()).sum()
    }
}

fn union_of(t: &TrainingSet, members: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = members
        .iter()
        .flat_map(|&i| t.subsets()[i].indices().iter().copied())
        .collect();
    u.sort_unstable();
    u.dedup();
    u
}

fn merged_size(union: &[usize], y: &Subset) -> usize {
    union.len() + y.indices().iter().filter(|i| union.binary_search(i).is_err()).count()
}

/// First-fit in descending subset size, ties by index.
pub fn greedy_partition(t: &TrainingSet, z: usize) -> Result<PartitionPlan> {
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t.subsets()[b].len().cmp(&t.subsets()[a].len()).then(a.cmp(&b)));
    if let Some(&i) = order.first() {
        let size = t.subsets()[i].len();
        if size >= z {
            return Err(Error::Infeasible { subset: i, size, z });
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut unions: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let y = &t.subsets()[i];
        match unions.iter().position(|u| merged_size(u, y) < z) {
            Some(g) => {
                groups[g].push(i);
                let u = &mut unions[g];
                u.extend_from_slice(y.indices());
                u.sort_unstable();
                u.dedup();
            }
            None => {
                groups.push(vec![i]);
                unions.push(y.indices().to_vec());
            }
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    Ok(PartitionPlan { z, groups, unions })
}

/// `max(2κ, κ + 1)`, always feasible.
pub fn default_z(t: &TrainingSet) -> usize {
    let kappa = t.kappa();
    (2 * kappa).max(kappa + 1)
}

/// `Θ_k = Σ_{i ∈ S_k} U_i L_{Y_i}⁻¹ U_iᵀ` per group, each stored on its
/// union. `(1/n) Σ_k Θ_k` is the batch `Θ`.
pub fn theta_grouped<K: Kernel>(
    k: &K,
    t: &TrainingSet,
    plan: &PartitionPlan,
) -> Result<Vec<ThetaAccumulator>> {
    if k.ground_size() != t.ground_size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel over {} items, training set over {}",
            k.ground_size(),
            t.ground_size()
        )));
    }
    plan.validate(t)?;
    plan.groups
        .iter()
        .map(|members| {
            let subsets: Vec<&Subset> = members.iter().map(|&i| &t.subsets()[i]).collect();
            sparse_accumulate(k, &subsets, members, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_training_set_gives_empty_plan() {
        let t = TrainingSet::from_lists(5, vec![]).unwrap();
        let p = greedy_partition(&t, 3).unwrap();
        assert!(p.is_empty());
        p.validate(&t).unwrap();
    }

    #[test]
    fn small_example() {
        let t = TrainingSet::from_lists(7, vec![vec![0, 1], vec![1, 2], vec![5, 6]]).unwrap();
        let p = greedy_partition(&t, 4).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1], vec![2]]);
        assert_eq!(p.unions, vec![vec![0, 1, 2], vec![5, 6]]);
        p.validate(&t).unwrap();
    }

    #[test]
    fn infeasible_bound() {
        let t = TrainingSet::from_lists(7, vec![vec![0], vec![1, 2, 3]]).unwrap();
        assert_eq!(
            greedy_partition(&t, 3),
            Err(Error::Infeasible { subset: 1, size: 3, z: 3 })
        );
    }

    #[test]
    fn disjoint_subsets_at_kappa_plus_one() {
        let t = TrainingSet::from_lists(6, vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
        assert_eq!(greedy_partition(&t, 3).unwrap().len(), 3);
        assert_eq!(greedy_partition(&t, 100).unwrap().len(), 1);
    }

    #[test]
    fn validate_catches_corruption() {
        let t = TrainingSet::from_lists(4, vec![vec![0, 1], vec![2]]).unwrap();
        let mut p = greedy_partition(&t, 4).unwrap();
        p.groups[0].pop();
        assert!(p.validate(&t).is_err());
    }
}
