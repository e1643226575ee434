//! Intersection hypotheses and their grouping into classes that share a
//! correlation matrix up to relabelling.
//!
//! A subset of comparisons is a graph on the arms it touches. Two subsets
//! whose graphs are isomorphic by a map that preserves each arm's mean
//! variance have the same correlation matrix after reordering (and, in
//! the two-sided case, after flipping signs), hence the same critical
//! value. The canonical form is found by refining arms on simple
//! invariants and trying every labelling consistent with the refinement.

use std::collections::HashMap;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::{ComparisonSet, Sided};

/// Largest family for which every intersection is enumerated.
pub const MAX_LATTICE_M: usize = 15;

/// Canonical description of a subset's graph; equal keys mean equal
/// correlation matrices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassKey {
    /// Variance class of each canonical vertex.
    weights: Vec<u32>,
    /// Edges on canonical vertices, sorted.
    edges: Vec<(u8, u8)>,
}

/// Partition of all nonempty subsets of `1..=m` into classes.
#[derive(Clone, Debug)]
pub struct SubsetClasses {
    m: usize,
    /// Class id per mask; entry 0 is unused.
    class_of: Vec<u32>,
    /// Smallest mask of each class.
    representatives: Vec<u64>,
    counts: Vec<usize>,
}

impl SubsetClasses {
    /// `pairs` are the 0-based arm pairs of the family, `weights` the
    /// per-arm mean variances.
    pub fn build(pairs: &[(usize, usize)], weights: &[f64], sided: Sided) -> Result<Self> {
        let m = pairs.len();
        if m == 0 {
            return Err(Error::InvalidArgument("empty comparison family".into()));
        }
        if m > MAX_LATTICE_M {
            return Err(Error::TooManyComparisons { m, max: MAX_LATTICE_M });
        }
        let levels = weight_levels(weights);
        let mut ids: HashMap<ClassKey, u32> = HashMap::new();
        let total = 1usize << m;
        let mut class_of = vec![u32::MAX; total];
        let mut representatives = Vec::new();
        let mut counts = Vec::new();
        for mask in 1..total as u64 {
            let edges: Vec<(usize, usize)> = (0..m)
                .filter(|&k| mask >> k & 1 == 1)
                .map(|k| pairs[k])
                .collect();
            let key = canonical_key(&edges, &levels, sided);
            let next = ids.len() as u32;
            let id = *ids.entry(key).or_insert(next);
            if id == next {
                representatives.push(mask);
                counts.push(0);
            }
            counts[id as usize] += 1;
            class_of[mask as usize] = id;
        }
        Ok(Self {
            m,
            class_of,
            representatives,
            counts,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn class_of(&self, mask: u64) -> usize {
        self.class_of[mask as usize] as usize
    }

    pub fn representative(&self, class: usize) -> ComparisonSet {
        ComparisonSet::from_mask(self.representatives[class])
    }

    /// Number of subsets in `class`.
    pub fn count(&self, class: usize) -> usize {
        self.counts[class]
    }
}

/// Dense ranks of distinct weights; equal values share a rank.
fn weight_levels(weights: &[f64]) -> Vec<u32> {
    let mut distinct: Vec<f64> = weights.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    weights
        .iter()
        .map(|w| distinct.iter().position(|d| d == w).unwrap() as u32)
        .collect()
}

/// Canonical key of the graph spanned by `edges` (arm pairs).
pub fn canonical_key(edges: &[(usize, usize)], levels: &[u32], sided: Sided) -> ClassKey {
    let key = directed_key(edges, levels, sided);
    if sided == Sided::TwoSided {
        return key;
    }
    // Z and -Z share a distribution, so reversing every edge is harmless.
    let reversed: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (j, i)).collect();
    key.min(directed_key(&reversed, levels, sided))
}

fn directed_key(edges: &[(usize, usize)], levels: &[u32], sided: Sided) -> ClassKey {
    let verts: Vec<usize> = edges
        .iter()
        .flat_map(|&(i, j)| [i, j])
        .sorted()
        .dedup()
        .collect();
    let local = |a: usize| verts.iter().position(|&v| v == a).unwrap();
    let e: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (local(i), local(j))).collect();
    let t = verts.len();

    let mut out_deg = vec![0u32; t];
    let mut in_deg = vec![0u32; t];
    for &(a, b) in &e {
        out_deg[a] += 1;
        in_deg[b] += 1;
    }
    let degree = |v: usize| match sided {
        Sided::TwoSided => (out_deg[v] + in_deg[v], 0),
        Sided::OneSided => (out_deg[v], in_deg[v]),
    };
    let invariant = |v: usize| {
        let neigh: Vec<(u32, u32, u32)> = e
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some((0, b))
                } else if b == v {
                    Some((u32::from(sided == Sided::OneSided), a))
                } else {
                    None
                }
            })
            .map(|(dir, u)| (dir, levels[verts[u]], degree(u).0 * 64 + degree(u).1))
            .sorted()
            .collect();
        (levels[verts[v]], degree(v), neigh)
    };
    let invariants: Vec<_> = (0..t).map(invariant).collect();
    let order: Vec<usize> = (0..t).sorted_by(|&a, &b| invariants[a].cmp(&invariants[b])).collect();
    let cells: Vec<Vec<usize>> = order
        .iter()
        .copied()
        .chunk_by(|&v| invariants[v].clone())
        .into_iter()
        .map(|(_, g)| g.collect())
        .collect();

    let weights: Vec<u32> = order.iter().map(|&v| levels[verts[v]]).collect();
    let mut best: Option<Vec<(u8, u8)>> = None;
    let cell_perms = cells
        .iter()
        .map(|c| c.iter().copied().permutations(c.len()).collect::<Vec<_>>())
        .multi_cartesian_product();
    let mut label = vec![0u8; t];
    for choice in cell_perms {
        for (pos, &v) in choice.iter().flatten().enumerate() {
            label[v] = pos as u8;
        }
        let mut cand: Vec<(u8, u8)> = e
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (label[a], label[b]);
                if sided == Sided::TwoSided && x > y {
                    (y, x)
                } else {
                    (x, y)
                }
            })
            .collect();
        cand.sort_unstable();
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
    }
    ClassKey {
        weights,
        edges: best.unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::comparisons;

    #[test]
    fn four_arms_collapse() {
        let pairs = comparisons(4, Sided::TwoSided);
        let classes = SubsetClasses::build(&pairs, &[1.0; 4], Sided::TwoSided).unwrap();
        let total: usize = (0..classes.len()).map(|c| classes.count(c)).sum();
        assert_eq!(total, 63);
        // graphs on four unlabelled vertices with at least one edge: 10
        assert_eq!(classes.len(), 10);
    }

    #[test]
    fn unequal_weights_split_classes() {
        let pairs = comparisons(3, Sided::TwoSided);
        let equal = SubsetClasses::build(&pairs, &[1.0; 3], Sided::TwoSided).unwrap();
        let unequal = SubsetClasses::build(&pairs, &[1.0, 1.0, 2.0], Sided::TwoSided).unwrap();
        // edge, path, triangle
        assert_eq!(equal.len(), 3);
        // edges {11, 12}, paths centred on a light or the heavy arm, triangle
        assert_eq!(unequal.len(), 5);
    }

    #[test]
    fn one_sided_orientation_matters() {
        let pairs = comparisons(3, Sided::OneSided);
        let classes = SubsetClasses::build(&pairs, &[1.0; 3], Sided::OneSided).unwrap();
        // (1,2),(1,3) out-star and (2,1),(3,1) in-star are reverses of each other
        let a = ComparisonSet::new([0, 1], 6).unwrap();
        let star_out = classes.class_of(a.mask());
        let in_star = pairs.iter().position(|&p| p == (1, 0)).unwrap();
        let in_star2 = pairs.iter().position(|&p| p == (2, 0)).unwrap();
        let b = ComparisonSet::new([in_star, in_star2], 6).unwrap();
        assert_eq!(star_out, classes.class_of(b.mask()));
        // a directed path differs from a star
        let path = ComparisonSet::new([0, pairs.iter().position(|&p| p == (1, 2)).unwrap()], 6).unwrap();
        assert_ne!(star_out, classes.class_of(path.mask()));
    }

    #[test]
    fn too_many_comparisons() {
        let pairs = comparisons(7, Sided::TwoSided);
        assert!(matches!(
            SubsetClasses::build(&pairs, &[1.0; 7], Sided::TwoSided),
            Err(Error::TooManyComparisons { m: 21, .. })
        ));
    }
}
