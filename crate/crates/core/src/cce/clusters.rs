//! Connected clusters of bath spins.

use std::collections::{HashMap, HashSet};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Every connected subset of size <= `order` under the graph joining spins
/// closer than `dipole_radius`. Sorted by size, then lexicographically; each
/// cluster is an ascending index list.
pub fn enumerate_clusters(
    positions: &[Vector3<f64>],
    order: usize,
    dipole_radius: f64,
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    let n = positions.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && (positions[i] - positions[j]).norm() <= dipole_radius).collect())
        .collect();
    let mut all: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if n > cap {
        return Err(Error::ClusterExplosion { count: n, cap });
    }
    let mut level: Vec<Vec<usize>> = all.clone();
    for _ in 1..order {
        let mut next: HashSet<Vec<usize>> = HashSet::new();
        for cluster in &level {
            for &member in cluster {
                for &u in &neighbors[member] {
                    if cluster.binary_search(&u).is_ok() {
                        continue;
                    }
                    let mut grown = cluster.clone();
                    let pos = grown.binary_search(&u).unwrap_err();
                    grown.insert(pos, u);
                    next.insert(grown);
                }
            }
            if all.len() + next.len() > cap {
                return Err(Error::ClusterExplosion { count: all.len() + next.len(), cap });
            }
        }
        let mut next: Vec<Vec<usize>> = next.into_iter().collect();
        next.sort_unstable();
        if next.is_empty() {
            break;
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    Ok(all)
}

/// For each cluster, the indices (into `clusters`) of its proper subsets
/// that are themselves clusters.
pub fn subcluster_table(clusters: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let index: HashMap<&[usize], usize> = clusters.iter().enumerate().map(|(k, c)| (c.as_slice(), k)).collect();
    clusters
        .iter()
        .map(|c| {
            let s = c.len();
            let mut subs = Vec::new();
            let mut buf = Vec::with_capacity(s);
            for mask in 1..(1usize << s) - 1 {
                buf.clear();
                buf.extend((0..s).filter(|b| mask >> b & 1 == 1).map(|b| c[b]));
                if let Some(&k) = index.get(buf.as_slice()) {
                    subs.push(k);
                }
            }
            subs.sort_unstable();
            subs
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn connected(subset: &[usize], pos: &[Vector3<f64>], r: f64) -> bool {
        let mut seen = vec![subset[0]];
        let mut stack = vec![subset[0]];
        while let Some(v) = stack.pop() {
            for &u in subset {
                if !seen.contains(&u) && (pos[u] - pos[v]).norm() <= r {
                    seen.push(u);
                    stack.push(u);
                }
            }
        }
        seen.len() == subset.len()
    }

    #[test]
    fn triangle_order_two() {
        let pos = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let c = enumerate_clusters(&pos, 2, 2.0, 100).unwrap();
        assert_eq!(c, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn distant_pair_gives_singletons() {
        let pos = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0)];
        assert_eq!(enumerate_clusters(&pos, 2, 2.0, 100).unwrap(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pos: Vec<Vector3<f64>> = (0..20)
            .map(|_| Vector3::new(rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(0.0..6.0)))
            .collect();
        let r = 2.5;
        let got = enumerate_clusters(&pos, 3, r, 1_000_000).unwrap();
        let mut brute = Vec::new();
        for size in 1..=3 {
            for mask in 0u32..(1 << 20) {
                if mask.count_ones() as usize != size {
                    continue;
                }
                let subset: Vec<usize> = (0..20).filter(|b| mask >> b & 1 == 1).collect();
                if connected(&subset, &pos, r) {
                    brute.push(subset);
                }
            }
        }
        brute.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        assert_eq!(got, brute);
        assert!(got.iter().any(|c| c.len() == 3));
    }

    #[test]
    fn cap_is_enforced() {
        let pos: Vec<Vector3<f64>> = (0..12).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let err = enumerate_clusters(&pos, 4, 10.0, 50).unwrap_err();
        assert!(err.to_string().starts_with("cluster explosion: reduce radius or order"));
    }

    #[test]
    fn subclusters_of_complete_triangle() {
        let pos = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let c = enumerate_clusters(&pos, 3, 2.0, 100).unwrap();
        let subs = subcluster_table(&c);
        assert_eq!(subs[6], vec![0, 1, 2, 3, 4, 5]);
        assert!(subs[0].is_empty());
        assert_eq!(subs[3], vec![0, 1]);
    }
}
