//! Ward agglomeration of superpixel mean vectors and silhouette-based cuts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Tessellation;

use super::slic::SuperpixelMap;

pub const DEFAULT_K_MAX: usize = 6;
pub const DEFAULT_TAU: f64 = 0.5;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette width; singleton clusters score 0.
pub fn silhouette(values: &[Vec<f64>], labels: &[u32]) -> Result<f64> {
    let n = values.len();
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!("{} labels for {n} points", labels.len())));
    }
    let mut ids: Vec<u32> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least two clusters".into()));
    }
    let dist: Vec<Vec<f64>> = values
        .iter()
        .map(|a| values.iter().map(|b| euclidean(a, b)).collect())
        .collect();
    Ok(silhouette_from_distances(&dist, labels, &ids))
}

fn silhouette_from_distances(dist: &[Vec<f64>], labels: &[u32], ids: &[u32]) -> f64 {
    let n = labels.len();
    let slot = |l: u32| ids.binary_search(&l).expect("label listed");
    let mut sizes = vec![0usize; ids.len()];
    for &l in labels {
        sizes[slot(l)] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = slot(labels[i]);
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; ids.len()];
        for j in 0..n {
            sums[slot(labels[j])] += dist[i][j];
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..ids.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// One agglomeration step: clusters `a < b` merged at `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Ward linkage by Lance-Williams updates on squared Euclidean distances.
/// Clusters are identified by their lowest member index; ties merge the
/// lexicographically smallest pair.
pub fn ward_linkage(values: &[Vec<f64>]) -> Vec<Merge> {
    let n = values.len();
    let mut d: Vec<Vec<f64>> = values
        .iter()
        .map(|a| values.iter().map(|b| euclidean(a, b).powi(2)).collect())
        .collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && best.is_none_or(|(_, _, bd)| d[i][j] < bd) {
                    best = Some((i, j, d[i][j]));
                }
            }
        }
        let (i, j, dij) = best.expect("two active clusters");
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let (ni, nj, nk) = (size[i] as f64, size[j] as f64, size[k] as f64);
            let updated = ((ni + nk) * d[k][i] + (nj + nk) * d[k][j] - nk * dij) / (ni + nj + nk);
            d[k][i] = updated;
            d[i][k] = updated;
        }
        size[i] += size[j];
        active[j] = false;
        merges.push(Merge {
            a: i,
            b: j,
            height: dij.max(0.0).sqrt(),
        });
    }
    merges
}

/// Cluster ids `1..=k` after replaying merges until `k` clusters remain,
/// numbered by their lowest member.
pub fn cut(merges: &[Merge], n: usize, k: usize) -> Vec<u32> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in merges.iter().take(n.saturating_sub(k)) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        parent[rb] = ra;
    }
    let mut id_of_root = vec![0u32; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if id_of_root[r] == 0 {
                next += 1;
                id_of_root[r] = next;
            }
            id_of_root[r]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            tau: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k_star: usize,
    /// `(k, mean silhouette)` for `k = 2..=k_max`.
    pub silhouettes: Vec<(usize, f64)>,
    /// Cluster of every input vector, `1..=k_star`.
    pub assignment: Vec<u32>,
}

/// Ward clustering cut at the silhouette-maximizing `k`, or a single cluster
/// when no cut reaches `tau`.
pub fn cluster_values(values: &[Vec<f64>], params: &ClusterParams) -> Result<Clustering> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Precondition(format!("clustering needs at least two superpixels, got {n}")));
    }
    if params.k_max < 2 {
        return Err(Error::InvalidArgument(format!("k_max must be >= 2, got {}", params.k_max)));
    }
    let k_max = if n < params.k_max { n - 1 } else { params.k_max };
    let merges = ward_linkage(values);
    let dist: Vec<Vec<f64>> = values
        .iter()
        .map(|a| values.iter().map(|b| euclidean(a, b)).collect())
        .collect();
    let mut silhouettes = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for k in 2..=k_max {
        let labels = cut(&merges, n, k);
        let ids: Vec<u32> = (1..=k as u32).collect();
        let s = silhouette_from_distances(&dist, &labels, &ids);
        silhouettes.push((k, s));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    let k_star = match best {
        Some((k, s)) if s >= params.tau => k,
        _ => 1,
    };
    Ok(Clustering {
        k_star,
        assignment: cut(&merges, n, k_star),
        silhouettes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileIdentification {
    pub tessellation: Tessellation,
    pub clustering: Clustering,
}

/// Clusters superpixel mean vectors and paints the clusters back as tiles,
/// labelled in raster order of first appearance.
pub fn cluster_superpixels(sp: &SuperpixelMap, params: &ClusterParams) -> Result<TileIdentification> {
    let values: Vec<Vec<f64>> = sp.centers.iter().map(|c| c.values.clone()).collect();
    let clustering = cluster_values(&values, params)?;
    let mut tile_of_cluster = vec![0u32; clustering.k_star + 1];
    let mut next = 0;
    let labels: Vec<u32> = sp
        .labels
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0;
            }
            let c = clustering.assignment[l as usize - 1] as usize;
            if tile_of_cluster[c] == 0 {
                next += 1;
                tile_of_cluster[c] = next;
            }
            tile_of_cluster[c]
        })
        .collect();
    Ok(TileIdentification {
        tessellation: Tessellation::new(sp.grid, labels)?,
        clustering,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn separated_values_cut_in_two() {
        let c = cluster_values(&pts(&[0.0, 0.0, 0.0, 10.0, 10.0]), &ClusterParams::default()).unwrap();
        assert_eq!(c.k_star, 2);
        assert_eq!(c.assignment, vec![1, 1, 1, 2, 2]);
    }

    #[test]
    fn equal_values_give_one_cluster() {
        let c = cluster_values(&pts(&[3.0; 8]), &ClusterParams::default()).unwrap();
        assert_eq!(c.k_star, 1);
        assert!(c.assignment.iter().all(|&a| a == 1));
        assert!(c.silhouettes.iter().all(|&(_, s)| s <= 0.0));
    }

    #[test]
    fn small_input_lowers_k_max() {
        let c = cluster_values(&pts(&[0.0, 1.0, 5.0]), &ClusterParams::default()).unwrap();
        assert_eq!(c.silhouettes.len(), 1);
        assert!(cluster_values(&pts(&[1.0]), &ClusterParams::default()).is_err());
    }

    #[test]
    fn silhouette_simple_cases() {
        let v = pts(&[0.0, 0.0, 5.0, 5.0]);
        assert_eq!(silhouette(&v, &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(silhouette(&pts(&[0.0, 1.0]), &[1, 2]).unwrap(), 0.0);
        assert!(silhouette(&v, &[1, 1, 1, 1]).is_err());
    }

    #[test]
    fn silhouette_six_points_by_hand() {
        // clusters {0, 1, 3} and {7, 8, 10}
        let v = pts(&[0.0, 1.0, 3.0, 7.0, 8.0, 10.0]);
        let labels = [1, 1, 1, 2, 2, 2];
        let s = |a: f64, b: f64| (b - a) / a.max(b);
        let expected = (s(2.0, 25.0 / 3.0)
            + s(1.5, 22.0 / 3.0)
            + s(2.5, 16.0 / 3.0)
            + s(2.0, 17.0 / 3.0)
            + s(1.5, 20.0 / 3.0)
            + s(2.5, 26.0 / 3.0))
            / 6.0;
        assert!((silhouette(&v, &labels).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn ward_heights_match_centroid_formula() {
        // merging clusters of sizes n1, n2: height^2 = 2 n1 n2 / (n1 + n2) |c1 - c2|^2
        let m = ward_linkage(&pts(&[0.0, 1.0, 10.0]));
        assert_eq!((m[0].a, m[0].b), (0, 1));
        assert!((m[0].height - 1.0).abs() < 1e-12);
        let expected = (2.0 * 2.0 * 1.0 / 3.0 * 9.5f64.powi(2)).sqrt();
        assert!((m[1].height - expected).abs() < 1e-12);
    }
}
