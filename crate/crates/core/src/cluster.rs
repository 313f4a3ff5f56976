//! K-medoids clustering of text fragments over cosine distance, plus medoid
//! selection of a representative completion.
//!
//! Everything here is deterministic: medoid initialization is farthest-first
//! traversal from the lexicographically smallest fragment, and every tie
//! breaks toward the lower index.

use thiserror::Error;

use crate::embed::{cosine_distance, Embedder};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input is empty")]
    Empty,
}

/// One cluster: member indices into the input slice and the medoid index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub medoid: usize,
    pub members: Vec<usize>,
}

const MAX_ITERATIONS: usize = 100;

fn distance_matrix<S: AsRef<str>>(texts: &[S], embedder: &dyn Embedder) -> Vec<Vec<f32>> {
    let vectors: Vec<Vec<f32>> = texts.iter().map(|t| embedder.embed(t.as_ref())).collect();
    let n = texts.len();
    let mut dist = vec![vec![0f32; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&vectors[i], &vectors[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    dist
}

/// Partition `fragments` into at most `m` clusters by k-medoids.
///
/// When fewer than `m` distinct fragments exist the effective cluster count
/// is lowered to that number. Returned clusters are sorted by medoid index;
/// each cluster's representative is its medoid.
pub fn cluster_fragments<S: AsRef<str>>(
    fragments: &[S],
    m: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<Cluster>, ClusterError> {
    if m == 0 {
        return Err(ClusterError::InvalidArgument("m must be >= 1".into()));
    }
    if fragments.is_empty() {
        return Err(ClusterError::Empty);
    }
    let n = fragments.len();
    let distinct = {
        let mut seen: Vec<&str> = Vec::new();
        for f in fragments {
            let f = f.as_ref();
            if !seen.contains(&f) {
                seen.push(f);
            }
        }
        seen.len()
    };
    let m = m.min(distinct);
    let dist = distance_matrix(fragments, embedder);

    // Farthest-first initialization from the lexicographically smallest
    // fragment (lowest index among duplicates).
    let mut medoids: Vec<usize> = Vec::with_capacity(m);
    let first = (0..n)
        .min_by(|&a, &b| {
            fragments[a]
                .as_ref()
                .cmp(fragments[b].as_ref())
                .then(a.cmp(&b))
        })
        .expect("non-empty input");
    medoids.push(first);
    while medoids.len() < m {
        let next = (0..n)
            .filter(|i| !medoids.contains(i))
            .max_by(|&a, &b| {
                let da = medoids.iter().map(|&c| dist[a][c]).fold(f32::MAX, f32::min);
                let db = medoids.iter().map(|&c| dist[b][c]).fold(f32::MAX, f32::min);
                da.partial_cmp(&db)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a)) // ties -> lower index
            })
            .expect("fewer medoids than points");
        medoids.push(next);
    }
    medoids.sort_unstable();

    let mut assignment = vec![0usize; n];
    for _ in 0..MAX_ITERATIONS {
        // Assign each point to its nearest medoid (ties -> lower medoid
        // ordinal); a medoid always belongs to its own cluster.
        for point in 0..n {
            if let Some(slot) = medoids.iter().position(|&c| c == point) {
                assignment[point] = slot;
                continue;
            }
            let mut best = 0usize;
            for (slot, &medoid) in medoids.iter().enumerate().skip(1) {
                if dist[point][medoid] < dist[point][medoids[best]] {
                    best = slot;
                }
            }
            assignment[point] = best;
        }

        // Recompute each cluster's medoid (ties -> lower index).
        let mut changed = false;
        for (slot, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&p| assignment[p] == slot).collect();
            let new_medoid = members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let ca: f32 = members.iter().map(|&p| dist[a][p]).sum();
                    let cb: f32 = members.iter().map(|&p| dist[b][p]).sum();
                    ca.partial_cmp(&cb)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                })
                .expect("clusters are never empty");
            if new_medoid != *medoid {
                *medoid = new_medoid;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut clusters: Vec<Cluster> = medoids
        .iter()
        .enumerate()
        .map(|(slot, &medoid)| Cluster {
            medoid,
            members: (0..n).filter(|&p| assignment[p] == slot).collect(),
        })
        .collect();
    clusters.sort_by_key(|c| c.medoid);
    Ok(clusters)
}

/// The medoid of a set of texts: the one minimizing summed cosine distance
/// to all others, ties broken by lowest index.
pub fn select_representative<S: AsRef<str>>(
    texts: &[S],
    embedder: &dyn Embedder,
) -> Result<usize, ClusterError> {
    if texts.is_empty() {
        return Err(ClusterError::Empty);
    }
    if texts.len() == 1 {
        return Ok(0);
    }
    let dist = distance_matrix(texts, embedder);
    let n = texts.len();
    Ok((0..n)
        .min_by(|&a, &b| {
            let ca: f32 = (0..n).map(|p| dist[a][p]).sum();
            let cb: f32 = (0..n).map(|p| dist[b][p]).sum();
            ca.partial_cmp(&cb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        })
        .expect("non-empty input"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedNgramEmbedder;

    fn embedder() -> HashedNgramEmbedder {
        HashedNgramEmbedder::default()
    }

    #[test]
    fn identical_fragments_collapse() {
        let frags: Vec<String> = vec!["same text".to_owned(); 6];
        let clusters = cluster_fragments(&frags, 2, &embedder()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members.len(), 6);
        assert_eq!(frags[clusters[0].medoid], "same text");
    }

    #[test]
    fn separates_two_obvious_groups() {
        let frags = ["aaaa", "aaab", "zzzz", "zzzy"];
        let clusters = cluster_fragments(&frags, 2, &embedder()).unwrap();
        assert_eq!(clusters.len(), 2);
        let mut groups: Vec<Vec<&str>> = clusters
            .iter()
            .map(|c| {
                let mut g: Vec<&str> = c.members.iter().map(|&i| frags[i]).collect();
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        assert_eq!(groups, vec![vec!["aaaa", "aaab"], vec!["zzzy", "zzzz"]]);
    }

    /// Exhaustive 2-partition oracle: the k-medoids result must cost no more
    /// than the best bipartition under summed within-cluster medoid distance.
    #[test]
    fn two_cluster_result_matches_exhaustive_partition() {
        let frags = ["aaaa", "aaab", "zzzz", "zzzy"];
        let emb = embedder();
        let vectors: Vec<Vec<f32>> = frags.iter().map(|f| emb.embed(f)).collect();
        let d = |a: usize, b: usize| cosine_distance(&vectors[a], &vectors[b]);

        let cost_of = |group: &[usize]| -> f32 {
            group
                .iter()
                .map(|&medoid| group.iter().map(|&p| d(medoid, p)).sum::<f32>())
                .fold(f32::MAX, f32::min)
        };
        let mut best_cost = f32::MAX;
        let mut best_partition = (vec![], vec![]);
        for mask in 0u32..8 {
            // index 0 fixed in group A to halve the symmetric space
            let a: Vec<usize> = std::iter::once(0)
                .chain((1..4).filter(|i| mask & (1 << (i - 1)) != 0))
                .collect();
            let b: Vec<usize> = (1..4).filter(|i| mask & (1 << (i - 1)) == 0).collect();
            if b.is_empty() {
                continue;
            }
            let cost = cost_of(&a) + cost_of(&b);
            if cost < best_cost {
                best_cost = cost;
                best_partition = (a, b);
            }
        }
        let mut oracle: Vec<Vec<&str>> = vec![
            best_partition.0.iter().map(|&i| frags[i]).collect(),
            best_partition.1.iter().map(|&i| frags[i]).collect(),
        ];
        for g in &mut oracle {
            g.sort();
        }
        oracle.sort();

        let clusters = cluster_fragments(&frags, 2, &emb).unwrap();
        let mut got: Vec<Vec<&str>> = clusters
            .iter()
            .map(|c| {
                let mut g: Vec<&str> = c.members.iter().map(|&i| frags[i]).collect();
                g.sort();
                g
            })
            .collect();
        got.sort();
        assert_eq!(got, oracle);
    }

    #[test]
    fn m_equal_to_count_gives_singletons() {
        let frags = ["alpha", "beta", "gamma"];
        let clusters = cluster_fragments(&frags, 3, &embedder()).unwrap();
        assert_eq!(clusters.len(), 3);
        for c in &clusters {
            assert_eq!(c.members, vec![c.medoid]);
        }
    }

    #[test]
    fn zero_m_is_an_error() {
        assert!(matches!(
            cluster_fragments(&["a"], 0, &embedder()),
            Err(ClusterError::InvalidArgument(_))
        ));
        let empty: [&str; 0] = [];
        assert!(matches!(
            cluster_fragments(&empty, 1, &embedder()),
            Err(ClusterError::Empty)
        ));
    }

    #[test]
    fn representative_of_singleton_is_itself() {
        assert_eq!(select_representative(&["only"], &embedder()).unwrap(), 0);
    }

    #[test]
    fn representative_majority_wins() {
        let texts = ["the same answer", "the same answer", "the same answer", "off in the weeds"];
        let idx = select_representative(&texts, &embedder()).unwrap();
        assert_eq!(texts[idx], "the same answer");
        assert_eq!(idx, 0, "ties break to the lowest ordinal");
    }

    /// Brute-force pairwise-distance oracle for the medoid choice.
    #[test]
    fn representative_matches_brute_force() {
        let texts = [
            "walk the grid twice and total it",
            "walk the grid twice and sum it",
            "a completely different musing",
        ];
        let emb = embedder();
        let vectors: Vec<Vec<f32>> = texts.iter().map(|t| emb.embed(t)).collect();
        let mut best = (f32::MAX, usize::MAX);
        for i in 0..texts.len() {
            let total: f32 = (0..texts.len())
                .map(|j| cosine_distance(&vectors[i], &vectors[j]))
                .sum();
            if total < best.0 {
                best = (total, i);
            }
        }
        assert_eq!(select_representative(&texts, &emb).unwrap(), best.1);
        // The two near-identical texts dominate; ordinal tie-break keeps it
        // within that pair.
        assert!(best.1 < 2);
    }
}
