//! Grouping learners' solutions: bag-of-words presence vectors, Jaccard and
//! cosine distances, K-means with a user-chosen K, and a t-SNE projection
//! onto the plane for the scatter view.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("no solutions to analyse")]
    EmptyCorpus,
    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("t-SNE needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} is infeasible for {n} points (needs 1 <= perplexity < {n} - 1)")]
    Perplexity { perplexity: f64, n: usize },
}

/// Whitespace-separated tokens of a command, unnormalised.
pub fn tokenize(command: &str) -> Vec<&str> {
    command.split_whitespace().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionVector {
    pub command: String,
    /// Tokens in command order, repeats kept.
    pub tokens: Vec<String>,
    /// 1.0 where the vocabulary token occurs in the command, else 0.0.
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    /// Sorted distinct tokens.
    pub vocabulary: Vec<String>,
    pub vectors: Vec<SolutionVector>,
}

/// One presence vector per solution over the sorted vocabulary of all of them.
pub fn vectorize<S: AsRef<str>>(solutions: &[S]) -> Result<Corpus, AnalyticsError> {
    if solutions.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let vocabulary: Vec<String> = solutions
        .iter()
        .flat_map(|s| tokenize(s.as_ref()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let position: BTreeMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let vectors = solutions
        .iter()
        .map(|s| {
            let tokens = tokenize(s.as_ref());
            let mut vector = vec![0.0; vocabulary.len()];
            for t in &tokens {
                vector[position[t]] = 1.0;
            }
            SolutionVector {
                command: s.as_ref().to_string(),
                tokens: tokens.into_iter().map(str::to_string).collect(),
                vector,
            }
        })
        .collect();
    Ok(Corpus { vocabulary, vectors })
}

/// Coordinates counted as present when treating a real vector as a set.
/// Mean centroids are thresholded here: a token belongs to the centroid
/// when at least half its members use it.
pub const PRESENCE_THRESHOLD: f64 = 0.5;

/// `1 - |A ∩ B| / |A ∪ B|` over the present coordinates; 0 when both are empty.
pub fn jaccard_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        let (p, q) = (*x >= PRESENCE_THRESHOLD, *y >= PRESENCE_THRESHOLD);
        inter += usize::from(p && q);
        union += usize::from(p || q);
    }
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// `1 - a·b / (|a||b|)`, clamped to `[0, 1]`; 1 when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Jaccard,
    Cosine,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Jaccard => jaccard_distance(a, b),
            Distance::Cosine => cosine_distance(a, b),
        }
    }
}

impl FromStr for Distance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(Distance::Jaccard),
            "cosine" => Ok(Distance::Cosine),
            other => Err(format!("unknown distance `{other}` (expected jaccard or cosine)")),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::Jaccard => "jaccard",
            Distance::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub k: usize,
    /// Cluster index of each input vector.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Stopped because a mean update would have raised the objective; the
    /// centroids are then the last ones that did not.
    pub halted_on_increase: bool,
    /// Sum of member-to-centroid distances after each iteration.
    pub objective_trace: Vec<f64>,
}

impl Clustering {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

fn distinct_count(vectors: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for v in vectors {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.len()
}

fn mean(vectors: &[Vec<f64>], members: impl Iterator<Item = usize>) -> Option<Vec<f64>> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for m in members {
        for (a, v) in acc.iter_mut().zip(&vectors[m]) {
            *a += v;
        }
        n += 1;
    }
    (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
}

/// Index of the minimum, first one on ties.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn assign(vectors: &[Vec<f64>], centroids: &[Vec<f64>], distance: Distance) -> Vec<usize> {
    vectors
        .iter()
        .map(|v| argmin(centroids.iter().map(|c| distance.eval(v, c))))
        .collect()
}

fn objective(vectors: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize], distance: Distance) -> f64 {
    vectors
        .iter()
        .zip(assignments)
        .map(|(v, &a)| distance.eval(v, &centroids[a]))
        .sum()
}

/// Distance-weighted seeding: the first centre uniformly, each further one
/// with probability proportional to its squared distance to the nearest
/// centre chosen so far.
fn seed_centroids(vectors: &[Vec<f64>], k: usize, distance: Distance, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..vectors.len())];
    while chosen.len() < k {
        let weights: Vec<f64> = vectors
            .iter()
            .map(|v| {
                let d = chosen.iter().map(|&c| distance.eval(v, &vectors[c])).fold(f64::INFINITY, f64::min);
                d * d
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    pick = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            pick
        } else {
            None
        };
        // Fall back to the first point not equal to a chosen centre.
        let pick = pick.or_else(|| {
            (0..vectors.len()).find(|&i| chosen.iter().all(|&c| vectors[c] != vectors[i]))
        });
        match pick {
            Some(p) => chosen.push(p),
            None => break,
        }
    }
    chosen.into_iter().map(|c| vectors[c].clone()).collect()
}

/// Lloyd-style K-means under the chosen distance with mean centroids.
pub fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    distance: Distance,
    max_iterations: usize,
    seed: u64,
) -> Result<Clustering, AnalyticsError> {
    if vectors.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let distinct = distinct_count(vectors);
    if k == 0 || k > distinct {
        return Err(AnalyticsError::KOutOfRange { k, max: distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(vectors, k, distance, &mut rng);
    let mut assignments = assign(vectors, &centroids, distance);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let mut current = objective(vectors, &centroids, &assignments, distance);
    let mut halted_on_increase = false;

    while iterations < max_iterations.max(1) {
        iterations += 1;
        let mut updated = centroids.clone();
        for (c, centroid) in updated.iter_mut().enumerate() {
            match mean(vectors, (0..vectors.len()).filter(|&i| assignments[i] == c)) {
                Some(m) => *centroid = m,
                None => {
                    // Re-seed an emptied cluster with the point farthest
                    // from where it used to be.
                    let far = argmin(vectors.iter().map(|v| -distance.eval(v, centroid)));
                    *centroid = vectors[far].clone();
                }
            }
        }
        // The mean only minimises squared Euclidean error, so under Jaccard
        // or cosine it can make things worse. Keep the better centroids.
        let after_update = objective(vectors, &updated, &assignments, distance);
        if after_update > current + 1e-12 {
            halted_on_increase = true;
            trace.push(current);
            break;
        }
        centroids = updated;
        let next = assign(vectors, &centroids, distance);
        current = objective(vectors, &centroids, &next, distance);
        trace.push(current);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    Ok(Clustering {
        k,
        assignments,
        centroids,
        iterations_used: iterations,
        converged,
        halted_on_increase,
        objective_trace: trace,
    })
}

/// Restarts used when grouping solutions for the dashboard.
pub const DEFAULT_RESTARTS: usize = 10;

/// Runs [`kmeans`] from `restarts` seeds derived from `seed` and keeps the
/// lowest objective (earliest run on ties).
pub fn kmeans_restarts(
    vectors: &[Vec<f64>],
    k: usize,
    distance: Distance,
    max_iterations: usize,
    seed: u64,
    restarts: usize,
) -> Result<Clustering, AnalyticsError> {
    let mut best: Option<Clustering> = None;
    for r in 0..restarts.max(1) as u64 {
        let run = kmeans(vectors, k, distance, max_iterations, seed.wrapping_add(r.wrapping_mul(0x9e37_79b9_7f4a_7c15)))?;
        if best.as_ref().is_none_or(|b| run.objective() < b.objective() - 1e-12) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 5.0,
            iterations: 500,
            learning_rate: 100.0,
            early_exaggeration: 4.0,
            exaggeration_iterations: 100,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection2D {
    pub points: Vec<[f64; 2]>,
    /// KL(P || Q) after each iteration, measured against the unexaggerated P.
    pub kl_trace: Vec<f64>,
    /// Entropy in bits of each point's conditional distribution.
    pub entropies: Vec<f64>,
    /// All inputs identical: every point is placed at the origin.
    pub degenerate: bool,
}

/// Per-point conditional affinities `p(j|i)` with Gaussian bandwidths found
/// by bisection so that each row has entropy `log2(perplexity)` bits.
/// Returns the rows and their entropies.
pub fn conditional_affinities(sq_distances: &[Vec<f64>], perplexity: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = sq_distances.len();
    let target = perplexity.log2();
    let mut rows = vec![vec![0.0; n]; n];
    let mut entropies = vec![0.0; n];

    let row_for = |i: usize, beta: f64, row: &mut [f64]| -> f64 {
        // Shift by the smallest distance so at least one weight is 1.
        let dmin = (0..n).filter(|&j| j != i).map(|j| sq_distances[i][j]).fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for j in 0..n {
            row[j] = if j == i { 0.0 } else { (-(sq_distances[i][j] - dmin) * beta).exp() };
            sum += row[j];
        }
        let mut h = 0.0;
        for p in row.iter_mut() {
            *p /= sum;
            if *p > 0.0 {
                h -= *p * p.log2();
            }
        }
        h
    };

    for i in 0..n {
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = row_for(i, beta, &mut rows[i]);
        for _ in 0..200 {
            if (h - target).abs() < 1e-10 {
                break;
            }
            if h > target {
                // Too flat: sharpen.
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = row_for(i, beta, &mut rows[i]);
        }
        entropies[i] = h;
    }
    (rows, entropies)
}

fn squared_distances(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|a| vectors.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()).collect())
        .collect()
}

fn kl_divergence(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut kl = 0.0;
    for (pr, qr) in p.iter().zip(q) {
        for (&pij, &qij) in pr.iter().zip(qr) {
            if pij > 0.0 {
                kl += pij * (pij / qij.max(1e-300)).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE onto two dimensions.
pub fn tsne_project(vectors: &[Vec<f64>], params: &TsneParams, seed: u64) -> Result<Projection2D, AnalyticsError> {
    let n = vectors.len();
    if n < 3 {
        return Err(AnalyticsError::TooFewPoints(n));
    }
    if vectors.iter().all(|v| v == &vectors[0]) {
        return Ok(Projection2D {
            points: vec![[0.0, 0.0]; n],
            kl_trace: Vec::new(),
            entropies: vec![((n - 1) as f64).log2(); n],
            degenerate: true,
        });
    }

    let perplexity = params.perplexity;
    if !(perplexity >= 1.0 && perplexity < (n - 1) as f64) {
        return Err(AnalyticsError::Perplexity { perplexity, n });
    }

    let (cond, entropies) = conditional_affinities(&squared_distances(vectors), perplexity);
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i][j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0_f64; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(params.iterations);
    let mut num = vec![vec![0.0; n]; n];
    let mut q = vec![vec![0.0; n]; n];

    for iter in 0..params.iterations {
        let exaggeration = if iter < params.exaggeration_iterations { params.early_exaggeration } else { 1.0 };
        let momentum = if iter < params.momentum_switch { params.initial_momentum } else { params.final_momentum };

        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                num[i][j] = if i == j {
                    0.0
                } else {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
                total += num[i][j];
            }
        }
        for i in 0..n {
            for j in 0..n {
                q[i][j] = (num[i][j] / total).max(1e-12);
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                let mult = 4.0 * (exaggeration * p[i][j] - q[i][j]) * num[i][j];
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                let same_sign = (grad[d] > 0.0) == (velocity[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                velocity[i][d] = momentum * velocity[i][d] - params.learning_rate * gains[i][d] * grad[d];
            }
        }
        for i in 0..n {
            y[i][0] += velocity[i][0];
            y[i][1] += velocity[i][1];
        }
        let cx = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        for pt in &mut y {
            pt[0] -= cx;
            pt[1] -= cy;
        }

        // KL of the updated layout.
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                num[i][j] = if i == j {
                    0.0
                } else {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
                total += num[i][j];
            }
        }
        for i in 0..n {
            for j in 0..n {
                q[i][j] = (num[i][j] / total).max(1e-12);
            }
        }
        kl_trace.push(kl_divergence(&p, &q));
    }

    Ok(Projection2D {
        points: y,
        kl_trace,
        entropies,
        degenerate: false,
    })
}

/// One submitted solution with its author.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub user: String,
    pub level: String,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMember {
    pub user: String,
    pub level: String,
    pub command: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionCluster {
    pub index: usize,
    pub centroid: Vec<f64>,
    pub members: Vec<GroupMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionGroups {
    pub k_requested: usize,
    pub k: usize,
    pub distance: Distance,
    pub vocabulary: Vec<String>,
    pub clusters: Vec<SolutionCluster>,
    /// `tsne`, `circle` (too few distinct solutions) or `degenerate`.
    pub layout: String,
    pub warnings: Vec<String>,
}

/// Fewest distinct solutions for which the t-SNE layout is used.
pub const MIN_TSNE_POINTS: usize = 5;

/// Vectorises, clusters and lays out a set of submissions. `k` is clamped
/// to the number of distinct solutions, with a warning.
pub fn group_solutions(
    submissions: &[Submission],
    k: usize,
    distance: Distance,
    seed: u64,
) -> Result<SolutionGroups, AnalyticsError> {
    let commands: Vec<&str> = submissions.iter().map(|s| s.command.as_str()).collect();
    let corpus = vectorize(&commands)?;
    let vectors: Vec<Vec<f64>> = corpus.vectors.iter().map(|v| v.vector.clone()).collect();

    let mut distinct: Vec<Vec<f64>> = Vec::new();
    let mut slot = Vec::with_capacity(vectors.len());
    for v in &vectors {
        let at = distinct.iter().position(|d| d == v).unwrap_or_else(|| {
            distinct.push(v.clone());
            distinct.len() - 1
        });
        slot.push(at);
    }

    let mut warnings = Vec::new();
    let k_used = k.clamp(1, distinct.len());
    if k_used != k {
        warnings.push(format!(
            "k = {k} clamped to {k_used}: only {} distinct solution(s)",
            distinct.len()
        ));
    }
    let clustering = kmeans_restarts(&vectors, k_used, distance, 100, seed, DEFAULT_RESTARTS)?;

    let (coords, layout): (Vec<[f64; 2]>, &str) = if distinct.len() >= MIN_TSNE_POINTS {
        let n = distinct.len();
        let mut params = TsneParams::default();
        params.perplexity = params.perplexity.min((n - 1) as f64 / 3.0).max(1.0);
        let proj = tsne_project(&distinct, &params, seed)?;
        (proj.points, if proj.degenerate { "degenerate" } else { "tsne" })
    } else if distinct.len() == 1 {
        (vec![[0.0, 0.0]], "degenerate")
    } else {
        let n = distinct.len() as f64;
        let pts = (0..distinct.len())
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n;
                [a.cos(), a.sin()]
            })
            .collect();
        (pts, "circle")
    };

    let mut clusters: Vec<SolutionCluster> = clustering
        .centroids
        .iter()
        .enumerate()
        .map(|(index, c)| SolutionCluster {
            index,
            centroid: c.clone(),
            members: Vec::new(),
        })
        .collect();
    for (i, s) in submissions.iter().enumerate() {
        let [x, y] = coords[slot[i]];
        clusters[clustering.assignments[i]].members.push(GroupMember {
            user: s.user.clone(),
            level: s.level.clone(),
            command: s.command.clone(),
            x,
            y,
        });
    }
    Ok(SolutionGroups {
        k_requested: k,
        k: k_used,
        distance,
        vocabulary: corpus.vocabulary,
        clusters,
        layout: layout.to_string(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorize_example() {
        let c = vectorize(&["ls -la", "ls"]).unwrap();
        assert_eq!(c.vocabulary, ["-la", "ls"]);
        assert_eq!(c.vectors[0].vector, [1.0, 1.0]);
        assert_eq!(c.vectors[1].vector, [0.0, 1.0]);
        assert_eq!(vectorize::<&str>(&[]), Err(AnalyticsError::EmptyCorpus));
    }

    #[test]
    fn distance_hand_cases() {
        assert_eq!(jaccard_distance(&[1.0, 1.0], &[0.0, 1.0]), 0.5);
        assert_eq!(jaccard_distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(jaccard_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        let c = cosine_distance(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!((c - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(cosine_distance(&[0.0, 1.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn kmeans_k1_is_global_mean() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let c = kmeans(&v, 1, Distance::Cosine, 10, 3).unwrap();
        assert_eq!(c.assignments, [0, 0, 0]);
        assert_eq!(c.centroids[0], [2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn kmeans_k_equals_n_is_exact() {
        let v = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        for d in [Distance::Jaccard, Distance::Cosine] {
            let c = kmeans(&v, 3, d, 10, 1).unwrap();
            assert_eq!(c.objective(), 0.0);
            let mut a = c.assignments.clone();
            a.sort();
            assert_eq!(a, [0, 1, 2]);
        }
    }

    #[test]
    fn k_out_of_range() {
        let v = vec![vec![1.0], vec![1.0]];
        assert_eq!(kmeans(&v, 2, Distance::Jaccard, 10, 0), Err(AnalyticsError::KOutOfRange { k: 2, max: 1 }));
        assert!(kmeans(&v, 0, Distance::Jaccard, 10, 0).is_err());
    }

    #[test]
    fn tsne_preconditions_and_degenerate() {
        let two = vec![vec![0.0], vec![1.0]];
        assert_eq!(tsne_project(&two, &TsneParams::default(), 0), Err(AnalyticsError::TooFewPoints(2)));
        let three = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(tsne_project(&three, &TsneParams::default(), 0), Err(AnalyticsError::Perplexity { .. })));
        let same = vec![vec![1.0, 0.0]; 6];
        let p = tsne_project(&same, &TsneParams::default(), 0).unwrap();
        assert!(p.degenerate);
        assert!(p.points.iter().all(|q| *q == [0.0, 0.0]));
    }

    #[test]
    fn tsne_near_pair_stays_near() {
        let v = vec![vec![0.0, 0.0, 0.0], vec![0.05, 0.0, 0.0], vec![5.0, 5.0, 5.0]];
        let params = TsneParams { perplexity: 1.5, ..TsneParams::default() };
        let p = tsne_project(&v, &params, 11).unwrap();
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let near = d(p.points[0], p.points[1]);
        assert!(near < d(p.points[0], p.points[2]));
        assert!(near < d(p.points[1], p.points[2]));
        assert!(p.points.iter().all(|q| q[0].is_finite() && q[1].is_finite()));
    }

    #[test]
    fn groups_clamp_and_circle_layout() {
        let subs: Vec<Submission> = ["ls", "ls", "ls -la"]
            .iter()
            .enumerate()
            .map(|(i, c)| Submission { user: format!("u{i}"), level: "l".into(), command: c.to_string() })
            .collect();
        let g = group_solutions(&subs, 5, Distance::Jaccard, 1).unwrap();
        assert_eq!(g.k, 2);
        assert_eq!(g.warnings.len(), 1);
        assert_eq!(g.layout, "circle");
        assert_eq!(g.clusters.iter().map(|c| c.members.len()).sum::<usize>(), 3);
    }
}
