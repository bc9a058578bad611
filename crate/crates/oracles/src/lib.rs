//! Reference computations kept deliberately separate from the production
//! code paths they check. Nothing here is optimised; everything is written
//! for obviousness.

use std::collections::{BTreeMap, BTreeSet};

/// Straight transcription of RFC 1321.
pub fn reference_md5(message: &[u8]) -> [u8; 16] {
    const S: [u32; 64] = [
        7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22, 5, 9, 14, 20, 5, 9, 14, 20, 5,
        9, 14, 20, 5, 9, 14, 20, 4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23, 6, 10,
        15, 21, 6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21,
    ];
    // K[i] = floor(abs(sin(i + 1)) * 2^32)
    let k: Vec<u32> = (0..64)
        .map(|i| (((i + 1) as f64).sin().abs() * 4294967296.0) as u32)
        .collect();

    let mut a0: u32 = 0x67452301;
    let mut b0: u32 = 0xefcdab89;
    let mut c0: u32 = 0x98badcfe;
    let mut d0: u32 = 0x10325476;

    let mut msg = message.to_vec();
    let bit_len = (message.len() as u64).wrapping_mul(8);
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&bit_len.to_le_bytes());

    for chunk in msg.chunks(64) {
        let m: Vec<u32> = chunk
            .chunks(4)
            .map(|w| u32::from_le_bytes([w[0], w[1], w[2], w[3]]))
            .collect();
        let (mut a, mut b, mut c, mut d) = (a0, b0, c0, d0);
        for i in 0..64 {
            let (f, g) = match i / 16 {
                0 => ((b & c) | (!b & d), i),
                1 => ((d & b) | (!d & c), (5 * i + 1) % 16),
                2 => (b ^ c ^ d, (3 * i + 5) % 16),
                _ => (c ^ (b | !d), (7 * i) % 16),
            };
            let f = f.wrapping_add(a).wrapping_add(k[i]).wrapping_add(m[g]);
            a = d;
            d = c;
            c = b;
            b = b.wrapping_add(f.rotate_left(S[i]));
        }
        a0 = a0.wrapping_add(a);
        b0 = b0.wrapping_add(b);
        c0 = c0.wrapping_add(c);
        d0 = d0.wrapping_add(d);
    }

    let mut out = [0u8; 16];
    out[..4].copy_from_slice(&a0.to_le_bytes());
    out[4..8].copy_from_slice(&b0.to_le_bytes());
    out[8..12].copy_from_slice(&c0.to_le_bytes());
    out[12..].copy_from_slice(&d0.to_le_bytes());
    out
}

pub fn reference_md5_hex(message: &[u8]) -> String {
    reference_md5(message)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Kahn's algorithm. Returns `None` when the graph has a cycle.
/// Edges to unknown nodes are ignored.
pub fn topological_order(edges: &BTreeMap<String, Vec<String>>) -> Option<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = edges.keys().map(|k| (k.as_str(), 0)).collect();
    for targets in edges.values() {
        for t in targets {
            if let Some(d) = indegree.get_mut(t.as_str()) {
                *d += 1;
            }
        }
    }
    let mut ready: Vec<&str> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut order = Vec::new();
    while let Some(node) = ready.pop() {
        order.push(node.to_string());
        for t in &edges[node] {
            if let Some(d) = indegree.get_mut(t.as_str()) {
                *d -= 1;
                if *d == 0 {
                    ready.push(t.as_str());
                }
            }
        }
    }
    (order.len() == edges.len()).then_some(order)
}

/// Jaccard distance computed with explicit set operations.
pub fn set_jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

/// Every partition of `0..n` into exactly `k` non-empty labelled groups,
/// canonicalised so the first occurrence of each label is increasing
/// (restricted growth strings).
pub fn all_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn grow(current: &mut Vec<usize>, max_label: usize, n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            if max_label == k {
                out.push(current.clone());
            }
            return;
        }
        let remaining = n - current.len();
        if max_label + remaining < k {
            return;
        }
        for label in 0..=max_label.min(k - 1) {
            current.push(label);
            grow(current, max_label.max(label + 1), n, k, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    grow(&mut Vec::with_capacity(n), 0, n, k, &mut out);
    out
}

/// Coordinate-wise mean of the selected rows.
pub fn mean_of(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for &m in members {
        for (acc, v) in mean.iter_mut().zip(&points[m]) {
            *acc += v;
        }
    }
    for acc in &mut mean {
        *acc /= members.len() as f64;
    }
    mean
}

/// Smallest possible sum of member-to-mean distances over every k-partition.
pub fn brute_force_objective(
    points: &[Vec<f64>],
    k: usize,
    distance: impl Fn(&[f64], &[f64]) -> f64,
) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, Vec::new());
    for labels in all_partitions(points.len(), k) {
        let objective = partition_objective(points, &labels, k, &distance);
        if objective < best.0 - 1e-12 {
            best = (objective, labels);
        }
    }
    best
}

pub fn partition_objective(
    points: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    distance: impl Fn(&[f64], &[f64]) -> f64,
) -> f64 {
    let mut total = 0.0;
    for cluster in 0..k {
        let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == cluster).collect();
        if members.is_empty() {
            continue;
        }
        let centroid = mean_of(points, &members);
        total += members
            .iter()
            .map(|&m| distance(&points[m], &centroid))
            .sum::<f64>();
    }
    total
}

/// A monitor event reduced to what the fold looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEvent {
    pub id: u128,
    /// Seconds since any fixed origin.
    pub at: i64,
    pub kind: &'static str,
    pub user: String,
    pub level: String,
    pub command: String,
    pub next_level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayedStudent {
    pub level: String,
    pub attempts: u32,
    pub last_command: String,
    pub last_activity: Option<i64>,
    pub help: bool,
    pub finished: bool,
    pub passed: BTreeSet<String>,
}

/// Sorts by (time, id), drops repeated ids (first one wins) and walks each
/// student's events. A command on a level other than the current one starts
/// a fresh attempt count there; a pass resets it and moves to the announced
/// next level; `exit` after any leaf pass means finished; acks are not
/// student activity.
pub fn replay_students(events: &[ReplayEvent]) -> BTreeMap<String, ReplayedStudent> {
    let mut seen = BTreeSet::new();
    let mut sorted: Vec<&ReplayEvent> = events.iter().filter(|e| seen.insert(e.id)).collect();
    sorted.sort_by_key(|e| (e.at, e.id));
    let mut out: BTreeMap<String, (ReplayedStudent, bool)> = BTreeMap::new();
    for e in sorted {
        let (x, leaf) = out.entry(e.user.clone()).or_insert_with(|| {
            (
                ReplayedStudent {
                    level: String::new(),
                    attempts: 0,
                    last_command: String::new(),
                    last_activity: None,
                    help: false,
                    finished: false,
                    passed: BTreeSet::new(),
                },
                false,
            )
        });
        if e.kind != "ack" {
            x.last_activity = Some(e.at);
        }
        match e.kind {
            "start" | "command" => {
                if x.level != e.level {
                    x.attempts = 0;
                    x.level = e.level.clone();
                }
                if e.kind == "command" {
                    x.attempts += 1;
                    x.last_command = e.command.clone();
                }
            }
            "passed" => {
                x.attempts = 0;
                x.passed.insert(e.level.clone());
                if !e.command.is_empty() {
                    x.last_command = e.command.clone();
                }
                match &e.next_level {
                    Some(n) => x.level = n.clone(),
                    None => {
                        x.level = e.level.clone();
                        *leaf = true;
                    }
                }
            }
            "exit" => x.finished |= *leaf,
            "help" => x.help = true,
            "ack" => x.help = false,
            other => panic!("unknown event kind {other}"),
        }
    }
    out.into_iter().map(|(u, (s, _))| (u, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md5_rfc_vectors() {
        assert_eq!(reference_md5_hex(b""), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(reference_md5_hex(b"abc"), "900150983cd24fb0d6963f7d28e17f72");
        assert_eq!(
            reference_md5_hex(b"12345678901234567890123456789012345678901234567890123456789012345678901234567890"),
            "57edf4a22be3c955ac49da2e2107b67a"
        );
    }

    #[test]
    fn partition_counts_are_stirling_numbers() {
        assert_eq!(all_partitions(4, 2).len(), 7);
        assert_eq!(all_partitions(5, 3).len(), 25);
        assert_eq!(all_partitions(8, 3).len(), 966);
        assert_eq!(all_partitions(3, 4).len(), 0);
    }

    #[test]
    fn topo_detects_cycle() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec!["b".to_string()]);
        g.insert("b".to_string(), vec!["a".to_string()]);
        assert!(topological_order(&g).is_none());
        g.insert("b".to_string(), vec![]);
        assert_eq!(topological_order(&g).unwrap(), vec!["a", "b"]);
    }
}
