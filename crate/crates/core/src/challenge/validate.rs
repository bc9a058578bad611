use std::collections::HashSet;
use std::fmt;

use super::ChallengeSpec;

/// One violated structural invariant of a challenge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagFinding {
    UndefinedSuccessor { level: String, successor: String },
    /// The same name listed twice in one `next`.
    DuplicateSuccessor { level: String, successor: String },
    /// Levels along the cycle, first one repeated at the end.
    Cycle { path: Vec<String> },
    Unreachable { level: String },
    NoReachableLeaf,
}

impl fmt::Display for DagFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UndefinedSuccessor { level, successor } => {
                write!(f, "undefined successor: level `{level}` lists `{successor}`")
            }
            Self::DuplicateSuccessor { level, successor } => {
                write!(f, "duplicate successor: level `{level}` lists `{successor}` more than once")
            }
            Self::Cycle { path } => write!(f, "cycle: {}", path.join(" -> ")),
            Self::Unreachable { level } => write!(f, "unreachable level `{level}`"),
            Self::NoReachableLeaf => write!(f, "no leaf level is reachable from the entry level"),
        }
    }
}

/// Checks every structural invariant and returns all violations.
/// An empty report means the challenge is a valid DAG.
pub fn validate_dag(spec: &ChallengeSpec) -> Vec<DagFinding> {
    let mut findings = Vec::new();

    for level in spec.levels() {
        let mut listed = HashSet::new();
        for succ in &level.next {
            if !listed.insert(succ.as_str()) {
                findings.push(DagFinding::DuplicateSuccessor {
                    level: level.name.clone(),
                    successor: succ.clone(),
                });
            }
            if !spec.contains(succ) {
                findings.push(DagFinding::UndefinedSuccessor {
                    level: level.name.clone(),
                    successor: succ.clone(),
                });
            }
        }
    }

    // Iterative DFS from the entry with white/grey/black colouring.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let levels = spec.levels();
    let position = |name: &str| levels.iter().position(|l| l.name == name);
    let mut mark = vec![Mark::New; levels.len()];
    let mut leaf_reachable = false;
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    let mut path: Vec<usize> = vec![0];
    mark[0] = Mark::Open;
    let mut reported_cycles: HashSet<Vec<String>> = HashSet::new();

    while let Some(top) = stack.last_mut() {
        let node = top.0;
        let next = &levels[node].next;
        if next.is_empty() {
            leaf_reachable = true;
        }
        if top.1 < next.len() {
            let succ = &next[top.1];
            top.1 += 1;
            let Some(target) = position(succ) else { continue };
            match mark[target] {
                Mark::New => {
                    mark[target] = Mark::Open;
                    stack.push((target, 0));
                    path.push(target);
                }
                Mark::Open => {
                    let start = path.iter().position(|&p| p == target).unwrap();
                    let mut cycle: Vec<String> =
                        path[start..].iter().map(|&i| levels[i].name.clone()).collect();
                    cycle.push(levels[target].name.clone());
                    if reported_cycles.insert(cycle.clone()) {
                        findings.push(DagFinding::Cycle { path: cycle });
                    }
                }
                Mark::Done => {}
            }
        } else {
            mark[node] = Mark::Done;
            stack.pop();
            path.pop();
        }
    }

    for (i, level) in levels.iter().enumerate() {
        if mark[i] == Mark::New {
            findings.push(DagFinding::Unreachable {
                level: level.name.clone(),
            });
        }
    }
    if !leaf_reachable {
        findings.push(DagFinding::NoReachableLeaf);
    }
    findings
}
