//! The superset test and the feature elimination it drives.
//!
//! A candidate parent set `W` is contradicted when, for some assignment of
//! `W`, every well-visited extension to a superset `W' ⊋ W` estimated from
//! recent data disagrees with `W`'s own lifetime estimate by more than
//! `epsilon1` in L1.

use std::collections::{HashMap, VecDeque};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::estimator::{l1_distance, EliminationCause, LearnerBank};
use crate::fmdp::{
    enumerate_targets, FeatureSpace, FeatureValueVector, NodeId, ParentSet, Transition,
};

/// Transitions observed since the window was last reset, optionally capped
/// to the most recent `capacity`.
#[derive(Debug, Clone, Default)]
pub struct SupersetWindow {
    transitions: VecDeque<Transition>,
    capacity: Option<usize>,
}

impl SupersetWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// A window that keeps only the latest `capacity` transitions.
    pub fn sliding(capacity: usize) -> Self {
        Self {
            transitions: VecDeque::with_capacity(capacity),
            capacity: Some(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if let Some(cap) = self.capacity {
            if self.transitions.len() == cap {
                self.transitions.pop_front();
            }
        }
        self.transitions.push_back(t);
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersetVerdict {
    pub node: NodeId,
    pub action: usize,
    pub parent_set: ParentSet,
    pub witness_superset: ParentSet,
    /// Values of the witness superset at which the disagreement was
    /// smallest, as `(feature, value)` pairs.
    pub witness_assignment: Vec<(usize, usize)>,
    /// Smallest L1 gap among the compared extensions.
    pub l1_gap: f64,
}

impl SupersetVerdict {
    pub fn render(&self, space: &FeatureSpace, node_name: &str, action_name: &str) -> String {
        let witness = self
            .witness_assignment
            .iter()
            .map(|&(f, v)| format!("{}={v}", space.name(f)))
            .join(",");
        format!(
            "superset:{node_name}/{action_name}:{}<{}@{witness}:{:.6}",
            space.render_features(self.parent_set.as_slice()),
            space.render_features(self.witness_superset.as_slice()),
            self.l1_gap
        )
    }
}

/// Outcome counts over the assignments of `superset` for one node/action.
fn window_counts(
    space: &FeatureSpace,
    window: &[&Transition],
    node: NodeId,
    superset: &[usize],
    outcomes: usize,
) -> HashMap<usize, Vec<u64>> {
    let mut counts: HashMap<usize, Vec<u64>> = HashMap::new();
    for t in window {
        let cell = space.assignment_index(superset, &t.state);
        counts.entry(cell).or_insert_with(|| vec![0; outcomes])[t.outcome(node)] += 1;
    }
    counts
}

fn normalized(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Runs the superset test for every surviving candidate of every learner,
/// eliminating contradicted candidates. Supersets are drawn from `active`
/// and have at most `2k` features.
pub fn superset_test(
    space: &FeatureSpace,
    learners: &mut LearnerBank,
    window: &SupersetWindow,
    active: &[usize],
) -> Vec<SupersetVerdict> {
    let cfg = learners.cfg();
    let (m, eps, max_size) = (cfg.m, cfg.epsilon1, 2 * cfg.k);
    let mut active = active.to_vec();
    active.sort_unstable();
    active.dedup();
    let mut verdicts = Vec::new();
    let nodes: Vec<NodeId> = learners.iter().map(|l| l.node).collect();
    for node in nodes {
        let learner = learners.get(node);
        let outcomes = learner.outcomes;
        let mut doomed = Vec::new();
        for action in 0..learner.n_actions() {
            let by_action: Vec<&Transition> =
                window.iter().filter(|t| t.action == action).collect();
            if by_action.is_empty() {
                continue;
            }
            let mut cache: HashMap<ParentSet, HashMap<usize, Vec<u64>>> = HashMap::new();
            for (idx, cand) in learner.survivors(action).iter().enumerate() {
                let w = cand.parents.as_slice();
                let extra: Vec<usize> = active
                    .iter()
                    .copied()
                    .filter(|f| !cand.parents.contains(*f))
                    .collect();
                let room = max_size.saturating_sub(w.len()).min(extra.len());
                let mut found: Option<SupersetVerdict> = None;
                'supersets: for j in 1..=room {
                    for add in extra.iter().copied().combinations(j) {
                        let sup = cand.parents.union(&ParentSet::new(add.iter().copied()));
                        let counts = cache.entry(sup.clone()).or_insert_with(|| {
                            window_counts(space, &by_action, node, sup.as_slice(), outcomes)
                        });
                        // Group the m-visited superset cells by the W-assignment they extend.
                        let mut per_w: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
                        for (&cell, c) in counts.iter() {
                            if c.iter().sum::<u64>() < m {
                                continue;
                            }
                            let values = space.assignment_values(sup.as_slice(), cell);
                            let state = space.state_with(sup.as_slice(), &values);
                            let w_cell = cand.cell(space, &state);
                            if cand.visits(w_cell) < m {
                                continue;
                            }
                            let mle = cand.mle(w_cell).expect("visited cell");
                            per_w
                                .entry(w_cell)
                                .or_default()
                                .push((cell, l1_distance(&mle, &normalized(c))));
                        }
                        let mut w_cells: Vec<_> = per_w.into_iter().collect();
                        w_cells.sort_unstable_by_key(|(w_cell, _)| *w_cell);
                        for (_, mut gaps) in w_cells {
                            if gaps.iter().all(|&(_, g)| g > eps) {
                                gaps.sort_unstable_by_key(|&(cell, _)| cell);
                                let &(cell, gap) = gaps
                                    .iter()
                                    .min_by(|a, b| a.1.total_cmp(&b.1))
                                    .expect("nonempty gaps");
                                let values = space.assignment_values(sup.as_slice(), cell);
                                found = Some(SupersetVerdict {
                                    node,
                                    action,
                                    parent_set: cand.parents.clone(),
                                    witness_assignment: sup
                                        .as_slice()
                                        .iter()
                                        .copied()
                                        .zip(values)
                                        .collect(),
                                    witness_superset: sup,
                                    l1_gap: gap,
                                });
                                break 'supersets;
                            }
                        }
                    }
                }
                if let Some(v) = found {
                    doomed.push((action, idx, v));
                }
            }
        }
        let learner = learners.get_mut(node);
        // Remove from the back so earlier indices stay valid.
        for (action, idx, v) in doomed.into_iter().rev() {
            learner.eliminate(
                action,
                idx,
                EliminationCause::Superset {
                    witness: v.witness_superset.clone(),
                    l1_gap: v.l1_gap,
                },
            );
            verdicts.push(v);
        }
    }
    verdicts
        .sort_by(|a, b| (a.node, a.action, &a.parent_set).cmp(&(b.node, b.action, &b.parent_set)));
    verdicts
}

/// An exploration target and how often it has been visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub g: FeatureValueVector,
    pub visits: u64,
}

pub fn fresh_targets(space: &FeatureSpace, active: &[usize], k: usize) -> Vec<Target> {
    enumerate_targets(space, active, k)
        .into_iter()
        .map(|g| Target { g, visits: 0 })
        .collect()
}

/// Removes features whose transition learner lost every candidate for some
/// action, drops candidates mentioning them (repeating while that kills
/// further features), and rebuilds the targets over the survivors. Targets
/// that survive unchanged keep their visit counts.
pub fn shrink_active(
    space: &FeatureSpace,
    active: &[usize],
    learners: &mut LearnerBank,
    targets: &[Target],
) -> (Vec<usize>, Vec<Target>, Vec<usize>) {
    let mut remaining = active.to_vec();
    let mut removed = Vec::new();
    loop {
        let dead = learners.dead_features(&remaining);
        if dead.is_empty() {
            break;
        }
        for f in dead {
            remaining.retain(|&x| x != f);
            learners.drop_feature(f);
            removed.push(f);
        }
    }
    if removed.is_empty() {
        return (remaining, targets.to_vec(), removed);
    }
    let k = learners.cfg().k;
    let old: HashMap<&FeatureValueVector, u64> = targets.iter().map(|t| (&t.g, t.visits)).collect();
    let rebuilt = fresh_targets(space, &remaining, k)
        .into_iter()
        .map(|mut t| {
            t.visits = old.get(&t.g).copied().unwrap_or(0);
            t
        })
        .collect();
    (remaining, rebuilt, removed)
}
