use serde::{Deserialize, Serialize};

use super::{FactoredMdp, FeatureSpace, FmdpError, NodeId, State};

pub const DEFAULT_FLATTEN_CAP: usize = 100_000;

/// An explicitly enumerated MDP over the joint values of a feature subset.
///
/// State `i` corresponds to the `i`-th assignment of `features` in mixed-radix
/// order. When `absorbing` is set, that extra final state self-loops and pays
/// its reward on every action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub features: Vec<usize>,
    pub radices: Vec<usize>,
    pub n_actions: usize,
    /// Sparse successor lists `transitions[s][a] = [(s', p)]`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
    pub absorbing: Option<usize>,
}

impl TabularMdp {
    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    /// Index of the tabular state that `state` projects onto.
    pub fn index_of(&self, state: &State) -> usize {
        self.features
            .iter()
            .zip(&self.radices)
            .fold(0, |acc, (&f, &d)| acc * d + state.get(f))
    }

    /// Values of the retained features for tabular state `index`.
    pub fn values_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.features.len()];
        for (slot, &d) in out.iter_mut().zip(&self.radices).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn probability(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[s][a]
            .iter()
            .filter(|(t, _)| *t == next)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Per-(state, action) content handed to [`tabulate`].
pub(crate) enum RowSpec {
    /// Next-value distribution for each retained feature, in order, and the
    /// expected reward.
    Known { rows: Vec<Vec<f64>>, reward: f64 },
    /// Routed to the absorbing state paying `absorbing_reward`.
    Unknown,
}

/// Enumerates the joint space of `features` and builds successor lists as
/// products of per-feature rows. The closure receives a full-length state
/// that is zero outside `features`.
pub(crate) fn tabulate(
    space: &FeatureSpace,
    features: &[usize],
    n_actions: usize,
    cap: usize,
    absorbing_reward: f64,
    mut spec: impl FnMut(&State, usize) -> RowSpec,
) -> Result<TabularMdp, FmdpError> {
    let states: u128 = features
        .iter()
        .map(|&f| space.domain_size(f) as u128)
        .product();
    if states > cap as u128 {
        return Err(FmdpError::CapExceeded { states, cap });
    }
    let n = states as usize;
    let radices: Vec<usize> = features.iter().map(|&f| space.domain_size(f)).collect();
    let mut transitions = Vec::with_capacity(n + 1);
    let mut rewards = Vec::with_capacity(n + 1);
    let mut unknown = Vec::new();
    for s in 0..n {
        let values = space.assignment_values(features, s);
        let state = space.state_with(features, &values);
        let mut per_action = Vec::with_capacity(n_actions);
        let mut reward_row = Vec::with_capacity(n_actions);
        for a in 0..n_actions {
            match spec(&state, a) {
                RowSpec::Known { rows, reward } => {
                    per_action.push(product_successors(&rows, &radices));
                    reward_row.push(reward);
                }
                RowSpec::Unknown => {
                    unknown.push((s, a));
                    per_action.push(Vec::new());
                    reward_row.push(absorbing_reward);
                }
            }
        }
        transitions.push(per_action);
        rewards.push(reward_row);
    }
    let absorbing = if unknown.is_empty() {
        None
    } else {
        let idx = n;
        for (s, a) in unknown {
            transitions[s][a] = vec![(idx, 1.0)];
        }
        transitions.push((0..n_actions).map(|_| vec![(idx, 1.0)]).collect());
        rewards.push(vec![absorbing_reward; n_actions]);
        Some(idx)
    };
    Ok(TabularMdp {
        features: features.to_vec(),
        radices,
        n_actions,
        transitions,
        rewards,
        absorbing,
    })
}

/// Joint successor distribution of independent per-feature rows, skipping
/// zero-probability branches.
fn product_successors(rows: &[Vec<f64>], radices: &[usize]) -> Vec<(usize, f64)> {
    let mut acc: Vec<(usize, f64)> = vec![(0, 1.0)];
    for (row, &d) in rows.iter().zip(radices) {
        let mut next = Vec::with_capacity(acc.len() * 2);
        for &(idx, p) in &acc {
            for (v, &q) in row.iter().enumerate() {
                if q > 0.0 {
                    next.push((idx * d + v, p * q));
                }
            }
        }
        acc = next;
    }
    acc
}

/// Enumerates `mdp` restricted to `features`: every retained feature and
/// every reward node must have all of its parents inside `features`.
pub fn flatten(mdp: &FactoredMdp, features: &[usize], cap: usize) -> Result<TabularMdp, FmdpError> {
    let mut fs = features.to_vec();
    fs.sort_unstable();
    fs.dedup();
    if let Some(&bad) = fs.iter().find(|&&f| f >= mdp.n_features()) {
        return Err(FmdpError::UnknownFeature(bad.to_string()));
    }
    let retained: Vec<NodeId> = fs
        .iter()
        .map(|&f| NodeId::Feature(f))
        .chain((0..mdp.rewards.len()).map(NodeId::Reward))
        .collect();
    for &node in &retained {
        for a in 0..mdp.n_actions() {
            for &p in mdp.cpt(node, a).parents.as_slice() {
                if fs.binary_search(&p).is_err() {
                    return Err(FmdpError::DanglingParent {
                        node: mdp.node_name(node).to_string(),
                        parent: mdp.space.name(p).to_string(),
                    });
                }
            }
        }
    }
    tabulate(
        &mdp.space,
        &fs,
        mdp.n_actions(),
        cap,
        mdp.r_max,
        |state, a| {
            let rows = fs
                .iter()
                .map(|&f| mdp.transitions[f][a].row(&mdp.space, state).to_vec())
                .collect();
            RowSpec::Known {
                rows,
                reward: mdp.expected_reward(state, a),
            }
        },
    )
}
