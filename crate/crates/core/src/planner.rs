//! Optimistic model assembly and finite-horizon value iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{LearnerBank, Prediction};
use crate::fmdp::{
    matches, tabulate, FactoredMdp, FeatureSpace, FeatureValueVector, FmdpError, NodeId, ParentSet,
    RowSpec, State, TabularMdp, DEFAULT_FLATTEN_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Backup depth of value iteration.
    pub horizon: usize,
    /// Actions within this much of the best Q value count as tied.
    pub vi_tolerance: f64,
    /// Largest number of candidate combinations evaluated exhaustively.
    pub enumeration_cap: usize,
    pub r_max: f64,
    pub flatten_cap: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            vi_tolerance: 1e-9,
            enumeration_cap: 256,
            r_max: 1.0,
            flatten_cap: DEFAULT_FLATTEN_CAP,
        }
    }
}

/// What the agent knows about a domain without its dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub space: FeatureSpace,
    pub n_actions: usize,
    /// Outcome values of each reward node.
    pub reward_values: Vec<Vec<f64>>,
    pub r_max: f64,
}

impl ModelShape {
    pub fn of(mdp: &FactoredMdp) -> Self {
        Self {
            space: mdp.space.clone(),
            n_actions: mdp.n_actions(),
            reward_values: mdp.rewards.iter().map(|r| r.outcomes.clone()).collect(),
            r_max: mdp.r_max,
        }
    }

    pub fn reward_arity(&self) -> Vec<usize> {
        self.reward_values.iter().map(Vec::len).collect()
    }
}

/// A table over `parents` whose rows may be unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub parents: ParentSet,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl NodeModel {
    pub fn from_fn(
        space: &FeatureSpace,
        parents: ParentSet,
        mut row: impl FnMut(&State) -> Option<Vec<f64>>,
    ) -> Self {
        let n = space
            .assignment_count(parents.as_slice())
            .expect("node model too large");
        let rows = (0..n)
            .map(|i| {
                let values = space.assignment_values(parents.as_slice(), i);
                row(&space.state_with(parents.as_slice(), &values))
            })
            .collect();
        Self { parents, rows }
    }

    pub fn unknown() -> Self {
        Self {
            parents: ParentSet::empty(),
            rows: vec![None],
        }
    }

    pub fn row(&self, space: &FeatureSpace, state: &State) -> Option<&[f64]> {
        self.rows[space.assignment_index(self.parents.as_slice(), state)].as_deref()
    }

    pub fn unknown_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }
}

/// A fully specified factored model over `features`, with unknown rows
/// routed to an absorbing state paying `r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticModel {
    pub features: Vec<usize>,
    /// `transitions[i][a]` models `features[i]`.
    pub transitions: Vec<Vec<NodeModel>>,
    /// `rewards[j][a]` models reward node `j`.
    pub rewards: Vec<Vec<NodeModel>>,
    pub reward_values: Vec<Vec<f64>>,
    /// When set, the reward is `r_max` exactly at states matching it.
    pub target: Option<FeatureValueVector>,
    pub r_max: f64,
}

impl OptimisticModel {
    pub fn n_actions(&self) -> usize {
        self.transitions
            .first()
            .or(self.rewards.first())
            .map_or(0, Vec::len)
    }

    pub fn unknown_count(&self) -> usize {
        let relevant_rewards = if self.target.is_some() {
            &[][..]
        } else {
            &self.rewards[..]
        };
        self.transitions
            .iter()
            .chain(relevant_rewards)
            .flatten()
            .map(NodeModel::unknown_count)
            .sum()
    }

    /// Enumerates the model over its features.
    pub fn to_tabular(&self, space: &FeatureSpace, cap: usize) -> Result<TabularMdp, FmdpError> {
        let n_actions = self.n_actions();
        tabulate(
            space,
            &self.features,
            n_actions,
            cap,
            self.r_max,
            |state, a| {
                let mut rows = Vec::with_capacity(self.features.len());
                for per_action in &self.transitions {
                    match per_action[a].row(space, state) {
                        Some(r) => rows.push(r.to_vec()),
                        None => return RowSpec::Unknown,
                    }
                }
                let reward = match &self.target {
                    Some(g) => {
                        if matches(state, g) {
                            self.r_max
                        } else {
                            0.0
                        }
                    }
                    None => {
                        let mut total = 0.0;
                        for (per_action, values) in self.rewards.iter().zip(&self.reward_values) {
                            match per_action[a].row(space, state) {
                                Some(r) => {
                                    total += r.iter().zip(values).map(|(p, v)| p * v).sum::<f64>()
                                }
                                None => return RowSpec::Unknown,
                            }
                        }
                        total
                    }
                };
                RowSpec::Known { rows, reward }
            },
        )
    }
}

/// Replaces the reward with `r_max` at states matching `g` and 0 elsewhere.
pub fn make_target_mdp(
    model: OptimisticModel,
    g: &FeatureValueVector,
    r_max: f64,
) -> OptimisticModel {
    OptimisticModel {
        target: Some(g.clone()),
        r_max,
        ..model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Maximize the learned reward.
    Reward,
    /// Reach states matching the vector; learned rewards are ignored.
    Reach(FeatureValueVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub model: OptimisticModel,
    /// Number of candidate combinations available.
    pub combinations: u128,
    /// Whether every combination was evaluated (otherwise per-node greedy).
    pub enumerated: bool,
}

/// Row of the first lower-K learner whose best candidate is usable.
fn fallback_row(
    space: &FeatureSpace,
    fallbacks: &[LearnerBank],
    node: NodeId,
    action: usize,
    active: &[usize],
    state: &State,
) -> Option<Vec<f64>> {
    fallbacks.iter().find_map(|bank| {
        let learner = bank.get(node);
        let best = &learner.survivors(action)[learner.best_index(action)?];
        if best.parents.as_slice().iter().all(|f| active.contains(f)) {
            learner.greedy_row(space, action, state)
        } else {
            None
        }
    })
}

/// Builds the optimistic model the agent plans with.
///
/// If the product of surviving-candidate counts over the relevant
/// (node, action) pairs is at most `enumeration_cap`, every combination is
/// evaluated by value iteration from `start` and the most valuable one is
/// returned (earliest on ties). A combination uses its candidate's estimate
/// wherever every survivor is `m`-visited. Otherwise each (node, action)
/// uses the consensus prediction of its survivors. Rows without a usable
/// estimate fall back to the best candidate of the first usable bank in
/// `fallbacks` (most recent first), then to unknown.
pub fn assemble_optimistic(
    shape: &ModelShape,
    learners: &LearnerBank,
    fallbacks: &[LearnerBank],
    active: &[usize],
    objective: &Objective,
    start: &State,
    cfg: &PlanConfig,
) -> Result<Assembled, FmdpError> {
    let space = &shape.space;
    let mut features = active.to_vec();
    features.sort_unstable();
    features.dedup();
    let mut nodes: Vec<NodeId> = features.iter().map(|&f| NodeId::Feature(f)).collect();
    if *objective == Objective::Reward {
        nodes.extend((0..shape.reward_values.len()).map(NodeId::Reward));
    }
    let slots: Vec<(NodeId, usize)> = nodes
        .iter()
        .flat_map(|&n| (0..shape.n_actions).map(move |a| (n, a)))
        .collect();
    let combinations = slots
        .iter()
        .map(|&(n, a)| learners.get(n).survivors(a).len().max(1) as u128)
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .unwrap_or(u128::MAX);

    let build = |choice: &dyn Fn(usize) -> NodeModel| -> OptimisticModel {
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for (i, &(node, _)) in slots.iter().enumerate().step_by(shape.n_actions.max(1)) {
            let per_action: Vec<NodeModel> = (0..shape.n_actions).map(|a| choice(i + a)).collect();
            match node {
                NodeId::Feature(_) => transitions.push(per_action),
                NodeId::Reward(_) => rewards.push(per_action),
            }
        }
        if *objective != Objective::Reward {
            rewards = vec![vec![NodeModel::unknown(); shape.n_actions]; shape.reward_values.len()];
        }
        let target = match objective {
            Objective::Reach(g) => Some(g.clone()),
            Objective::Reward => None,
        };
        OptimisticModel {
            features: features.clone(),
            transitions,
            rewards,
            reward_values: shape.reward_values.clone(),
            target,
            r_max: shape.r_max,
        }
    };

    if combinations <= cfg.enumeration_cap as u128 {
        // Per slot, one model per surviving candidate.
        let options: Vec<Vec<NodeModel>> = slots
            .iter()
            .map(|&(node, action)| {
                let learner = learners.get(node);
                let survivors = learner.survivors(action);
                let union = survivors
                    .iter()
                    .fold(ParentSet::empty(), |acc, c| acc.union(&c.parents));
                let fallback_only = || {
                    NodeModel::from_fn(space, ParentSet::new(features.iter().copied()), |s| {
                        fallback_row(space, fallbacks, node, action, &features, s)
                    })
                };
                if survivors.is_empty() {
                    return vec![fallback_only()];
                }
                survivors
                    .iter()
                    .map(|cand| {
                        NodeModel::from_fn(space, union.clone(), |s| {
                            match learner.predict(space, action, s) {
                                Prediction::Insufficient => {
                                    fallback_row(space, fallbacks, node, action, &features, s)
                                }
                                _ => cand.mle(cand.cell(space, s)),
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        let radices: Vec<usize> = options.iter().map(Vec::len).collect();
        let decode = |mut idx: usize| -> Vec<usize> {
            let mut digits = vec![0; radices.len()];
            for (d, &r) in digits.iter_mut().zip(&radices).rev() {
                *d = idx % r;
                idx /= r;
            }
            digits
        };
        let total = combinations as usize;
        let values: Vec<Result<f64, FmdpError>> = (0..total)
            .into_par_iter()
            .map(|c| {
                let digits = decode(c);
                let model = build(&|slot| options[slot][digits[slot]].clone());
                let tab = model.to_tabular(space, cfg.flatten_cap)?;
                let q = q_sequence(&tab, cfg.horizon);
                let top = q.last().map_or(0.0, |qt| {
                    qt[tab.index_of(start)]
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                });
                Ok(top)
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (c, v) in values.into_iter().enumerate() {
            let v = v?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c, v));
            }
        }
        let digits = decode(best.map_or(0, |(c, _)| c));
        let model = build(&|slot| options[slot][digits[slot]].clone());
        return Ok(Assembled {
            model,
            combinations,
            enumerated: true,
        });
    }

    let model = build(&|slot| {
        let (node, action) = slots[slot];
        let learner = learners.get(node);
        let union = learner
            .survivors(action)
            .iter()
            .fold(ParentSet::new(features.iter().copied()), |acc, c| {
                acc.union(&c.parents)
            });
        NodeModel::from_fn(space, union, |s| match learner.predict(space, action, s) {
            Prediction::Known(row) => Some(row),
            _ => fallback_row(space, fallbacks, node, action, &features, s),
        })
    });
    Ok(Assembled {
        model,
        combinations,
        enumerated: false,
    })
}

/// Finite-horizon optimal Q tables: element `t - 1` holds `Q(·, ·, t)` for
/// `t = 1..=horizon`, from `Q(·, ·, 0) = 0`.
pub fn q_sequence(tab: &TabularMdp, horizon: usize) -> Vec<Vec<Vec<f64>>> {
    let n = tab.n_states();
    let mut v = vec![0.0; n];
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let q: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                (0..tab.n_actions)
                    .map(|a| {
                        tab.rewards[s][a]
                            + tab.transitions[s][a]
                                .iter()
                                .map(|&(t, p)| p * v[t])
                                .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        v = q
            .iter()
            .map(|row: &Vec<f64>| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        out.push(q);
    }
    out
}

/// Total expected reward of a stationary policy over `horizon` steps, per
/// start state.
pub fn policy_evaluation(tab: &TabularMdp, policy: &[usize], horizon: usize) -> Vec<f64> {
    let n = tab.n_states();
    let mut v = vec![0.0; n];
    for _ in 0..horizon {
        v = (0..n)
            .map(|s| {
                let a = policy[s];
                tab.rewards[s][a]
                    + tab.transitions[s][a]
                        .iter()
                        .map(|&(t, p)| p * v[t])
                        .sum::<f64>()
            })
            .collect();
    }
    v
}

/// Lowest action whose value is within `tolerance` of the best.
pub fn greedy_action(q: &[f64], tolerance: f64) -> usize {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q.iter().position(|&x| x >= best - tolerance).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// `Q(s, a, horizon)`.
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<usize>,
    /// Average reward per step of `policy` over the horizon, per start state.
    pub average_reward: Vec<f64>,
}

impl Plan {
    pub fn action(&self, tab: &TabularMdp, state: &State) -> usize {
        self.policy[tab.index_of(state)]
    }
}

pub fn value_iteration(tab: &TabularMdp, cfg: &PlanConfig) -> Plan {
    let horizon = cfg.horizon.max(1);
    let q = q_sequence(tab, horizon)
        .pop()
        .expect("horizon is at least one");
    let policy: Vec<usize> = q
        .iter()
        .map(|row| greedy_action(row, cfg.vi_tolerance))
        .collect();
    let average_reward = policy_evaluation(tab, &policy, horizon)
        .into_iter()
        .map(|v| v / horizon as f64)
        .collect();
    Plan {
        q,
        policy,
        average_reward,
    }
}
