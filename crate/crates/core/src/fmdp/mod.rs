//! Factored MDP representation.
//!
//! A state is a vector of discrete feature values. Every feature (and every
//! reward node) has, per action, a conditional probability table over its
//! next value given the current values of a small parent set. Parent-value
//! assignments are indexed in mixed radix with the first (lowest id) parent
//! most significant, so table rows appear in lexicographic order.

mod io;
mod tabular;

pub use io::{from_domain_file, to_domain_file, DomainFileError};
pub use tabular::{flatten, TabularMdp, DEFAULT_FLATTEN_CAP};
pub(crate) use tabular::{tabulate, RowSpec};

use std::fmt;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability vectors must sum to one within this tolerance in memory.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FmdpError {
    #[error("flattening {states} states exceeds the cap of {cap}")]
    CapExceeded { states: u128, cap: usize },
    #[error("node {node} has parent {parent} outside the retained feature set")]
    DanglingParent { node: String, parent: String },
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("feature-value vector must assign at least one feature")]
    EmptyAssignment,
    #[error("value {value} out of range for feature {feature}")]
    ValueOutOfRange { feature: String, value: usize },
}

/// Ordered features and their domain sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub names: Vec<String>,
    pub domain_sizes: Vec<usize>,
}

impl FeatureSpace {
    pub fn new(features: impl IntoIterator<Item = (String, usize)>) -> Self {
        let (names, domain_sizes) = features.into_iter().unzip();
        Self {
            names,
            domain_sizes,
        }
    }

    /// `n` features named `f1..fn`, each with domain size `d`.
    pub fn uniform(n: usize, d: usize) -> Self {
        Self::new((1..=n).map(|i| (format!("f{i}"), d)))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, feature: usize) -> &str {
        &self.names[feature]
    }

    pub fn domain_size(&self, feature: usize) -> usize {
        self.domain_sizes[feature]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn all_features(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Number of joint assignments of `features`, or `None` on overflow.
    pub fn assignment_count(&self, features: &[usize]) -> Option<usize> {
        features
            .iter()
            .try_fold(1usize, |acc, &f| acc.checked_mul(self.domain_sizes[f]))
    }

    /// Mixed-radix index of the values `state` takes on `features`.
    pub fn assignment_index(&self, features: &[usize], state: &State) -> usize {
        features
            .iter()
            .fold(0, |acc, &f| acc * self.domain_sizes[f] + state.0[f])
    }

    /// Inverse of [`FeatureSpace::assignment_index`]: the values of `features`
    /// encoded by `index`, in the order of `features`.
    pub fn assignment_values(&self, features: &[usize], mut index: usize) -> Vec<usize> {
        let mut values = vec![0; features.len()];
        for (slot, &f) in values.iter_mut().zip(features).rev() {
            let d = self.domain_sizes[f];
            *slot = index % d;
            index /= d;
        }
        values
    }

    /// A full-length state that takes `values` on `features` and 0 elsewhere.
    pub fn state_with(&self, features: &[usize], values: &[usize]) -> State {
        let mut s = vec![0; self.len()];
        for (&f, &v) in features.iter().zip(values) {
            s[f] = v;
        }
        State(s)
    }

    pub fn render_features(&self, features: &[usize]) -> String {
        format!("{{{}}}", features.iter().map(|&f| self.name(f)).join(","))
    }
}

/// One value per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, feature: usize) -> usize {
        self.0[feature]
    }

    /// Canonical `0|1|0` rendering used in traces.
    pub fn digest(&self) -> String {
        self.0.iter().join("|")
    }
}

/// Sorted, duplicate-free set of feature ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct ParentSet(Vec<usize>);

impl ParentSet {
    pub fn new(features: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = features.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.0.binary_search(&feature).is_ok()
    }

    pub fn is_subset_of(&self, other: &ParentSet) -> bool {
        self.0.iter().all(|&f| other.contains(f))
    }

    pub fn union(&self, other: &ParentSet) -> ParentSet {
        ParentSet::new(self.0.iter().chain(&other.0).copied())
    }
}

/// Conditional probability table: one distribution over the child's domain
/// per joint assignment of the parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub parents: ParentSet,
    pub rows: Vec<Vec<f64>>,
}

impl Cpt {
    /// A table whose rows are produced by `row(parent_values)`.
    pub fn from_fn(
        space: &FeatureSpace,
        parents: ParentSet,
        mut row: impl FnMut(&[usize]) -> Vec<f64>,
    ) -> Self {
        let n = space
            .assignment_count(parents.as_slice())
            .expect("parent assignment count overflow");
        let rows = (0..n)
            .map(|i| row(&space.assignment_values(parents.as_slice(), i)))
            .collect();
        Self { parents, rows }
    }

    pub fn row(&self, space: &FeatureSpace, state: &State) -> &[f64] {
        &self.rows[space.assignment_index(self.parents.as_slice(), state)]
    }
}

/// A reward component: a discrete distribution over `outcomes` per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNode {
    pub name: String,
    pub outcomes: Vec<f64>,
    pub cpts: Vec<Cpt>,
}

/// Identifies a learnable node: a feature's transition or a reward component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Feature(usize),
    Reward(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredMdp {
    pub space: FeatureSpace,
    pub actions: Vec<String>,
    /// `transitions[feature][action]`.
    pub transitions: Vec<Vec<Cpt>>,
    pub rewards: Vec<RewardNode>,
    pub r_max: f64,
}

impl FactoredMdp {
    pub fn n_features(&self) -> usize {
        self.space.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn cpt(&self, node: NodeId, action: usize) -> &Cpt {
        match node {
            NodeId::Feature(f) => &self.transitions[f][action],
            NodeId::Reward(r) => &self.rewards[r].cpts[action],
        }
    }

    /// Domain size of a node's outcome.
    pub fn outcome_count(&self, node: NodeId) -> usize {
        match node {
            NodeId::Feature(f) => self.space.domain_size(f),
            NodeId::Reward(r) => self.rewards[r].outcomes.len(),
        }
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        (0..self.n_features())
            .map(NodeId::Feature)
            .chain((0..self.rewards.len()).map(NodeId::Reward))
            .collect()
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        match node {
            NodeId::Feature(f) => self.space.name(f),
            NodeId::Reward(r) => &self.rewards[r].name,
        }
    }

    /// Largest parent set over all features, rewards and actions.
    pub fn in_degree(&self) -> usize {
        self.nodes()
            .into_iter()
            .flat_map(|n| (0..self.n_actions()).map(move |a| (n, a)))
            .map(|(n, a)| self.cpt(n, a).parents.len())
            .max()
            .unwrap_or(0)
    }

    /// Largest parent set among the given features' transitions and all rewards.
    pub fn in_degree_of(&self, features: &[usize]) -> usize {
        let feature_nodes = features.iter().map(|&f| NodeId::Feature(f));
        let reward_nodes = (0..self.rewards.len()).map(NodeId::Reward);
        feature_nodes
            .chain(reward_nodes)
            .flat_map(|n| (0..self.n_actions()).map(move |a| self.cpt(n, a).parents.len()))
            .max()
            .unwrap_or(0)
    }

    /// Expected one-step reward at `(state, action)`.
    pub fn expected_reward(&self, state: &State, action: usize) -> f64 {
        self.rewards
            .iter()
            .map(|r| {
                r.cpts[action]
                    .row(&self.space, state)
                    .iter()
                    .zip(&r.outcomes)
                    .map(|(p, v)| p * v)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }
}

/// A partial assignment of values to distinct features, sorted by feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureValueVector(Vec<(usize, usize)>);

impl FeatureValueVector {
    pub fn new(
        space: &FeatureSpace,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, FmdpError> {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        if pairs.is_empty() {
            return Err(FmdpError::EmptyAssignment);
        }
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(FmdpError::UnknownFeature(format!(
                    "duplicate feature {}",
                    space.name(w[0].0)
                )));
            }
        }
        for &(f, v) in &pairs {
            if f >= space.len() {
                return Err(FmdpError::UnknownFeature(f.to_string()));
            }
            if v >= space.domain_size(f) {
                return Err(FmdpError::ValueOutOfRange {
                    feature: space.name(f).to_string(),
                    value: v,
                });
            }
        }
        Ok(Self(pairs))
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn features(&self) -> Vec<usize> {
        self.0.iter().map(|&(f, _)| f).collect()
    }

    pub fn mentions(&self, feature: usize) -> bool {
        self.0.iter().any(|&(f, _)| f == feature)
    }

    pub fn render(&self, space: &FeatureSpace) -> String {
        self.0
            .iter()
            .map(|&(f, v)| format!("{}={v}", space.name(f)))
            .join(",")
    }
}

impl fmt::Display for FeatureValueVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = self.0.iter().map(|(k, v)| format!("{k}={v}")).join(",");
        write!(f, "({body})")
    }
}

/// Every violated structural invariant, each naming the offending node.
pub fn validate(mdp: &FactoredMdp) -> Vec<String> {
    let mut out = Vec::new();
    let space = &mdp.space;
    if space.names.len() != space.domain_sizes.len() {
        out.push("feature names and domain sizes differ in length".to_string());
        return out;
    }
    for (i, name) in space.names.iter().enumerate() {
        if space.names[..i].contains(name) {
            out.push(format!("duplicate feature identifier {name}"));
        }
        if space.domain_sizes[i] < 2 {
            out.push(format!(
                "feature {name} has domain size {} < 2",
                space.domain_sizes[i]
            ));
        }
    }
    if mdp.actions.is_empty() {
        out.push("no actions".to_string());
    }
    if !(mdp.r_max.is_finite() && mdp.r_max > 0.0) {
        out.push(format!(
            "r_max {} is not a positive finite bound",
            mdp.r_max
        ));
    }
    if mdp.transitions.len() != space.len() {
        out.push(format!(
            "{} transition entries for {} features",
            mdp.transitions.len(),
            space.len()
        ));
    }
    for (f, per_action) in mdp.transitions.iter().enumerate().take(space.len()) {
        if per_action.len() != mdp.n_actions() {
            out.push(format!(
                "feature {} has {} tables for {} actions",
                space.name(f),
                per_action.len(),
                mdp.n_actions()
            ));
        }
        for (a, cpt) in per_action.iter().enumerate() {
            let label = format!("feature {} action {}", space.name(f), action_label(mdp, a));
            check_cpt(space, cpt, space.domain_size(f), &label, &mut out);
        }
    }
    let mut reward_bound = 0.0;
    for reward in &mdp.rewards {
        if reward.outcomes.is_empty() || reward.outcomes.iter().any(|v| !v.is_finite()) {
            out.push(format!(
                "reward {} has empty or non-finite outcomes",
                reward.name
            ));
            continue;
        }
        if reward.cpts.len() != mdp.n_actions() {
            out.push(format!(
                "reward {} has {} tables for {} actions",
                reward.name,
                reward.cpts.len(),
                mdp.n_actions()
            ));
        }
        let mut best = f64::NEG_INFINITY;
        for (a, cpt) in reward.cpts.iter().enumerate() {
            let label = format!("reward {} action {}", reward.name, action_label(mdp, a));
            check_cpt(space, cpt, reward.outcomes.len(), &label, &mut out);
            for row in &cpt.rows {
                for (p, v) in row.iter().zip(&reward.outcomes) {
                    if *p > 0.0 && *v > best {
                        best = *v;
                    }
                }
            }
        }
        if best.is_finite() {
            reward_bound += best;
        }
    }
    if reward_bound > mdp.r_max + 1e-12 {
        out.push(format!(
            "realizable one-step reward {reward_bound} exceeds r_max {}",
            mdp.r_max
        ));
    }
    out
}

fn action_label(mdp: &FactoredMdp, a: usize) -> String {
    mdp.actions.get(a).cloned().unwrap_or_else(|| a.to_string())
}

fn check_cpt(space: &FeatureSpace, cpt: &Cpt, width: usize, label: &str, out: &mut Vec<String>) {
    let parents = cpt.parents.as_slice();
    if parents.windows(2).any(|w| w[0] >= w[1]) {
        out.push(format!(
            "{label}: parent set is not sorted and duplicate-free"
        ));
    }
    if let Some(&bad) = parents.iter().find(|&&p| p >= space.len()) {
        out.push(format!("{label}: parent {bad} is not a known feature"));
        return;
    }
    let expected = space.assignment_count(parents).unwrap_or(usize::MAX);
    if cpt.rows.len() != expected {
        out.push(format!(
            "{label}: {} rows for {expected} parent assignments",
            cpt.rows.len()
        ));
    }
    for (i, row) in cpt.rows.iter().enumerate() {
        let assignment = space
            .assignment_values(parents, i)
            .iter()
            .zip(parents)
            .map(|(v, &p)| format!("{}={v}", space.name(p)))
            .join(",");
        if row.len() != width {
            out.push(format!(
                "{label} [{assignment}]: row has {} entries, expected {width}",
                row.len()
            ));
            continue;
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            out.push(format!(
                "{label} [{assignment}]: negative or non-finite probability"
            ));
            continue;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            out.push(format!("{label} [{assignment}]: row sums to {sum}"));
        }
    }
}

/// Result of one simulated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub next: State,
    /// Sampled outcome index of each reward node.
    pub reward_outcomes: Vec<usize>,
    pub reward: f64,
}

impl Transition {
    /// The observed outcome of `node` on this step.
    pub fn outcome(&self, node: NodeId) -> usize {
        match node {
            NodeId::Feature(f) => self.next.get(f),
            NodeId::Reward(r) => self.reward_outcomes[r],
        }
    }
}

/// Inverse-CDF draw from `row` that never returns a zero-probability index.
pub fn sample_index(row: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// Simulates one step, drawing one uniform per node from `uniform`.
pub fn sample_with(
    mdp: &FactoredMdp,
    state: &State,
    action: usize,
    mut uniform: impl FnMut(NodeId) -> f64,
) -> Transition {
    let space = &mdp.space;
    let next = (0..mdp.n_features())
        .map(|f| {
            let row = mdp.transitions[f][action].row(space, state);
            sample_index(row, uniform(NodeId::Feature(f)))
        })
        .collect();
    let mut reward = 0.0;
    let reward_outcomes = mdp
        .rewards
        .iter()
        .enumerate()
        .map(|(r, node)| {
            let row = node.cpts[action].row(space, state);
            let o = sample_index(row, uniform(NodeId::Reward(r)));
            reward += node.outcomes[o];
            o
        })
        .collect();
    Transition {
        state: state.clone(),
        action,
        next: State(next),
        reward_outcomes,
        reward,
    }
}

/// Samples the next state and the summed reward.
pub fn sample_step<R: Rng + ?Sized>(
    mdp: &FactoredMdp,
    state: &State,
    action: usize,
    rng: &mut R,
) -> (State, f64) {
    let t = sample_with(mdp, state, action, |_| rng.random::<f64>());
    (t.next, t.reward)
}

/// True iff `state` agrees with `g` on every assigned feature.
pub fn matches(state: &State, g: &FeatureValueVector) -> bool {
    g.pairs().iter().all(|&(f, v)| state.get(f) == v)
}

/// The sub-vector of `state` on `features`, as sorted `(feature, value)` pairs.
pub fn restrict(state: &State, features: &[usize]) -> Vec<(usize, usize)> {
    let mut fs = features.to_vec();
    fs.sort_unstable();
    fs.dedup();
    fs.into_iter().map(|f| (f, state.get(f))).collect()
}

/// All value assignments to every subset of `features` of size
/// `min(2k, |features|)`, ordered by subset then by values.
pub fn enumerate_targets(
    space: &FeatureSpace,
    features: &[usize],
    k: usize,
) -> Vec<FeatureValueVector> {
    let mut fs = features.to_vec();
    fs.sort_unstable();
    fs.dedup();
    let size = (2 * k).min(fs.len());
    let mut out = Vec::new();
    for subset in fs.into_iter().combinations(size) {
        let count = space
            .assignment_count(&subset)
            .expect("target count overflow");
        for i in 0..count {
            let values = space.assignment_values(&subset, i);
            out.push(FeatureValueVector(
                subset.iter().copied().zip(values).collect(),
            ));
        }
    }
    out
}
