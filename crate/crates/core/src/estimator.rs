//! Candidate parent-set learners (adaptive k-meteorologists).
//!
//! Every (node, action) keeps one maximum-likelihood model per candidate
//! parent set of the current size. Candidates are scored by their online
//! Brier score, accrued only where their own cell is already `m`-visited,
//! and the worse of any confidently separated pair is dropped.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::fmdp::{FeatureSpace, NodeId, ParentSet, State, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Size of every candidate parent set.
    pub k: usize,
    /// Visits before a cell's estimate is trusted.
    pub m: u64,
    /// L1 disagreement threshold.
    pub epsilon1: f64,
    /// Failure budget of each pairwise check.
    pub delta1: f64,
    /// Error observations both candidates need before a pairwise check.
    pub elimination_floor: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            k: 1,
            m: 100,
            epsilon1: 0.2,
            delta1: 0.01,
            elimination_floor: 100,
        }
    }
}

/// Counts and accumulated Brier error of one candidate parent set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub parents: ParentSet,
    /// `counts[assignment][outcome]`.
    pub counts: Vec<Vec<u64>>,
    pub sq_error_sum: f64,
    pub sq_error_obs: u64,
}

impl CandidateModel {
    pub fn new(space: &FeatureSpace, parents: ParentSet, outcomes: usize) -> Self {
        let cells = space
            .assignment_count(parents.as_slice())
            .expect("candidate table too large");
        Self {
            parents,
            counts: vec![vec![0; outcomes]; cells],
            sq_error_sum: 0.0,
            sq_error_obs: 0,
        }
    }

    pub fn cell(&self, space: &FeatureSpace, state: &State) -> usize {
        space.assignment_index(self.parents.as_slice(), state)
    }

    pub fn visits(&self, cell: usize) -> u64 {
        self.counts[cell].iter().sum()
    }

    /// Maximum-likelihood distribution at `cell`, `None` if never visited.
    pub fn mle(&self, cell: usize) -> Option<Vec<f64>> {
        let n = self.visits(cell);
        (n > 0).then(|| {
            self.counts[cell]
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect()
        })
    }

    /// Mean Brier score, `None` before any error observation.
    pub fn mse(&self) -> Option<f64> {
        (self.sq_error_obs > 0).then(|| self.sq_error_sum / self.sq_error_obs as f64)
    }

    fn mse_or_inf(&self) -> f64 {
        self.mse().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EliminationCause {
    Pairwise {
        rival: ParentSet,
        mse: f64,
        rival_mse: f64,
        margin: f64,
    },
    Superset {
        witness: ParentSet,
        l1_gap: f64,
    },
    /// A parent was removed from the active feature set.
    DroppedFeature {
        feature: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminatedCandidate {
    pub action: usize,
    pub candidate: CandidateModel,
    pub cause: EliminationCause,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Known(Vec<f64>),
    Insufficient,
    /// The two surviving candidates whose estimates disagree the most.
    Conflict {
        first: ParentSet,
        second: ParentSet,
        l1: f64,
    },
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Hoeffding-style separation margin for mean Brier scores.
pub fn elimination_margin(delta1: f64, obs: u64) -> f64 {
    ((2.0 / delta1).ln() / (2.0 * obs as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLearner {
    pub node: NodeId,
    pub outcomes: usize,
    pub cfg: LearnerConfig,
    /// Surviving candidates per action, in canonical (lexicographic) order.
    survivors: Vec<Vec<CandidateModel>>,
    eliminated: Vec<EliminatedCandidate>,
}

/// One candidate per action and per subset of `active` of size
/// `min(k, |active|)`, all counts zero.
pub fn init_candidates(
    space: &FeatureSpace,
    node: NodeId,
    outcomes: usize,
    n_actions: usize,
    active: &[usize],
    cfg: LearnerConfig,
) -> NodeLearner {
    assert!(
        !active.is_empty(),
        "candidate parents need at least one active feature"
    );
    let mut fs = active.to_vec();
    fs.sort_unstable();
    fs.dedup();
    let size = cfg.k.min(fs.len());
    let per_action: Vec<CandidateModel> = fs
        .into_iter()
        .combinations(size)
        .map(|c| CandidateModel::new(space, ParentSet::new(c), outcomes))
        .collect();
    NodeLearner {
        node,
        outcomes,
        cfg,
        survivors: vec![per_action; n_actions],
        eliminated: Vec::new(),
    }
}

impl NodeLearner {
    pub fn survivors(&self, action: usize) -> &[CandidateModel] {
        &self.survivors[action]
    }

    pub fn n_actions(&self) -> usize {
        self.survivors.len()
    }

    pub fn eliminated(&self) -> &[EliminatedCandidate] {
        &self.eliminated
    }

    pub fn survivor_count(&self) -> usize {
        self.survivors.iter().map(Vec::len).sum()
    }

    /// True once some action has no surviving candidate.
    pub fn is_dead(&self) -> bool {
        self.survivors.iter().any(Vec::is_empty)
    }

    /// Updates every surviving candidate of `action` with one observation.
    /// Returns true if some candidate's cell just reached `m` visits.
    pub fn record(
        &mut self,
        space: &FeatureSpace,
        state: &State,
        action: usize,
        outcome: usize,
    ) -> bool {
        assert!(outcome < self.outcomes, "outcome {outcome} out of range");
        let m = self.cfg.m;
        let mut became_known = false;
        for cand in &mut self.survivors[action] {
            let cell = cand.cell(space, state);
            let n = cand.visits(cell);
            if n >= m {
                let nf = n as f64;
                let err: f64 = cand.counts[cell]
                    .iter()
                    .enumerate()
                    .map(|(v, &c)| {
                        let p = c as f64 / nf;
                        let target = if v == outcome { 1.0 } else { 0.0 };
                        (p - target) * (p - target)
                    })
                    .sum();
                cand.sq_error_sum += err;
                cand.sq_error_obs += 1;
            }
            cand.counts[cell][outcome] += 1;
            became_known |= n + 1 == m;
        }
        became_known
    }

    /// Consensus prediction of the surviving candidates of `action` at `state`.
    pub fn predict(&self, space: &FeatureSpace, action: usize, state: &State) -> Prediction {
        let cands = &self.survivors[action];
        let mut estimates = Vec::with_capacity(cands.len());
        for cand in cands {
            let cell = cand.cell(space, state);
            if cand.visits(cell) < self.cfg.m {
                return Prediction::Insufficient;
            }
            estimates.push(cand.mle(cell).expect("visited cell"));
        }
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..estimates.len() {
            for j in i + 1..estimates.len() {
                let d = l1_distance(&estimates[i], &estimates[j]);
                if d > self.cfg.epsilon1 && worst.is_none_or(|(_, _, w)| d > w) {
                    worst = Some((i, j, d));
                }
            }
        }
        if let Some((i, j, l1)) = worst {
            return Prediction::Conflict {
                first: cands[i].parents.clone(),
                second: cands[j].parents.clone(),
                l1,
            };
        }
        match self.best_index(action) {
            Some(b) => Prediction::Known(estimates.swap_remove(b)),
            None => Prediction::Insufficient,
        }
    }

    /// Index of the minimum-MSE survivor of `action`, earliest on ties.
    pub fn best_index(&self, action: usize) -> Option<usize> {
        let cands = &self.survivors[action];
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in cands.iter().enumerate() {
            let mse = c.mse_or_inf();
            if best.is_none_or(|(_, b)| mse < b) {
                best = Some((i, mse));
            }
        }
        best.map(|(i, _)| i)
    }

    /// The minimum-MSE survivor's estimate at `state` if its cell is
    /// `m`-visited.
    pub fn greedy_row(
        &self,
        space: &FeatureSpace,
        action: usize,
        state: &State,
    ) -> Option<Vec<f64>> {
        let cand = &self.survivors[action][self.best_index(action)?];
        let cell = cand.cell(space, state);
        if cand.visits(cell) >= self.cfg.m {
            cand.mle(cell)
        } else {
            None
        }
    }

    /// Drops the worse of every pair of survivors whose mean Brier scores
    /// are separated by more than the confidence margin. Never removes the
    /// last survivor of an action.
    pub fn pairwise_eliminate(&mut self) -> Vec<(usize, ParentSet)> {
        let mut removed = Vec::new();
        for action in 0..self.survivors.len() {
            'scan: loop {
                let cands = &self.survivors[action];
                for i in 0..cands.len() {
                    for j in i + 1..cands.len() {
                        let (a, b) = (&cands[i], &cands[j]);
                        let floor = self.cfg.elimination_floor.max(1);
                        if a.sq_error_obs < floor || b.sq_error_obs < floor {
                            continue;
                        }
                        let (ma, mb) = (a.mse_or_inf(), b.mse_or_inf());
                        let margin =
                            elimination_margin(self.cfg.delta1, a.sq_error_obs.min(b.sq_error_obs));
                        if (ma - mb).abs() <= margin {
                            continue;
                        }
                        let (loser, winner) = if ma > mb { (i, j) } else { (j, i) };
                        let cause = EliminationCause::Pairwise {
                            rival: cands[winner].parents.clone(),
                            mse: cands[loser].mse_or_inf(),
                            rival_mse: cands[winner].mse_or_inf(),
                            margin,
                        };
                        let parents = self.eliminate(action, loser, cause);
                        removed.push((action, parents));
                        continue 'scan;
                    }
                }
                break;
            }
        }
        removed
    }

    /// Moves survivor `index` of `action` to the eliminated list.
    pub fn eliminate(&mut self, action: usize, index: usize, cause: EliminationCause) -> ParentSet {
        let candidate = self.survivors[action].remove(index);
        let parents = candidate.parents.clone();
        self.eliminated.push(EliminatedCandidate {
            action,
            candidate,
            cause,
        });
        parents
    }

    /// Eliminates every survivor whose parent set mentions `feature`.
    pub fn drop_feature(&mut self, feature: usize) -> usize {
        let mut dropped = 0;
        for action in 0..self.survivors.len() {
            let mut i = 0;
            while i < self.survivors[action].len() {
                if self.survivors[action][i].parents.contains(feature) {
                    self.eliminate(action, i, EliminationCause::DroppedFeature { feature });
                    dropped += 1;
                } else {
                    i += 1;
                }
            }
        }
        dropped
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("learner snapshot serialization cannot fail")
    }

    pub fn from_snapshot_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// One learner per feature node followed by one per reward node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerBank {
    n_features: usize,
    learners: Vec<NodeLearner>,
}

impl LearnerBank {
    /// Fresh learners for every feature and every reward node (with the
    /// given outcome counts), candidates drawn from `active`.
    pub fn new(
        space: &FeatureSpace,
        n_actions: usize,
        reward_outcomes: &[usize],
        active: &[usize],
        cfg: LearnerConfig,
    ) -> Self {
        let features = (0..space.len()).map(|f| {
            init_candidates(
                space,
                NodeId::Feature(f),
                space.domain_size(f),
                n_actions,
                active,
                cfg,
            )
        });
        let rewards = reward_outcomes
            .iter()
            .enumerate()
            .map(|(r, &o)| init_candidates(space, NodeId::Reward(r), o, n_actions, active, cfg));
        Self {
            n_features: space.len(),
            learners: features.chain(rewards).collect(),
        }
    }

    pub fn cfg(&self) -> LearnerConfig {
        self.learners[0].cfg
    }

    pub fn get(&self, node: NodeId) -> &NodeLearner {
        &self.learners[self.slot(node)]
    }

    pub fn get_mut(&mut self, node: NodeId) -> &mut NodeLearner {
        let i = self.slot(node);
        &mut self.learners[i]
    }

    fn slot(&self, node: NodeId) -> usize {
        match node {
            NodeId::Feature(f) => f,
            NodeId::Reward(r) => self.n_features + r,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeLearner> {
        self.learners.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NodeLearner> {
        self.learners.iter_mut()
    }

    pub fn reward_nodes(&self) -> usize {
        self.learners.len() - self.n_features
    }

    /// Records one transition into every node's learner. Returns true if
    /// some candidate cell just became `m`-visited.
    pub fn record(&mut self, space: &FeatureSpace, t: &Transition) -> bool {
        let mut changed = false;
        for l in &mut self.learners {
            let outcome = t.outcome(l.node);
            changed |= l.record(space, &t.state, t.action, outcome);
        }
        changed
    }

    pub fn pairwise_eliminate(&mut self) -> Vec<(NodeId, usize, ParentSet)> {
        self.learners
            .iter_mut()
            .flat_map(|l| {
                let node = l.node;
                l.pairwise_eliminate()
                    .into_iter()
                    .map(move |(a, p)| (node, a, p))
            })
            .collect()
    }

    /// Drops every candidate mentioning `feature` from every learner.
    pub fn drop_feature(&mut self, feature: usize) -> usize {
        self.learners
            .iter_mut()
            .map(|l| l.drop_feature(feature))
            .sum()
    }

    /// Members of `active` whose own transition learner has no surviving
    /// candidate for some action.
    pub fn dead_features(&self, active: &[usize]) -> Vec<usize> {
        active
            .iter()
            .copied()
            .filter(|&f| self.get(NodeId::Feature(f)).is_dead())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(k: usize, m: u64) -> LearnerConfig {
        LearnerConfig {
            k,
            m,
            epsilon1: 0.1,
            delta1: 0.01,
            elimination_floor: 100,
        }
    }

    #[test]
    fn candidate_counts() {
        let space = FeatureSpace::uniform(3, 2);
        let l = init_candidates(&space, NodeId::Feature(0), 2, 2, &[0, 1, 2], cfg(1, 100));
        assert_eq!(l.survivor_count(), 6);
        let space5 = FeatureSpace::uniform(5, 2);
        let l = init_candidates(
            &space5,
            NodeId::Feature(0),
            2,
            1,
            &[0, 1, 2, 3, 4],
            cfg(2, 100),
        );
        assert_eq!(l.survivor_count(), 10);
        let l = init_candidates(&space5, NodeId::Feature(0), 2, 2, &[0], cfg(2, 100));
        assert_eq!(l.survivors(0).len(), 1);
        assert_eq!(l.survivors(0)[0].parents, ParentSet::new([0]));
    }

    #[test]
    fn record_increments_and_accrues_error() {
        let space = FeatureSpace::uniform(1, 2);
        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0], cfg(1, 5));
        l.survivors[0][0].counts[0] = vec![9, 1];
        let s = State(vec![0]);
        l.record(&space, &s, 0, 1);
        assert_eq!(l.survivors(0)[0].counts[0], vec![9, 2]);

        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0], cfg(1, 5));
        l.survivors[0][0].counts[0] = vec![9, 1];
        l.record(&space, &s, 0, 0);
        let c = &l.survivors(0)[0];
        assert!((c.sq_error_sum - 0.02).abs() < 1e-12);
        assert_eq!(c.sq_error_obs, 1);

        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0], cfg(1, 5));
        l.record(&space, &s, 0, 0);
        assert_eq!(l.survivors(0)[0].sq_error_obs, 0);
    }

    #[test]
    fn predict_examples() {
        let space = FeatureSpace::uniform(2, 2);
        let s = State(vec![0, 0]);
        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0], cfg(1, 100));
        l.survivors[0][0].counts[0] = vec![40, 40];
        assert_eq!(l.predict(&space, 0, &s), Prediction::Insufficient);
        l.survivors[0][0].counts[0] = vec![95, 5];
        assert_eq!(
            l.predict(&space, 0, &s),
            Prediction::Known(vec![0.95, 0.05])
        );

        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0, 1], cfg(1, 100));
        l.survivors[0][0].counts[0] = vec![90, 10];
        l.survivors[0][1].counts[0] = vec![50, 50];
        match l.predict(&space, 0, &s) {
            Prediction::Conflict { first, second, l1 } => {
                assert_eq!(first, ParentSet::new([0]));
                assert_eq!(second, ParentSet::new([1]));
                assert!((l1 - 0.8).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn margin_arithmetic() {
        assert!((elimination_margin(0.01, 10_000) - 0.016_275).abs() < 1e-5);
        assert!((elimination_margin(0.01, 100) - 0.162_75).abs() < 1e-4);
    }

    fn with_errors(l: &mut NodeLearner, idx: usize, mse: f64, obs: u64) {
        let c = &mut l.survivors[0][idx];
        c.sq_error_obs = obs;
        c.sq_error_sum = mse * obs as f64;
    }

    #[test]
    fn pairwise_examples() {
        let space = FeatureSpace::uniform(2, 2);
        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0, 1], cfg(1, 100));
        with_errors(&mut l, 0, 0.50, 10_000);
        with_errors(&mut l, 1, 0.02, 10_000);
        let removed = l.pairwise_eliminate();
        assert_eq!(removed, vec![(0, ParentSet::new([0]))]);
        assert_eq!(l.survivors(0).len(), 1);

        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0, 1], cfg(1, 100));
        with_errors(&mut l, 0, 0.10, 100);
        with_errors(&mut l, 1, 0.09, 100);
        assert!(l.pairwise_eliminate().is_empty());

        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0], cfg(1, 100));
        with_errors(&mut l, 0, 0.9, 10_000);
        assert!(l.pairwise_eliminate().is_empty());
        assert_eq!(l.survivors(0).len(), 1);
    }

    #[test]
    fn below_floor_is_not_compared() {
        let space = FeatureSpace::uniform(2, 2);
        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 1, &[0, 1], cfg(1, 100));
        with_errors(&mut l, 0, 1.0, 99);
        with_errors(&mut l, 1, 0.0, 10_000);
        assert!(l.pairwise_eliminate().is_empty());
    }

    #[test]
    fn drop_feature_can_kill_a_node() {
        let space = FeatureSpace::uniform(2, 2);
        let mut l = init_candidates(&space, NodeId::Feature(0), 2, 2, &[0, 1], cfg(1, 100));
        assert_eq!(l.drop_feature(1), 2);
        assert!(!l.is_dead());
        l.drop_feature(0);
        assert!(l.is_dead());
        assert_eq!(l.eliminated().len(), 4);
    }

    #[test]
    fn snapshot_round_trip() {
        let space = FeatureSpace::uniform(2, 2);
        let mut l = init_candidates(&space, NodeId::Reward(0), 2, 2, &[0, 1], cfg(1, 2));
        for t in 0..10 {
            l.record(&space, &State(vec![t % 2, 1]), t % 2, (t / 3) % 2);
        }
        let back = NodeLearner::from_snapshot_json(&l.snapshot_json()).unwrap();
        assert_eq!(back, l);
    }

    proptest! {
        // Survivors never vanish under recording and pairwise elimination,
        // and each record adds exactly one count per surviving candidate.
        #[test]
        fn survivors_and_count_conservation(
            ops in prop::collection::vec((0usize..8, 0usize..2, 0usize..2, any::<bool>()), 1..400),
            floor in 1u64..20,
        ) {
            let space = FeatureSpace::uniform(3, 2);
            let c = LearnerConfig { k: 1, m: 3, epsilon1: 0.1, delta1: 0.5, elimination_floor: floor };
            let mut l = init_candidates(&space, NodeId::Feature(1), 2, 2, &[0, 1, 2], c);
            let mut expected = 0u64;
            for (s, a, o, elim) in ops {
                let state = State(space.assignment_values(&[0, 1, 2], s));
                expected += l.survivors(a).len() as u64;
                l.record(&space, &state, a, o);
                if elim {
                    l.pairwise_eliminate();
                }
                prop_assert!(!l.survivors(0).is_empty() && !l.survivors(1).is_empty());
            }
            let total: u64 = (0..2)
                .flat_map(|a| l.survivors(a).iter().chain(
                    l.eliminated().iter().filter(move |e| e.action == a).map(|e| &e.candidate)))
                .map(|c| c.counts.iter().flatten().sum::<u64>())
                .sum();
            prop_assert_eq!(total, expected);
        }
    }
}
