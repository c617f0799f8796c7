//! The FS-EE agent: targeted exploration with feature elimination, the
//! exploitation phase, the outer loop over the in-degree guess `K`, and the
//! passive variant that only runs the superset test in the background.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{LearnerBank, LearnerConfig};
use crate::fmdp::{
    matches, sample_with, FactoredMdp, FmdpError, NodeId, State, TabularMdp, Transition,
};
use crate::planner::{
    assemble_optimistic, value_iteration, ModelShape, Objective, Plan, PlanConfig,
};
use crate::superset::{
    fresh_targets, shrink_active, superset_test, SupersetVerdict, SupersetWindow, Target,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FseeConfig {
    /// Visits before an estimate or a target counts as known.
    pub m: u64,
    /// Steps in one exploration episode before it is declared stuck.
    pub episode_steps: usize,
    /// Exploitation steps after each `K`'s exploration.
    pub exploit_steps: usize,
    /// Largest in-degree guess; defaults to the feature count.
    pub k_max: Option<usize>,
    /// Steps at which the passive variant increments `K`.
    pub increment_schedule: Vec<usize>,
    pub epsilon1: f64,
    pub delta1: f64,
    pub elimination_floor: u64,
    /// Steps between pairwise checks, background superset tests and
    /// periodic replans.
    pub check_every: usize,
    /// Run the background superset test in the passive variant.
    pub superset_test: bool,
    /// Stuck episodes without any verdict after which a target is given up.
    pub retire_after: u32,
    /// Total step budget of one run.
    pub step_cap: usize,
    pub plan: PlanConfig,
    pub seed: u64,
}

impl Default for FseeConfig {
    fn default() -> Self {
        Self {
            m: 100,
            episode_steps: 400,
            exploit_steps: 10_000,
            k_max: None,
            increment_schedule: Vec::new(),
            epsilon1: 0.2,
            delta1: 0.01,
            elimination_floor: 100,
            check_every: 100,
            superset_test: true,
            retire_after: 10,
            step_cap: 1_000_000,
            plan: PlanConfig::default(),
            seed: 0,
        }
    }
}

impl FseeConfig {
    pub fn learner(&self, k: usize) -> LearnerConfig {
        LearnerConfig {
            k,
            m: self.m,
            epsilon1: self.epsilon1,
            delta1: self.delta1,
            elimination_floor: self.elimination_floor,
        }
    }

    /// Window length of the background superset test.
    pub fn passive_window(&self) -> usize {
        self.episode_steps.max(10 * self.m as usize)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FseeError {
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Model(#[from] FmdpError),
}

/// The simulated environment. Each node draws from its own random stream so
/// that runs of different agents on the same seed share their noise.
#[derive(Debug, Clone)]
pub struct Environment {
    mdp: FactoredMdp,
    state: State,
    streams: Vec<ChaCha8Rng>,
}

fn stream_id(node: NodeId) -> u64 {
    match node {
        NodeId::Feature(f) => f as u64,
        NodeId::Reward(r) => (1 << 32) + r as u64,
    }
}

impl Environment {
    /// Starts in the all-zero state.
    pub fn new(mdp: FactoredMdp, seed: u64) -> Self {
        let streams = mdp
            .nodes()
            .into_iter()
            .map(|node| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_id(node));
                rng
            })
            .collect();
        let state = State::zeros(mdp.n_features());
        Self {
            mdp,
            state,
            streams,
        }
    }

    pub fn mdp(&self) -> &FactoredMdp {
        &self.mdp
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn step(&mut self, action: usize) -> Transition {
        let n = self.mdp.n_features();
        let streams = &mut self.streams;
        let t = sample_with(&self.mdp, &self.state, action, |node| {
            let slot = match node {
                NodeId::Feature(f) => f,
                NodeId::Reward(r) => n + r,
            };
            streams[slot].random::<f64>()
        });
        self.state = t.next.clone();
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    LearnSelect,
    Exploit,
    Passive,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::LearnSelect => "learn-select",
            Phase::Exploit => "exploit",
            Phase::Passive => "passive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "learn-select" => Some(Phase::LearnSelect),
            "exploit" => Some(Phase::Exploit),
            "passive" => Some(Phase::Passive),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub k: usize,
    pub phase: Phase,
    /// State in which the action was taken.
    pub state: String,
    pub action: String,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub active_features: usize,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTrace {
    pub rows: Vec<TraceRow>,
}

/// Outcome of a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: ExperimentTrace,
    /// Surviving features at the end of each `K`'s exploration.
    pub selected: Vec<(usize, Vec<usize>)>,
    pub budget_exhausted: bool,
}

/// Mutable state shared by the phases of one run.
pub struct Agent {
    pub env: Environment,
    pub shape: ModelShape,
    pub cfg: FseeConfig,
    pub k: usize,
    pub phase: Phase,
    pub active: Vec<usize>,
    pub learners: LearnerBank,
    /// Lower-`K` learners, most recent first, consulted where the current
    /// ones lack data.
    pub fallbacks: Vec<LearnerBank>,
    pub trace: ExperimentTrace,
    pending: Vec<String>,
    cumulative: f64,
    steps: usize,
}

impl Agent {
    pub fn new(mdp: FactoredMdp, cfg: FseeConfig) -> Self {
        let shape = ModelShape::of(&mdp);
        let active = shape.space.all_features();
        let learners = LearnerBank::new(
            &shape.space,
            shape.n_actions,
            &shape.reward_arity(),
            &active,
            cfg.learner(1),
        );
        let env = Environment::new(mdp, cfg.seed);
        Self {
            env,
            shape,
            cfg,
            k: 1,
            phase: Phase::LearnSelect,
            active,
            learners,
            fallbacks: Vec::new(),
            trace: ExperimentTrace::default(),
            pending: Vec::new(),
            cumulative: 0.0,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            r_max: self.shape.r_max,
            ..self.cfg.plan
        }
    }

    /// Restarts with every feature active and fresh learners of size `k`.
    pub fn start_phase(&mut self, k: usize) {
        self.k = k;
        self.active = self.shape.space.all_features();
        self.learners = LearnerBank::new(
            &self.shape.space,
            self.shape.n_actions,
            &self.shape.reward_arity(),
            &self.active,
            self.cfg.learner(k),
        );
        self.event(format!("k={k}"));
    }

    pub fn event(&mut self, e: String) {
        self.pending.push(e);
    }

    fn plan(&mut self, objective: &Objective) -> Result<(TabularMdp, Plan), FseeError> {
        let cfg = self.plan_config();
        let assembled = assemble_optimistic(
            &self.shape,
            &self.learners,
            &self.fallbacks,
            &self.active,
            objective,
            self.env.state(),
            &cfg,
        )?;
        if !assembled.enumerated {
            // Recorded only when the count changes to keep traces readable.
            let note = format!("greedy-assembly:{}", assembled.combinations);
            if self
                .trace
                .rows
                .iter()
                .rev()
                .flat_map(|r| &r.events)
                .find(|e| e.starts_with("greedy-assembly"))
                != Some(&note)
                && !self.pending.contains(&note)
            {
                self.event(note);
            }
        }
        let tab = assembled
            .model
            .to_tabular(&self.shape.space, cfg.flatten_cap)?;
        let plan = value_iteration(&tab, &cfg);
        Ok((tab, plan))
    }

    /// Takes one step, records it into the learners and the trace. Returns
    /// the transition and whether some estimate just became known.
    fn act(&mut self, action: usize) -> Result<(Transition, bool), FseeError> {
        if self.steps >= self.cfg.step_cap {
            return Err(FseeError::BudgetExhausted(self.cfg.step_cap));
        }
        let before = self.env.state().digest();
        let t = self.env.step(action);
        self.steps += 1;
        let mut changed = self.learners.record(&self.shape.space, &t);
        for fb in &mut self.fallbacks {
            changed |= fb.record(&self.shape.space, &t);
        }
        self.cumulative += t.reward;
        let row = TraceRow {
            step: self.steps as u64,
            k: self.k,
            phase: self.phase,
            state: before,
            action: self.env.mdp().actions[action].clone(),
            reward: t.reward,
            cumulative_reward: self.cumulative,
            active_features: self.active.len(),
            events: std::mem::take(&mut self.pending),
        };
        self.trace.rows.push(row);
        Ok((t, changed))
    }

    fn pairwise(&mut self) -> bool {
        let removed = self.learners.pairwise_eliminate();
        for (node, a, parents) in &removed {
            let e = format!(
                "pairwise:{}/{}:{}",
                self.env.mdp().node_name(*node),
                self.env.mdp().actions[*a],
                self.shape.space.render_features(parents.as_slice())
            );
            self.event(e);
        }
        !removed.is_empty()
    }

    fn verdict_events(&mut self, verdicts: &[SupersetVerdict]) {
        for v in verdicts {
            let e = v.render(
                &self.shape.space,
                self.env.mdp().node_name(v.node),
                &self.env.mdp().actions[v.action],
            );
            self.event(e);
        }
    }

    /// Superset test on `window`, then removal of dead features.
    fn eliminate(
        &mut self,
        window: &SupersetWindow,
        targets: &[Target],
    ) -> (Vec<SupersetVerdict>, Vec<Target>) {
        let verdicts = superset_test(&self.shape.space, &mut self.learners, window, &self.active);
        self.verdict_events(&verdicts);
        let (active, targets, removed) =
            shrink_active(&self.shape.space, &self.active, &mut self.learners, targets);
        self.active = active;
        for f in removed {
            let e = format!("eliminate:{}", self.shape.space.name(f));
            self.event(e);
        }
        (verdicts, targets)
    }

    fn credit(&self, targets: &mut [Target], state: &State) -> bool {
        let m = self.cfg.m;
        let mut fresh = false;
        for t in targets.iter_mut() {
            if matches(state, &t.g) {
                fresh |= t.visits < m;
                t.visits += 1;
            }
        }
        fresh
    }

    /// Targeted exploration at the current `K` until every remaining target
    /// is `m`-visited or given up. Returns the surviving features.
    pub fn learn_and_select(&mut self) -> Result<Vec<usize>, FseeError> {
        self.phase = Phase::LearnSelect;
        let m = self.cfg.m;
        let mut targets = fresh_targets(&self.shape.space, &self.active, self.k);
        let start = self.env.state().clone();
        self.credit(&mut targets, &start);
        let mut retired: Vec<crate::fmdp::FeatureValueVector> = Vec::new();
        let mut fruitless: Vec<(crate::fmdp::FeatureValueVector, u32)> = Vec::new();
        let mut window = SupersetWindow::new();
        while let Some(goal) = targets
            .iter()
            .find(|t| t.visits < m && !retired.contains(&t.g))
            .map(|t| t.g.clone())
        {
            let objective = Objective::Reach(goal.clone());
            let (mut tab, mut plan) = self.plan(&objective)?;
            let mut hit = false;
            for i in 0..self.cfg.episode_steps {
                let action = plan.action(&tab, self.env.state());
                let (t, changed) = self.act(action)?;
                hit = self.credit(&mut targets, &t.next);
                window.push(t);
                let eliminated = self.pairwise();
                if hit {
                    break;
                }
                if changed || eliminated || (i + 1) % self.cfg.check_every.max(1) == 0 {
                    (tab, plan) = self.plan(&objective)?;
                }
            }
            if hit {
                continue;
            }
            self.event(format!("stuck:{}", goal.render(&self.shape.space)));
            let (verdicts, rebuilt) = self.eliminate(&window, &targets);
            window.clear();
            targets = rebuilt;
            if verdicts.is_empty() {
                let slot = match fruitless.iter().position(|(g, _)| *g == goal) {
                    Some(i) => i,
                    None => {
                        fruitless.push((goal.clone(), 0));
                        fruitless.len() - 1
                    }
                };
                fruitless[slot].1 += 1;
                if fruitless[slot].1 >= self.cfg.retire_after {
                    self.event(format!("retire:{}", goal.render(&self.shape.space)));
                    retired.push(goal);
                }
            }
        }
        Ok(self.active.clone())
    }

    /// Exploits the learned model over `features` for `steps` steps.
    pub fn pac_fmdp_rl(&mut self, features: &[usize], steps: usize) -> Result<(), FseeError> {
        self.phase = Phase::Exploit;
        self.active = features.to_vec();
        let mut current: Option<(TabularMdp, Plan)> = None;
        for i in 0..steps {
            let (tab, plan) = match current.take() {
                Some(p) => p,
                None => self.plan(&Objective::Reward)?,
            };
            let action = plan.action(&tab, self.env.state());
            let (_, changed) = self.act(action)?;
            let mut replan = changed;
            if (i + 1) % self.cfg.check_every.max(1) == 0 {
                self.pairwise();
                replan = true;
            }
            if !replan {
                current = Some((tab, plan));
            }
        }
        Ok(())
    }

    /// Greedy optimistic behavior from the first step, incrementing `K` on
    /// schedule and running the superset test in the background.
    pub fn passive(&mut self, total_steps: usize) -> Result<(), FseeError> {
        self.phase = Phase::Passive;
        let n = self.shape.space.len();
        let mut schedule = self.cfg.increment_schedule.clone();
        schedule.sort_unstable();
        let mut next_increment = 0;
        let mut window = SupersetWindow::sliding(self.cfg.passive_window());
        let mut current: Option<(TabularMdp, Plan)> = None;
        let every = self.cfg.check_every.max(1);
        for i in 0..total_steps {
            while next_increment < schedule.len() && schedule[next_increment] <= i {
                next_increment += 1;
                if self.k < n {
                    self.fallbacks.insert(0, self.learners.clone());
                    self.start_phase(self.k + 1);
                    window.clear();
                    current = None;
                }
            }
            let (tab, plan) = match current.take() {
                Some(p) => p,
                None => self.plan(&Objective::Reward)?,
            };
            let action = plan.action(&tab, self.env.state());
            let (t, changed) = self.act(action)?;
            window.push(t);
            let mut replan = changed;
            if (i + 1) % every == 0 {
                self.pairwise();
                if self.cfg.superset_test {
                    self.eliminate(&window, &[]);
                }
                replan = true;
            }
            if !replan {
                current = Some((tab, plan));
            }
        }
        Ok(())
    }

    fn finish(mut self, selected: Vec<(usize, Vec<usize>)>, budget_exhausted: bool) -> RunOutcome {
        if budget_exhausted {
            self.event("budget-exhausted".into());
        }
        if let Some(last) = self.trace.rows.last_mut() {
            last.events.append(&mut self.pending);
        }
        RunOutcome {
            trace: self.trace,
            selected,
            budget_exhausted,
        }
    }
}

/// The outer loop: for each `K`, explore with feature elimination, then
/// exploit over the surviving features.
pub fn run_fsee(mdp: FactoredMdp, cfg: &FseeConfig) -> Result<RunOutcome, FseeError> {
    let k_max = cfg
        .k_max
        .unwrap_or(mdp.n_features())
        .clamp(1, mdp.n_features().max(1));
    let mut agent = Agent::new(mdp, cfg.clone());
    let mut selected = Vec::new();
    for k in 1..=k_max {
        agent.start_phase(k);
        let features = match agent.learn_and_select() {
            Ok(f) => f,
            Err(FseeError::BudgetExhausted(_)) => {
                selected.push((k, agent.active.clone()));
                return Ok(agent.finish(selected, true));
            }
            Err(e) => return Err(e),
        };
        selected.push((k, features.clone()));
        match agent.pac_fmdp_rl(&features, cfg.exploit_steps) {
            Ok(()) => {}
            Err(FseeError::BudgetExhausted(_)) => return Ok(agent.finish(selected, true)),
            Err(e) => return Err(e),
        }
    }
    Ok(agent.finish(selected, false))
}

/// The passive variant for `total_steps` steps. With the superset test
/// disabled this is the no-feature-selection baseline.
pub fn run_passive(
    mdp: FactoredMdp,
    cfg: &FseeConfig,
    total_steps: usize,
) -> Result<RunOutcome, FseeError> {
    let mut agent = Agent::new(mdp, cfg.clone());
    agent.start_phase(1);
    match agent.passive(total_steps) {
        Ok(()) => {
            let selected = vec![(agent.k, agent.active.clone())];
            Ok(agent.finish(selected, false))
        }
        Err(FseeError::BudgetExhausted(_)) => {
            let selected = vec![(agent.k, agent.active.clone())];
            Ok(agent.finish(selected, true))
        }
        Err(e) => Err(e),
    }
}
