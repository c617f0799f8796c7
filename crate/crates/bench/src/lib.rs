//! Shared fixtures for the benchmarks in `benches/`.
use fsee_core::fmdp::Transition;
use fsee_core::fsee::Environment;
use fsee_core::FactoredMdp;

/// A fixed, action-cycling rollout of `steps` transitions.
pub fn rollout(mdp: &FactoredMdp, steps: usize) -> Vec<Transition> {
    let n = mdp.actions.len();
    let mut env = Environment::new(mdp.clone(), 7);
    (0..steps).map(|i| env.step((i * 7 / 3) % n)).collect()
}
