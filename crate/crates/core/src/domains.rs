//! Benchmark environments.

use serde::{Deserialize, Serialize};

use crate::fmdp::{Cpt, FactoredMdp, FeatureSpace, ParentSet, RewardNode};

fn deterministic(width: usize, value: usize) -> Vec<f64> {
    let mut row = vec![0.0; width];
    row[value] = 1.0;
    row
}

fn bernoulli(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToggleConfig {
    /// Whether the unnecessary features `f2`, `f3` exist.
    #[serde(default = "default_true")]
    pub include_unnecessary: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ToggleConfig {
    fn default() -> Self {
        Self {
            include_unnecessary: true,
        }
    }
}

/// Outcome values of the Toggle reward node.
pub const TOGGLE_REWARD_OUTCOMES: [f64; 3] = [0.0, 0.025, 1.0];

/// Toggle: one necessary binary feature `f1` whose two actions alternate
/// between a risky 0.05-Bernoulli payout and a safe 0.025 payout, plus two
/// unnecessary features `f2`, `f3` that depend on each other.
pub fn build_toggle(cfg: &ToggleConfig) -> FactoredMdp {
    let n = if cfg.include_unnecessary { 3 } else { 1 };
    let space = FeatureSpace::uniform(n, 2);
    let f1 = ParentSet::new([0]);
    // a1 always sets f1 to 1 and a2 always sets it to 0: from f1=0 the first
    // moves and the second stays; at f1=1 the roles swap.
    let mut transitions = vec![vec![
        Cpt::from_fn(&space, f1.clone(), |_| deterministic(2, 1)),
        Cpt::from_fn(&space, f1.clone(), |_| deterministic(2, 0)),
    ]];
    if cfg.include_unnecessary {
        let pair = ParentSet::new([1, 2]);
        for _ in 0..2 {
            transitions.push(vec![
                Cpt::from_fn(&space, pair.clone(), |v| match v {
                    [0, 0] => bernoulli(0.1),
                    _ => deterministic(2, 0),
                }),
                Cpt::from_fn(&space, pair.clone(), |v| match v {
                    [1, 1] => deterministic(2, 1),
                    _ => deterministic(2, 0),
                }),
            ]);
        }
    }
    let risky = vec![0.95, 0.0, 0.05];
    let safe = deterministic(3, 1);
    let reward = RewardNode {
        name: "reward".into(),
        outcomes: TOGGLE_REWARD_OUTCOMES.to_vec(),
        cpts: vec![
            Cpt::from_fn(&space, f1.clone(), |v| {
                if v[0] == 0 {
                    risky.clone()
                } else {
                    safe.clone()
                }
            }),
            Cpt::from_fn(&space, f1, |v| {
                if v[0] == 0 {
                    safe.clone()
                } else {
                    risky.clone()
                }
            }),
        ],
    };
    FactoredMdp {
        space,
        actions: vec!["a1".into(), "a2".into()],
        transitions,
        rewards: vec![reward],
        r_max: 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardToggleConfig {
    pub n_features: usize,
    pub low_prob: f64,
    pub high_prob: f64,
    /// Drop the toggle feature from `f1`'s parents.
    pub tweaked: bool,
    /// Probability that a set feature survives the `reset` action.
    pub reset_keep: f64,
}

impl Default for HardToggleConfig {
    fn default() -> Self {
        Self {
            n_features: 5,
            low_prob: 0.05,
            high_prob: 0.5,
            tweaked: false,
            reset_keep: 0.5,
        }
    }
}

/// The toggle-gated chain: under `advance`, `f_i` can only rise when
/// `f_1..f_{i-1}` are all set and `f_i` is clear, with a rate chosen by the
/// last feature (the toggle). `reset` clears each set feature with
/// probability `1 - reset_keep`. Reward 1 while `f_{n-1}` is set.
pub fn build_hard_toggle(cfg: &HardToggleConfig) -> FactoredMdp {
    let n = cfg.n_features;
    assert!(n >= 3, "hard toggle needs at least 3 features");
    let space = FeatureSpace::uniform(n, 2);
    let toggle = n - 1;
    let mut transitions = Vec::with_capacity(n);
    for i in 0..n {
        let parents = if i == 0 && cfg.tweaked {
            ParentSet::new([0])
        } else {
            ParentSet::new((0..=i).chain([toggle]))
        };
        let order = parents.as_slice().to_vec();
        let advance = Cpt::from_fn(&space, parents, |vals| {
            let value_of = |f: usize| vals[order.iter().position(|&p| p == f).unwrap()];
            let triggered = (0..i).all(|j| value_of(j) == 1) && value_of(i) == 0;
            if triggered {
                let toggle_on = order.contains(&toggle) && value_of(toggle) == 1;
                bernoulli(if toggle_on {
                    cfg.high_prob
                } else {
                    cfg.low_prob
                })
            } else {
                deterministic(2, value_of(i))
            }
        });
        let reset = Cpt::from_fn(&space, ParentSet::new([i]), |v| {
            if v[0] == 1 {
                bernoulli(cfg.reset_keep)
            } else {
                deterministic(2, 0)
            }
        });
        transitions.push(vec![advance, reset]);
    }
    let goal = ParentSet::new([n - 2]);
    let paid = |v: &[usize]| deterministic(2, v[0]);
    let reward = RewardNode {
        name: "reward".into(),
        outcomes: vec![0.0, 1.0],
        cpts: vec![
            Cpt::from_fn(&space, goal.clone(), paid),
            Cpt::from_fn(&space, goal, paid),
        ],
    };
    FactoredMdp {
        space,
        actions: vec!["advance".into(), "reset".into()],
        transitions,
        rewards: vec![reward],
        r_max: 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StockTradingConfig {
    pub sectors: usize,
    pub stocks_per_sector: usize,
    pub rise_base: f64,
    pub rise_slope: f64,
}

impl Default for StockTradingConfig {
    fn default() -> Self {
        Self {
            sectors: 3,
            stocks_per_sector: 2,
            rise_base: 0.1,
            rise_slope: 0.8,
        }
    }
}

/// Stock Trading: an ownership bit per sector followed by a rising bit per
/// stock (sector-major). Each stock rises with probability
/// `rise_base + rise_slope * (rising fraction of its sector)`. An owned
/// sector pays +1 per rising and -1 per falling stock.
pub fn build_stock_trading(cfg: &StockTradingConfig) -> FactoredMdp {
    assert!(cfg.sectors > 0 && cfg.stocks_per_sector > 0);
    assert!(cfg.rise_base + cfg.rise_slope <= 1.0 && cfg.rise_base >= 0.0 && cfg.rise_slope >= 0.0);
    let k = cfg.stocks_per_sector;
    let mut features: Vec<(String, usize)> = (1..=cfg.sectors)
        .map(|j| (format!("own_s{j}"), 2))
        .collect();
    for j in 1..=cfg.sectors {
        for i in 1..=k {
            features.push((format!("stock_s{j}_{i}"), 2));
        }
    }
    let space = FeatureSpace::new(features);
    let stock = |sector: usize, i: usize| cfg.sectors + sector * k + i;
    let mut actions = Vec::new();
    for j in 1..=cfg.sectors {
        actions.push(format!("buy_s{j}"));
        actions.push(format!("sell_s{j}"));
    }
    actions.push("noop".into());
    let n_actions = actions.len();

    let mut transitions = Vec::with_capacity(space.len());
    for sector in 0..cfg.sectors {
        let own = ParentSet::new([sector]);
        transitions.push(
            (0..n_actions)
                .map(|a| {
                    Cpt::from_fn(&space, own.clone(), |v| {
                        if a == 2 * sector {
                            deterministic(2, 1)
                        } else if a == 2 * sector + 1 {
                            deterministic(2, 0)
                        } else {
                            deterministic(2, v[0])
                        }
                    })
                })
                .collect(),
        );
    }
    for sector in 0..cfg.sectors {
        let peers = ParentSet::new((0..k).map(|i| stock(sector, i)));
        for _ in 0..k {
            let cpt = Cpt::from_fn(&space, peers.clone(), |v| {
                let rising = v.iter().sum::<usize>() as f64 / k as f64;
                bernoulli(cfg.rise_base + cfg.rise_slope * rising)
            });
            transitions.push(vec![cpt; n_actions]);
        }
    }

    // Distinct realizable sector payouts: 0 when not owned, 2r - k when owned.
    let mut outcomes: Vec<f64> = (0..=k).map(|r| 2.0 * r as f64 - k as f64).collect();
    outcomes.push(0.0);
    outcomes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    outcomes.dedup();
    let rewards = (0..cfg.sectors)
        .map(|sector| {
            let parents =
                ParentSet::new(std::iter::once(sector).chain((0..k).map(|i| stock(sector, i))));
            let cpt = Cpt::from_fn(&space, parents, |v| {
                let payout = if v[0] == 1 {
                    let rising = v[1..].iter().sum::<usize>() as f64;
                    2.0 * rising - k as f64
                } else {
                    0.0
                };
                let idx = outcomes.iter().position(|&o| o == payout).unwrap();
                deterministic(outcomes.len(), idx)
            });
            RewardNode {
                name: format!("profit_s{}", sector + 1),
                outcomes: outcomes.clone(),
                cpts: vec![cpt; n_actions],
            }
        })
        .collect();
    FactoredMdp {
        space,
        actions,
        transitions,
        rewards,
        r_max: (cfg.sectors * k) as f64,
    }
}
