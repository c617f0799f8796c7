//! JSON domain description files.
//!
//! Probabilities are written as decimal strings so that files are exact and
//! diffable. Rows are keyed by the parent values joined with `|` (the empty
//! string for a parentless table).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate, Cpt, FactoredMdp, FeatureSpace, ParentSet, RewardNode, ROW_SUM_TOLERANCE};

/// Rows read from a file must sum to one within this tolerance.
pub const LOAD_ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DomainFileError {
    #[error("malformed domain file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("domain violates {} invariant(s): {}", .0.len(), .0.join("; "))]
    Violations(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    features: Vec<FeatureEntry>,
    actions: Vec<String>,
    transitions: Vec<TransitionEntry>,
    #[serde(default)]
    rewards: Vec<RewardEntry>,
    r_max: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureEntry {
    name: String,
    domain_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionEntry {
    feature: String,
    action: String,
    parents: Vec<String>,
    rows: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardEntry {
    name: String,
    outcomes: Vec<f64>,
    tables: Vec<TableEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    action: String,
    parents: Vec<String>,
    rows: BTreeMap<String, Vec<String>>,
}

fn row_key(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

fn encode_rows(space: &FeatureSpace, cpt: &Cpt) -> BTreeMap<String, Vec<String>> {
    cpt.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let key = row_key(&space.assignment_values(cpt.parents.as_slice(), i));
            (key, row.iter().map(|p| format!("{p}")).collect())
        })
        .collect()
}

pub fn to_domain_file(mdp: &FactoredMdp) -> String {
    let space = &mdp.space;
    let names = |ps: &ParentSet| {
        ps.as_slice()
            .iter()
            .map(|&p| space.name(p).to_string())
            .collect()
    };
    let file = DomainFile {
        features: space
            .names
            .iter()
            .zip(&space.domain_sizes)
            .map(|(n, &d)| FeatureEntry {
                name: n.clone(),
                domain_size: d,
            })
            .collect(),
        actions: mdp.actions.clone(),
        transitions: mdp
            .transitions
            .iter()
            .enumerate()
            .flat_map(|(f, per_action)| {
                per_action
                    .iter()
                    .enumerate()
                    .map(move |(a, cpt)| (f, a, cpt))
            })
            .map(|(f, a, cpt)| TransitionEntry {
                feature: space.name(f).to_string(),
                action: mdp.actions[a].clone(),
                parents: names(&cpt.parents),
                rows: encode_rows(space, cpt),
            })
            .collect(),
        rewards: mdp
            .rewards
            .iter()
            .map(|r| RewardEntry {
                name: r.name.clone(),
                outcomes: r.outcomes.clone(),
                tables: r
                    .cpts
                    .iter()
                    .enumerate()
                    .map(|(a, cpt)| TableEntry {
                        action: mdp.actions[a].clone(),
                        parents: names(&cpt.parents),
                        rows: encode_rows(space, cpt),
                    })
                    .collect(),
            })
            .collect(),
        r_max: mdp.r_max,
    };
    serde_json::to_string_pretty(&file).expect("domain serialization cannot fail") + "\n"
}

fn decode_table(
    space: &FeatureSpace,
    parents: &[String],
    rows: &BTreeMap<String, Vec<String>>,
    width: usize,
    label: &str,
) -> Result<Cpt, DomainFileError> {
    let ids = parents
        .iter()
        .map(|p| {
            space
                .index_of(p)
                .ok_or_else(|| DomainFileError::Invalid(format!("{label}: unknown parent {p}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let parent_set = ParentSet::new(ids.iter().copied());
    if parent_set.len() != ids.len() {
        return Err(DomainFileError::Invalid(format!(
            "{label}: duplicate parent"
        )));
    }
    let count = space
        .assignment_count(parent_set.as_slice())
        .ok_or_else(|| DomainFileError::Invalid(format!("{label}: table too large")))?;
    if rows.len() != count {
        return Err(DomainFileError::Invalid(format!(
            "{label}: {} rows for {count} parent assignments",
            rows.len()
        )));
    }
    // Keys follow the file's parent order; tables are stored in sorted order.
    let mut table = vec![Vec::new(); count];
    for (key, probs) in rows {
        let values: Vec<usize> = if key.is_empty() {
            Vec::new()
        } else {
            key.split('|')
                .map(|v| v.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| DomainFileError::Invalid(format!("{label}: bad row key {key:?}")))?
        };
        if values.len() != ids.len() {
            return Err(DomainFileError::Invalid(format!(
                "{label}: bad row key {key:?}"
            )));
        }
        let mut full = vec![0; space.len()];
        for (&f, &v) in ids.iter().zip(&values) {
            if v >= space.domain_size(f) {
                return Err(DomainFileError::Invalid(format!(
                    "{label}: row key {key:?} out of range"
                )));
            }
            full[f] = v;
        }
        let idx = space.assignment_index(parent_set.as_slice(), &super::State(full));
        let mut row = probs
            .iter()
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| {
                    DomainFileError::Invalid(format!("{label} [{key}]: bad probability {p:?}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != width {
            return Err(DomainFileError::Invalid(format!(
                "{label} [{key}]: {} probabilities, expected {width}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > LOAD_ROW_TOLERANCE
        {
            return Err(DomainFileError::Invalid(format!(
                "{label} [{key}]: probabilities must be nonnegative and sum to 1 (got {sum})"
            )));
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            row.iter_mut().for_each(|p| *p /= sum);
        }
        table[idx] = row;
    }
    Ok(Cpt {
        parents: parent_set,
        rows: table,
    })
}

pub fn from_domain_file(text: &str) -> Result<FactoredMdp, DomainFileError> {
    let file: DomainFile = serde_json::from_str(text)?;
    let space = FeatureSpace::new(
        file.features
            .iter()
            .map(|f| (f.name.clone(), f.domain_size)),
    );
    let action_of = |name: &str, label: &str| {
        file.actions
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| DomainFileError::Invalid(format!("{label}: unknown action {name}")))
    };
    let mut slots: Vec<Vec<Option<Cpt>>> = vec![vec![None; file.actions.len()]; space.len()];
    for t in &file.transitions {
        let label = format!("feature {} action {}", t.feature, t.action);
        let f = space
            .index_of(&t.feature)
            .ok_or_else(|| DomainFileError::Invalid(format!("{label}: unknown feature")))?;
        let a = action_of(&t.action, &label)?;
        if slots[f][a].is_some() {
            return Err(DomainFileError::Invalid(format!("{label}: defined twice")));
        }
        slots[f][a] = Some(decode_table(
            &space,
            &t.parents,
            &t.rows,
            space.domain_size(f),
            &label,
        )?);
    }
    let mut transitions = Vec::with_capacity(space.len());
    for (f, per_action) in slots.into_iter().enumerate() {
        let mut row = Vec::with_capacity(per_action.len());
        for (a, cpt) in per_action.into_iter().enumerate() {
            row.push(cpt.ok_or_else(|| {
                DomainFileError::Invalid(format!(
                    "feature {} has no table for action {}",
                    space.name(f),
                    file.actions[a]
                ))
            })?);
        }
        transitions.push(row);
    }
    let mut rewards = Vec::with_capacity(file.rewards.len());
    for r in &file.rewards {
        let mut cpts: Vec<Option<Cpt>> = vec![None; file.actions.len()];
        for t in &r.tables {
            let label = format!("reward {} action {}", r.name, t.action);
            let a = action_of(&t.action, &label)?;
            cpts[a] = Some(decode_table(
                &space,
                &t.parents,
                &t.rows,
                r.outcomes.len(),
                &label,
            )?);
        }
        let cpts = cpts
            .into_iter()
            .enumerate()
            .map(|(a, c)| {
                c.ok_or_else(|| {
                    DomainFileError::Invalid(format!(
                        "reward {} has no table for action {}",
                        r.name, file.actions[a]
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rewards.push(RewardNode {
            name: r.name.clone(),
            outcomes: r.outcomes.clone(),
            cpts,
        });
    }
    let mdp = FactoredMdp {
        space,
        actions: file.actions,
        transitions,
        rewards,
        r_max: file.r_max,
    };
    let violations = validate(&mdp);
    if violations.is_empty() {
        Ok(mdp)
    } else {
        Err(DomainFileError::Violations(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_toggle, ToggleConfig};

    #[test]
    fn toggle_round_trips() {
        let mdp = build_toggle(&ToggleConfig {
            include_unnecessary: true,
        });
        let text = to_domain_file(&mdp);
        assert_eq!(from_domain_file(&text).unwrap(), mdp);
    }

    #[test]
    fn loose_rows_are_rejected() {
        let text = r#"{
          "features": [{"name": "x", "domain_size": 2}],
          "actions": ["go"],
          "transitions": [{"feature": "x", "action": "go", "parents": [],
                           "rows": {"": ["0.5", "0.4"]}}],
          "r_max": 1.0
        }"#;
        match from_domain_file(text) {
            Err(DomainFileError::Invalid(msg)) => assert!(msg.contains("sum to 1"), "{msg}"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn near_one_rows_are_normalized() {
        let text = r#"{
          "features": [{"name": "x", "domain_size": 3}],
          "actions": ["go"],
          "transitions": [{"feature": "x", "action": "go", "parents": [],
                           "rows": {"": ["0.3333333333", "0.3333333333", "0.3333333334"]}}],
          "r_max": 1.0
        }"#;
        let mdp = from_domain_file(text).unwrap();
        let sum: f64 = mdp.transitions[0][0].rows[0].iter().sum();
        assert!((sum - 1.0).abs() <= ROW_SUM_TOLERANCE);
    }

    #[test]
    fn unknown_parent_is_invalid() {
        let text = r#"{
          "features": [{"name": "x", "domain_size": 2}],
          "actions": ["go"],
          "transitions": [{"feature": "x", "action": "go", "parents": ["y"], "rows": {}}],
          "r_max": 1.0
        }"#;
        assert!(matches!(
            from_domain_file(text),
            Err(DomainFileError::Invalid(_))
        ));
    }
}
