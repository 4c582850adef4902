//! Role retention and role-transition estimation over window sequences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role held by an account in one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    Role(usize),
    Inactive,
}

impl State {
    pub fn role(self) -> Option<usize> {
        match self {
            State::Role(r) => Some(r),
            State::Inactive => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub account_id: String,
    pub states: Vec<State>,
}

/// One state per window for every account seen in window 0; accounts or
/// windows without an assignment become `Inactive`.
///
/// `assignments[w]` maps account id to cluster for window `w`.
pub fn build_sequences(
    assignments: &[BTreeMap<String, usize>],
    window_count: usize,
) -> Vec<StateSequence> {
    let Some(first) = assignments.first() else {
        return Vec::new();
    };
    first
        .keys()
        .map(|account| StateSequence {
            account_id: account.clone(),
            states: (0..window_count)
                .map(|w| {
                    assignments
                        .get(w)
                        .and_then(|a| a.get(account))
                        .map_or(State::Inactive, |&r| State::Role(r))
                })
                .collect(),
        })
        .collect()
}

/// Retention span from window 0: the length of the leading run equal to the
/// first state. `None` when the account is inactive at window 0.
pub fn retention_span(states: &[State]) -> Option<usize> {
    let first = states.first()?.role()?;
    Some(
        states
            .iter()
            .take_while(|s| **s == State::Role(first))
            .count(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionDistribution {
    /// Starting role → proportion of its accounts at each span `1..=window_count`
    /// (index `span - 1`).
    pub proportions: BTreeMap<usize, Vec<f64>>,
    /// Starting role → account count.
    pub accounts: BTreeMap<usize, usize>,
    /// Accounts inactive at window 0, left out.
    pub excluded: usize,
}

pub fn retention_distribution(sequences: &[StateSequence]) -> RetentionDistribution {
    let window_count = sequences.iter().map(|s| s.states.len()).max().unwrap_or(0);
    let mut counts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut excluded = 0;
    for seq in sequences {
        match (
            seq.states.first().and_then(|s| s.role()),
            retention_span(&seq.states),
        ) {
            (Some(role), Some(span)) => {
                counts.entry(role).or_insert_with(|| vec![0; window_count])[span - 1] += 1;
            }
            _ => excluded += 1,
        }
    }
    let accounts = counts
        .iter()
        .map(|(&r, c)| (r, c.iter().sum()))
        .collect::<BTreeMap<usize, usize>>();
    let proportions = counts
        .into_iter()
        .map(|(r, c)| {
            let total = accounts[&r] as f64;
            (r, c.into_iter().map(|x| x as f64 / total).collect())
        })
        .collect();
    RetentionDistribution {
        proportions,
        accounts,
        excluded,
    }
}

/// Row-normalized transition counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub probabilities: Vec<Vec<f64>>,
    /// Rows without outgoing observations (all-zero probabilities).
    pub empty_rows: Vec<usize>,
}

impl TransitionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let mut empty_rows = Vec::new();
        let probabilities = counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    empty_rows.push(i);
                    vec![0.0; row.len()]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect();
        Self {
            counts,
            probabilities,
            empty_rows,
        }
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// How `Inactive` enters transition counting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InactiveMode {
    /// Pairs touching an inactive window are skipped.
    #[default]
    Exclude,
    /// Inactive is an extra state with index `k`.
    AsState,
}

fn state_index(s: State, k: usize, mode: InactiveMode) -> Option<usize> {
    match (s, mode) {
        (State::Role(r), _) => Some(r),
        (State::Inactive, InactiveMode::AsState) => Some(k),
        (State::Inactive, InactiveMode::Exclude) => None,
    }
}

fn check_roles(sequences: &[StateSequence], k: usize) -> Result<()> {
    for seq in sequences {
        if let Some(r) = seq.states.iter().filter_map(|s| s.role()).find(|&r| r >= k) {
            return Err(Error::InvalidInput(format!(
                "account {} has role {r} outside 0..{k}",
                seq.account_id
            )));
        }
    }
    Ok(())
}

/// Maximum-likelihood transition matrix pooled over all consecutive window
/// pairs.
pub fn transition_matrix(
    sequences: &[StateSequence],
    k: usize,
    mode: InactiveMode,
) -> Result<TransitionMatrix> {
    transition_matrix_between(sequences, k, mode, None)
}

/// Transition matrix for the single window pair `(from, from + 1)`.
pub fn pair_transition_matrix(
    sequences: &[StateSequence],
    k: usize,
    mode: InactiveMode,
    from: usize,
) -> Result<TransitionMatrix> {
    transition_matrix_between(sequences, k, mode, Some(from))
}

fn transition_matrix_between(
    sequences: &[StateSequence],
    k: usize,
    mode: InactiveMode,
    only: Option<usize>,
) -> Result<TransitionMatrix> {
    check_roles(sequences, k)?;
    let size = match mode {
        InactiveMode::Exclude => k,
        InactiveMode::AsState => k + 1,
    };
    let mut counts = vec![vec![0u64; size]; size];
    for seq in sequences {
        for (t, pair) in seq.states.windows(2).enumerate() {
            if only.is_some_and(|w| w != t) {
                continue;
            }
            if let (Some(i), Some(j)) =
                (state_index(pair[0], k, mode), state_index(pair[1], k, mode))
            {
                counts[i][j] += 1;
            }
        }
    }
    Ok(TransitionMatrix::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use State::{Inactive, Role};

    fn seq(id: &str, states: &[State]) -> StateSequence {
        StateSequence {
            account_id: id.into(),
            states: states.to_vec(),
        }
    }

    #[test]
    fn sequences_mark_missing_windows() {
        let mk = |pairs: &[(&str, usize)]| -> BTreeMap<String, usize> {
            pairs.iter().map(|(a, r)| (a.to_string(), *r)).collect()
        };
        let assignments = vec![
            mk(&[("a", 1), ("b", 2)]),
            mk(&[("a", 1), ("b", 2)]),
            mk(&[("a", 1), ("b", 2)]),
            mk(&[("a", 1)]),
        ];
        let s = build_sequences(&assignments, 4);
        assert_eq!(s[0].states, vec![Role(1); 4]);
        assert_eq!(s[1].states, vec![Role(2), Role(2), Role(2), Inactive]);
    }

    #[test]
    fn flamer_to_sympathizer_sequence() {
        let (flamer, sympathizer) = (2, 4);
        let s = seq(
            "acct",
            &[Role(flamer), Role(flamer), Role(flamer), Role(sympathizer)],
        );
        assert_eq!(retention_span(&s.states), Some(3));
    }

    #[test]
    fn retention_spans() {
        assert_eq!(retention_span(&[Role(0); 4]), Some(4));
        assert_eq!(
            retention_span(&[Role(0), Role(0), Role(1), Role(0)]),
            Some(2)
        );
        assert_eq!(
            retention_span(&[Role(0), Inactive, Role(0), Role(0)]),
            Some(1)
        );
        assert_eq!(retention_span(&[Inactive, Role(0)]), None);
    }

    #[test]
    fn retention_distribution_sums_to_one() {
        let seqs = vec![
            seq("a", &[Role(0), Role(0), Role(0), Role(0)]),
            seq("b", &[Role(0), Role(1), Role(0), Role(0)]),
            seq("c", &[Role(1), Role(1), Inactive, Role(1)]),
            seq("d", &[Inactive, Role(1), Role(1), Role(1)]),
        ];
        let r = retention_distribution(&seqs);
        assert_eq!(r.excluded, 1);
        assert_eq!(r.proportions[&0], vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(r.proportions[&1], vec![0.0, 1.0, 0.0, 0.0]);
        for p in r.proportions.values() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_chain_is_identity_row() {
        let seqs = vec![seq("a", &[Role(0); 4]), seq("b", &[Role(0); 4])];
        let t = transition_matrix(&seqs, 3, InactiveMode::Exclude).unwrap();
        assert_eq!(t.probabilities[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(t.empty_rows, vec![1, 2]);
        assert_eq!(t.total(), 6);
    }

    #[test]
    fn hand_counted_transitions() {
        let seqs = vec![
            seq("1", &[Role(0), Role(1)]),
            seq("2", &[Role(0), Role(1)]),
            seq("3", &[Role(0), Role(0)]),
        ];
        let t = transition_matrix(&seqs, 2, InactiveMode::Exclude).unwrap();
        assert!((t.probabilities[0][1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.probabilities[0][0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inactive_modes() {
        let seqs = vec![seq("a", &[Role(0), Inactive, Role(1), Role(1)])];
        let ex = transition_matrix(&seqs, 2, InactiveMode::Exclude).unwrap();
        assert_eq!(ex.total(), 1);
        let st = transition_matrix(&seqs, 2, InactiveMode::AsState).unwrap();
        assert_eq!(st.size(), 3);
        assert_eq!(st.counts[0][2], 1);
        assert_eq!(st.counts[2][1], 1);
        assert_eq!(st.total(), 3);
    }

    #[test]
    fn per_pair_matrices_partition_pooled_counts() {
        let seqs = vec![
            seq("a", &[Role(0), Role(1), Role(1), Role(0)]),
            seq("b", &[Role(1), Role(1), Role(0), Role(0)]),
        ];
        let pooled = transition_matrix(&seqs, 2, InactiveMode::Exclude).unwrap();
        let mut sum = vec![vec![0u64; 2]; 2];
        for w in 0..3 {
            let m = pair_transition_matrix(&seqs, 2, InactiveMode::Exclude, w).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += m.counts[i][j];
                }
            }
        }
        assert_eq!(sum, pooled.counts);
    }

    #[test]
    fn out_of_range_role_rejected() {
        let seqs = vec![seq("a", &[Role(5), Role(0)])];
        assert!(transition_matrix(&seqs, 2, InactiveMode::Exclude).is_err());
    }
}
