mod support;

use proptest::prelude::*;
use support::{all_patterns, rule_oracle};
use visannot_core::assignment::{aggregate, ConsensusKind, ConsensusPolicy, Vote, VoteSet};
use visannot_core::{LabelOutcome, OutcomeKind};

fn vote_set(labels: &[&str]) -> VoteSet {
    VoteSet {
        image_id: "img".into(),
        votes: labels
            .iter()
            .enumerate()
            .map(|(i, l)| Vote {
                annotator_id: format!("ann{i}"),
                outcome: LabelOutcome {
                    kind: OutcomeKind::Classified,
                    label: Some(l.parse().unwrap()),
                    path: vec![],
                    question_count: 1,
                },
            })
            .collect(),
    }
}

#[test]
fn exhaustive_agreement_with_rule_oracle() {
    let policy = ConsensusPolicy::default();
    let alphabet = ["1", "2", "3"];
    let mut checked = 0;
    for len in 1..=5 {
        for p in all_patterns(&alphabet, len) {
            let got = aggregate(&vote_set(&p), policy).unwrap();
            assert_eq!(got.kind, rule_oracle(&p, 3, 5), "{p:?}");
            if got.kind == ConsensusKind::Final {
                let label = got.label.unwrap().label.unwrap().to_string();
                assert_eq!(
                    p.iter().filter(|v| **v == label).count(),
                    *got.vote_tally.values().max().unwrap()
                );
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 3 + 9 + 27 + 81 + 243);
}

#[test]
fn escalation_exactly_on_all_distinct_triples() {
    for p in all_patterns(&["1", "2", "3"], 3) {
        let distinct = p[0] != p[1] && p[1] != p[2] && p[0] != p[2];
        let kind = aggregate(&vote_set(&p), ConsensusPolicy::default())
            .unwrap()
            .kind;
        assert_eq!(kind == ConsensusKind::NeedsEscalation, distinct, "{p:?}");
    }
}

proptest! {
    #[test]
    fn order_of_votes_does_not_matter(
        labels in proptest::collection::vec(prop_oneof![Just("1"), Just("2"), Just("3"), Just("1-1")], 1..7),
        rotation in 0usize..7,
    ) {
        let policy = ConsensusPolicy { target_replication: 3, max_replication: 7 };
        let base = vote_set(&labels);
        let mut rotated = base.clone();
        let n = rotated.votes.len();
        rotated.votes.rotate_left(rotation % n);
        rotated.votes.reverse();
        prop_assert_eq!(aggregate(&base, policy).unwrap(), aggregate(&rotated, policy).unwrap());
    }
}
