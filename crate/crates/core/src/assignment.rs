//! Task construction and vote aggregation.
//!
//! Each image is labelled by `target_replication` annotators (three by
//! default). A label seen at least twice and strictly more often than any
//! other wins. Otherwise the image is escalated to one more annotator, up to a
//! cap, after which it is marked unresolved.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{LabelKey, LabelOutcome, Protocol};

pub const DEFAULT_TASK_SIZE: usize = 50;
pub const DEFAULT_REPLICATION: usize = 3;
pub const DEFAULT_ESCALATION_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: TaskId,
    pub image_ids: Vec<String>,
    pub protocol: Protocol,
    /// Configured size; the last task of a partition may hold fewer images.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integrity error: {0}")]
    Integrity(String),
}

/// Splits `image_ids` into consecutive tasks of `size` images.
pub fn build_tasks(
    image_ids: &[String],
    size: usize,
    protocol: Protocol,
) -> Result<Vec<Task>, AssignmentError> {
    if size < 1 {
        return Err(AssignmentError::Config(
            "task size must be at least 1".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for id in image_ids {
        if !seen.insert(id) {
            return Err(AssignmentError::Integrity(format!(
                "image {id} listed twice"
            )));
        }
    }
    Ok(image_ids
        .chunks(size)
        .enumerate()
        .map(|(i, chunk)| Task {
            task_id: TaskId(format!("t{:04}", i + 1)),
            image_ids: chunk.to_vec(),
            protocol,
            size,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusPolicy {
    pub target_replication: usize,
    /// Largest number of votes an image may collect before it is unresolved.
    pub max_replication: usize,
}

impl Default for ConsensusPolicy {
    fn default() -> Self {
        ConsensusPolicy {
            target_replication: DEFAULT_REPLICATION,
            max_replication: DEFAULT_ESCALATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub annotator_id: String,
    pub outcome: LabelOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSet {
    pub image_id: String,
    pub votes: Vec<Vote>,
}

impl VoteSet {
    pub fn new(image_id: impl Into<String>) -> Self {
        VoteSet {
            image_id: image_id.into(),
            votes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn has_annotator(&self, annotator: &str) -> bool {
        self.votes.iter().any(|v| v.annotator_id == annotator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusKind {
    Final,
    NeedsEscalation,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConsensusResult {
    pub kind: ConsensusKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelOutcome>,
    pub vote_tally: BTreeMap<LabelKey, usize>,
}

/// Aggregates a vote set by exact label match.
pub fn aggregate(v: &VoteSet, policy: ConsensusPolicy) -> Result<ConsensusResult, AssignmentError> {
    if v.votes.is_empty() {
        return Err(AssignmentError::Integrity(format!(
            "image {} has no votes to aggregate",
            v.image_id
        )));
    }
    let mut annotators = BTreeSet::new();
    for vote in &v.votes {
        if !annotators.insert(vote.annotator_id.as_str()) {
            return Err(AssignmentError::Integrity(format!(
                "annotator {} voted twice on image {}",
                vote.annotator_id, v.image_id
            )));
        }
    }
    let mut tally: BTreeMap<LabelKey, usize> = BTreeMap::new();
    for vote in &v.votes {
        *tally.entry(vote.outcome.key()).or_default() += 1;
    }

    let n = v.votes.len();
    let top = tally.values().copied().max().unwrap_or(0);
    let leaders: Vec<&LabelKey> = tally
        .iter()
        .filter(|(_, c)| **c == top)
        .map(|(k, _)| k)
        .collect();

    let kind = if n < policy.target_replication {
        ConsensusKind::NeedsEscalation
    } else if top >= 2 && leaders.len() == 1 {
        ConsensusKind::Final
    } else if n < policy.max_replication {
        ConsensusKind::NeedsEscalation
    } else {
        ConsensusKind::Unresolved
    };

    let label = (kind == ConsensusKind::Final).then(|| {
        // Representative vote: smallest annotator id among the winners, so the
        // result does not depend on vote order.
        v.votes
            .iter()
            .filter(|x| &x.outcome.key() == leaders[0])
            .min_by(|a, b| a.annotator_id.cmp(&b.annotator_id))
            .map(|x| x.outcome.clone())
            .expect("the leading label has votes")
    });
    Ok(ConsensusResult {
        kind,
        label,
        vote_tally: tally,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::OutcomeKind;

    fn leaf(id: &str) -> LabelOutcome {
        LabelOutcome {
            kind: OutcomeKind::Classified,
            label: Some(id.parse().unwrap()),
            path: vec![],
            question_count: 1,
        }
    }

    fn votes(labels: &[&str]) -> VoteSet {
        VoteSet {
            image_id: "img".into(),
            votes: labels
                .iter()
                .enumerate()
                .map(|(i, l)| Vote {
                    annotator_id: format!("ann{i}"),
                    outcome: leaf(l),
                })
                .collect(),
        }
    }

    #[test]
    fn partitions_in_order() {
        let ids: Vec<String> = (0..1200).map(|i| format!("img{i}")).collect();
        let tasks = build_tasks(&ids, 50, Protocol::MethodC).unwrap();
        assert_eq!(tasks.len(), 24);
        assert!(tasks.iter().all(|t| t.image_ids.len() == 50));
        assert_eq!(tasks[1].image_ids[0], "img50");

        let tasks = build_tasks(&ids[..101], 100, Protocol::MethodA).unwrap();
        assert_eq!(
            tasks.iter().map(|t| t.image_ids.len()).collect::<Vec<_>>(),
            [100, 1]
        );

        let tasks = build_tasks(&ids[..5], 10, Protocol::MethodA).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].image_ids.len(), 5);
    }

    #[test]
    fn task_errors() {
        let ids = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            build_tasks(&ids, 0, Protocol::MethodA),
            Err(AssignmentError::Config(_))
        ));
        assert!(matches!(
            build_tasks(&ids, 5, Protocol::MethodA),
            Err(AssignmentError::Integrity(_))
        ));
    }

    #[test]
    fn two_of_three_is_final() {
        let r = aggregate(&votes(&["1", "1", "2"]), ConsensusPolicy::default()).unwrap();
        assert_eq!(r.kind, ConsensusKind::Final);
        assert_eq!(r.label.unwrap().label, Some("1".parse().unwrap()));
        let tally: Vec<_> = r
            .vote_tally
            .iter()
            .map(|(k, c)| (k.to_string(), *c))
            .collect();
        assert_eq!(tally, [("1".to_string(), 2), ("2".to_string(), 1)]);
    }

    #[test]
    fn all_distinct_escalates() {
        let r = aggregate(&votes(&["1", "2", "3"]), ConsensusPolicy::default()).unwrap();
        assert_eq!(r.kind, ConsensusKind::NeedsEscalation);
        assert!(r.label.is_none());
    }

    #[test]
    fn fourth_vote_breaks_deadlock() {
        let r = aggregate(&votes(&["1", "2", "3", "2"]), ConsensusPolicy::default()).unwrap();
        assert_eq!(r.kind, ConsensusKind::Final);
        assert_eq!(r.label.unwrap().label, Some("2".parse().unwrap()));

        let r = aggregate(&votes(&["1", "2", "1", "2"]), ConsensusPolicy::default()).unwrap();
        assert_eq!(r.kind, ConsensusKind::NeedsEscalation);
        let r = aggregate(
            &votes(&["1", "2", "1", "2", "3"]),
            ConsensusPolicy::default(),
        )
        .unwrap();
        assert_eq!(r.kind, ConsensusKind::Unresolved);
    }

    #[test]
    fn too_few_votes_need_more() {
        let r = aggregate(&votes(&["1", "1"]), ConsensusPolicy::default()).unwrap();
        assert_eq!(r.kind, ConsensusKind::NeedsEscalation);
    }

    #[test]
    fn kind_is_part_of_label_identity() {
        let mut v = votes(&["1", "1", "1"]);
        v.votes[0].outcome.kind = OutcomeKind::UnrecognisedAt;
        let r = aggregate(&v, ConsensusPolicy::default()).unwrap();
        assert_eq!(r.kind, ConsensusKind::Final);
        assert_eq!(r.vote_tally.len(), 2);
    }

    #[test]
    fn duplicate_annotator_rejected() {
        let mut v = votes(&["1", "1", "2"]);
        v.votes[1].annotator_id = "ann0".into();
        assert!(matches!(
            aggregate(&v, ConsensusPolicy::default()),
            Err(AssignmentError::Integrity(_))
        ));
        assert!(aggregate(&VoteSet::new("x"), ConsensusPolicy::default()).is_err());
    }
}
