//! Interactive classification sessions.
//!
//! A session walks the hierarchy one yes/no question at a time. Confirming a
//! node descends into its children (vertical loop); denying a child moves on
//! to its next sibling (horizontal loop). The walk ends when a leaf is
//! confirmed (`Classified`), when every root is denied (`Discharged`), or when
//! every child of a confirmed node is denied (`UnrecognisedAt` that node).
//!
//! Method A replaces the walk with a single flat choice over the leaves.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{ConceptId, Hierarchy, VisualCategory};

/// Annotation protocol variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Flat choice among category names.
    #[serde(rename = "A")]
    MethodA,
    /// Hierarchy traversal, questions show names only.
    #[serde(rename = "B")]
    MethodB,
    /// Hierarchy traversal, questions show genus and differentia.
    #[serde(rename = "C")]
    MethodC,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::MethodA, Protocol::MethodB, Protocol::MethodC];

    pub fn letter(self) -> &'static str {
        match self {
            Protocol::MethodA => "A",
            Protocol::MethodB => "B",
            Protocol::MethodC => "C",
        }
    }

    pub fn uses_hierarchy(self) -> bool {
        self != Protocol::MethodA
    }

    pub fn uses_visual_properties(self) -> bool {
        self == Protocol::MethodC
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Method {}", self.letter())
    }
}

#[derive(Debug, Error)]
#[error("unknown protocol {0:?} (expected A, B or C)")]
pub struct ProtocolParseError(String);

impl FromStr for Protocol {
    type Err = ProtocolParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "A" | "METHODA" => Ok(Protocol::MethodA),
            "B" | "METHODB" => Ok(Protocol::MethodB),
            "C" | "METHODC" => Ok(Protocol::MethodC),
            _ => Err(ProtocolParseError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    DifferentiaYesNo,
    FlatChoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub id: ConceptId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub sequence_no: u32,
    pub kind: QuestionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<ConceptId>,
    pub prompt_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_genus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_differentia: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    /// Flat questions always offer "none of these".
    #[serde(default)]
    pub allows_none: bool,
}

impl Question {
    fn about(sequence_no: u32, node: &VisualCategory, protocol: Protocol) -> Self {
        let visual = protocol.uses_visual_properties();
        Question {
            sequence_no,
            kind: QuestionKind::DifferentiaYesNo,
            subject: Some(node.id.clone()),
            prompt_name: node.name.clone(),
            prompt_genus: visual.then(|| node.genus.clone()),
            prompt_differentia: visual.then(|| node.differentia.clone()),
            choices: Vec::new(),
            allows_none: false,
        }
    }

    fn flat(h: &Hierarchy) -> Self {
        Question {
            sequence_no: 1,
            kind: QuestionKind::FlatChoice,
            subject: None,
            prompt_name: "Which category names the main object?".into(),
            prompt_genus: None,
            prompt_differentia: None,
            choices: h
                .leaves()
                .into_iter()
                .map(|l| Choice {
                    id: l.id.clone(),
                    name: l.name.clone(),
                })
                .collect(),
            allows_none: true,
        }
    }

    /// Human-readable question text.
    pub fn text(&self) -> String {
        match (self.kind, &self.prompt_differentia, &self.prompt_genus) {
            (QuestionKind::FlatChoice, _, _) => self.prompt_name.clone(),
            (_, Some(diff), Some(genus)) => {
                format!("Does the object show {diff}, a kind of {genus}?")
            }
            _ => format!("Is the object a {}?", self.prompt_name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "value", content = "id", rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    Choice(ConceptId),
    NoneOfThese,
}

impl Answer {
    pub fn fits(&self, kind: QuestionKind) -> bool {
        matches!(
            (self, kind),
            (Answer::Yes | Answer::No, QuestionKind::DifferentiaYesNo)
                | (
                    Answer::Choice(_) | Answer::NoneOfThese,
                    QuestionKind::FlatChoice
                )
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Classified,
    UnrecognisedAt,
    Discharged,
}

/// Snapshot of one level of a label path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelText {
    pub id: ConceptId,
    pub name: String,
    pub genus: String,
    pub differentia: String,
}

impl From<&VisualCategory> for LevelText {
    fn from(n: &VisualCategory) -> Self {
        LevelText {
            id: n.id.clone(),
            name: n.name.clone(),
            genus: n.genus.clone(),
            differentia: n.differentia.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ConceptId>,
    /// Root-first snapshots of every level down to the label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<LevelText>,
    pub question_count: u32,
}

impl LabelOutcome {
    fn at(kind: OutcomeKind, h: &Hierarchy, id: &ConceptId, question_count: u32) -> Self {
        let path = h
            .path_to(id)
            .expect("engine only labels nodes of its hierarchy")
            .into_iter()
            .map(LevelText::from)
            .collect();
        LabelOutcome {
            kind,
            label: Some(id.clone()),
            path,
            question_count,
        }
    }

    fn discharged(question_count: u32) -> Self {
        LabelOutcome {
            kind: OutcomeKind::Discharged,
            label: None,
            path: Vec::new(),
            question_count,
        }
    }

    pub fn key(&self) -> LabelKey {
        LabelKey {
            kind: self.kind,
            id: self.label.clone(),
        }
    }
}

/// Identity of a label for consensus and agreement: outcome kind plus node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelKey {
    pub kind: OutcomeKind,
    pub id: Option<ConceptId>,
}

impl LabelKey {
    pub const DISCHARGED: &'static str = "Discharged";
    pub const UNRECOGNISED: &'static str = "Unrecognised";

    /// Rendering with every upper-level assignment folded into one value.
    pub fn collapsed(&self) -> String {
        match self.kind {
            OutcomeKind::UnrecognisedAt => Self::UNRECOGNISED.to_string(),
            _ => self.to_string(),
        }
    }
}

impl fmt::Display for LabelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "{id}"),
            None => f.write_str(Self::DISCHARGED),
        }
    }
}

impl Serialize for LabelKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub question: Question,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Next { question: Question },
    Finished { outcome: LabelOutcome },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("hierarchy has no categories")]
    EmptyHierarchy,
    #[error("session already finished")]
    Finished,
    #[error("answer {answer:?} does not fit a {expected:?} question")]
    KindMismatch {
        expected: QuestionKind,
        answer: Answer,
    },
    #[error("choice {0} is not among the offered categories")]
    UnknownChoice(ConceptId),
}

/// Where the walk currently stands.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Cursor {
    /// No root confirmed yet; asking about root `root` (1-based).
    PreRoot {
        root: u32,
    },
    /// `node` confirmed; asking about its child `child` (1-based).
    At {
        node: ConceptId,
        child: u32,
    },
    Flat,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSession {
    id: SessionId,
    image_id: String,
    hierarchy: Arc<Hierarchy>,
    protocol: Protocol,
    cursor: Cursor,
    transcript: Vec<Exchange>,
    pending: Option<Question>,
    outcome: Option<LabelOutcome>,
}

/// Opens a session and returns its first question.
pub fn start_session(
    id: SessionId,
    hierarchy: Arc<Hierarchy>,
    image_id: impl Into<String>,
    protocol: Protocol,
) -> Result<(AnnotationSession, Question), EngineError> {
    if hierarchy.is_empty() {
        return Err(EngineError::EmptyHierarchy);
    }
    let (cursor, first) = match protocol {
        Protocol::MethodA => (Cursor::Flat, Question::flat(&hierarchy)),
        _ => (
            Cursor::PreRoot { root: 1 },
            Question::about(1, &hierarchy.roots()[0], protocol),
        ),
    };
    let session = AnnotationSession {
        id,
        image_id: image_id.into(),
        hierarchy,
        protocol,
        cursor,
        transcript: Vec::new(),
        pending: Some(first.clone()),
        outcome: None,
    };
    Ok((session, first))
}

impl AnnotationSession {
    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn hierarchy(&self) -> &Arc<Hierarchy> {
        &self.hierarchy
    }

    pub fn transcript(&self) -> &[Exchange] {
        &self.transcript
    }

    pub fn pending_question(&self) -> Option<&Question> {
        self.pending.as_ref()
    }

    pub fn outcome(&self) -> Option<&LabelOutcome> {
        self.outcome.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// The confirmed node the walk currently stands on, if any.
    pub fn cursor_node(&self) -> Option<&ConceptId> {
        match &self.cursor {
            Cursor::At { node, .. } => Some(node),
            _ => None,
        }
    }

    /// Children of the cursor node not yet asked about, in order.
    pub fn sibling_queue(&self) -> Vec<ConceptId> {
        match &self.cursor {
            Cursor::At { node, child } => self
                .hierarchy
                .children_of(node)
                .iter()
                .skip(*child as usize)
                .map(|c| c.id.clone())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Checks that `answer` would be accepted, without applying it.
    pub fn check_answer(&self, answer: &Answer) -> Result<(), EngineError> {
        let q = self.pending.as_ref().ok_or(EngineError::Finished)?;
        if !answer.fits(q.kind) {
            return Err(EngineError::KindMismatch {
                expected: q.kind,
                answer: answer.clone(),
            });
        }
        if let Answer::Choice(id) = answer {
            if !q.choices.iter().any(|c| &c.id == id) {
                return Err(EngineError::UnknownChoice(id.clone()));
            }
        }
        Ok(())
    }

    pub fn submit_answer(&mut self, answer: Answer) -> Result<Step, EngineError> {
        self.check_answer(&answer)?;
        let question = self.pending.take().expect("checked above");
        let subject = question.subject.clone();
        self.transcript.push(Exchange {
            question,
            answer: answer.clone(),
        });
        let asked = self.transcript.len() as u32;
        let h = Arc::clone(&self.hierarchy);

        let next = match (&self.cursor, answer) {
            (Cursor::Flat, Answer::Choice(id)) => {
                Err(LabelOutcome::at(OutcomeKind::Classified, &h, &id, asked))
            }
            (Cursor::Flat, _) => Err(LabelOutcome::discharged(asked)),
            (Cursor::PreRoot { .. } | Cursor::At { .. }, Answer::Yes) => {
                let confirmed = subject.expect("yes/no questions have a subject");
                self.descend_into(&h, confirmed, asked)
            }
            (Cursor::PreRoot { root }, _) => {
                let next_root = root + 1;
                match h.roots().get(next_root as usize - 1) {
                    Some(r) => {
                        self.cursor = Cursor::PreRoot { root: next_root };
                        Ok(Question::about(asked + 1, r, self.protocol))
                    }
                    None => Err(LabelOutcome::discharged(asked)),
                }
            }
            (Cursor::At { node, child }, _) => {
                let node = node.clone();
                let next_child = child + 1;
                match h.children_of(&node).get(next_child as usize - 1) {
                    Some(c) => {
                        self.cursor = Cursor::At {
                            node: node.clone(),
                            child: next_child,
                        };
                        Ok(Question::about(asked + 1, c, self.protocol))
                    }
                    // Every child denied: the image stays at the confirmed node.
                    None => Err(LabelOutcome::at(
                        OutcomeKind::UnrecognisedAt,
                        &h,
                        &node,
                        asked,
                    )),
                }
            }
            (Cursor::Done, _) => unreachable!("finished sessions have no pending question"),
        };

        Ok(match next {
            Ok(q) => {
                self.pending = Some(q.clone());
                Step::Next { question: q }
            }
            Err(outcome) => {
                self.cursor = Cursor::Done;
                self.outcome = Some(outcome.clone());
                Step::Finished { outcome }
            }
        })
    }

    fn descend_into(
        &mut self,
        h: &Hierarchy,
        confirmed: ConceptId,
        asked: u32,
    ) -> Result<Question, LabelOutcome> {
        let node = h.get(&confirmed).expect("subjects come from the hierarchy");
        match node.children.first() {
            None => Err(LabelOutcome::at(
                OutcomeKind::Classified,
                h,
                &confirmed,
                asked,
            )),
            Some(first) => {
                self.cursor = Cursor::At {
                    node: confirmed,
                    child: 1,
                };
                Ok(Question::about(asked + 1, first, self.protocol))
            }
        }
    }
}

/// Largest number of questions any traversal session can ask.
///
/// Reaching the `i`-th sibling costs `i` questions at that level, so the worst
/// case is the maximum over leaves of the summed sibling positions along the
/// leaf's path (roots counted by their position among roots). Outcomes that
/// stop early never ask more than the leaf below them.
pub fn question_upper_bound(h: &Hierarchy) -> u32 {
    fn worst(children: &[VisualCategory]) -> u32 {
        children
            .iter()
            .enumerate()
            .map(|(i, c)| i as u32 + 1 + worst(&c.children))
            .max()
            .unwrap_or(0)
    }
    worst(h.roots())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay failed at answer {position}: {reason}")]
pub struct ReplayError {
    /// 1-based position in the answer list.
    pub position: usize,
    pub reason: String,
}

/// Feeds `answers` through a fresh session and returns the outcome.
pub fn replay(
    h: Arc<Hierarchy>,
    protocol: Protocol,
    answers: &[Answer],
    image_id: &str,
) -> Result<LabelOutcome, ReplayError> {
    let (mut session, _) = start_session(SessionId("replay".into()), h, image_id, protocol)
        .map_err(|e| ReplayError {
            position: 1,
            reason: e.to_string(),
        })?;
    for (i, a) in answers.iter().enumerate() {
        let position = i + 1;
        if session.is_finished() {
            return Err(ReplayError {
                position,
                reason: "answer after the session finished".into(),
            });
        }
        session.submit_answer(a.clone()).map_err(|e| ReplayError {
            position,
            reason: e.to_string(),
        })?;
    }
    session.outcome().cloned().ok_or_else(|| ReplayError {
        position: answers.len() + 1,
        reason: "transcript ended before an outcome".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::hierarchy::NodeSpec;

    fn id(s: &str) -> ConceptId {
        s.parse().unwrap()
    }

    fn run(
        h: &Arc<Hierarchy>,
        protocol: Protocol,
        answers: &[Answer],
    ) -> (AnnotationSession, Step) {
        let (mut s, _) = start_session(SessionId("t".into()), h.clone(), "img", protocol).unwrap();
        let mut last = None;
        for a in answers {
            last = Some(s.submit_answer(a.clone()).unwrap());
        }
        (s, last.expect("at least one answer"))
    }

    #[test]
    fn first_question_method_c() {
        let h = Arc::new(fixtures::goldfinch());
        let (_, q) = start_session(SessionId("s".into()), h, "img", Protocol::MethodC).unwrap();
        assert_eq!(q.subject, Some(id("1")));
        assert_eq!(q.kind, QuestionKind::DifferentiaYesNo);
        assert_eq!(q.sequence_no, 1);
        assert_eq!(
            q.prompt_differentia.as_deref(),
            Some("Feathered body with wings and a toothless beak")
        );
        assert!(q.text().contains("Feathered body with wings"));
    }

    #[test]
    fn method_b_questions_carry_names_only() {
        let h = Arc::new(fixtures::goldfinch());
        let (_, q) = start_session(SessionId("s".into()), h, "img", Protocol::MethodB).unwrap();
        assert_eq!(q.prompt_name, "Bird");
        assert!(q.prompt_genus.is_none() && q.prompt_differentia.is_none());
        assert_eq!(q.text(), "Is the object a Bird?");
    }

    #[test]
    fn first_question_method_a() {
        let h = Arc::new(fixtures::goldfinch());
        let (_, q) = start_session(SessionId("s".into()), h, "img", Protocol::MethodA).unwrap();
        assert_eq!(q.kind, QuestionKind::FlatChoice);
        let names: Vec<_> = q.choices.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["Goldfinch", "Vehicle", "Instrument"]);
        assert!(q.allows_none);

        let h12 = Arc::new(fixtures::twelve_categories());
        let (_, q) = start_session(SessionId("s".into()), h12, "img", Protocol::MethodA).unwrap();
        assert_eq!(q.choices.len(), 12);
    }

    #[test]
    fn empty_hierarchy_is_rejected() {
        let h = Arc::new(Hierarchy::build(vec![]).unwrap());
        let err = start_session(SessionId("s".into()), h, "img", Protocol::MethodC).unwrap_err();
        assert_eq!(err, EngineError::EmptyHierarchy);
    }

    #[test]
    fn canonical_flows() {
        use Answer::*;
        let h = Arc::new(fixtures::goldfinch());

        let (s, step) = run(&h, Protocol::MethodC, &[Yes, Yes, Yes]);
        let Step::Finished { outcome } = step else {
            panic!()
        };
        assert_eq!(outcome.kind, OutcomeKind::Classified);
        assert_eq!(outcome.label, Some(id("1-1-1")));
        assert_eq!(outcome.question_count, 3);
        assert_eq!(s.transcript().len(), 3);
        let names: Vec<_> = outcome.path.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["Bird", "Finch", "Goldfinch"]);

        let (_, step) = run(&h, Protocol::MethodC, &[No, No, No]);
        let Step::Finished { outcome } = step else {
            panic!()
        };
        assert_eq!(outcome.kind, OutcomeKind::Discharged);
        assert_eq!(outcome.label, None);

        let (_, step) = run(&h, Protocol::MethodC, &[Yes, No]);
        let Step::Finished { outcome } = step else {
            panic!()
        };
        assert_eq!(outcome.kind, OutcomeKind::UnrecognisedAt);
        assert_eq!(outcome.label, Some(id("1")));
    }

    #[test]
    fn horizontal_then_vertical_loop() {
        use Answer::*;
        let h = Arc::new(fixtures::twelve_categories());
        // Bird yes, Finch no, Owl yes, Barn owl no, Snowy owl yes.
        let (s, step) = run(&h, Protocol::MethodC, &[Yes, No, Yes, No, Yes]);
        let Step::Finished { outcome } = step else {
            panic!()
        };
        assert_eq!(outcome.label, Some(id("1-2-2")));
        let subjects: Vec<_> = s
            .transcript()
            .iter()
            .map(|e| e.question.subject.clone().unwrap().to_string())
            .collect();
        assert_eq!(subjects, ["1", "1-1", "1-2", "1-2-1", "1-2-2"]);
    }

    #[test]
    fn sibling_queue_tracks_untried_children() {
        use Answer::*;
        let h = Arc::new(fixtures::twelve_categories());
        let (mut s, _) = start_session(SessionId("s".into()), h, "img", Protocol::MethodB).unwrap();
        assert!(s.sibling_queue().is_empty());
        s.submit_answer(Yes).unwrap();
        assert_eq!(s.cursor_node(), Some(&id("1")));
        assert_eq!(s.sibling_queue(), vec![id("1-2"), id("1-3")]);
        s.submit_answer(No).unwrap();
        assert_eq!(s.sibling_queue(), vec![id("1-3")]);
    }

    #[test]
    fn finished_sessions_reject_answers() {
        use Answer::*;
        let h = Arc::new(fixtures::goldfinch());
        let (mut s, _) = run(&h, Protocol::MethodC, &[No, No, No]);
        assert_eq!(s.submit_answer(Yes), Err(EngineError::Finished));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let h = Arc::new(fixtures::goldfinch());
        let (mut s, _) =
            start_session(SessionId("s".into()), h.clone(), "img", Protocol::MethodC).unwrap();
        assert!(matches!(
            s.submit_answer(Answer::NoneOfThese),
            Err(EngineError::KindMismatch { .. })
        ));
        assert!(s.transcript().is_empty());

        let (mut s, _) = start_session(SessionId("s".into()), h, "img", Protocol::MethodA).unwrap();
        assert!(matches!(
            s.submit_answer(Answer::Yes),
            Err(EngineError::KindMismatch { .. })
        ));
        assert_eq!(
            s.submit_answer(Answer::Choice(id("1-1"))),
            Err(EngineError::UnknownChoice(id("1-1")))
        );
    }

    #[test]
    fn method_a_outcomes() {
        let h = Arc::new(fixtures::goldfinch());
        let (_, step) = run(&h, Protocol::MethodA, &[Answer::Choice(id("1-1-1"))]);
        let Step::Finished { outcome } = step else {
            panic!()
        };
        assert_eq!(outcome.kind, OutcomeKind::Classified);
        assert_eq!(outcome.question_count, 1);
        assert_eq!(outcome.path.len(), 3);
        let (_, step) = run(&h, Protocol::MethodA, &[Answer::NoneOfThese]);
        let Step::Finished { outcome } = step else {
            panic!()
        };
        assert_eq!(outcome.kind, OutcomeKind::Discharged);
    }

    #[test]
    fn upper_bounds() {
        assert_eq!(question_upper_bound(&fixtures::goldfinch()), 3);
        let leaf = |n: &str| NodeSpec::new(n, "g", "d");
        assert_eq!(
            question_upper_bound(&Hierarchy::build(vec![leaf("x")]).unwrap()),
            1
        );
        let two = Hierarchy::build(vec![
            leaf("r1").with_children(vec![leaf("a"), leaf("b")]),
            leaf("r2").with_children(vec![leaf("c"), leaf("d")]),
        ])
        .unwrap();
        assert_eq!(question_upper_bound(&two), 4);
    }

    #[test]
    fn replay_matches_and_reports_position() {
        use Answer::*;
        let h = Arc::new(fixtures::goldfinch());
        let out = replay(h.clone(), Protocol::MethodC, &[Yes, Yes, Yes], "img").unwrap();
        assert_eq!(out.label, Some(id("1-1-1")));
        let out = replay(h.clone(), Protocol::MethodC, &[No, No, No], "img").unwrap();
        assert_eq!(out.kind, OutcomeKind::Discharged);

        let err = replay(h.clone(), Protocol::MethodC, &[Yes, Yes, Yes, No], "img").unwrap_err();
        assert_eq!(err.position, 4);
        let err = replay(h.clone(), Protocol::MethodC, &[Yes], "img").unwrap_err();
        assert_eq!(err.position, 2);
        let err = replay(h, Protocol::MethodC, &[Yes, NoneOfThese], "img").unwrap_err();
        assert_eq!(err.position, 2);
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!("A".parse::<Protocol>().unwrap(), Protocol::MethodA);
        assert_eq!("method-c".parse::<Protocol>().unwrap(), Protocol::MethodC);
        assert_eq!("MethodB".parse::<Protocol>().unwrap(), Protocol::MethodB);
        assert!("D".parse::<Protocol>().is_err());
        assert_eq!(serde_json::to_string(&Protocol::MethodC).unwrap(), "\"C\"");
    }

    #[test]
    fn answer_wire_format() {
        assert_eq!(
            serde_json::to_string(&Answer::Yes).unwrap(),
            r#"{"value":"yes"}"#
        );
        assert_eq!(
            serde_json::to_string(&Answer::Choice(id("1-1-1"))).unwrap(),
            r#"{"value":"choice","id":"1-1-1"}"#
        );
        let a: Answer = serde_json::from_str(r#"{"value":"none_of_these"}"#).unwrap();
        assert_eq!(a, Answer::NoneOfThese);
    }
}
