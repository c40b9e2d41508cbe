//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use std::path::PathBuf;
use visannot_core::assignment::ConsensusKind;
use visannot_core::campaign::{Campaign, CampaignError, ClaimStatus};
use visannot_core::engine::{start_session, AnnotationSession, QuestionKind, SessionId};
use visannot_core::hierarchy::NodeSpec;
use visannot_core::service::{
    AnnotationService, AnswerRequest, CreateCampaignRequest, ServiceResult,
};
use visannot_core::simulation::HierarchySource;
use visannot_core::storage::ImageRecord;
use visannot_core::{Answer, Hierarchy, Protocol, Step};

/// Krippendorff's nominal alpha straight from its definition.
///
/// Observed disagreement averages, over every unit with two or more values,
/// the share of mismatching ordered pairs within the unit. Expected
/// disagreement is the share of mismatching ordered pairs over all pairable
/// values regardless of unit. Returns `None` when alpha is undefined.
pub fn brute_force_alpha(rows: &[Vec<Option<String>>]) -> Option<f64> {
    let units: Vec<Vec<&str>> = rows
        .iter()
        .map(|r| r.iter().flatten().map(String::as_str).collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let pooled: Vec<&str> = units.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    if n < 2.0 {
        return None;
    }
    let mut observed = 0.0;
    for u in &units {
        let m = u.len() as f64;
        let mut mismatches = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    mismatches += 1.0;
                }
            }
        }
        observed += mismatches / (m - 1.0);
    }
    observed /= n;
    let mut expected = 0.0;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j && pooled[i] != pooled[j] {
                expected += 1.0;
            }
        }
    }
    expected /= n * (n - 1.0);
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - observed / expected)
}

/// Random reliability matrix: `units` x `observers`, values drawn from
/// `labels`, each cell missing with probability `missing`.
pub fn random_matrix(
    rng: &mut impl Rng,
    units: usize,
    observers: usize,
    labels: usize,
    missing: f64,
) -> Vec<Vec<Option<String>>> {
    (0..units)
        .map(|_| {
            (0..observers)
                .map(|_| (!rng.gen_bool(missing)).then(|| format!("L{}", rng.gen_range(0..labels))))
                .collect()
        })
        .collect()
}

/// The consensus rule restated by sorting tallies.
pub fn rule_oracle(votes: &[&str], target: usize, cap: usize) -> ConsensusKind {
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for v in votes {
        *tally.entry(v).or_default() += 1;
    }
    let mut counts: Vec<usize> = tally.values().copied().collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let majority = counts[0] >= 2 && counts.get(1).is_none_or(|&second| second < counts[0]);
    if votes.len() >= target && majority {
        ConsensusKind::Final
    } else if votes.len() < cap {
        ConsensusKind::NeedsEscalation
    } else {
        ConsensusKind::Unresolved
    }
}

/// Every sequence of `len` labels over `alphabet`.
pub fn all_patterns<'a>(alphabet: &[&'a str], len: usize) -> Vec<Vec<&'a str>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                alphabet.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(*a);
                    q
                })
            })
            .collect();
    }
    out
}

/// Random forest with at most `max_roots` roots, `max_children` children per
/// node and `max_depth` levels.
pub fn random_hierarchy(
    rng: &mut impl Rng,
    max_roots: usize,
    max_children: usize,
    max_depth: usize,
) -> Hierarchy {
    fn node(
        rng: &mut impl Rng,
        label: String,
        depth: usize,
        max_children: usize,
        max_depth: usize,
    ) -> NodeSpec {
        let kids = if depth < max_depth {
            rng.gen_range(0..=max_children)
        } else {
            0
        };
        let children = (0..kids)
            .map(|k| {
                node(
                    rng,
                    format!("{label}.{k}"),
                    depth + 1,
                    max_children,
                    max_depth,
                )
            })
            .collect();
        NodeSpec::new(
            &format!("N{label}"),
            &format!("G{label}"),
            &format!("D{label}"),
        )
        .with_children(children)
    }
    let roots = rng.gen_range(1..=max_roots);
    let specs = (0..roots)
        .map(|r| node(rng, r.to_string(), 1, max_children, max_depth))
        .collect();
    Hierarchy::build(specs).expect("generated hierarchies are valid")
}

/// Drives a session with answers drawn from `rng`. Returns the session and
/// the number of questions asked.
pub fn drive_random(
    h: &Arc<Hierarchy>,
    protocol: Protocol,
    rng: &mut impl Rng,
    limit: usize,
) -> (AnnotationSession, usize) {
    let (mut s, mut q) = start_session(SessionId("p".into()), h.clone(), "img", protocol).unwrap();
    let mut asked = 1;
    loop {
        let answer = match q.kind {
            QuestionKind::DifferentiaYesNo => {
                if rng.gen_bool(0.5) {
                    Answer::Yes
                } else {
                    Answer::No
                }
            }
            QuestionKind::FlatChoice => {
                let mut opts: Vec<Answer> = q
                    .choices
                    .iter()
                    .map(|c| Answer::Choice(c.id.clone()))
                    .collect();
                opts.push(Answer::NoneOfThese);
                opts.choose(rng).unwrap().clone()
            }
        };
        match s.submit_answer(answer).unwrap() {
            Step::Finished { .. } => return (s, asked),
            Step::Next { question } => {
                asked += 1;
                assert!(asked <= limit, "session exceeded {limit} questions");
                q = question;
            }
        }
    }
}

/// Longest yes/no transcript over every possible answer sequence.
pub fn exhaustive_max_questions(h: &Arc<Hierarchy>, protocol: Protocol) -> usize {
    fn go(s: AnnotationSession, asked: usize) -> usize {
        let mut best = asked;
        for a in [Answer::Yes, Answer::No] {
            let mut next = s.clone();
            match next.submit_answer(a).unwrap() {
                Step::Finished { .. } => best = best.max(asked),
                Step::Next { .. } => best = best.max(go(next, asked + 1)),
            }
        }
        best
    }
    let (s, _) = start_session(SessionId("x".into()), h.clone(), "img", protocol).unwrap();
    go(s, 1)
}

/// Checks that every ancestor-or-self of the outcome label was confirmed
/// with a Yes in the transcript.
pub fn sound(s: &AnnotationSession) -> bool {
    let outcome = s.outcome().expect("finished");
    let Some(label) = &outcome.label else {
        return true;
    };
    if s.protocol() == Protocol::MethodA {
        return true;
    }
    label
        .prefixes()
        .chain(std::iter::once(label.clone()))
        .all(|anc| {
            s.transcript()
                .iter()
                .any(|e| e.question.subject.as_ref() == Some(&anc) && e.answer == Answer::Yes)
        })
}

pub fn synthetic_images(n: usize) -> Vec<ImageRecord> {
    (1..=n)
        .map(|i| ImageRecord::original(format!("img{i:03}"), format!("file:///img{i:03}.jpg")))
        .collect()
}

/// Applies `ops` random commands to `c`, valid and invalid alike. Every
/// rejected command must leave the state untouched. Returns how many
/// commands were accepted.
pub fn random_schedule(c: &mut Campaign, rng: &mut impl Rng, ops: usize) -> usize {
    let mut accepted = 0;
    let mut ts = c.log().records().last().map_or(0, |r| r.ts);
    for _ in 0..ops {
        ts += rng.gen_range(1..50);
        let before = c.state().clone();
        let annotators = before.annotator_ids().to_vec();
        let pick_annotator = |rng: &mut dyn rand::RngCore| -> String {
            if annotators.is_empty() || rng.gen_bool(0.1) {
                format!("a{}", rng.gen_range(0..6))
            } else {
                annotators.choose(rng).unwrap().clone()
            }
        };
        let result: Result<(), CampaignError> = match rng.gen_range(0..100) {
            0..=9 => {
                let a = pick_annotator(rng);
                c.register_annotator(&a, "digest", ts)
            }
            10..=24 => {
                let a = pick_annotator(rng);
                c.claim_task(&a, ts).map(drop)
            }
            25..=39 => {
                let claims: Vec<_> = before
                    .claims()
                    .filter(|cl| cl.status == ClaimStatus::Active || rng.gen_bool(0.05))
                    .map(|cl| (cl.annotator_id.clone(), cl.task_id.clone()))
                    .collect();
                match claims.choose(rng) {
                    Some((a, t)) => {
                        let task = before.task(t).unwrap().task.image_ids.clone();
                        let img = task.choose(rng).unwrap().clone();
                        c.open_session(a, t, &img, ts).map(drop)
                    }
                    None => Ok(()),
                }
            }
            40..=94 => {
                let live: Vec<_> = before
                    .sessions()
                    .filter(|s| !s.session.is_finished() || rng.gen_bool(0.05))
                    .map(|s| s.session.clone())
                    .collect();
                match live.choose(rng) {
                    Some(s) => {
                        let (seq, kind) = match s.pending_question() {
                            Some(q) => (q.sequence_no, q.kind),
                            None => (
                                s.transcript().len() as u32 + 1,
                                QuestionKind::DifferentiaYesNo,
                            ),
                        };
                        let seq = if rng.gen_bool(0.05) { seq + 1 } else { seq };
                        let answer = match kind {
                            QuestionKind::DifferentiaYesNo if rng.gen_bool(0.6) => Answer::Yes,
                            QuestionKind::DifferentiaYesNo => Answer::No,
                            QuestionKind::FlatChoice => {
                                let q = s.pending_question().unwrap();
                                q.choices
                                    .choose(rng)
                                    .map_or(Answer::NoneOfThese, |ch| Answer::Choice(ch.id.clone()))
                            }
                        };
                        c.answer(s.id(), seq, answer, ts).map(drop)
                    }
                    None => Ok(()),
                }
            }
            95..=97 => {
                let active: Vec<_> = before
                    .claims()
                    .filter(|cl| cl.status == ClaimStatus::Active)
                    .map(|cl| (cl.annotator_id.clone(), cl.task_id.clone()))
                    .collect();
                match active.choose(rng) {
                    Some((a, t)) => c.release(a, t, ts),
                    None => Ok(()),
                }
            }
            _ => c.expire_stale(ts).map(drop),
        };
        match result {
            Ok(()) => accepted += 1,
            Err(e) => assert_eq!(&before, c.state(), "rejected command changed state: {e}"),
        }
    }
    accepted
}

/// Scripted HTTP-style client against the in-process service. Each call's
/// response is recorded as JSON; the service may be dropped and reopened from
/// its data directory before a chosen call.
pub struct ScriptedClient {
    svc: Option<AnnotationService>,
    dir: PathBuf,
    calls: usize,
    restart_before: Option<usize>,
    pub responses: Vec<String>,
}

impl ScriptedClient {
    pub fn new(dir: PathBuf, restart_before: Option<usize>) -> Self {
        ScriptedClient {
            svc: Some(Self::open(&dir)),
            dir,
            calls: 0,
            restart_before,
            responses: Vec::new(),
        }
    }

    fn open(dir: &PathBuf) -> AnnotationService {
        AnnotationService::open(dir).unwrap().with_clock(|| 1_000)
    }

    pub fn call<T: Serialize>(
        &mut self,
        f: impl FnOnce(&mut AnnotationService) -> ServiceResult<T>,
    ) -> ServiceResult<T> {
        self.calls += 1;
        if self.restart_before == Some(self.calls) {
            self.svc = None;
            self.svc = Some(Self::open(&self.dir));
        }
        let r = f(self.svc.as_mut().unwrap());
        self.responses.push(match &r {
            Ok(v) => serde_json::to_string(v).unwrap(),
            Err(e) => serde_json::to_string(e).unwrap(),
        });
        r
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

/// Runs a full campaign through the service: three annotators, fixed answer
/// rule, occasional duplicate and stale submissions.
pub fn run_service_script(client: &mut ScriptedClient) {
    let hierarchy = visannot_core::fixtures::goldfinch().to_document();
    let images: Vec<serde_json::Value> = (1..=6)
        .map(|i| serde_json::json!({"image_id": format!("img{i}"), "uri": format!("file:///{i}.jpg")}))
        .collect();
    let settings = visannot_core::campaign::CampaignSettings {
        task_size: 4,
        token_secret: Some("script".into()),
        ..visannot_core::campaign::CampaignSettings::new(Protocol::MethodC)
    };
    let created = client
        .call(|s| {
            s.create_campaign(CreateCampaignRequest {
                hierarchy: HierarchySource::Inline(hierarchy.clone()),
                images: images.clone(),
                manifest: None,
                settings: settings.clone(),
            })
        })
        .unwrap();
    let cid = created.campaign_id;
    let tokens: Vec<String> = ["ann-a", "ann-b", "ann-c"]
        .iter()
        .map(|a| {
            client
                .call(|s| s.register_annotator(&cid, a))
                .unwrap()
                .token
        })
        .collect();
    let _ = client.call(|s| s.next_task(&cid, "not-a-token"));
    let mut idle_rounds = 0;
    while idle_rounds < 2 {
        let mut worked = false;
        for (k, token) in tokens.iter().enumerate() {
            let Some(task) = client.call(|s| s.next_task(&cid, token)).unwrap() else {
                continue;
            };
            worked = true;
            for (i, img) in task.images.iter().enumerate() {
                let view = client
                    .call(|s| s.open_session(&cid, token, &task.task_id, &img.image_id))
                    .unwrap();
                let mut pending = view.question;
                while let Some(q) = pending {
                    let yes =
                        !(q.sequence_no as usize + i + k).is_multiple_of(3) || q.sequence_no == 1;
                    let req = AnswerRequest {
                        sequence_no: q.sequence_no,
                        answer: if yes { Answer::Yes } else { Answer::No },
                    };
                    let step = client
                        .call(|s| s.answer(&cid, token, &view.session_id, req.clone()))
                        .unwrap();
                    if q.sequence_no == 2 {
                        let _ =
                            client.call(|s| s.answer(&cid, token, &view.session_id, req.clone()));
                        let _ = client.call(|s| {
                            s.answer(
                                &cid,
                                token,
                                &view.session_id,
                                AnswerRequest {
                                    sequence_no: 9,
                                    answer: Answer::No,
                                },
                            )
                        });
                    }
                    pending = match step {
                        Step::Next { question } => Some(question),
                        Step::Finished { .. } => None,
                    };
                }
            }
            let _ = client.call(|s| s.progress(&cid));
        }
        idle_rounds = if worked { 0 } else { idle_rounds + 1 };
    }
    let _ = client.call(|s| s.metrics(&cid));
    let _ = client.call(|s| s.export(&cid, true));
}
