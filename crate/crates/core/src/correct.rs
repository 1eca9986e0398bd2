//! The correction loop: merge candidates first, then split candidates, each
//! put to a decision provider, with rankings refreshed around every accepted
//! fix.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::CnnWeights;
use crate::config::EngineConfig;
use crate::dataset::{Dataset, Section};
use crate::detect::{
    generate_merge_candidates, merge_seed, rank_merges, rank_splits, score_pair, sort_merges,
    sort_splits, MergeCandidate, SplitCandidate,
};
use crate::error::{Error, Result};
use crate::grid::{LabelId, LabelMap};
use crate::imageops::{adjacency_pairs, Bipartition};
use crate::metrics::{mean, median, vi};

/// Relabels every pixel of `b` as `a`.
pub fn apply_split_fix(labels: &LabelMap, a: LabelId, b: LabelId) -> Result<LabelMap> {
    if a == b || a == 0 || b == 0 {
        return Err(Error::InvalidPair(a, b));
    }
    for id in [a, b] {
        if !labels.contains_label(id) {
            return Err(Error::StaleCandidate(format!(
                "segment {id} no longer exists"
            )));
        }
    }
    Ok(labels.map(|&l| if l == b { a } else { l }))
}

/// Gives side b of the bipartition the id `fresh`. Boundary pixels join the
/// side whose seed is nearer, side a on ties.
pub fn apply_merge_fix(
    labels: &LabelMap,
    s: LabelId,
    bp: &Bipartition,
    fresh: LabelId,
) -> Result<LabelMap> {
    if fresh == 0 || labels.contains_label(fresh) {
        return Err(Error::IdCollision(fresh));
    }
    if s == 0 || !labels.same_dims(&bp.side_a) || bp.region() != labels.mask_of(s) {
        return Err(Error::StaleCandidate(format!(
            "bipartition does not match segment {s}"
        )));
    }
    let d2 = |p: (usize, usize), q: (usize, usize)| {
        let (dr, dc) = (p.0 as i64 - q.0 as i64, p.1 as i64 - q.1 as i64);
        dr * dr + dc * dc
    };
    let mut out = labels.clone();
    for (p, &l) in labels.indexed() {
        if l != s {
            continue;
        }
        let to_b =
            *bp.side_b.get(p) || (*bp.boundary.get(p) && d2(p, bp.seed_b) < d2(p, bp.seed_a));
        if to_b {
            out.set(p, fresh);
        }
    }
    Ok(out)
}

/// Both rankings over a whole dataset, each kept sorted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rankings {
    pub splits: Vec<SplitCandidate>,
    pub merges: Vec<MergeCandidate>,
}

pub fn rank_dataset(
    dataset: &Dataset,
    weights: &CnnWeights,
    cfg: &EngineConfig,
) -> Result<Rankings> {
    let mut r = Rankings::default();
    for section in &dataset.sections {
        r.splits.extend(rank_splits(section, weights, cfg)?);
        r.merges
            .extend(rank_merges(section, weights, cfg, cfg.rng_seed)?);
    }
    sort_splits(&mut r.splits);
    sort_merges(&mut r.merges);
    Ok(r)
}

/// A fix that has been applied to a section's labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AppliedFix {
    /// `b` was folded into `a`.
    Split {
        section: usize,
        a: LabelId,
        b: LabelId,
    },
    /// Segment `s` was cut and one side became `fresh`.
    Merge {
        section: usize,
        s: LabelId,
        fresh: LabelId,
    },
}

impl AppliedFix {
    fn section(&self) -> usize {
        match *self {
            AppliedFix::Split { section, .. } | AppliedFix::Merge { section, .. } => section,
        }
    }

    fn touched(&self) -> [LabelId; 2] {
        match *self {
            AppliedFix::Split { a, b, .. } => [a, b],
            AppliedFix::Merge { s, fresh, .. } => [s, fresh],
        }
    }
}

/// Refreshes every ranking entry that involves a segment changed by `fix`,
/// which has already been applied to `section`. Other entries are left as
/// they are. Returns the keys of the split pairs that were (re)scored.
pub fn update_after_correction(
    rankings: &mut Rankings,
    fix: &AppliedFix,
    section: &Section,
    weights: &CnnWeights,
    cfg: &EngineConfig,
) -> Result<Vec<(usize, LabelId, LabelId)>> {
    let sec = fix.section();
    let touched = fix.touched();
    let hits = |id: LabelId| touched.contains(&id);
    rankings
        .splits
        .retain(|c| c.section != sec || !(hits(c.a) || hits(c.b)));
    rankings
        .merges
        .retain(|c| c.section != sec || !hits(c.segment));

    let pairs: Vec<(LabelId, LabelId)> = adjacency_pairs(&section.labels)
        .into_iter()
        .filter(|&(a, b)| hits(a) || hits(b))
        .collect();
    let fresh = pairs
        .par_iter()
        .map(|&(a, b)| score_pair(section, weights, a, b, cfg))
        .collect::<Result<Vec<_>>>()?;
    let keys = fresh.iter().map(|c| (sec, c.a, c.b)).collect();
    rankings.splits.extend(fresh);

    for id in touched {
        if section.labels.contains_label(id) {
            let seed = merge_seed(cfg.rng_seed, sec, id);
            if let Some(m) = generate_merge_candidates(section, id, weights, cfg, seed)? {
                rankings.merges.push(m);
            }
        }
    }
    sort_splits(&mut rankings.splits);
    sort_merges(&mut rankings.merges);
    Ok(keys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    Skip,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Candidate {
    Split(SplitCandidate),
    Merge(MergeCandidate),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    Split,
    Merge,
}

impl Candidate {
    pub fn kind(&self) -> CandidateKind {
        match self {
            Candidate::Split(_) => CandidateKind::Split,
            Candidate::Merge(_) => CandidateKind::Merge,
        }
    }

    pub fn section(&self) -> usize {
        match self {
            Candidate::Split(c) => c.section,
            Candidate::Merge(c) => c.section,
        }
    }

    /// `p` for splits, `1 - p` for merges.
    pub fn score(&self) -> f64 {
        match self {
            Candidate::Split(c) => c.p,
            Candidate::Merge(c) => c.score,
        }
    }

    pub fn ids(&self) -> Vec<LabelId> {
        match self {
            Candidate::Split(c) => vec![c.a, c.b],
            Candidate::Merge(c) => vec![c.segment],
        }
    }
}

/// The correction `candidate` proposes, as new labels for its section.
pub fn preview(labels: &LabelMap, candidate: &Candidate) -> Result<LabelMap> {
    match candidate {
        Candidate::Split(c) => apply_split_fix(labels, c.a, c.b),
        Candidate::Merge(c) => {
            apply_merge_fix(labels, c.segment, &c.bipartition, labels.max_label() + 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub ordinal: usize,
    pub kind: CandidateKind,
    pub section: usize,
    /// The candidate's ids; an accepted merge fix appends the fresh id.
    pub ids: Vec<LabelId>,
    pub score: f64,
    pub decision: Decision,
    /// Median VI over sections before and after this event.
    pub vi_before: Option<f64>,
    pub vi_after: Option<f64>,
    pub section_vi_before: Option<f64>,
    pub section_vi_after: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViSummary {
    pub per_section: Vec<f64>,
    pub median: f64,
    pub mean: f64,
}

impl ViSummary {
    fn new(per_section: Vec<f64>) -> Self {
        Self {
            median: median(&per_section).unwrap_or(0.0),
            mean: mean(&per_section).unwrap_or(0.0),
            per_section,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionLog {
    pub events: Vec<CorrectionEvent>,
    pub initial: Option<ViSummary>,
    #[serde(rename = "final")]
    pub final_vi: Option<ViSummary>,
}

impl CorrectionLog {
    pub fn accepted(&self) -> impl Iterator<Item = &CorrectionEvent> {
        self.events
            .iter()
            .filter(|e| e.decision == Decision::Accept)
    }

    /// One JSON object per event.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for e in &self.events {
            serde_json::to_writer(&mut buf, e).expect("event serializes");
            buf.push(b'\n');
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Initial and final VI per section plus decision counts.
    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let count = |k: CandidateKind, d: Decision| {
            self.events
                .iter()
                .filter(|e| e.kind == k && e.decision == d)
                .count()
        };
        let summary = serde_json::json!({
            "initial": self.initial,
            "final": self.final_vi,
            "events": self.events.len(),
            "merge": {
                "accepted": count(CandidateKind::Merge, Decision::Accept),
                "rejected": count(CandidateKind::Merge, Decision::Reject),
                "skipped": count(CandidateKind::Merge, Decision::Skip),
            },
            "split": {
                "accepted": count(CandidateKind::Split, Decision::Accept),
                "rejected": count(CandidateKind::Split, Decision::Reject),
                "skipped": count(CandidateKind::Split, Decision::Skip),
            },
        });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Merge,
    Split,
    Done,
}

/// Which candidates a provider gets to see.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Presentation {
    All,
    /// Merges only when `1 - p > p_t`; every split.
    Interactive {
        p_t: f64,
    },
}

type SplitKey = (usize, LabelId, LabelId);
type MergeKey = (usize, LabelId);

fn split_key(c: &SplitCandidate) -> SplitKey {
    (c.section, c.a, c.b)
}

fn merge_key(c: &MergeCandidate) -> MergeKey {
    (c.section, c.segment)
}

/// Sequential correction state over a dataset: current labels, rankings and
/// what has been visited.
///
/// Each segment gets at most one merge visit; both children of an accepted
/// merge fix count as visited. In the split phase a pair is visited once
/// unless an accepted fix rescores it. Skipped candidates never return.
#[derive(Clone, Debug)]
pub struct CorrectionState {
    dataset: Dataset,
    weights: Arc<CnnWeights>,
    cfg: EngineConfig,
    rankings: Rankings,
    presentation: Presentation,
    phase: Phase,
    visited_merges: HashSet<MergeKey>,
    visited_splits: HashSet<SplitKey>,
    skipped_merges: HashSet<MergeKey>,
    skipped_splits: HashSet<SplitKey>,
    section_vi: Option<Vec<f64>>,
    initial: Option<ViSummary>,
    events: Vec<CorrectionEvent>,
    pending: Option<(Candidate, Instant)>,
}

fn section_vi(section: &Section, labels: &LabelMap) -> Result<f64> {
    let gt = section
        .gt_labels
        .as_ref()
        .ok_or(Error::MissingGroundTruth(section.index()))?;
    Ok(vi(labels, gt, true)?.vi)
}

impl CorrectionState {
    pub fn new(
        dataset: Dataset,
        rankings: Rankings,
        weights: Arc<CnnWeights>,
        cfg: EngineConfig,
        presentation: Presentation,
    ) -> Result<Self> {
        cfg.validate()?;
        let section_vi = if dataset.has_ground_truth() {
            Some(
                dataset
                    .sections
                    .iter()
                    .map(|s| section_vi(s, &s.labels))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let initial = section_vi.clone().map(ViSummary::new);
        Ok(Self {
            dataset,
            weights,
            cfg,
            rankings,
            presentation,
            phase: Phase::Merge,
            visited_merges: HashSet::new(),
            visited_splits: HashSet::new(),
            skipped_merges: HashSet::new(),
            skipped_splits: HashSet::new(),
            section_vi,
            initial,
            events: Vec::new(),
            pending: None,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn into_dataset(self) -> Dataset {
        self.dataset
    }

    pub fn rankings(&self) -> &Rankings {
        &self.rankings
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn events(&self) -> &[CorrectionEvent] {
        &self.events
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn has_ground_truth(&self) -> bool {
        self.section_vi.is_some()
    }

    pub fn current_vi(&self) -> Option<ViSummary> {
        self.section_vi.clone().map(ViSummary::new)
    }

    pub fn log(&self) -> CorrectionLog {
        CorrectionLog {
            events: self.events.clone(),
            initial: self.initial.clone(),
            final_vi: self.current_vi(),
        }
    }

    pub fn pending(&self) -> Option<&Candidate> {
        self.pending.as_ref().map(|(c, _)| c)
    }

    fn shows_merge(&self, c: &MergeCandidate) -> bool {
        match self.presentation {
            Presentation::All => true,
            Presentation::Interactive { p_t } => c.score > p_t,
        }
    }

    /// The next candidate to decide, or `None` once both phases are done.
    /// Returns the pending candidate again if it has not been decided.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<&Candidate> {
        if self.pending.is_none() {
            let found = self.find_next();
            self.pending = found.map(|c| (c, Instant::now()));
        }
        self.pending()
    }

    fn find_next(&mut self) -> Option<Candidate> {
        if self.phase == Phase::Merge {
            let m = self.rankings.merges.iter().find(|c| {
                let k = merge_key(c);
                !self.visited_merges.contains(&k)
                    && !self.skipped_merges.contains(&k)
                    && self.shows_merge(c)
            });
            if let Some(m) = m {
                return Some(Candidate::Merge(m.clone()));
            }
            self.phase = Phase::Split;
        }
        if self.phase == Phase::Split {
            let s = self.rankings.splits.iter().find(|c| {
                let k = split_key(c);
                !self.visited_splits.contains(&k) && !self.skipped_splits.contains(&k)
            });
            if let Some(s) = s {
                return Some(Candidate::Split(s.clone()));
            }
            self.phase = Phase::Done;
        }
        None
    }

    /// Candidates still to be presented, counting the pending one. Later
    /// accepted fixes can change this.
    pub fn remaining(&self) -> usize {
        let merges = if self.phase == Phase::Merge {
            self.rankings
                .merges
                .iter()
                .filter(|c| {
                    let k = merge_key(c);
                    !self.visited_merges.contains(&k)
                        && !self.skipped_merges.contains(&k)
                        && self.shows_merge(c)
                })
                .count()
        } else {
            0
        };
        let splits = if self.phase == Phase::Done {
            0
        } else {
            self.rankings
                .splits
                .iter()
                .filter(|c| {
                    let k = split_key(c);
                    !self.visited_splits.contains(&k) && !self.skipped_splits.contains(&k)
                })
                .count()
        };
        merges + splits
    }

    /// Labels the pending candidate's fix would produce for its section.
    pub fn preview_pending(&self) -> Result<LabelMap> {
        let c = self
            .pending()
            .ok_or_else(|| Error::StaleCandidate("no pending candidate".into()))?;
        preview(&self.dataset.sections[c.section()].labels, c)
    }

    /// VI of the pending candidate's section before and after its fix.
    pub fn oracle_vi(&self) -> Result<(f64, f64)> {
        let c = self
            .pending()
            .ok_or_else(|| Error::StaleCandidate("no pending candidate".into()))?;
        let section = &self.dataset.sections[c.section()];
        let before = section_vi(section, &section.labels)?;
        let after = section_vi(section, &self.preview_pending()?)?;
        Ok((before, after))
    }

    /// Applies `decision` to the pending candidate and records the event.
    pub fn decide(&mut self, decision: Decision) -> Result<&CorrectionEvent> {
        let (candidate, started) = self
            .pending
            .take()
            .ok_or_else(|| Error::StaleCandidate("no pending candidate".into()))?;
        let sec = candidate.section();
        let vi_before = self.current_vi();
        let mut ids = candidate.ids();

        match (&candidate, decision) {
            (Candidate::Merge(c), Decision::Skip) => {
                self.skipped_merges.insert(merge_key(c));
            }
            (Candidate::Split(c), Decision::Skip) => {
                self.skipped_splits.insert(split_key(c));
            }
            (Candidate::Merge(c), Decision::Reject) => {
                self.visited_merges.insert(merge_key(c));
            }
            (Candidate::Split(c), Decision::Reject) => {
                self.visited_splits.insert(split_key(c));
            }
            (Candidate::Merge(c), Decision::Accept) => {
                let labels = &self.dataset.sections[sec].labels;
                let fresh = labels.max_label() + 1;
                let new = apply_merge_fix(labels, c.segment, &c.bipartition, fresh)?;
                let fix = AppliedFix::Merge {
                    section: sec,
                    s: c.segment,
                    fresh,
                };
                self.commit(sec, new, &fix)?;
                self.visited_merges.insert((sec, c.segment));
                self.visited_merges.insert((sec, fresh));
                ids.push(fresh);
            }
            (Candidate::Split(c), Decision::Accept) => {
                let new = apply_split_fix(&self.dataset.sections[sec].labels, c.a, c.b)?;
                let fix = AppliedFix::Split {
                    section: sec,
                    a: c.a,
                    b: c.b,
                };
                let rescored = self.commit(sec, new, &fix)?;
                for k in rescored {
                    self.visited_splits.remove(&k);
                }
                self.visited_splits.insert(split_key(c));
            }
        }

        let event = CorrectionEvent {
            ordinal: self.events.len(),
            kind: candidate.kind(),
            section: sec,
            ids,
            score: candidate.score(),
            decision,
            section_vi_before: vi_before.as_ref().map(|v| v.per_section[sec]),
            section_vi_after: self.section_vi.as_ref().map(|v| v[sec]),
            vi_before: vi_before.map(|v| v.median),
            vi_after: self.current_vi().map(|v| v.median),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    fn commit(&mut self, sec: usize, labels: LabelMap, fix: &AppliedFix) -> Result<Vec<SplitKey>> {
        let section = &mut self.dataset.sections[sec];
        section.labels = labels;
        if let Some(v) = self.section_vi.as_mut() {
            v[sec] = section_vi(section, &section.labels)?;
        }
        update_after_correction(&mut self.rankings, fix, section, &self.weights, &self.cfg)
    }
}

/// Something that answers yes or no to a proposed correction.
pub trait DecisionProvider {
    fn presentation(&self) -> Presentation {
        Presentation::All
    }

    fn decide(&mut self, state: &CorrectionState, candidate: &Candidate) -> Result<Decision>;
}

/// Accepts a correction iff it strictly lowers the section's VI.
#[derive(Clone, Copy, Debug, Default)]
pub struct Oracle;

impl DecisionProvider for Oracle {
    fn decide(&mut self, state: &CorrectionState, _: &Candidate) -> Result<Decision> {
        let (before, after) = state.oracle_vi()?;
        Ok(if after < before {
            Decision::Accept
        } else {
            Decision::Reject
        })
    }
}

/// Accepts splits with `p > p_t` and merges with `1 - p > p_t`.
#[derive(Clone, Copy, Debug)]
pub struct Threshold {
    pub p_t: f64,
}

impl DecisionProvider for Threshold {
    fn decide(&mut self, _: &CorrectionState, candidate: &Candidate) -> Result<Decision> {
        Ok(if candidate.score() > self.p_t {
            Decision::Accept
        } else {
            Decision::Reject
        })
    }
}

/// Replays recorded interactive decisions; rejects once they run out.
#[derive(Clone, Debug)]
pub struct Scripted {
    pub p_t: f64,
    pub decisions: VecDeque<Decision>,
}

impl DecisionProvider for Scripted {
    fn presentation(&self) -> Presentation {
        Presentation::Interactive { p_t: self.p_t }
    }

    fn decide(&mut self, _: &CorrectionState, _: &Candidate) -> Result<Decision> {
        Ok(self.decisions.pop_front().unwrap_or(Decision::Reject))
    }
}

/// Runs the loop to completion and returns the final labels and log.
pub fn run_corrections(
    dataset: Dataset,
    rankings: Rankings,
    provider: &mut dyn DecisionProvider,
    weights: Arc<CnnWeights>,
    cfg: &EngineConfig,
) -> Result<(Dataset, CorrectionLog)> {
    let mut state = CorrectionState::new(
        dataset,
        rankings,
        weights,
        cfg.clone(),
        provider.presentation(),
    )?;
    while let Some(c) = state.next() {
        let c = c.clone();
        let d = provider.decide(&state, &c)?;
        state.decide(d)?;
    }
    let log = state.log();
    Ok((state.into_dataset(), log))
}

/// Oracle-mode convenience that fails early without ground truth.
pub fn run_oracle(
    dataset: Dataset,
    rankings: Rankings,
    weights: Arc<CnnWeights>,
    cfg: &EngineConfig,
) -> Result<(Dataset, CorrectionLog)> {
    if !dataset.has_ground_truth() {
        return Err(Error::GroundTruthRequired);
    }
    run_corrections(dataset, rankings, &mut Oracle, weights, cfg)
}

/// Distinct nonzero ids of a label map.
pub fn label_set(labels: &LabelMap) -> BTreeSet<LabelId> {
    labels.label_ids().into_iter().collect()
}
