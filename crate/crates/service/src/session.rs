use std::sync::Arc;
use std::time::{Duration, Instant};

use proofread_core::cnn::CnnWeights;
use proofread_core::correct::{
    rank_dataset, Candidate, CandidateKind, CorrectionEvent, CorrectionLog, CorrectionState,
    Decision, Presentation, Rankings,
};
use proofread_core::grid::BinaryMask;
use proofread_core::synth::derive_seed;
use proofread_core::{Dataset, EngineConfig};
use serde::{Deserialize, Serialize};

use crate::views::{render, RenderedViews};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("no such session")]
    NotFound,
    #[error("candidate {got} is not the current candidate ({expected:?})")]
    StaleCursor { expected: Option<u64>, got: u64 },
    #[error("no candidates to present")]
    NoCandidates,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] proofread_core::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    Left,
    Right,
}

/// What the user picked: an explicit decision, or the panel they clicked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Decision(Decision),
    Panel(Panel),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Progress {
    pub seen: usize,
    pub accepted: usize,
    pub remaining: usize,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct CursorView {
    pub candidate_id: u64,
    pub kind: CandidateKind,
    pub section: usize,
    pub score: f64,
    pub views: Arc<RenderedViews>,
    current_on_left: bool,
}

/// One forced-choice proofreading session.
pub struct Session {
    state: CorrectionState,
    seed: u64,
    started_at: Instant,
    time_limit: Option<Duration>,
    cursor: Option<CursorView>,
}

impl Session {
    /// Ranks every candidate and opens a session over them.
    pub fn create(
        dataset: Dataset,
        weights: Arc<CnnWeights>,
        cfg: EngineConfig,
        time_limit: Option<f64>,
    ) -> Result<Self, SessionError> {
        let rankings = rank_dataset(&dataset, &weights, &cfg)?;
        Self::with_rankings(dataset, rankings, weights, cfg, time_limit)
    }

    pub fn with_rankings(
        dataset: Dataset,
        rankings: Rankings,
        weights: Arc<CnnWeights>,
        cfg: EngineConfig,
        time_limit: Option<f64>,
    ) -> Result<Self, SessionError> {
        if let Some(t) = time_limit {
            if !(t.is_finite() && t > 0.0) {
                return Err(SessionError::BadRequest(format!(
                    "time_limit must be positive, got {t}"
                )));
            }
        }
        let seed = cfg.rng_seed;
        let presentation = Presentation::Interactive { p_t: cfg.p_t };
        let state = CorrectionState::new(dataset, rankings, weights, cfg, presentation)?;
        if state.remaining() == 0 {
            return Err(SessionError::NoCandidates);
        }
        Ok(Self {
            state,
            seed,
            started_at: Instant::now(),
            time_limit: time_limit.map(Duration::from_secs_f64),
            cursor: None,
        })
    }

    pub fn state(&self) -> &CorrectionState {
        &self.state
    }

    pub fn dataset(&self) -> &Dataset {
        self.state.dataset()
    }

    pub fn log(&self) -> CorrectionLog {
        self.state.log()
    }

    fn expired(&self) -> bool {
        self.time_limit
            .is_some_and(|t| self.started_at.elapsed() >= t)
    }

    pub fn progress(&self) -> Progress {
        let events = self.state.events();
        Progress {
            seen: events.len(),
            accepted: events
                .iter()
                .filter(|e| e.decision == Decision::Accept)
                .count(),
            remaining: if self.expired() {
                0
            } else {
                self.state.remaining()
            },
            elapsed_s: self.started_at.elapsed().as_secs_f64(),
        }
    }

    /// The current candidate and its views, or `None` when the session is
    /// over. Repeated calls return the same candidate.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Result<Option<CursorView>, SessionError> {
        if self.expired() {
            return Ok(None);
        }
        let candidate_id = self.state.events().len() as u64;
        if let Some(c) = self
            .cursor
            .as_ref()
            .filter(|c| c.candidate_id == candidate_id)
        {
            return Ok(Some(c.clone()));
        }
        let Some(candidate) = self.state.next().cloned() else {
            return Ok(None);
        };
        let section = &self.state.dataset().sections[candidate.section()];
        let proposed = self.state.preview_pending()?;
        let focus: BinaryMask = match &candidate {
            Candidate::Split(c) => section.labels.mask_of_any(&[c.a, c.b]),
            Candidate::Merge(c) => section.labels.mask_of(c.segment),
        };
        let current_on_left = derive_seed(self.seed, &[candidate_id]) & 1 == 0;
        let views = render(
            &section.gray,
            &section.labels,
            &proposed,
            &focus,
            current_on_left,
        );
        let view = CursorView {
            candidate_id,
            kind: candidate.kind(),
            section: candidate.section(),
            score: candidate.score(),
            views: Arc::new(views),
            current_on_left,
        };
        self.cursor = Some(view.clone());
        Ok(Some(view))
    }

    /// Records a decision on the current candidate.
    pub fn decide(
        &mut self,
        candidate_id: u64,
        choice: Choice,
    ) -> Result<CorrectionEvent, SessionError> {
        let current = match self.next()? {
            Some(c) => c,
            None => {
                return Err(SessionError::StaleCursor {
                    expected: None,
                    got: candidate_id,
                })
            }
        };
        if current.candidate_id != candidate_id {
            return Err(SessionError::StaleCursor {
                expected: Some(current.candidate_id),
                got: candidate_id,
            });
        }
        let decision = match choice {
            Choice::Decision(d) => d,
            Choice::Panel(p) => {
                if (p == Panel::Left) == current.current_on_left {
                    Decision::Reject
                } else {
                    Decision::Accept
                }
            }
        };
        let event = self.state.decide(decision)?.clone();
        self.cursor = None;
        Ok(event)
    }

    /// Median VI after each event, preceded by the initial value.
    pub fn vi_trail(&self) -> Option<Vec<f64>> {
        let log = self.state.log();
        let initial = log.initial?.median;
        Some(
            std::iter::once(initial)
                .chain(log.events.iter().filter_map(|e| e.vi_after))
                .collect(),
        )
    }
}
