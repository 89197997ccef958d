//! Core of the pairwise annotation service: a pair catalog, seeded
//! per-session trial plans with randomized sides, an append-only choice
//! log and export to the manifest format.

mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaze::GazeSample;
use crate::objectives::Label;

pub use store::{AnnotationStore, StoreConfig, CHOICE_LOG, SNAPSHOT};

/// A pair in canonical image order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogPair {
    pub pair_id: String,
    pub left_image: String,
    pub right_image: String,
}

/// Pairs available for judgment. Image paths are relative to `root` and
/// double as image ids.
#[derive(Clone, Debug, Default)]
pub struct PairCatalog {
    pub root: PathBuf,
    pub pairs: Vec<CatalogPair>,
}

impl PairCatalog {
    pub fn new(root: impl Into<PathBuf>, pairs: Vec<CatalogPair>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(invalid(format!("duplicate pair id {}", p.pair_id)));
            }
        }
        Ok(Self { root: root.into(), pairs })
    }

    /// Reads a `pair_id,left_image,right_image` CSV; paths resolve against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let pairs = rdr.deserialize().collect::<std::result::Result<Vec<CatalogPair>, _>>()?;
        Self::new(path.parent().map(Path::to_path_buf).unwrap_or_default(), pairs)
    }

    pub fn get(&self, pair_id: &str) -> Option<&CatalogPair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    /// File behind an image id, if the catalog references it.
    pub fn image_path(&self, image_id: &str) -> Option<PathBuf> {
        self.pairs
            .iter()
            .any(|p| p.left_image == image_id || p.right_image == image_id)
            .then(|| self.root.join(image_id))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Left,
    Right,
}

/// One planned trial. With `swapped`, the canonical right image is shown on
/// the left.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub pair_id: String,
    pub swapped: bool,
}

impl Trial {
    /// Canonical label for a choice made on the displayed layout.
    pub fn label(&self, choice: Choice) -> Label {
        let displayed = match choice {
            Choice::Left => Label::LeftSafer,
            Choice::Right => Label::RightSafer,
        };
        if self.swapped {
            displayed.flipped()
        } else {
            displayed
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub respondent_id: String,
    pub seed: u64,
    pub plan: Vec<Trial>,
    pub cursor: usize,
    /// Unix milliseconds.
    pub created_at: u64,
}

impl Session {
    pub fn is_complete(&self) -> bool {
        self.cursor >= self.plan.len()
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.session_id.clone(),
            respondent_id: self.respondent_id.clone(),
            plan_size: self.plan.len(),
            cursor: self.cursor,
            complete: self.is_complete(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub respondent_id: String,
    pub plan_size: usize,
    pub cursor: usize,
    pub complete: bool,
}

/// The pair to show next, already in display order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPayload {
    pub pair_id: String,
    pub left_url: String,
    pub right_url: String,
    pub index: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextPair {
    Trial(TrialPayload),
    Done { done: bool },
}

/// Cursor position sampled by the browser, in displayed-pair pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
}

impl From<TracePoint> for GazeSample {
    fn from(p: TracePoint) -> Self {
        GazeSample::new(p.t_ms, p.x, p.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSubmission {
    pub pair_id: String,
    pub choice: Choice,
    #[serde(default)]
    pub response_time_ms: f64,
    #[serde(default)]
    pub client_timestamp: Option<String>,
    /// Only kept when the store runs in proxy-gaze mode.
    #[serde(default)]
    pub cursor_trace: Option<Vec<TracePoint>>,
}

/// A logged judgment in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub seq: u64,
    pub session_id: String,
    pub respondent_id: String,
    pub pair_id: String,
    pub left_image: String,
    pub right_image: String,
    pub label: Label,
    pub displayed_choice: Choice,
    pub swapped: bool,
    pub trial_index: usize,
    pub response_time_ms: f64,
    pub client_timestamp: Option<String>,
    pub server_time_ms: u64,
    /// Relative path of the proxy trace CSV, if one was kept.
    pub trace_file: Option<String>,
}

impl ChoiceRecord {
    /// Manifest pair id: one row per judgment.
    pub fn export_id(&self) -> String {
        format!("{}_{}", self.pair_id, self.session_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    pub label: Label,
    pub cursor: usize,
    pub complete: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    pub respondent_id: Option<String>,
    pub session_id: Option<String>,
}

impl ExportFilter {
    pub fn accepts(&self, r: &ChoiceRecord) -> bool {
        self.respondent_id.as_ref().is_none_or(|x| *x == r.respondent_id)
            && self.session_id.as_ref().is_none_or(|x| *x == r.session_id)
    }
}

/// Snapshot file contents.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub(crate) struct Snapshot {
    pub next_session: u64,
    pub sessions: BTreeMap<String, Session>,
}
