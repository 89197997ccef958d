use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaze::{write_samples_csv, GazeSample};
use crate::pipeline::dataset::{write_manifest, ComparisonRecord};

use super::{
    Ack, ChoiceRecord, ChoiceSubmission, ExportFilter, NextPair, PairCatalog, Session, Snapshot, Trial, TrialPayload,
};

pub const CHOICE_LOG: &str = "choices.jsonl";
pub const SNAPSHOT: &str = "sessions.json";
const TRACE_DIR: &str = "traces";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    /// Base seed; session `k` without an explicit seed uses `seed + k`.
    pub seed: u64,
    /// Keep cursor traces submitted with choices.
    pub proxy_gaze: bool,
    /// URL prefix of the image endpoint.
    pub image_url_prefix: String,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            proxy_gaze: false,
            image_url_prefix: "/api/image/".into(),
        }
    }
}

/// Sessions and the choice log, persisted under one directory. Choices are
/// appended and flushed before the session cursor moves; on reopen each
/// cursor is rebuilt from the log so an acknowledged choice is never lost.
#[derive(Debug)]
pub struct AnnotationStore {
    dir: PathBuf,
    config: StoreConfig,
    catalog: PairCatalog,
    snapshot: Snapshot,
    choices: Vec<ChoiceRecord>,
    log: File,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Keeps ids safe in URL paths and file names.
fn encode_segment(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl AnnotationStore {
    pub fn open(dir: &Path, catalog: PairCatalog, config: StoreConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let snap_path = dir.join(SNAPSHOT);
        let mut snapshot: Snapshot = if snap_path.exists() {
            serde_json::from_slice(&fs::read(&snap_path)?)?
        } else {
            Snapshot::default()
        };
        let log_path = dir.join(CHOICE_LOG);
        let mut choices = Vec::new();
        if log_path.exists() {
            let bytes = fs::read(&log_path)?;
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                // a torn final record was never acknowledged
                log::warn!("{}: dropping {} bytes of torn record", log_path.display(), bytes.len() - complete);
                OpenOptions::new().write(true).open(&log_path)?.set_len(complete as u64)?;
            }
            for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                let record: ChoiceRecord = serde_json::from_slice(line).map_err(|e| Error::Format {
                    path: log_path.clone(),
                    reason: format!("line {}: {e}", i + 1),
                })?;
                choices.push(record);
            }
        }
        let mut answered: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &choices {
            *answered.entry(r.session_id.as_str()).or_default() += 1;
        }
        for (id, s) in snapshot.sessions.iter_mut() {
            s.cursor = answered.get(id.as_str()).copied().unwrap_or(0).min(s.plan.len());
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            catalog,
            snapshot,
            choices,
            log,
        })
    }

    pub fn catalog(&self) -> &PairCatalog {
        &self.catalog
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn session(&self, id: &str) -> Result<&Session> {
        self.snapshot.sessions.get(id).ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    pub fn choices(&self) -> &[ChoiceRecord] {
        &self.choices
    }

    fn write_snapshot(&self) -> Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&self.snapshot)?)?;
        fs::rename(tmp, self.dir.join(SNAPSHOT))?;
        Ok(())
    }

    /// Pairs this respondent has neither answered nor been assigned.
    pub fn available_pairs(&self, respondent_id: &str) -> Vec<&str> {
        let taken: HashSet<&str> = self
            .snapshot
            .sessions
            .values()
            .filter(|s| s.respondent_id == respondent_id)
            .flat_map(|s| s.plan.iter().map(|t| t.pair_id.as_str()))
            .collect();
        self.catalog
            .pairs
            .iter()
            .map(|p| p.pair_id.as_str())
            .filter(|id| !taken.contains(id))
            .collect()
    }

    /// New session with a seeded plan of distinct pairs and a random side
    /// assignment per trial.
    pub fn create_session(&mut self, respondent_id: &str, plan_size: usize, seed: Option<u64>) -> Result<Session> {
        if respondent_id.trim().is_empty() {
            return Err(invalid("respondent_id must not be empty"));
        }
        if plan_size == 0 {
            return Err(invalid("plan_size must be at least 1"));
        }
        let mut available: Vec<String> = self.available_pairs(respondent_id).into_iter().map(String::from).collect();
        if available.len() < plan_size {
            return Err(Error::InsufficientPairs {
                requested: plan_size,
                remaining: available.len(),
            });
        }
        let k = self.snapshot.next_session;
        let seed = seed.unwrap_or(self.config.seed.wrapping_add(k));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        available.shuffle(&mut rng);
        let plan = available
            .into_iter()
            .take(plan_size)
            .map(|pair_id| Trial { pair_id, swapped: rng.gen_bool(0.5) })
            .collect();
        let session = Session {
            session_id: format!("s{k:06}"),
            respondent_id: respondent_id.to_string(),
            seed,
            plan,
            cursor: 0,
            created_at: now_ms(),
        };
        self.snapshot.next_session += 1;
        self.snapshot.sessions.insert(session.session_id.clone(), session.clone());
        self.write_snapshot()?;
        Ok(session)
    }

    fn image_url(&self, image: &str) -> String {
        format!("{}{}", self.config.image_url_prefix, encode_segment(image))
    }

    /// The current trial in display order; unchanged until a choice for it
    /// is accepted.
    pub fn next_pair(&self, session_id: &str) -> Result<NextPair> {
        let s = self.session(session_id)?;
        let Some(trial) = s.plan.get(s.cursor) else {
            return Ok(NextPair::Done { done: true });
        };
        let pair = self
            .catalog
            .get(&trial.pair_id)
            .ok_or_else(|| invalid(format!("pair {} left the catalog", trial.pair_id)))?;
        let (left, right) = if trial.swapped {
            (&pair.right_image, &pair.left_image)
        } else {
            (&pair.left_image, &pair.right_image)
        };
        Ok(NextPair::Trial(TrialPayload {
            pair_id: pair.pair_id.clone(),
            left_url: self.image_url(left),
            right_url: self.image_url(right),
            index: s.cursor,
            total: s.plan.len(),
        }))
    }

    /// Records a choice for the currently served pair. Anything else is a
    /// conflict and changes nothing.
    pub fn submit_choice(&mut self, session_id: &str, sub: ChoiceSubmission) -> Result<Ack> {
        let s = self.session(session_id)?;
        let Some(trial) = s.plan.get(s.cursor) else {
            return Err(Error::Conflict(format!("session {session_id} is complete")));
        };
        if trial.pair_id != sub.pair_id {
            return Err(Error::Conflict(format!(
                "pair {} is not the current trial of session {session_id}",
                sub.pair_id
            )));
        }
        if !(sub.response_time_ms >= 0.0 && sub.response_time_ms.is_finite()) {
            return Err(invalid("response_time_ms must be finite and nonnegative"));
        }
        let pair = self
            .catalog
            .get(&trial.pair_id)
            .ok_or_else(|| invalid(format!("pair {} left the catalog", trial.pair_id)))?;
        let label = trial.label(sub.choice);
        let (trial_index, swapped, respondent) = (s.cursor, trial.swapped, s.respondent_id.clone());

        let trace_file = match (&sub.cursor_trace, self.config.proxy_gaze) {
            (Some(points), true) if !points.is_empty() => {
                let rel = format!("{TRACE_DIR}/{}_{}.csv", encode_segment(session_id), encode_segment(&sub.pair_id));
                fs::create_dir_all(self.dir.join(TRACE_DIR))?;
                let samples: Vec<GazeSample> = points.iter().map(|&p| p.into()).collect();
                write_samples_csv(&self.dir.join(&rel), &samples)?;
                Some(rel)
            }
            _ => None,
        };
        let record = ChoiceRecord {
            seq: self.choices.len() as u64,
            session_id: session_id.to_string(),
            respondent_id: respondent,
            pair_id: pair.pair_id.clone(),
            left_image: pair.left_image.clone(),
            right_image: pair.right_image.clone(),
            label,
            displayed_choice: sub.choice,
            swapped,
            trial_index,
            response_time_ms: sub.response_time_ms,
            client_timestamp: sub.client_timestamp,
            server_time_ms: now_ms(),
            trace_file,
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.choices.push(record);

        let s = self.snapshot.sessions.get_mut(session_id).expect("session checked above");
        s.cursor += 1;
        let ack = Ack {
            ok: true,
            label,
            cursor: s.cursor,
            complete: s.is_complete(),
        };
        self.write_snapshot()?;
        Ok(ack)
    }

    /// Manifest rows for the logged choices, in log order. UI rows never
    /// carry gaze.
    pub fn export_records(&self, filter: &ExportFilter) -> Vec<ComparisonRecord> {
        self.choices
            .iter()
            .filter(|r| filter.accepts(r))
            .map(|r| ComparisonRecord {
                pair_id: r.export_id(),
                left_image: r.left_image.clone(),
                right_image: r.right_image.clone(),
                label: r.label,
                respondent_id: r.respondent_id.clone(),
                has_gaze: false,
                left_gaze_file: None,
                right_gaze_file: None,
            })
            .collect()
    }

    pub fn export_comparisons(&self, filter: &ExportFilter) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_manifest(&mut out, &self.export_records(filter))?;
        Ok(out)
    }
}
