//! Episode replays: a JSON header line followed by one JSON line per step.
//! Replays are re-simulated from `(config, seed, actions)`, so the files
//! stay small and byte-exact for identical runs.

use super::{Action, Event, GameState, GridConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::sync::Arc;

pub const REPLAY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub format_version: u32,
    pub preset: String,
    pub config_hash: String,
    pub seed: u64,
    pub policy_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub t: u32,
    pub actions: Vec<Action>,
    pub events: Vec<Event>,
    /// Policy-over-options distribution of the lowest-numbered player
    /// that has one, and that player's index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_options: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_player: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub header: ReplayHeader,
    pub steps: Vec<ReplayStep>,
}

/// Appends steps to a replay stream.
pub struct ReplayWriter<W: Write> {
    out: W,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, header: &ReplayHeader) -> Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(ReplayWriter { out })
    }

    pub fn push(&mut self, step: &ReplayStep) -> Result<()> {
        serde_json::to_writer(&mut self.out, step)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl Replay {
    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = lines.next().ok_or_else(|| Error::Format("empty replay".into()))??;
        let header: ReplayHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::Format(format!("bad replay header: {e}")))?;
        if header.format_version != REPLAY_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported replay version {}", header.format_version)));
        }
        let mut steps = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("bad replay record on line {}: {e}", n + 2)))?;
            steps.push(step);
        }
        Ok(Replay { header, steps })
    }

    pub fn write(&self, out: impl Write) -> Result<()> {
        let mut w = ReplayWriter::new(out, &self.header)?;
        for s in &self.steps {
            w.push(s)?;
        }
        w.finish()?;
        Ok(())
    }

    /// Re-simulates the episode, calling `visit` with the state after every
    /// step. Fails if the config hash or the recorded events disagree.
    pub fn simulate(&self, config: &GridConfig, mut visit: impl FnMut(&GameState, &ReplayStep)) -> Result<GameState> {
        if config.config_hash() != self.header.config_hash {
            return Err(Error::Format("replay was recorded with a different config".into()));
        }
        let mut state = GameState::reset(Arc::new(config.clone()), self.header.seed)?;
        for s in &self.steps {
            let out = state.step(&s.actions)?;
            if out.events != s.events {
                return Err(Error::Format(format!("replay diverged at step {}", s.t)));
            }
            visit(&state, s);
        }
        Ok(state)
    }
}
