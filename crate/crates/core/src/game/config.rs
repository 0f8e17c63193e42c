use super::{Pos, ResourceKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::path::Path;

const PRESET_FORMAT_VERSION: u32 = 1;

/// Static description of a game: geometry, resource layout and rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub num_players: usize,
    /// Cells that always hold the same resource at reset.
    pub deterministic_resource_cells: Vec<(Pos, ResourceKind)>,
    /// Cells that hold a resource of uniformly random kind at reset.
    pub random_resource_cells: Vec<Pos>,
    /// Resources of random kind dropped on uniformly random free cells at reset.
    pub scattered_resources: usize,
    pub episode_limit: u32,
    pub respawn_delay: Option<u32>,
    pub freeze_duration: Option<u32>,
    pub reset_inventory_on_tag: bool,
    pub terminate_on_tag: bool,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid must have at least one row and column".into()));
        }
        if self.num_players < 2 {
            return Err(Error::Config("at least two players are required".into()));
        }
        if self.episode_limit == 0 {
            return Err(Error::Config("episode_limit must be positive".into()));
        }
        let mut seen = HashSet::new();
        let cells = self
            .deterministic_resource_cells
            .iter()
            .map(|(p, _)| *p)
            .chain(self.random_resource_cells.iter().copied());
        for p in cells {
            if !self.in_bounds(p) {
                return Err(Error::Config(format!("resource cell {p:?} is outside the grid")));
            }
            if !seen.insert(p) {
                return Err(Error::Config(format!("resource cell {p:?} is listed twice")));
            }
        }
        let free = self.rows * self.cols - seen.len();
        if self.scattered_resources + self.num_players > free {
            return Err(Error::Config(format!(
                "{} players and {} scattered resources do not fit in {free} free cells",
                self.num_players, self.scattered_resources
            )));
        }
        if !self.terminate_on_tag && self.freeze_duration.is_none() {
            return Err(Error::Config("non-terminating games need a freeze_duration".into()));
        }
        Ok(())
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.row >= 0 && p.col >= 0 && (p.row as usize) < self.rows && (p.col as usize) < self.cols
    }

    pub fn num_resource_cells(&self) -> usize {
        self.deterministic_resource_cells.len() + self.random_resource_cells.len() + self.scattered_resources
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("GridConfig serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn rws() -> Self {
        Preset::Rws.config()
    }

    pub fn rps_arena() -> Self {
        Preset::RpsArena.config()
    }

    pub fn rws_small() -> Self {
        Preset::RwsSmall.config()
    }

    /// Parses a preset file (TOML with an ASCII layout). When the file
    /// carries a `sha256` key it must match the hash of the parsed config.
    pub fn from_preset_str(text: &str) -> Result<Self> {
        let raw: PresetFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if raw.format_version != PRESET_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported preset format_version {} (expected {PRESET_FORMAT_VERSION})",
                raw.format_version
            )));
        }
        let lines: Vec<&str> = raw.layout.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Config("layout is empty".into()));
        }
        let cols = lines[0].chars().count();
        let mut deterministic = Vec::new();
        let mut random = Vec::new();
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Config(format!("layout row {r} has a different width")));
            }
            for (c, ch) in line.chars().enumerate() {
                let p = Pos::new(r as i32, c as i32);
                match ch {
                    '.' => {}
                    '?' => random.push(p),
                    other => match ResourceKind::ALL.iter().find(|k| k.symbol() == other) {
                        Some(k) => deterministic.push((p, *k)),
                        None => return Err(Error::Config(format!("unknown layout symbol {other:?} at {p:?}"))),
                    },
                }
            }
        }
        let cfg = GridConfig {
            name: raw.name,
            rows: lines.len(),
            cols,
            num_players: raw.num_players,
            deterministic_resource_cells: deterministic,
            random_resource_cells: random,
            scattered_resources: raw.scattered_resources,
            episode_limit: raw.episode_limit,
            respawn_delay: raw.respawn_delay,
            freeze_duration: raw.freeze_duration,
            reset_inventory_on_tag: raw.reset_inventory_on_tag,
            terminate_on_tag: raw.terminate_on_tag,
        };
        cfg.validate()?;
        if let Some(expected) = raw.sha256 {
            let actual = cfg.config_hash();
            if expected != actual {
                return Err(Error::Config(format!("preset hash mismatch: file says {expected}, content hashes to {actual}")));
            }
        }
        Ok(cfg)
    }

    pub fn from_preset_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
        Self::from_preset_str(&text)
    }

    /// Resolves a preset name or a path to a preset file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match Preset::from_name(name_or_path) {
            Some(p) => Ok(p.config()),
            None => Self::from_preset_file(Path::new(name_or_path)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    format_version: u32,
    name: String,
    num_players: usize,
    episode_limit: u32,
    #[serde(default)]
    scattered_resources: usize,
    #[serde(default)]
    respawn_delay: Option<u32>,
    #[serde(default)]
    freeze_duration: Option<u32>,
    #[serde(default)]
    reset_inventory_on_tag: bool,
    terminate_on_tag: bool,
    layout: String,
    #[serde(default)]
    sha256: Option<String>,
}

/// Shipped presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Running With Scissors, 13x21, two players.
    Rws,
    /// RPS Arena, 13x42, five players.
    RpsArena,
    /// 7x7 Running With Scissors variant for desk-scale experiments.
    RwsSmall,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Rws, Preset::RpsArena, Preset::RwsSmall];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Rws => "rws",
            Preset::RpsArena => "rps_arena",
            Preset::RwsSmall => "rws_small",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn source(self) -> &'static str {
        match self {
            Preset::Rws => include_str!("../../presets/rws.toml"),
            Preset::RpsArena => include_str!("../../presets/rps_arena.toml"),
            Preset::RwsSmall => include_str!("../../presets/rws_small.toml"),
        }
    }

    pub fn config(self) -> GridConfig {
        GridConfig::from_preset_str(self.source()).expect("shipped presets are valid")
    }
}
