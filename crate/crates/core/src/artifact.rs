/*
  Copyright 2026 The ctplan Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! Versioned binary container for preprocessing output.
//!
//! Layout, little-endian: magic, format version, body length, body, then a
//! SHA-256 of everything before it. The body holds the planning config, its
//! hash, the root-path table, coverage entries, latch entries and
//! unreachable sets, each sorted by key so equal inputs give equal bytes.

use sha2::{Digest, Sha256};
use std::path::Path as FsPath;
use thiserror::Error;

use crate::config::PlanningConfig;
use crate::lattice::{GoalPose, Primitive, State};
use crate::preprocess::{CoverageMap, GoalSet, LatchEntry, Preprocessed, RootPath};
use crate::search::Path;

pub const MAGIC: [u8; 4] = *b"CTPL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access artifact {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not an artifact (bad magic bytes)")]
    BadMagic,
    #[error("artifact format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("artifact is truncated")]
    Truncated,
    #[error("artifact checksum mismatch")]
    Corrupt,
    #[error("artifact was built for a different config")]
    ConfigHashMismatch,
    #[error("artifact content is inconsistent: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub config: PlanningConfig,
    pub roots: Vec<RootPath>,
    pub map: CoverageMap,
}

impl Artifact {
    pub fn new(config: PlanningConfig, pre: &Preprocessed) -> Self {
        Artifact {
            config,
            roots: pre.roots.clone(),
            map: pre.map.clone(),
        }
    }

    pub fn config_hash(&self) -> [u8; 32] {
        self.config.hash()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        let cfg = self.config.canonical_bytes();
        w.bytes(&self.config.hash());
        w.u32(cfg.len() as u32);
        w.bytes(&cfg);
        let dof = self.config.arm.link_lengths.len();
        w.u8(dof as u8);

        w.u32(self.roots.len() as u32);
        for r in &self.roots {
            w.u32(r.id);
            w.state(&r.origin_state);
            w.path(&r.path);
            w.goals(&r.covered_goals);
        }
        w.u32(self.map.home_paths.len() as u32);
        for &id in &self.map.home_paths {
            w.u32(id);
        }
        let mut entries: Vec<_> = self.map.entries.iter().collect();
        entries.sort();
        w.u32(entries.len() as u32);
        for (&(s, g), &id) in entries {
            w.u64(s);
            w.u32(g);
            w.u32(id);
        }
        let mut latches: Vec<_> = self.map.latch_entries.iter().collect();
        latches.sort_by_key(|(k, _)| **k);
        w.u32(latches.len() as u32);
        for (&(s, id), entry) in latches {
            w.u64(s);
            w.u32(id);
            w.state(&entry.target);
            w.goals(&entry.goals);
        }
        let mut unreachable: Vec<_> = self.map.unreachable.iter().collect();
        unreachable.sort_by_key(|(k, _)| **k);
        w.u32(unreachable.len() as u32);
        for (&s, goals) in unreachable {
            w.u64(s);
            w.goals(goals);
        }

        let body = w.buf;
        let mut out = Vec::with_capacity(HEADER_LEN + body.len() + DIGEST_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(ArtifactError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ArtifactError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ArtifactError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let body_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let total = (HEADER_LEN as u64)
            .checked_add(body_len)
            .and_then(|n| n.checked_add(DIGEST_LEN as u64))
            .ok_or(ArtifactError::Truncated)?;
        if (bytes.len() as u64) < total {
            return Err(ArtifactError::Truncated);
        }
        if bytes.len() as u64 > total {
            return Err(ArtifactError::Corrupt);
        }
        let split = bytes.len() - DIGEST_LEN;
        if Sha256::digest(&bytes[..split])[..] != bytes[split..] {
            return Err(ArtifactError::Corrupt);
        }

        let mut r = Reader {
            buf: &bytes[HEADER_LEN..split],
            pos: 0,
            dof: 0,
        };
        let stored_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let cfg_len = r.u32()? as usize;
        let cfg_bytes = r.take(cfg_len)?;
        let config: PlanningConfig = serde_json::from_slice(cfg_bytes)
            .map_err(|e| ArtifactError::Malformed(format!("config: {e}")))?;
        if config.hash() != stored_hash {
            return Err(ArtifactError::ConfigHashMismatch);
        }
        r.dof = r.u8()? as usize;
        if r.dof != config.arm.link_lengths.len() {
            return Err(ArtifactError::Malformed("joint count".into()));
        }

        let n_roots = r.u32()? as usize;
        let mut roots = Vec::with_capacity(n_roots.min(1 << 16));
        for i in 0..n_roots {
            let id = r.u32()?;
            if id as usize != i {
                return Err(ArtifactError::Malformed(format!("root path {i} has id {id}")));
            }
            let origin_state = r.state()?;
            let path = r.path()?;
            let covered_goals = r.goals()?;
            roots.push(RootPath {
                id,
                path,
                covered_goals,
                origin_state,
            });
        }
        let check_id = |id: u32| {
            if (id as usize) < n_roots {
                Ok(id)
            } else {
                Err(ArtifactError::Malformed(format!("unknown root path {id}")))
            }
        };
        let mut map = CoverageMap::default();
        let n_home = r.u32()? as usize;
        for _ in 0..n_home {
            map.home_paths.push(check_id(r.u32()?)?);
        }
        let n_entries = r.u32()? as usize;
        for _ in 0..n_entries {
            let s = r.u64()?;
            let g = r.u32()?;
            let id = check_id(r.u32()?)?;
            map.entries.insert((s, g), id);
        }
        let n_latch = r.u32()? as usize;
        for _ in 0..n_latch {
            let s = r.u64()?;
            let id = check_id(r.u32()?)?;
            let target = r.state()?;
            let goals = r.goals()?;
            map.latch_entries.insert((s, id), LatchEntry { target, goals });
        }
        let n_unreach = r.u32()? as usize;
        for _ in 0..n_unreach {
            let s = r.u64()?;
            let goals = r.goals()?;
            map.unreachable.insert(s, goals);
        }
        if r.pos != r.buf.len() {
            return Err(ArtifactError::Malformed("trailing bytes".into()));
        }
        Ok(Artifact { config, roots, map })
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<(), ArtifactError> {
        let p = path.as_ref();
        std::fs::write(p, self.to_bytes()).map_err(|source| ArtifactError::Io {
            path: p.display().to_string(),
            source,
        })
    }

    /// Load and, when `expected` is given, refuse artifacts built for a
    /// different planning config.
    pub fn load(
        path: impl AsRef<FsPath>,
        expected: Option<&PlanningConfig>,
    ) -> Result<Self, ArtifactError> {
        let p = path.as_ref();
        let bytes = std::fs::read(p).map_err(|source| ArtifactError::Io {
            path: p.display().to_string(),
            source,
        })?;
        let a = Self::from_bytes(&bytes)?;
        if let Some(cfg) = expected {
            if cfg.hash() != a.config_hash() {
                return Err(ArtifactError::ConfigHashMismatch);
            }
        }
        Ok(a)
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn state(&mut self, s: &State) {
        for &q in &s.q {
            self.bytes(&q.to_le_bytes());
        }
        self.u32(s.t);
    }
    fn goal(&mut self, g: &GoalPose) {
        self.u16(g.x_idx);
        self.u16(g.y_idx);
        self.u16(g.yaw_idx);
    }
    fn goals(&mut self, set: &GoalSet) {
        self.u32(set.len() as u32);
        for &g in set {
            self.u32(g);
        }
    }
    fn primitive(&mut self, p: &Primitive) {
        match *p {
            Primitive::Joint { joint, dir, steps } => {
                self.u8(0);
                self.u8(joint);
                self.u8(dir as u8);
                self.u32(steps);
            }
            Primitive::Wait => self.u8(1),
            Primitive::DynamicGrasp { steps } => {
                self.u8(2);
                self.u32(steps);
            }
            Primitive::Latch => self.u8(3),
        }
    }
    fn path(&mut self, p: &Path) {
        self.goal(&p.goal);
        self.u8(p.terminal_grasp as u8);
        self.u32(p.states.len() as u32);
        for s in &p.states {
            self.state(s);
        }
        for prim in &p.primitives {
            self.primitive(prim);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    dof: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        let end = self.pos.checked_add(n).ok_or(ArtifactError::Truncated)?;
        if end > self.buf.len() {
            return Err(ArtifactError::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn i32(&mut self) -> Result<i32, ArtifactError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn state(&mut self) -> Result<State, ArtifactError> {
        let mut q = crate::lattice::Joints::with_capacity(self.dof);
        for _ in 0..self.dof {
            q.push(self.i32()?);
        }
        Ok(State { q, t: self.u32()? })
    }
    fn goal(&mut self) -> Result<GoalPose, ArtifactError> {
        Ok(GoalPose {
            x_idx: self.u16()?,
            y_idx: self.u16()?,
            yaw_idx: self.u16()?,
        })
    }
    fn goals(&mut self) -> Result<GoalSet, ArtifactError> {
        let n = self.u32()? as usize;
        let mut set = GoalSet::new();
        for _ in 0..n {
            set.insert(self.u32()?);
        }
        Ok(set)
    }
    fn primitive(&mut self) -> Result<Primitive, ArtifactError> {
        Ok(match self.u8()? {
            0 => Primitive::Joint {
                joint: self.u8()?,
                dir: self.u8()? as i8,
                steps: self.u32()?,
            },
            1 => Primitive::Wait,
            2 => Primitive::DynamicGrasp { steps: self.u32()? },
            3 => Primitive::Latch,
            tag => return Err(ArtifactError::Malformed(format!("primitive tag {tag}"))),
        })
    }
    fn path(&mut self) -> Result<Path, ArtifactError> {
        let goal = self.goal()?;
        let terminal_grasp = self.u8()? != 0;
        let n = self.u32()? as usize;
        if n == 0 {
            return Err(ArtifactError::Malformed("empty path".into()));
        }
        let mut states = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            states.push(self.state()?);
        }
        let mut primitives = Vec::with_capacity(n - 1);
        for _ in 1..n {
            primitives.push(self.primitive()?);
        }
        Ok(Path {
            states,
            primitives,
            goal,
            terminal_grasp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    fn empty() -> Artifact {
        Artifact {
            config: scenario::small().planning(),
            roots: Vec::new(),
            map: CoverageMap::default(),
        }
    }

    #[test]
    fn empty_map_round_trips() {
        let a = empty();
        let b = Artifact::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flipped_byte_is_rejected() {
        let bytes = empty().to_bytes();
        for i in [HEADER_LEN + 3, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(matches!(
                Artifact::from_bytes(&bad),
                Err(ArtifactError::Corrupt)
            ));
        }
    }

    #[test]
    fn load_errors_are_distinct() {
        let bytes = empty().to_bytes();
        assert!(matches!(
            Artifact::from_bytes(&bytes[..bytes.len() - 5]),
            Err(ArtifactError::Truncated)
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            Artifact::from_bytes(&v2),
            Err(ArtifactError::VersionMismatch { found: 2, .. })
        ));
        assert!(matches!(
            Artifact::from_bytes(b"nope"),
            Err(ArtifactError::BadMagic)
        ));
    }
}
