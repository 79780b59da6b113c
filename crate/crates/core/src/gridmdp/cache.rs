//! On-disk cache of transition tables.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "MLCIMDP\0"
//! version      u32       currently 1
//! key          32 bytes  SHA-256 of (system, grid, actions, dt, hypotheses, substeps)
//! n_states     u64
//! n_actions    u64
//! n_hyp        u64
//! words        u64       ceil(n_hyp / 64)
//! diverged     u64
//! out_of_bnds  u64
//! successors   n_states * n_actions × u32   (0xFFFF_FFFF = invalid)
//! masks        n_states * n_actions * words × u64
//! center_masks n_states * words × u64
//! ```
//!
//! Cell centers, the grid and the action set are rebuilt from the inputs on load.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::grid::{ActionSet, GridSpec};
use super::hypotheses::HypothesisSet;
use super::mdp::{build_mdp, TabularMdp};
use crate::dynamics::{SystemSpec, VectorField};
use crate::error::{Error, Result};
use crate::mask::words_for;

const MAGIC: &[u8; 8] = b"MLCIMDP\0";
const VERSION: u32 = 1;

struct KeyHasher(Sha256);

impl KeyHasher {
    fn f(&mut self, v: f64) {
        self.0.update(v.to_bits().to_le_bytes());
    }
    fn n(&mut self, v: usize) {
        self.0.update((v as u64).to_le_bytes());
    }
    fn s(&mut self, v: &str) {
        self.n(v.len());
        self.0.update(v.as_bytes());
    }
    fn b(&mut self, v: bool) {
        self.0.update([v as u8]);
    }
}

/// Content hash identifying a transition table.
pub fn mdp_key(
    system: &SystemSpec,
    grid: &GridSpec,
    actions: &ActionSet,
    dt: f64,
    hypotheses: &HypothesisSet,
    substeps: usize,
) -> [u8; 32] {
    let mut h = KeyHasher(Sha256::new());
    h.s("mlci-mdp");
    h.n(VERSION as usize);
    h.s(&system.name);
    match system.field {
        VectorField::Pendulum { g, l } => {
            h.s("pendulum");
            h.f(g);
            h.f(l);
        }
        VectorField::Tip { g } => {
            h.s("tip");
            h.f(g);
        }
    }
    h.n(system.state_dims.len());
    for d in &system.state_dims {
        h.f(d.lower);
        h.f(d.upper);
        h.b(d.periodic);
    }
    h.n(grid.dims.len());
    for d in &grid.dims {
        h.n(d.cells);
        h.f(d.lower);
        h.f(d.upper);
        h.b(d.periodic);
    }
    h.n(actions.len());
    for u in &actions.actions {
        h.n(u.len());
        for &v in u.iter() {
            h.f(v);
        }
    }
    h.f(dt);
    h.n(hypotheses.len());
    for r in &hypotheses.regions {
        for b in &r.bounds {
            match b {
                None => h.b(false),
                Some((lo, hi)) => {
                    h.b(true);
                    h.f(*lo);
                    h.f(*hi);
                }
            }
        }
    }
    h.n(substeps);
    let out = h.0.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(out.as_slice());
    key
}

pub fn encode(mdp: &TabularMdp, key: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(80 + mdp.successors.len() * 4 + (mdp.masks.len() + mdp.center_masks.len()) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(key);
    for v in [
        mdp.n_states,
        mdp.actions.len(),
        mdp.n_hyp,
        mdp.words,
        mdp.diverged,
        mdp.out_of_bounds,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for s in &mdp.successors {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for w in mdp.masks.iter().chain(&mdp.center_masks) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Cache("truncated cache file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decode a cached table and attach it to the structure rebuilt from the inputs.
pub fn decode(bytes: &[u8], key: &[u8; 32], grid: &GridSpec, actions: &ActionSet, dt: f64) -> Result<TabularMdp> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported cache version {version}")));
    }
    if c.take(32)? != key {
        return Err(Error::Cache("cache key mismatch".into()));
    }
    let n_states = c.u64()? as usize;
    let n_actions = c.u64()? as usize;
    let n_hyp = c.u64()? as usize;
    let words = c.u64()? as usize;
    let diverged = c.u64()? as usize;
    let out_of_bounds = c.u64()? as usize;
    if n_states != grid.n_states() || n_actions != actions.len() || words != words_for(n_hyp) {
        return Err(Error::Cache("cache dimensions do not match inputs".into()));
    }
    let n_tr = n_states * n_actions;
    let successors = (0..n_tr).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let masks = (0..n_tr * words).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let center_masks = (0..n_states * words).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    if c.pos != bytes.len() {
        return Err(Error::Cache("trailing bytes in cache file".into()));
    }
    Ok(TabularMdp {
        n_states,
        actions: actions.clone(),
        dt,
        grid: Some(grid.clone()),
        centers: (0..n_states).map(|s| grid.center_of(s)).collect(),
        n_hyp,
        words,
        successors,
        masks,
        center_masks,
        diverged,
        out_of_bounds,
    })
}

pub fn cache_path(dir: &Path, key: &[u8; 32]) -> PathBuf {
    dir.join(format!("mdp-{}.bin", hex::encode(key)))
}

/// Load the table from `dir` if a matching file exists, otherwise build and store it.
pub fn load_or_build(
    dir: Option<&Path>,
    system: &SystemSpec,
    grid: &GridSpec,
    actions: &ActionSet,
    dt: f64,
    hypotheses: &HypothesisSet,
    substeps: usize,
) -> Result<TabularMdp> {
    let Some(dir) = dir else {
        return build_mdp(system, grid, actions, dt, hypotheses, substeps);
    };
    let key = mdp_key(system, grid, actions, dt, hypotheses, substeps);
    let path = cache_path(dir, &key);
    if path.exists() {
        let mut bytes = Vec::new();
        fs::File::open(&path)?.read_to_end(&mut bytes)?;
        match decode(&bytes, &key, grid, actions, dt) {
            Ok(mdp) => return Ok(mdp),
            Err(e) => log::warn!("ignoring cache file {}: {e}", path.display()),
        }
    }
    let mdp = build_mdp(system, grid, actions, dt, hypotheses, substeps)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&encode(&mdp, &key))?;
    fs::rename(&tmp, &path)?;
    Ok(mdp)
}
