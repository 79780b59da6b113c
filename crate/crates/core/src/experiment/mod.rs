//! Config-driven experiment runs. Every verb returns its CSV files as strings so runs
//! can be compared byte for byte; the caller decides where to write them.

mod runs;
mod table;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::config::{sub_seed, DemoSource, ExperimentConfig};
use crate::demogen::{generate_demos, io, Rejection};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::gridmdp::{cache, ActionSet, GridSpec, HypothesisSet, Region, TabularMdp};
use crate::inference::{demo_phi, demo_violations, Demonstration};
use crate::mask::HypMask;

pub use runs::{InferenceRun, RankingRow};
pub use table::{RunOutput, Table};

/// Demonstrations available to an experiment.
#[derive(Debug, Clone)]
pub struct DemoBatch {
    pub demos: Vec<Demonstration>,
    pub rejections: Vec<Rejection>,
    pub attempted: usize,
}

/// Per-demo inference inputs on one MDP.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub ids: Vec<usize>,
    /// Φ_{i,T} over the candidate hypotheses, one vector per usable demo.
    pub phi: Vec<Vec<f64>>,
    pub profiles: Vec<HypMask>,
    pub skipped: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub system: SystemSpec,
    pub actions: ActionSet,
    /// Candidate hypotheses.
    pub hypotheses: HypothesisSet,
    /// Candidates followed by one region per ground-truth constraint.
    pub extended: HypothesisSet,
    pub truths: Vec<(String, Region)>,
    pub goal_dims: Vec<usize>,
}

impl Setup {
    pub fn n_candidates(&self) -> usize {
        self.hypotheses.len()
    }

    /// Baseline mask on the extended set that forbids ground truth `t`.
    pub fn truth_baseline(&self, t: usize) -> HypMask {
        let mut m = HypMask::new(self.extended.len());
        m.insert(self.n_candidates() + t);
        m
    }

    pub fn empty_baseline(&self) -> HypMask {
        HypMask::new(self.extended.len())
    }
}

pub struct Runner {
    pub cfg: ExperimentConfig,
    pub cache: Option<PathBuf>,
    demo_memo: Mutex<HashMap<String, Arc<DemoBatch>>>,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig, cache: Option<PathBuf>) -> Result<Self> {
        cfg.system()?;
        Ok(Runner {
            cfg,
            cache,
            demo_memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn setup(&self) -> Result<Setup> {
        let system = self.cfg.system()?;
        let actions = self.cfg.actions(&system)?;
        let hypotheses = self.cfg.hypotheses(&system)?;
        let truths = self.cfg.truth_regions(&system)?;
        let mut extended = hypotheses.clone();
        for (_, r) in &truths {
            extended = extended.with_extra(r.clone())?.0;
        }
        let goal_dims = self.cfg.goal_dims(&system)?;
        Ok(Setup {
            system,
            actions,
            hypotheses,
            extended,
            truths,
            goal_dims,
        })
    }

    pub fn mdp(&self, setup: &Setup, grid: &GridSpec, dt: f64) -> Result<TabularMdp> {
        let mdp = cache::load_or_build(
            self.cache.as_deref(),
            &setup.system,
            grid,
            &setup.actions,
            dt,
            &setup.extended,
            self.cfg.substeps,
        )?;
        if mdp.diverged_count() > 0 {
            log::warn!("{} transitions diverged during integration", mdp.diverged_count());
        }
        Ok(mdp)
    }

    pub(crate) fn stamp(&self, table: &mut Table) {
        table.comment(format!("config_hash={}", self.cfg.hash()));
        table.comment(format!("seed={}", self.cfg.seed));
    }

    /// Demonstrations for ground truth `truth` (generated with it as keep-out region, or
    /// ingested). Generated batches are memoized per truth name.
    pub fn demos(&self, setup: &Setup, truth: Option<&(String, Region)>) -> Result<Arc<DemoBatch>> {
        let key = truth.map(|t| t.0.clone()).unwrap_or_default();
        if let Some(b) = self.demo_memo.lock().expect("memo lock").get(&key) {
            return Ok(b.clone());
        }
        let mut batch = match self.cfg.demos.source {
            DemoSource::Ingest => {
                let path = self
                    .cfg
                    .demos
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("demos.path is required to ingest demonstrations".into()))?;
                let file = std::fs::File::open(path)?;
                let demos = io::read_demos(file, &setup.system, &setup.goal_dims)?;
                let attempted = demos.len();
                DemoBatch {
                    demos,
                    rejections: Vec::new(),
                    attempted,
                }
            }
            DemoSource::Generate => {
                let gen = self.cfg.demo_generator(&setup.system)?;
                let seed = sub_seed(self.cfg.seed, &format!("demos/{key}"));
                let set = generate_demos(&setup.system, truth.map(|t| &t.1), &gen, seed)?;
                DemoBatch {
                    demos: set.demos,
                    rejections: set.rejections,
                    attempted: set.attempted,
                }
            }
        };
        if let Some(n) = self.cfg.demos.count {
            batch.demos.truncate(n);
        }
        log::info!(
            "truth '{key}': {} demonstrations from {} attempts",
            batch.demos.len(),
            batch.attempted
        );
        let batch = Arc::new(batch);
        self.demo_memo.lock().expect("memo lock").insert(key, batch.clone());
        Ok(batch)
    }

    /// Φ and violation profiles of each demo on `mdp`; demos whose endpoints are not
    /// connected on the MDP are skipped and listed.
    pub fn evidence(
        &self,
        setup: &Setup,
        mdp: &TabularMdp,
        demos: &[Demonstration],
        baseline: &HypMask,
    ) -> Result<Evidence> {
        let h = setup.n_candidates();
        type Outcome = std::result::Result<(Vec<f64>, HypMask), String>;
        let per_demo: Vec<Result<Outcome>> = demos
            .par_iter()
            .map(|d| match demo_phi(mdp, d, baseline) {
                Ok(p) => Ok(Ok((p[..h].to_vec(), demo_violations(d, &setup.hypotheses)))),
                Err(e @ (Error::GoalUnreachable { .. } | Error::Contract(_))) => Ok(Err(e.to_string())),
                Err(e) => Err(e),
            })
            .collect();
        let mut ev = Evidence::default();
        for (d, r) in demos.iter().zip(per_demo) {
            match r? {
                Ok((phi, profile)) => {
                    ev.ids.push(d.id);
                    ev.phi.push(phi);
                    ev.profiles.push(profile);
                }
                Err(reason) => {
                    log::debug!("demo {} skipped: {reason}", d.id);
                    ev.skipped.push((d.id, reason));
                }
            }
        }
        Ok(ev)
    }
}
