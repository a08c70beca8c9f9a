//! Coalescing Brownian motions started from a fine grid.
//!
//! Particles start at every grid point of `[w_lo - margin, w_hi + margin]`
//! and receive independent Gaussian increments each step. Adjacent particles
//! merge when their paths cross during a step: always when the order flips,
//! and in bridge mode also with the probability that the Brownian bridge of
//! their difference touched zero in between. The left particle of a merging
//! pair survives at its own position and absorbs the right one's ancestry.
//!
//! A particle is identified by the first grid index of its ancestry
//! interval. The identifier never changes during its life, and the carrier
//! of any grid point at a later time is found by binary search on these
//! identifiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{MonotoneAtomMap, PointMeasure};
use crate::rng::{open_unit_u32, open_unit_u64, Philox4x32, DOMAIN_PARTICLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalescenceMode {
    /// Merge on order violation or on a sampled bridge crossing.
    #[default]
    Bridge,
    /// Merge only when the post-step order is violated.
    OrderMerge,
}

/// Geometry, time stepping and seed of one simulated flow.
///
/// `margin`, `grid_spacing` and `dt` default to `6 sqrt(t_max)`,
/// `sqrt(t_min) / 20` and `t_min / 1000`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub window: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub coalescence_mode: CoalescenceMode,
}

impl SimConfig {
    pub fn new(window: (f64, f64), checkpoints: Vec<f64>, seed: u64) -> Self {
        Self {
            window,
            margin: None,
            grid_spacing: None,
            dt: None,
            checkpoints,
            seed,
            coalescence_mode: CoalescenceMode::Bridge,
        }
    }

    pub fn with_grid_spacing(mut self, delta: f64) -> Self {
        self.grid_spacing = Some(delta);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn with_mode(mut self, mode: CoalescenceMode) -> Self {
        self.coalescence_mode = mode;
        self
    }

    pub fn t_min(&self) -> f64 {
        self.checkpoints.first().copied().unwrap_or(f64::NAN)
    }

    pub fn t_max(&self) -> f64 {
        self.checkpoints.last().copied().unwrap_or(f64::NAN)
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or_else(|| 6.0 * self.t_max().sqrt())
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing.unwrap_or_else(|| self.t_min().sqrt() / 20.0)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| 1e-3 * self.t_min())
    }

    /// Checks every constraint and names the first one violated.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("window [{lo}, {hi}] is empty or not finite")));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Config("at least one checkpoint time is required".into()));
        }
        if self.checkpoints[0] <= 0.0 || self.checkpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("checkpoint times must be positive and finite".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("checkpoint times must be sorted".into()));
        }
        let slack = 1.0 + 1e-12;
        let (t_min, t_max) = (self.t_min(), self.t_max());
        let delta = self.grid_spacing();
        if !(delta > 0.0) || delta > t_min.sqrt() / 20.0 * slack {
            return Err(Error::Config(format!(
                "grid spacing {delta} violates 0 < delta <= sqrt(t_min)/20 = {}",
                t_min.sqrt() / 20.0
            )));
        }
        let margin = self.margin();
        if !(margin >= 6.0 * t_max.sqrt() / slack) {
            return Err(Error::Config(format!(
                "margin {margin} violates margin >= 6 sqrt(t_max) = {}",
                6.0 * t_max.sqrt()
            )));
        }
        let dt = self.dt();
        if !(dt > 0.0) || dt > t_min / 100.0 * slack {
            return Err(Error::Config(format!(
                "time step {dt} violates 0 < dt <= t_min/100 = {}",
                t_min / 100.0
            )));
        }
        if self.grid_len() > u32::MAX as f64 {
            return Err(Error::Config("grid has more than 2^32 points".into()));
        }
        Ok(())
    }

    fn grid_len(&self) -> f64 {
        let (lo, hi) = self.window;
        ((hi - lo + 2.0 * self.margin()) / self.grid_spacing() + 1e-9).floor() + 1.0
    }
}

/// Random numbers for one replica of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaStream {
    philox: Philox4x32,
    replica: u32,
}

impl ReplicaStream {
    pub fn new(seed: u64, replica: u32) -> Self {
        Self {
            philox: Philox4x32::new(seed),
            replica,
        }
    }

    pub fn replica(&self) -> u32 {
        self.replica
    }

    #[inline]
    fn block(&self, particle: u32, step: u64) -> [u32; 4] {
        let domain = DOMAIN_PARTICLE | (((step >> 32) as u32) << 8);
        self.philox
            .block([particle, step as u32, self.replica, domain])
    }
}

/// Live particles of one realization, sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    positions: Vec<f64>,
    /// First grid index of each particle's ancestry interval; the interval
    /// of particle `i` ends where that of `i + 1` starts.
    first: Vec<u32>,
    grid_len: u32,
    time: f64,
    steps: u64,
    dt: f64,
    mode: CoalescenceMode,
    scratch: Vec<f64>,
}

impl ParticleSystem {
    /// Particles at `w_lo - margin + i delta` covering the padded window.
    pub fn init_grid(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let n = config.grid_len() as u32;
        let start = config.window.0 - config.margin();
        let delta = config.grid_spacing();
        Ok(Self {
            positions: (0..n).map(|i| start + delta * i as f64).collect(),
            first: (0..n).collect(),
            grid_len: n,
            time: 0.0,
            steps: 0,
            dt: config.dt(),
            mode: config.coalescence_mode,
            scratch: Vec::with_capacity(n as usize),
        })
    }

    /// A system from explicit sorted positions, one grid index each.
    pub fn from_positions(positions: Vec<f64>, dt: f64, mode: CoalescenceMode) -> Result<Self> {
        if positions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("positions must be strictly increasing".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let n = positions.len() as u32;
        Ok(Self {
            scratch: Vec::with_capacity(positions.len()),
            positions,
            first: (0..n).collect(),
            grid_len: n,
            time: 0.0,
            steps: 0,
            dt,
            mode,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Stable identifiers: first grid index of each ancestry interval.
    pub fn ids(&self) -> &[u32] {
        &self.first
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn grid_len(&self) -> u32 {
        self.grid_len
    }

    /// Grid index range absorbed by particle `i`.
    pub fn ancestry(&self, i: usize) -> std::ops::Range<u32> {
        let end = self.first.get(i + 1).copied().unwrap_or(self.grid_len);
        self.first[i]..end
    }

    /// Index of the live particle carrying grid point `grid_index`.
    pub fn carrier(&self, grid_index: u32) -> usize {
        self.first.partition_point(|&f| f <= grid_index) - 1
    }

    /// Advances by one step of length `dt`.
    pub fn step(&mut self, dt: f64, rng: &ReplicaStream) {
        let n = self.positions.len();
        if n == 0 {
            self.time += dt;
            self.steps += 1;
            return;
        }
        let sd = dt.sqrt();
        let step = self.steps;
        let old = std::mem::take(&mut self.scratch);
        let mut old = old;
        old.clear();
        old.extend_from_slice(&self.positions);
        let mut write = 0usize;
        // index (into `old`) of the current last survivor
        let mut left = 0usize;
        for i in 0..n {
            let block = rng.block(self.first[i], step);
            let z = normal_from_words(block[0], block[1]);
            let x = old[i] + sd * z;
            if i == 0 {
                self.positions[0] = x;
                write = 1;
                continue;
            }
            let d1 = x - self.positions[write - 1];
            let merge = if d1 <= 0.0 {
                true
            } else {
                match self.mode {
                    CoalescenceMode::OrderMerge => false,
                    CoalescenceMode::Bridge => {
                        let d0 = old[i] - old[left];
                        let u = open_unit_u64(block[2], block[3]);
                        u < (-d0 * d1 / dt).exp()
                    }
                }
            };
            if !merge {
                self.positions[write] = x;
                self.first[write] = self.first[i];
                write += 1;
                left = i;
            }
        }
        self.positions.truncate(write);
        self.first.truncate(write);
        self.scratch = old;
        self.time += dt;
        self.steps += 1;
    }

    /// Steps with the configured `dt` until `t`, shortening the last step.
    pub fn run_to(&mut self, t: f64, rng: &ReplicaStream) -> Result<()> {
        if t < self.time {
            return Err(Error::Domain(format!(
                "cannot run backwards from {} to {t}",
                self.time
            )));
        }
        loop {
            let remaining = t - self.time;
            if remaining <= self.dt * 1e-9 {
                break;
            }
            let h = if remaining < self.dt * (1.0 + 1e-9) {
                remaining
            } else {
                self.dt
            };
            self.step(h, rng);
        }
        self.time = t;
        Ok(())
    }

    /// Atoms of `N_t` inside the closed window.
    pub fn extract_point_measure(&self, window: (f64, f64)) -> Result<PointMeasure> {
        let (lo, hi) = window;
        let a = self.positions.partition_point(|&x| x < lo);
        let b = self.positions.partition_point(|&x| x <= hi);
        PointMeasure::new(self.positions[a..b.max(a)].to_vec(), window)
    }

    /// Maps each of this system's particles inside `window` to the position
    /// of its carrier in `later`, a descendant state of the same realization.
    pub fn web_map_to(&self, later: &ParticleSystem, window: (f64, f64)) -> Result<WebMap> {
        if later.grid_len != self.grid_len || later.time < self.time {
            return Err(Error::Domain(
                "web map needs a later state of the same realization".into(),
            ));
        }
        let (lo, hi) = window;
        let a = self.positions.partition_point(|&x| x < lo);
        let b = self.positions.partition_point(|&x| x <= hi).max(a);
        let source = PointMeasure::new(self.positions[a..b].to_vec(), window)?;
        let source_ids = self.first[a..b].to_vec();
        let mut image = Vec::with_capacity(b - a);
        let mut image_ids = Vec::with_capacity(b - a);
        for &id in &source_ids {
            let c = later.carrier(id);
            image.push(later.positions[c]);
            image_ids.push(later.first[c]);
        }
        Ok(WebMap {
            source,
            source_ids,
            image,
            image_ids,
            t1: self.time,
            t2: later.time,
        })
    }
}

/// Continues the realization from `ps` to `t2` and returns the later state
/// with the map from `ps`'s atoms in `window` to their carriers.
pub fn web_map(
    ps: &ParticleSystem,
    t2: f64,
    rng: &ReplicaStream,
    window: (f64, f64),
) -> Result<(ParticleSystem, WebMap)> {
    let mut later = ps.clone();
    later.run_to(t2, rng)?;
    let map = ps.web_map_to(&later, window)?;
    Ok((later, map))
}

#[inline]
fn normal_from_words(a: u32, b: u32) -> f64 {
    let r = (-2.0 * open_unit_u32(a).ln()).sqrt();
    r * (std::f64::consts::TAU * open_unit_u32(b)).cos()
}

/// The flow map between two times restricted to the atoms at the first.
#[derive(Debug, Clone, PartialEq)]
pub struct WebMap {
    source: PointMeasure,
    source_ids: Vec<u32>,
    image: Vec<f64>,
    image_ids: Vec<u32>,
    t1: f64,
    t2: f64,
}

impl WebMap {
    pub fn source(&self) -> &PointMeasure {
        &self.source
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }

    pub fn source_ids(&self) -> &[u32] {
        &self.source_ids
    }

    pub fn image_ids(&self) -> &[u32] {
        &self.image_ids
    }

    pub fn times(&self) -> (f64, f64) {
        (self.t1, self.t2)
    }

    pub fn is_monotone(&self) -> bool {
        self.image.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn to_atom_map(&self) -> Result<MonotoneAtomMap> {
        MonotoneAtomMap::new(self.source.clone(), self.image.clone())
    }

    /// Number of distinct carriers, i.e. clusters of source atoms.
    pub fn cluster_count(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for &id in &self.image_ids {
            if last != Some(id) {
                n += 1;
                last = Some(id);
            }
        }
        n
    }

    /// `self` followed by `next`; `next` must cover every carrier of `self`.
    pub fn compose(&self, next: &WebMap) -> Result<WebMap> {
        if (self.t2 - next.t1).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "cannot compose maps ending at {} and starting at {}",
                self.t2, next.t1
            )));
        }
        let mut image = Vec::with_capacity(self.image.len());
        let mut image_ids = Vec::with_capacity(self.image.len());
        for &id in &self.image_ids {
            let k = next
                .source_ids
                .binary_search(&id)
                .map_err(|_| Error::Window(format!("carrier {id} lies outside the second map's window")))?;
            image.push(next.image[k]);
            image_ids.push(next.image_ids[k]);
        }
        Ok(WebMap {
            source: self.source.clone(),
            source_ids: self.source_ids.clone(),
            image,
            image_ids,
            t1: self.t1,
            t2: next.t2,
        })
    }
}

/// Runs replica `replica` of `config` and returns the state at each
/// checkpoint.
pub fn simulate_checkpoints(config: &SimConfig, replica: u32) -> Result<Vec<ParticleSystem>> {
    let rng = ReplicaStream::new(config.seed, replica);
    let mut ps = ParticleSystem::init_grid(config)?;
    let mut out = Vec::with_capacity(config.checkpoints.len());
    for &t in &config.checkpoints {
        ps.run_to(t, &rng)?;
        out.push(ps.clone());
    }
    Ok(out)
}

/// Point measures on the configured window at each checkpoint.
pub fn simulate_point_measures(config: &SimConfig, replica: u32) -> Result<Vec<PointMeasure>> {
    let rng = ReplicaStream::new(config.seed, replica);
    let mut ps = ParticleSystem::init_grid(config)?;
    let mut out = Vec::with_capacity(config.checkpoints.len());
    for &t in &config.checkpoints {
        ps.run_to(t, &rng)?;
        out.push(ps.extract_point_measure(config.window)?);
    }
    Ok(out)
}
