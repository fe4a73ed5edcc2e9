//! HDV ground truth (free-flow and Helly car-following with a distance
//! threshold between them) and the linear models the CAVs assume.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Piecewise-constant desired velocity: `initial` until the first change
/// step, then each `(step, value)` from its step on.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityProfile {
    pub initial: f64,
    pub changes: Vec<(usize, f64)>,
}

impl VelocityProfile {
    pub fn constant(v: f64) -> Self {
        Self { initial: v, changes: Vec::new() }
    }

    pub fn at(&self, step: usize) -> f64 {
        self.changes
            .iter()
            .filter(|(s, _)| *s <= step)
            .max_by_key(|(s, _)| *s)
            .map_or(self.initial, |&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdvParams {
    pub lambda_gain: f64,
    /// Reaction delay in steps.
    pub reaction_delay: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub noise_std: f64,
    pub distance_threshold: f64,
    pub desired_velocity: VelocityProfile,
}

impl HdvParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return bad("noise_std must be nonnegative");
        }
        if self.distance_threshold.is_nan() || self.distance_threshold <= 0.0 {
            return bad("distance_threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FreeFlow,
    CarFollowing,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::FreeFlow => "free_flow",
            Mode::CarFollowing => "car_following",
        })
    }
}

fn delayed(history: &[f64], k: usize, tau: usize) -> f64 {
    history[k.saturating_sub(tau)]
}

fn noise(std: f64, rng: &mut impl Rng) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    } else {
        0.0
    }
}

/// `v(k+1) = v(k) + λ(v_d(k) − v(k−τ)) + ε(k)`; `velocities` holds `v(0..=k)`
/// and delayed reads before step `τ` fall back to `v(0)`.
pub fn step_free_flow(velocities: &[f64], params: &HdvParams, k: usize, rng: &mut impl Rng) -> f64 {
    let v = velocities[k];
    let vd = params.desired_velocity.at(k);
    v + params.lambda_gain * (vd - delayed(velocities, k, params.reaction_delay)) + noise(params.noise_std, rng)
}

/// Position and velocity histories of one vehicle up to the current step.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub positions: &'a [f64],
    pub velocities: &'a [f64],
}

/// `v(k+1) = v(k) + α₁ δv(k−τ) + α₂ (δx(k−τ) − D(k))`, `D(k) = β₁ + β₂ v(k−τ)`.
pub fn step_helly(own: History<'_>, front: History<'_>, params: &HdvParams, k: usize) -> f64 {
    let tau = params.reaction_delay;
    let v_lag = delayed(own.velocities, k, tau);
    let dv = delayed(front.velocities, k, tau) - v_lag;
    let dx = delayed(front.positions, k, tau) - delayed(own.positions, k, tau);
    let desired_gap = params.beta1 + params.beta2 * v_lag;
    own.velocities[k] + params.alpha1 * dv + params.alpha2 * (dx - desired_gap)
}

/// Car-following only when the gap is strictly below the threshold.
pub fn select_mode(position: f64, front_position: Option<f64>, params: &HdvParams) -> Mode {
    match front_position {
        Some(front) if front - position < params.distance_threshold => Mode::CarFollowing,
        _ => Mode::FreeFlow,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdvSpec {
    pub params: HdvParams,
    pub initial_position: f64,
    pub initial_velocity: f64,
    /// Index of the vehicle ahead; `None` for an ego vehicle.
    pub front: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sample_time: f64,
    /// `[hdv][step]`, `horizon + 1` samples each.
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Mode used for the transition out of each step.
    pub modes: Vec<Vec<Mode>>,
    pub warnings: Vec<String>,
}

impl GroundTruth {
    pub fn hdv_count(&self) -> usize {
        self.positions.len()
    }

    pub fn steps(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    /// Stacked NCV state `[p_0, v_0, p_1, v_1, …]` at `step`.
    pub fn ncv_state(&self, step: usize) -> Vec<f64> {
        (0..self.hdv_count())
            .flat_map(|h| [self.positions[h][step], self.velocities[h][step]])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,hdv,mode,position_m,velocity_mps\n");
        for k in 0..self.steps() {
            for h in 0..self.hdv_count() {
                let mode = self.modes[h].get(k).map_or(String::new(), Mode::to_string);
                let _ = writeln!(out, "{k},{h},{mode},{},{}", self.positions[h][k], self.velocities[h][k]);
            }
        }
        out
    }
}

/// Steps every HDV synchronously for `horizon` transitions. Modes are
/// selected from the current gap, delayed terms read padded histories, and
/// positions use explicit Euler with the step's starting velocity.
pub fn simulate_ground_truth(hdvs: &[HdvSpec], sample_time: f64, horizon: usize, seed: u64) -> Result<GroundTruth> {
    for (i, h) in hdvs.iter().enumerate() {
        h.params.validate()?;
        if let Some(f) = h.front {
            if f >= hdvs.len() || f == i {
                return Err(Error::NodeOutOfRange { index: f, node_count: hdvs.len() });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = hdvs.len();
    let mut positions: Vec<Vec<f64>> = hdvs.iter().map(|h| vec![h.initial_position]).collect();
    let mut velocities: Vec<Vec<f64>> = hdvs.iter().map(|h| vec![h.initial_velocity]).collect();
    let mut modes: Vec<Vec<Mode>> = vec![Vec::with_capacity(horizon); n];
    let mut warnings = Vec::new();

    for k in 0..horizon {
        let mut next_v = Vec::with_capacity(n);
        for (i, h) in hdvs.iter().enumerate() {
            let front_pos = h.front.map(|f| positions[f][k]);
            if let Some(fp) = front_pos {
                if fp - positions[i][k] < 0.0 {
                    warnings.push(format!("step {k}: hdv {i} overlaps its front vehicle"));
                }
            }
            let mode = select_mode(positions[i][k], front_pos, &h.params);
            modes[i].push(mode);
            let v = match (mode, h.front) {
                (Mode::CarFollowing, Some(f)) => step_helly(
                    History { positions: &positions[i], velocities: &velocities[i] },
                    History { positions: &positions[f], velocities: &velocities[f] },
                    &h.params,
                    k,
                ),
                _ => step_free_flow(&velocities[i], &h.params, k, &mut rng),
            };
            next_v.push(v);
        }
        for i in 0..n {
            let p = positions[i][k] + sample_time * velocities[i][k];
            positions[i].push(p);
            velocities[i].push(next_v[i]);
        }
    }
    Ok(GroundTruth {
        sample_time,
        positions,
        velocities,
        modes,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ncv,
    Nca,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ncv => "ncv",
            ModelKind::Nca => "nca",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "ncv" => Ok(ModelKind::Ncv),
            "nca" => Ok(ModelKind::Nca),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    /// Per-HDV block.
    pub block: DenseMatrix,
    /// Block-diagonal over all HDVs.
    pub a: DenseMatrix,
    pub state_dim_per_hdv: usize,
    pub sample_time: f64,
}

impl ModelMatrices {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Global index of the position state of `hdv` (x-position for NCA).
    pub fn position_index(&self, hdv: usize) -> usize {
        hdv * self.state_dim_per_hdv + if self.state_dim_per_hdv == 2 { 0 } else { 4 }
    }

    pub fn velocity_index(&self, hdv: usize) -> usize {
        hdv * self.state_dim_per_hdv + if self.state_dim_per_hdv == 2 { 1 } else { 2 }
    }
}

/// NCV uses `[p, v]` with `[[1, T], [0, 1]]`; NCA uses
/// `[a_x, a_y, v_x, v_y, p_x, p_y]`.
pub fn build_observer_model(kind: ModelKind, hdv_count: usize, sample_time: f64) -> ModelMatrices {
    let t = sample_time;
    let block = match kind {
        ModelKind::Ncv => DenseMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]),
        ModelKind::Nca => {
            let h = t * t / 2.0;
            #[rustfmt::skip]
            let m = DenseMatrix::from_row_slice(6, 6, &[
                1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
                t,   0.0, 1.0, 0.0, 0.0, 0.0,
                0.0, t,   0.0, 1.0, 0.0, 0.0,
                h,   0.0, t,   0.0, 1.0, 0.0,
                0.0, h,   0.0, t,   0.0, 1.0,
            ]);
            m
        }
    };
    let m = block.nrows();
    let mut a = DenseMatrix::zeros(hdv_count * m, hdv_count * m);
    for i in 0..hdv_count {
        a.view_mut((i * m, i * m), (m, m)).copy_from(&block);
    }
    ModelMatrices {
        block,
        a,
        state_dim_per_hdv: m,
        sample_time,
    }
}
