//! Consensus-based distributed observer, fault handling, the centralized
//! Kalman benchmark and error metrics.
//!
//! Each step a CAV averages its neighbours' propagated estimates and then
//! corrects with the measurements shared in its neighbourhood:
//!
//! ```text
//! x̂ⁱ⁻ = Σ_{j∈N_i} w_ij A x̂ʲ
//! x̂ⁱ  = x̂ⁱ⁻ + K_i (Σ_{j∈N_i} C_jᵀ y_j − D_i x̂ⁱ⁻)
//! ```
//!
//! With a matched model and no noise the stacked error obeys `e⁺ = Â e`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{is_strongly_connected, survives_removal, DirectedGraph};
use crate::matrix::{assemble_ahat, build_dc, build_row_stochastic, spectral_radius, DenseMatrix, DenseVector, WeightRule};
use crate::structural::SensorPlacement;
use crate::synthesis::{synthesize_gain, ObserverGain, SynthesisConfig};
use crate::traffic::{GroundTruth, ModelMatrices};

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub step: usize,
    pub estimates: Vec<DenseVector>,
}

impl ObserverState {
    pub fn uniform(agents: usize, initial: DenseVector) -> Self {
        Self {
            step: 0,
            estimates: vec![initial; agents],
        }
    }
}

/// One synchronous observer update. `measurements[j]` must have one entry
/// per state measured by CAV `j` (empty for CAVs without sensors).
pub fn observer_step(
    state: &ObserverState,
    w: &DenseMatrix,
    a: &DenseMatrix,
    gain: &ObserverGain,
    placement: &SensorPlacement,
    measurements: &[DenseVector],
) -> Result<ObserverState> {
    let n = state.estimates.len();
    let d = a.nrows();
    if w.shape() != (n, n) || gain.agent_count() != n || placement.cav_count() != n || measurements.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} estimates, W {}x{}, {} gain blocks, {} placements, {} measurement vectors",
            w.nrows(),
            w.ncols(),
            gain.agent_count(),
            placement.cav_count(),
            measurements.len()
        )));
    }
    if gain.block_dim() != d || state.estimates.iter().any(|x| x.len() != d) {
        return Err(Error::DimensionMismatch(format!("estimates and gain blocks must have length {d}")));
    }
    for (j, y) in measurements.iter().enumerate() {
        if y.len() != placement.measured(j).len() {
            return Err(Error::DimensionMismatch(format!(
                "cav {j} has {} sensors but {} measurements",
                placement.measured(j).len(),
                y.len()
            )));
        }
    }

    let propagated: Vec<DenseVector> = state.estimates.iter().map(|x| a * x).collect();
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let mut pred = DenseVector::zeros(d);
        let mut shared = DenseVector::zeros(d);
        let mut dpred = DenseVector::zeros(d);
        for j in 0..n {
            let wij = w[(i, j)];
            if wij == 0.0 {
                continue;
            }
            pred.axpy(wij, &propagated[j], 1.0);
        }
        for j in (0..n).filter(|&j| w[(i, j)] != 0.0) {
            for (r, &s) in placement.measured(j).iter().enumerate() {
                shared[s] += measurements[j][r];
                dpred[s] += pred[s];
            }
        }
        let est = &pred + gain.block(i) * (shared - dpred);
        if est.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(state.step + 1));
        }
        next.push(est);
    }
    Ok(ObserverState {
        step: state.step + 1,
        estimates: next,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Both directions of the link between two CAVs.
    RemoveLink(usize, usize),
    RemoveNode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultEvent {
    pub step: usize,
    pub kind: FaultKind,
    pub redesign_gain: bool,
}

/// Noisy readings `[step][cav]` drawn once so that several estimators can
/// share the same realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLog {
    pub readings: Vec<Vec<DenseVector>>,
}

/// `y_j = C_j x_k + μ`, `μ ~ N(0, variance)`, drawn step by step in CAV and
/// sensor order.
pub fn generate_measurements(
    truth: &[DenseVector],
    placement: &SensorPlacement,
    variance: f64,
    seed: u64,
) -> MeasurementLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let normal = (variance > 0.0).then(|| Normal::new(0.0, variance.sqrt()).expect("finite variance"));
    let readings = truth
        .iter()
        .map(|x| {
            (0..placement.cav_count())
                .map(|j| {
                    DenseVector::from_iterator(
                        placement.measured(j).len(),
                        placement.measured(j).iter().map(|&s| {
                            x[s] + normal.as_ref().map_or(0.0, |nd| nd.sample(&mut rng))
                        }),
                    )
                })
                .collect()
        })
        .collect();
    MeasurementLog { readings }
}

/// Stacked NCV truth vectors, one per step.
pub fn truth_states(truth: &GroundTruth) -> Vec<DenseVector> {
    (0..truth.steps())
        .map(|k| DenseVector::from_vec(truth.ncv_state(k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Distributed,
    Centralized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub role: Role,
    pub state_dim_per_hdv: usize,
    pub truth: Vec<DenseVector>,
    /// `[step][entity]`; `None` once an entity has been removed.
    pub estimates: Vec<Vec<Option<DenseVector>>>,
    /// `(step, ρ(Â))` at the start and after every fault.
    pub spectral_radii: Vec<(usize, f64)>,
    pub events: Vec<String>,
}

impl SimulationTrace {
    pub fn steps(&self) -> usize {
        self.truth.len()
    }

    pub fn entity_count(&self) -> usize {
        self.estimates.first().map_or(0, Vec::len)
    }

    pub fn hdv_count(&self) -> usize {
        self.truth.first().map_or(0, |x| x.len() / self.state_dim_per_hdv.max(1))
    }

    pub fn error(&self, step: usize, entity: usize) -> Option<DenseVector> {
        self.estimates[step][entity].as_ref().map(|x| x - &self.truth[step])
    }

    /// Squared norm of the estimation error per step and entity.
    pub fn squared_errors(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.steps())
            .map(|k| (0..self.entity_count()).map(|e| self.error(k, e).map(|v| v.norm_squared())).collect())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let m = self.state_dim_per_hdv;
        let (label, role) = match self.role {
            Role::Distributed => ("cav", "cav_estimate"),
            Role::Centralized => ("central", "central_estimate"),
        };
        let mut out = String::from("step,entity,role,hdv,position,velocity,sq_error\n");
        for k in 0..self.steps() {
            for h in 0..self.hdv_count() {
                let t = &self.truth[k];
                let _ = writeln!(out, "{k},truth,truth,{h},{},{},0", t[h * m], t[h * m + 1]);
            }
            for (e, est) in self.estimates[k].iter().enumerate() {
                let Some(x) = est else { continue };
                for h in 0..self.hdv_count() {
                    let t = &self.truth[k];
                    let sq = (x[h * m] - t[h * m]).powi(2) + (x[h * m + 1] - t[h * m + 1]).powi(2);
                    let _ = writeln!(out, "{k},{label}{e},{role},{h},{},{},{sq}", x[h * m], x[h * m + 1]);
                }
            }
        }
        out
    }
}

/// Everything the distributed run needs besides truth and noise.
#[derive(Debug, Clone)]
pub struct DistributedSetup {
    pub model: ModelMatrices,
    /// Communication graph with self-loops.
    pub network: DirectedGraph,
    pub weight_rule: WeightRule,
    pub placement: SensorPlacement,
    pub gain: ObserverGain,
    pub faults: Vec<FaultEvent>,
    pub synthesis: SynthesisConfig,
    pub initial_estimate: Option<DenseVector>,
}

struct ActiveNetwork {
    alive: Vec<usize>,
    w: DenseMatrix,
    gain: ObserverGain,
    placement: SensorPlacement,
    radius: f64,
}

fn activate(
    setup: &DistributedSetup,
    removed_nodes: &BTreeSet<usize>,
    removed_links: &BTreeSet<(usize, usize)>,
    gain: Option<ObserverGain>,
) -> Result<ActiveNetwork> {
    let sub = survives_removal(&setup.network, removed_nodes, removed_links)?;
    if !is_strongly_connected(&sub.graph) {
        return Err(Error::ObservabilityLost(format!(
            "{} CAVs remain and the network is no longer strongly connected",
            sub.graph.node_count()
        )));
    }
    let placement = setup.placement.without_cavs(removed_nodes);
    let a = &setup.model.a;
    let d = a.nrows();
    let w = build_row_stochastic(&sub.graph, setup.weight_rule)?;
    let dc = build_dc(&placement, &sub.graph, d)?;
    let gain = match gain {
        Some(g) => g,
        None => synthesize_gain(&w, a, &dc, &setup.synthesis)?.gain,
    };
    let radius = spectral_radius(&assemble_ahat(&w, a, &gain, &dc)?)?;
    Ok(ActiveNetwork {
        alive: sub.original,
        w,
        gain,
        placement,
        radius,
    })
}

/// Runs the distributed observer against `truth` with the readings in
/// `log`, applying scheduled faults before the step they trigger on.
pub fn run_distributed(setup: &DistributedSetup, truth: &[DenseVector], log: &MeasurementLog) -> Result<SimulationTrace> {
    let n = setup.network.node_count();
    let d = setup.model.a.nrows();
    let initial = setup.initial_estimate.clone().unwrap_or_else(|| DenseVector::zeros(d));
    let mut removed_nodes = BTreeSet::new();
    let mut removed_links = BTreeSet::new();
    let mut net = activate(setup, &removed_nodes, &removed_links, Some(setup.gain.clone()))?;
    let mut state = ObserverState::uniform(n, initial.clone());
    let mut spectral_radii = vec![(0, net.radius)];
    let mut events = Vec::new();

    let mut estimates = Vec::with_capacity(truth.len());
    estimates.push(vec![Some(initial); n]);
    let mut faults = setup.faults.clone();
    faults.sort_by_key(|f| f.step);

    for k in 1..truth.len() {
        let due: Vec<FaultEvent> = faults.iter().copied().filter(|f| f.step == k).collect();
        if !due.is_empty() {
            let mut redesign = false;
            for f in &due {
                match f.kind {
                    FaultKind::RemoveNode(v) => {
                        if v >= n {
                            return Err(Error::NodeOutOfRange { index: v, node_count: n });
                        }
                        removed_nodes.insert(v);
                        events.push(format!("step {k}: removed cav {v}"));
                    }
                    FaultKind::RemoveLink(a, b) => {
                        let mut any = false;
                        for arc in [(a, b), (b, a)] {
                            if setup.network.has_link(arc.0, arc.1) {
                                removed_links.insert(arc);
                                any = true;
                            }
                        }
                        if !any {
                            return Err(Error::MissingLink(a, b));
                        }
                        events.push(format!("step {k}: removed link {a}-{b}"));
                    }
                }
                redesign |= f.redesign_gain;
            }
            // links touching removed nodes vanish with them
            removed_links.retain(|&(a, b)| !removed_nodes.contains(&a) && !removed_nodes.contains(&b));
            let keep: Vec<usize> = net.alive.iter().copied().filter(|v| !removed_nodes.contains(v)).collect();
            let gain = if redesign {
                None
            } else {
                let dropped: BTreeSet<usize> = net
                    .alive
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| removed_nodes.contains(v))
                    .map(|(i, _)| i)
                    .collect();
                Some(net.gain.without_agents(&dropped))
            };
            let local: Vec<DenseVector> = net
                .alive
                .iter()
                .zip(&state.estimates)
                .filter(|(v, _)| keep.contains(v))
                .map(|(_, x)| x.clone())
                .collect();
            net = activate(setup, &removed_nodes, &removed_links, gain)?;
            state = ObserverState { step: state.step, estimates: local };
            spectral_radii.push((k, net.radius));
            events.push(format!("step {k}: spectral radius {}", net.radius));
        }

        let readings: Vec<DenseVector> = net.alive.iter().map(|&v| log.readings[k][v].clone()).collect();
        state = observer_step(&state, &net.w, &setup.model.a, &net.gain, &net.placement, &readings)?;
        let mut row = vec![None; n];
        for (slot, &v) in net.alive.iter().enumerate() {
            row[v] = Some(state.estimates[slot].clone());
        }
        estimates.push(row);
    }
    Ok(SimulationTrace {
        role: Role::Distributed,
        state_dim_per_hdv: setup.model.state_dim_per_hdv,
        truth: truth.to_vec(),
        estimates,
        spectral_radii,
        events,
    })
}

/// Discrete Kalman filter on the global model with all sensors stacked.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    pub a: DenseMatrix,
    pub c: DenseMatrix,
    pub process_cov: DenseMatrix,
    pub measurement_cov: DenseMatrix,
    pub x: DenseVector,
    pub p: DenseMatrix,
}

impl KalmanFilter {
    pub fn step(&mut self, y: &DenseVector) -> Result<()> {
        let x_pred = &self.a * &self.x;
        let p_pred = &self.a * &self.p * self.a.transpose() + &self.process_cov;
        let s = &self.c * &p_pred * self.c.transpose() + &self.measurement_cov;
        let chol = Cholesky::new(s).ok_or(Error::Divergence(0))?;
        // K = P Cᵀ S⁻¹ computed as (S⁻¹ C P)ᵀ
        let gain = chol.solve(&(&self.c * &p_pred)).transpose();
        self.x = &x_pred + &gain * (y - &self.c * &x_pred);
        let ikc = DenseMatrix::identity(self.x.len(), self.x.len()) - &gain * &self.c;
        // Joseph form keeps P symmetric positive semidefinite
        self.p = &ikc * p_pred * ikc.transpose() + &gain * &self.measurement_cov * gain.transpose();
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedSetup {
    pub model: ModelMatrices,
    pub placement: SensorPlacement,
    pub process_variance: f64,
    pub measurement_variance: f64,
    pub initial_variance: f64,
    pub initial_estimate: Option<DenseVector>,
}

/// Centralized benchmark fed with every CAV's readings from `log`.
pub fn run_centralized_kalman(setup: &CentralizedSetup, truth: &[DenseVector], log: &MeasurementLog) -> Result<SimulationTrace> {
    let d = setup.model.a.nrows();
    let c = setup.placement.stacked_output_matrix(d);
    let rows = c.nrows();
    let x0 = setup.initial_estimate.clone().unwrap_or_else(|| DenseVector::zeros(d));
    let mut kf = KalmanFilter {
        a: setup.model.a.clone(),
        c,
        process_cov: DenseMatrix::identity(d, d) * setup.process_variance,
        measurement_cov: DenseMatrix::identity(rows, rows) * setup.measurement_variance.max(1e-12),
        x: x0.clone(),
        p: DenseMatrix::identity(d, d) * setup.initial_variance,
    };
    let mut estimates = Vec::with_capacity(truth.len());
    estimates.push(vec![Some(x0)]);
    for k in 1..truth.len() {
        let y = DenseVector::from_iterator(rows, log.readings[k].iter().flat_map(|v| v.iter().copied()));
        kf.step(&y).map_err(|_| Error::Divergence(k))?;
        estimates.push(vec![Some(kf.x.clone())]);
    }
    Ok(SimulationTrace {
        role: Role::Centralized,
        state_dim_per_hdv: setup.model.state_dim_per_hdv,
        truth: truth.to_vec(),
        estimates,
        spectral_radii: Vec::new(),
        events: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityMetrics {
    pub position_msee: f64,
    pub velocity_msee: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `None` for entities with no samples in the window.
    pub per_entity: Vec<Option<EntityMetrics>>,
    pub position_msee: f64,
    pub velocity_msee: f64,
    /// Largest pairwise distance between estimates, per step.
    pub disagreement: Vec<f64>,
}

impl Metrics {
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "position_msee={}", self.position_msee);
        let _ = writeln!(out, "velocity_msee={}", self.velocity_msee);
        for (e, m) in self.per_entity.iter().enumerate() {
            if let Some(m) = m {
                let _ = writeln!(out, "entity{e}.position_msee={}", m.position_msee);
                let _ = writeln!(out, "entity{e}.velocity_msee={}", m.velocity_msee);
            }
        }
        let last = self.disagreement.last().copied().unwrap_or(0.0);
        let _ = writeln!(out, "final_disagreement={last}");
        out
    }
}

/// MSEE over steps `from..` averaged over HDVs: for each entity, the mean
/// of `(p̂_h − p_h)²` (and likewise velocity) over every step and HDV.
pub fn compute_metrics(trace: &SimulationTrace, from: usize) -> Metrics {
    let m = trace.state_dim_per_hdv;
    let hdvs = trace.hdv_count();
    let mut per_entity = Vec::with_capacity(trace.entity_count());
    let (mut pos_all, mut vel_all, mut count_all) = (0.0, 0.0, 0usize);
    for e in 0..trace.entity_count() {
        let (mut pos, mut vel, mut count) = (0.0, 0.0, 0usize);
        for k in from..trace.steps() {
            let Some(err) = trace.error(k, e) else { continue };
            for h in 0..hdvs {
                pos += err[h * m].powi(2);
                vel += err[h * m + 1].powi(2);
            }
            count += hdvs;
        }
        pos_all += pos;
        vel_all += vel;
        count_all += count;
        per_entity.push((count > 0).then(|| EntityMetrics {
            position_msee: pos / count as f64,
            velocity_msee: vel / count as f64,
        }));
    }
    let disagreement = trace
        .estimates
        .iter()
        .map(|row| {
            let alive: Vec<&DenseVector> = row.iter().flatten().collect();
            let mut worst: f64 = 0.0;
            for (i, a) in alive.iter().enumerate() {
                for b in &alive[i + 1..] {
                    worst = worst.max((*a - *b).norm());
                }
            }
            worst
        })
        .collect();
    let denom = count_all.max(1) as f64;
    Metrics {
        per_entity,
        position_msee: pos_all / denom,
        velocity_msee: vel_all / denom,
        disagreement,
    }
}
