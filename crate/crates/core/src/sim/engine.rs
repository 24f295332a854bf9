//! Closed-loop simulation of one seeded scenario.

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::metrics::{clipped_integral_metric, fuel_metric};
use crate::allocation::{allocate, hysteresis_baseline, AgentView, Algorithm};
use crate::attitude::{integrate_attitude, pd_tracking_torque, AttitudeState, InertiaMatrix};
use crate::error::{Error, Result};
use crate::estimation::{kf_predict, kf_update, Catalog, CatalogEntry};
use crate::math::{rot_z, Mat3, Mat6, Vec3, Vec6};
use crate::orbit::{cwh_stm, nmt_init, sample_drifting_body, HillState, NmtSpec};
use crate::sensor::{in_fov, measure_los};
use crate::tasking::{score_catalog, switching_step, SwitchDecision};

/// Entropy monotonicity checks allow this much floating-point slack.
pub const ENTROPY_SLACK: f64 = 1e-9;

const STREAM_SCENARIO: u64 = 0;
const STREAM_TRUTH_NOISE: u64 = 1_000;
const STREAM_INIT_ERROR: u64 = 1_001;
const STREAM_SENSOR_BASE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// An allocation round finished.
    Allocation { rounds: usize, converged: bool },
    /// An agent's observation target changed.
    TargetChange { from: Option<usize>, to: Option<usize> },
    /// The agent asked for a switch.
    SwitchRequest { target: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub time: f64,
    pub agent: Option<usize>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Anomalies {
    pub skipped_updates: usize,
    pub fallback_torques: usize,
    pub allocation_cap_hits: usize,
    pub predict_entropy_violations: usize,
    pub update_entropy_violations: usize,
    pub max_allocation_rounds: usize,
}

impl Anomalies {
    /// Counts that go against the anomaly budget.
    pub fn budgeted(&self) -> usize {
        self.skipped_updates + self.fallback_torques + self.allocation_cap_hits
    }
}

/// Full record of one run. Series have `n_steps + 1` samples; sample `k` is
/// at time `k * dt`, and the torque sample `k` is the mean torque norm over
/// `[t_k, t_k + dt)` (the last sample is the torque commanded at the end time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub dt: f64,
    pub epsilon: f64,
    pub n_steps: usize,
    /// `[agent][target][step]`
    pub entropy: Vec<Vec<Vec<f64>>>,
    /// `[agent][target][step]`
    pub score: Vec<Vec<Vec<f64>>>,
    /// `[agent][target][step]`
    pub in_fov: Vec<Vec<Vec<bool>>>,
    /// `[agent][step]`
    pub torque_norm: Vec<Vec<f64>>,
    /// `[agent][step]`
    pub assigned: Vec<Vec<Option<usize>>>,
    /// Normalized estimation error squared of agent 0's catalog, `[target][step]`.
    pub nees: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub switch_count: usize,
    pub anomalies: Anomalies,
    pub fuel: f64,
    pub clipped_integral: f64,
}

struct Agent {
    truth: HillState,
    attitude: AttitudeState,
    target: Option<usize>,
    /// Seconds the current target has been observed since assignment.
    dwell: f64,
    rng: ChaCha8Rng,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian6<R: Rng>(rng: &mut R, chol_l: &Mat6) -> Vec6 {
    let w = Vec6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    chol_l * w
}

/// Lower Cholesky factor of a PSD matrix, tolerating exact zeros on the diagonal.
fn psd_factor(m: &Mat6) -> Mat6 {
    match Cholesky::new(*m) {
        Some(c) => c.l(),
        None => {
            let eig = m.symmetric_eigen();
            let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            eig.eigenvectors * Mat6::from_diagonal(&d)
        }
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    inertia: InertiaMatrix,
    stm_step: Mat6,
    /// STMs for each control substep offset within a step.
    stm_sub: Vec<Mat6>,
    q: Mat6,
    q_factor: Mat6,
    r: Mat3,
    sensor_cov: Mat3,
    boresight_body: Vec3,
    agents: Vec<Agent>,
    targets: Vec<HillState>,
    catalogs: Vec<Catalog>,
    truth_rng: ChaCha8Rng,
    anomalies: Anomalies,
    events: Vec<Event>,
    switch_count: usize,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let eta = cfg.eta;
        let mut rng = stream_rng(seed, STREAM_SCENARIO);
        let mut agents = Vec::with_capacity(cfg.n_agents);
        for i in 0..cfg.n_agents {
            let spec = NmtSpec::random_ellipse(&mut rng, cfg.init_pos_range, eta);
            agents.push(Agent {
                truth: nmt_init(&spec, eta)?,
                attitude: AttitudeState::identity(),
                target: None,
                dwell: 0.0,
                rng: stream_rng(seed, STREAM_SENSOR_BASE + i as u64),
            });
        }
        let targets: Vec<HillState> = (0..cfg.n_targets)
            .map(|_| sample_drifting_body(&mut rng, cfg.init_pos_range, cfg.target_vel_range, eta))
            .collect();

        let p0 = Mat6::from_diagonal(&Vec6::new(
            cfg.init_pos_var,
            cfg.init_pos_var,
            cfg.init_pos_var,
            cfg.init_vel_var,
            cfg.init_vel_var,
            cfg.init_vel_var,
        ));
        let mut init_rng = stream_rng(seed, STREAM_INIT_ERROR);
        let p0_factor = psd_factor(&p0);
        let mut entries = Vec::with_capacity(targets.len());
        for t in &targets {
            let mean = if cfg.init_estimate_error {
                HillState(t.0 + gaussian6(&mut init_rng, &p0_factor))
            } else {
                *t
            };
            entries.push(CatalogEntry::new(mean, p0, cfg.entropy_form)?);
        }
        let catalog = Catalog { entries };
        let h = cfg.dt / cfg.control_substeps as f64;
        let stm_sub = (0..=cfg.control_substeps)
            .map(|m| cwh_stm(m as f64 * h, eta))
            .collect::<Result<Vec<_>>>()?;
        let q = cfg.noise.q();
        Ok(Sim {
            cfg,
            inertia: cfg.inertia_matrix()?,
            stm_step: cwh_stm(cfg.dt, eta)?,
            stm_sub,
            q,
            q_factor: psd_factor(&q),
            r: cfg.noise.r(),
            sensor_cov: cfg.sensor.noise_cov(),
            boresight_body: cfg.sensor.boresight(),
            agents,
            targets,
            catalogs: vec![catalog; cfg.n_agents],
            truth_rng: stream_rng(seed, STREAM_TRUTH_NOISE),
            anomalies: Anomalies::default(),
            events: Vec::new(),
            switch_count: 0,
        })
    }

    /// Body-to-Hill rotation at time `t`; the Hill frame spins about +z at eta.
    fn body_to_hill(&self, att: &AttitudeState, t: f64) -> Mat3 {
        rot_z(self.cfg.eta.get() * t).transpose() * att.rotation
    }

    fn boresight_hill(&self, agent: usize, t: f64) -> Vec3 {
        self.body_to_hill(&self.agents[agent].attitude, t) * self.boresight_body
    }

    fn fov_flags(&self, t: f64) -> Vec<Vec<bool>> {
        (0..self.agents.len())
            .map(|i| {
                let b = self.boresight_hill(i, t);
                let pos = self.agents[i].truth.position();
                self.targets
                    .iter()
                    .map(|tg| in_fov(&b, &(tg.position() - pos), self.cfg.sensor.fov).unwrap_or(false))
                    .collect()
            })
            .collect()
    }

    /// Whether each agent believes its current target is in view, judged
    /// from its own catalog estimate rather than the truth.
    fn believed_in_fov(&self, t: f64) -> Vec<bool> {
        (0..self.agents.len())
            .map(|i| {
                let Some(tg) = self.agents[i].target else { return false };
                let b = self.boresight_hill(i, t);
                let rel = self.catalogs[i].entries[tg].mean.position() - self.agents[i].truth.position();
                in_fov(&b, &rel, self.cfg.sensor.fov).unwrap_or(false)
            })
            .collect()
    }

    fn propagate_truth(&mut self) {
        for a in &mut self.agents {
            a.truth = HillState(self.stm_step * a.truth.0);
        }
        for t in &mut self.targets {
            let mut next = self.stm_step * t.0;
            if self.cfg.truth_process_noise {
                next += gaussian6(&mut self.truth_rng, &self.q_factor);
            }
            *t = HillState(next);
        }
    }

    fn predict(&mut self) -> Result<()> {
        for cat in &mut self.catalogs {
            for entry in &mut cat.entries {
                let next = kf_predict(entry, self.cfg.dt, self.cfg.eta, &self.q, self.cfg.entropy_form)?;
                if next.entropy < entry.entropy - ENTROPY_SLACK {
                    self.anomalies.predict_entropy_violations += 1;
                }
                *entry = next;
            }
        }
        Ok(())
    }

    fn sense_and_update(&mut self, fov: &[Vec<bool>]) -> Result<()> {
        // canonical order: ascending observer, then ascending target
        let mut measurements = Vec::new();
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let Some(t) = agent.target else { continue };
            if !fov[i][t] {
                continue;
            }
            let rel = self.targets[t].position() - agent.truth.position();
            match measure_los(&rel, &self.sensor_cov, &mut agent.rng) {
                Ok(z) => {
                    measurements.push((i, t, z));
                    agent.dwell += self.cfg.dt;
                }
                Err(Error::ZeroRange) => self.anomalies.skipped_updates += 1,
                Err(e) => return Err(e),
            }
        }
        for (origin, t, z) in measurements {
            let observer = self.agents[origin].truth.position();
            let receivers: Vec<usize> =
                if self.cfg.share_measurements { (0..self.catalogs.len()).collect() } else { vec![origin] };
            for k in receivers {
                let prior = &self.catalogs[k].entries[t];
                match kf_update(prior, &z, &observer, &self.r, self.cfg.entropy_form) {
                    Ok(post) => {
                        if post.entropy > prior.entropy + ENTROPY_SLACK {
                            self.anomalies.update_entropy_violations += 1;
                        }
                        self.catalogs[k].entries[t] = post;
                    }
                    Err(Error::ZeroRange) => {
                        log::debug!("agent {k}: skipped update of target {t} (zero predicted range)");
                        self.anomalies.skipped_updates += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    fn view(&self, agent: usize, t: f64) -> AgentView {
        let pos = self.agents[agent].truth.position();
        let cat = &self.catalogs[agent];
        AgentView {
            boresight: self.boresight_hill(agent, t),
            scores: cat.entries.iter().map(|e| e.score.unwrap_or(0.0)).collect(),
            directions: cat
                .entries
                .iter()
                .map(|e| {
                    let rel = e.mean.position() - pos;
                    (rel.norm() > 0.0).then(|| rel.normalize())
                })
                .collect(),
        }
    }

    fn set_target(&mut self, agent: usize, to: Option<usize>, step: usize, time: f64) {
        let from = self.agents[agent].target;
        if from != to {
            self.agents[agent].target = to;
            self.agents[agent].dwell = 0.0;
            self.events.push(Event { step, time, agent: Some(agent), kind: EventKind::TargetChange { from, to } });
            if from.is_some() {
                self.switch_count += 1;
            }
        }
    }

    fn run_allocation(&mut self, decisions: &[SwitchDecision], step: usize, time: f64) {
        let n = self.cfg.n_targets;
        let views: Vec<AgentView> = (0..self.agents.len()).map(|i| self.view(i, time)).collect();
        let frozen: Vec<Option<usize>> = self
            .agents
            .iter()
            .zip(decisions)
            .map(|(a, d)| if d.agent_blacklisted { a.target } else { None })
            .collect();
        let mut abandoned = vec![false; n];
        for (a, d) in self.agents.iter().zip(decisions) {
            if d.target_switch {
                if let Some(t) = a.target {
                    abandoned[t] = true;
                }
            }
        }
        let blacklists: Vec<Vec<bool>> = decisions
            .iter()
            .map(|d| {
                let mut bl = abandoned.clone();
                for &j in &d.target_blacklist {
                    bl[j] = true;
                }
                bl
            })
            .collect();
        let alloc = allocate(&views, &frozen, &blacklists, &self.cfg.alloc);
        self.anomalies.max_allocation_rounds = self.anomalies.max_allocation_rounds.max(alloc.rounds);
        if !alloc.converged {
            self.anomalies.allocation_cap_hits += 1;
        }
        self.events.push(Event {
            step,
            time,
            agent: None,
            kind: EventKind::Allocation { rounds: alloc.rounds, converged: alloc.converged },
        });
        for (i, first) in alloc.first_tasks().into_iter().enumerate() {
            if frozen[i].is_some() {
                continue;
            }
            if let Some(t) = first {
                self.set_target(i, Some(t), step, time);
            }
        }
    }

    fn decide(&mut self, step: usize, time: f64) -> Result<()> {
        let believed = self.believed_in_fov(time);
        let mut ranges = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let pos = self.agents[i].truth.position();
            let cat = &mut self.catalogs[i];
            ranges.push(score_catalog(cat, &pos)?);
        }
        for cat in &mut self.catalogs {
            for e in &mut cat.entries {
                e.blacklisted = e.entropy < self.cfg.switching.epsilon;
            }
        }
        match self.cfg.alloc.algorithm {
            Algorithm::Cbba => {
                let decisions: Vec<SwitchDecision> = (0..self.agents.len())
                    .map(|i| {
                        switching_step(self.agents[i].target, believed[i], &self.catalogs[i], &ranges[i], &self.cfg.switching, self.cfg.dt)
                    })
                    .collect();
                for (i, d) in decisions.iter().enumerate() {
                    if d.target_switch {
                        let target = self.agents[i].target.expect("switch implies a target");
                        self.events.push(Event { step, time, agent: Some(i), kind: EventKind::SwitchRequest { target } });
                    }
                }
                // an idle agent asks for work as soon as any target is open to it
                let idle = self.agents.iter().zip(&decisions).any(|(a, d)| {
                    a.target.is_none() && d.target_blacklist.len() < self.cfg.n_targets
                });
                if step == 0 || idle || decisions.iter().any(|d| d.target_switch) {
                    self.run_allocation(&decisions, step, time);
                }
            }
            Algorithm::Hysteresis => {
                for i in 0..self.agents.len() {
                    let mut taken = vec![false; self.cfg.n_targets];
                    for (k, a) in self.agents.iter().enumerate() {
                        if k != i {
                            if let Some(t) = a.target {
                                taken[t] = true;
                            }
                        }
                    }
                    let a = &self.agents[i];
                    let next = hysteresis_baseline(
                        a.target,
                        &self.catalogs[i].entropies(),
                        self.cfg.switching.epsilon,
                        self.cfg.alloc.hysteresis,
                        a.dwell,
                        &taken,
                    );
                    self.set_target(i, next, step, time);
                }
            }
        }
        Ok(())
    }

    /// Tracking torque (Hill frame) and body-frame torque for one agent at
    /// substep offset `m` within the step starting at `t0`.
    fn control_torque(&mut self, agent: usize, t0: f64, m: usize) -> Vec3 {
        let time = t0 + m as f64 * self.cfg.dt / self.cfg.control_substeps as f64;
        let a = &self.agents[agent];
        let r_bh = self.body_to_hill(&a.attitude, time);
        let w_ih_h = Vec3::new(0.0, 0.0, self.cfg.eta.get());
        let w_hb_b = a.attitude.rate - r_bh.transpose() * w_ih_h;
        let w_hb_h = r_bh * w_hb_b;
        let damp = -w_hb_h * self.cfg.gains.k_d;
        let torque_h = match a.target {
            None => damp,
            Some(t) => {
                let stm = &self.stm_sub[m];
                let own = HillState(stm * a.truth.0);
                let est = HillState(stm * self.catalogs[agent].entries[t].mean.0);
                let boresight = r_bh * self.boresight_body;
                match pd_tracking_torque(
                    &boresight,
                    &(est.position() - own.position()),
                    &(est.velocity() - own.velocity()),
                    &w_hb_h,
                    &self.cfg.gains,
                    &r_bh,
                ) {
                    Ok(cmd) => {
                        if cmd.used_fallback {
                            self.anomalies.fallback_torques += 1;
                        }
                        cmd.torque
                    }
                    Err(_) => damp,
                }
            }
        };
        let mut torque_b = r_bh.transpose() * torque_h;
        if let Some(limit) = self.cfg.torque_limit {
            torque_b = torque_b.map(|c| c.clamp(-limit, limit));
        }
        torque_b
    }

    /// Applies attitude control over `[t0, t0 + dt)`; returns each agent's mean torque norm.
    fn control_interval(&mut self, t0: f64) -> Result<Vec<f64>> {
        let subs = self.cfg.control_substeps;
        let h = self.cfg.dt / subs as f64;
        let mut out = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let mut fuel = 0.0;
            for m in 0..subs {
                let tau = self.control_torque(i, t0, m);
                fuel += tau.norm() * h;
                let next = integrate_attitude(&self.agents[i].attitude, &tau, &self.inertia, h)?;
                self.agents[i].attitude = next;
            }
            out.push(fuel / self.cfg.dt);
        }
        Ok(out)
    }

    fn nees(&self) -> Vec<f64> {
        let cat = &self.catalogs[0];
        cat.entries
            .iter()
            .zip(&self.targets)
            .map(|(e, truth)| {
                let err = truth.0 - e.mean.0;
                match Cholesky::new(e.cov) {
                    Some(c) => err.dot(&c.solve(&err)),
                    None => f64::NAN,
                }
            })
            .collect()
    }
}

/// Runs one scenario. Deterministic in `(config, seed)`.
pub fn run_simulation(cfg: &SimConfig, seed: u64) -> Result<RunResult> {
    let mut sim = Sim::new(cfg, seed)?;
    let n_steps = cfg.n_steps();
    let (na, nt) = (cfg.n_agents, cfg.n_targets);
    let mut entropy = vec![vec![Vec::with_capacity(n_steps + 1); nt]; na];
    let mut score = vec![vec![Vec::with_capacity(n_steps + 1); nt]; na];
    let mut in_fov_series = vec![vec![Vec::with_capacity(n_steps + 1); nt]; na];
    let mut torque_norm = vec![Vec::with_capacity(n_steps + 1); na];
    let mut assigned = vec![Vec::with_capacity(n_steps + 1); na];
    let mut nees = vec![Vec::with_capacity(n_steps + 1); nt];

    for step in 0..=n_steps {
        let time = step as f64 * cfg.dt;
        if step > 0 {
            sim.propagate_truth();
            sim.predict()?;
            let fov = sim.fov_flags(time);
            sim.sense_and_update(&fov)?;
        }
        sim.decide(step, time)?;
        let fov = sim.fov_flags(time);

        for i in 0..na {
            for j in 0..nt {
                let e = &sim.catalogs[i].entries[j];
                entropy[i][j].push(e.entropy);
                score[i][j].push(e.score.unwrap_or(0.0));
                in_fov_series[i][j].push(fov[i][j]);
            }
            assigned[i].push(sim.agents[i].target);
        }
        for (j, v) in sim.nees().into_iter().enumerate() {
            nees[j].push(v);
        }
        if step < n_steps {
            for (i, tn) in sim.control_interval(time)?.into_iter().enumerate() {
                torque_norm[i].push(tn);
            }
        } else {
            for i in 0..na {
                let tau = sim.control_torque(i, time, 0);
                torque_norm[i].push(tau.norm());
            }
        }
    }

    let fuel = fuel_metric(&torque_norm, cfg.dt);
    let clipped_integral = clipped_integral_metric(&entropy, cfg.switching.epsilon, cfg.dt);
    Ok(RunResult {
        seed,
        dt: cfg.dt,
        epsilon: cfg.switching.epsilon,
        n_steps,
        entropy,
        score,
        in_fov: in_fov_series,
        torque_norm,
        assigned,
        nees,
        events: sim.events,
        switch_count: sim.switch_count,
        anomalies: sim.anomalies,
        fuel,
        clipped_integral,
    })
}
