//! Synchronous consensus-based bundle allocation with blacklist-aware
//! bidding, plus the fixed-hysteresis baseline.
//!
//! Paths are scored by discounting each task's observation score by the
//! accumulated slew angle needed to reach it. Agents build bundles greedily,
//! broadcast bids, and the highest bid per task wins (ties to the lower agent
//! id). Bids are capped at the previous bid in the bundle. A losing agent
//! drops the lost task and everything it added after it, then rebuilds.
//! Rounds repeat until nothing changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{angle_between, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Cbba,
    Hysteresis,
}

/// What an agent broadcasts as its bid for a bundle entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidRule {
    /// Marginal path-score gain of the entry.
    MarginalGain,
    /// Marginal gain minus the best gain among the agent's other candidates
    /// at that insertion step.
    #[default]
    Regret,
}

/// Where the accumulated slew angle starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlewOrigin {
    /// The first task is discounted by the slew from the current boresight.
    #[default]
    Boresight,
    /// The first task is undiscounted; angles accumulate between tasks only.
    FirstTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocParams {
    /// Maximum tasks per bundle.
    pub depth: usize,
    /// Discount per radian of accumulated slew.
    pub mu: f64,
    pub algorithm: Algorithm,
    pub bid_rule: BidRule,
    pub slew_origin: SlewOrigin,
    /// Dwell time (s) used by the hysteresis baseline.
    pub hysteresis: f64,
}

impl Default for AllocParams {
    fn default() -> Self {
        AllocParams {
            depth: 1,
            mu: 0.1,
            algorithm: Algorithm::Cbba,
            bid_rule: BidRule::Regret,
            slew_origin: SlewOrigin::Boresight,
            hysteresis: 10.0,
        }
    }
}

impl AllocParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::invalid("planning depth must be at least 1"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::invalid(format!("discount must be non-negative, got {}", self.mu)));
        }
        if !(self.hysteresis >= 0.0) {
            return Err(Error::invalid("hysteresis time must be non-negative"));
        }
        Ok(())
    }
}

/// Everything an agent needs to price tasks: its boresight and, per target,
/// the current observation score and unit direction from the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentView {
    pub boresight: Vec3,
    pub scores: Vec<f64>,
    pub directions: Vec<Option<Vec3>>,
}

impl AgentView {
    pub fn n_tasks(&self) -> usize {
        self.scores.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleState {
    /// Task ids in insertion order.
    pub bundle: Vec<usize>,
    /// Task ids in execution order.
    pub path: Vec<usize>,
    /// This agent's bid for each bundle entry, aligned with `bundle`.
    pub bids: Vec<f64>,
    /// Best known bid per task.
    pub winning_bids: Vec<f64>,
    /// Best known bidder per task.
    pub winners: Vec<Option<usize>>,
}

impl BundleState {
    pub fn empty(n_tasks: usize) -> Self {
        BundleState {
            bundle: Vec::new(),
            path: Vec::new(),
            bids: Vec::new(),
            winning_bids: vec![f64::NEG_INFINITY; n_tasks],
            winners: vec![None; n_tasks],
        }
    }

    fn bid_for(&self, task: usize) -> Option<f64> {
        self.bundle.iter().position(|&t| t == task).map(|i| self.bids[i])
    }
}

/// Discounted path score. Any blacklisted entry zeroes the whole path.
pub fn path_score(path: &[usize], view: &AgentView, mu: f64, origin: SlewOrigin, blacklist: &[bool]) -> f64 {
    if path.iter().any(|&t| blacklist.get(t).copied().unwrap_or(false)) {
        return 0.0;
    }
    let mut total = 0.0;
    let mut travelled = 0.0;
    let mut prev: Option<Vec3> = match origin {
        SlewOrigin::Boresight => Some(view.boresight),
        SlewOrigin::FirstTask => None,
    };
    for &t in path {
        let Some(dir) = view.directions[t] else { continue };
        if let Some(p) = prev {
            travelled += angle_between(&p, &dir);
        }
        total += view.scores[t] * (-travelled * mu).exp();
        prev = Some(dir);
    }
    total
}

fn can_outbid(agent: usize, task: usize, bid: f64, state: &BundleState) -> bool {
    match state.winners[task] {
        None => true,
        Some(w) if w == agent => true,
        Some(w) => {
            let z = state.winning_bids[task];
            bid > z || (bid == z && agent < w)
        }
    }
}

/// Greedy bundle construction from the agent's current bundle. Tasks marked in
/// `excluded` are never considered. Returns true if anything was added.
fn extend_bundle(agent: usize, view: &AgentView, state: &mut BundleState, params: &AllocParams, excluded: &[bool]) -> bool {
    let mut added = false;
    let zero = vec![false; view.n_tasks()];
    while state.bundle.len() < params.depth {
        let base = path_score(&state.path, view, params.mu, params.slew_origin, &zero);
        // (task, gain, insertion index)
        let mut cands: Vec<(usize, f64, usize)> = Vec::new();
        for task in 0..view.n_tasks() {
            if excluded[task] || state.bundle.contains(&task) || view.directions[task].is_none() {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            let mut trial = state.path.clone();
            for pos in 0..=state.path.len() {
                trial.insert(pos, task);
                let gain = path_score(&trial, view, params.mu, params.slew_origin, &zero) - base;
                trial.remove(pos);
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, pos));
                }
            }
            if let Some((gain, pos)) = best {
                cands.push((task, gain, pos));
            }
        }
        // bids never increase along a bundle, otherwise rounds can cycle
        let ceiling = state.bids.last().copied().unwrap_or(f64::INFINITY);
        let bid_of = |i: usize| -> f64 {
            let gain = cands[i].1;
            let raw = match params.bid_rule {
                BidRule::MarginalGain => gain,
                BidRule::Regret => {
                    let alt = cands
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != i)
                        .map(|(_, c)| c.1.max(0.0))
                        .fold(0.0, f64::max);
                    gain - alt
                }
            };
            raw.min(ceiling)
        };
        let mut choice: Option<(usize, f64)> = None;
        for i in 0..cands.len() {
            let (task, gain, _) = cands[i];
            if !(gain > 0.0) || !can_outbid(agent, task, bid_of(i), state) {
                continue;
            }
            if choice.is_none_or(|(c, _)| gain > cands[c].1) {
                choice = Some((i, gain));
            }
        }
        let Some((i, _)) = choice else { break };
        let (task, _, pos) = cands[i];
        let bid = bid_of(i);
        state.bundle.push(task);
        state.bids.push(bid);
        state.path.insert(pos, task);
        added = true;
    }
    added
}

/// Fresh single-agent bundle with no competing bids.
pub fn build_bundle(view: &AgentView, params: &AllocParams, blacklist: &[bool]) -> BundleState {
    let mut state = BundleState::empty(view.n_tasks());
    extend_bundle(0, view, &mut state, params, blacklist);
    state
}

/// One synchronous consensus pass: every task goes to its highest bidder
/// (ties to the lower agent id); each loser drops the lost task and all later
/// bundle entries. Returns true if any agent dropped anything.
pub fn resolve_conflicts(states: &mut [BundleState]) -> bool {
    let Some(n_tasks) = states.first().map(|s| s.winners.len()) else {
        return false;
    };
    let winners_of = |states: &[BundleState]| -> Vec<Option<(usize, f64)>> {
        (0..n_tasks)
            .map(|task| {
                let mut best: Option<(usize, f64)> = None;
                for (agent, s) in states.iter().enumerate() {
                    if let Some(bid) = s.bid_for(task) {
                        if best.is_none_or(|(_, b)| bid > b) {
                            best = Some((agent, bid));
                        }
                    }
                }
                best
            })
            .collect()
    };
    let winners = winners_of(states);
    let mut dropped = false;
    for (agent, s) in states.iter_mut().enumerate() {
        let lost = s
            .bundle
            .iter()
            .position(|&t| winners[t].map(|(w, _)| w) != Some(agent));
        if let Some(cut) = lost {
            let removed: Vec<usize> = s.bundle.drain(cut..).collect();
            s.bids.truncate(cut);
            s.path.retain(|t| !removed.contains(t));
            dropped = true;
        }
    }
    // dropped tail entries release their tasks
    let winners = if dropped { winners_of(states) } else { winners };
    for s in states.iter_mut() {
        for (task, w) in winners.iter().enumerate() {
            s.winners[task] = w.map(|(a, _)| a);
            s.winning_bids[task] = w.map_or(f64::NEG_INFINITY, |(_, b)| b);
        }
    }
    dropped
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub states: Vec<BundleState>,
    /// Build/resolve rounds until the fixed point.
    pub rounds: usize,
    /// False if the round cap was hit before a fixed point.
    pub converged: bool,
}

impl Allocation {
    /// First path entry per agent.
    pub fn first_tasks(&self) -> Vec<Option<usize>> {
        self.states.iter().map(|s| s.path.first().copied()).collect()
    }
}

pub fn round_cap(n_agents: usize, n_tasks: usize) -> usize {
    2 * n_agents * n_tasks.max(1) + 2
}

/// Runs build/resolve rounds to a fixed point from cleared bundles.
///
/// `frozen[i] = Some(t)` marks an agent that keeps target `t` this round: it
/// places no bids and `t` is withheld from everyone else. `blacklists[i][j]`
/// bars agent `i` from planning for target `j`.
pub fn allocate(
    views: &[AgentView],
    frozen: &[Option<usize>],
    blacklists: &[Vec<bool>],
    params: &AllocParams,
) -> Allocation {
    let n_agents = views.len();
    let n_tasks = views.first().map_or(0, |v| v.n_tasks());
    let mut states = vec![BundleState::empty(n_tasks); n_agents];
    let mut reserved = vec![false; n_tasks];
    for t in frozen.iter().flatten() {
        reserved[*t] = true;
    }
    let excluded: Vec<Vec<bool>> = (0..n_agents)
        .map(|i| (0..n_tasks).map(|j| reserved[j] || blacklists[i][j]).collect())
        .collect();
    let cap = round_cap(n_agents, n_tasks);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < cap {
        rounds += 1;
        let mut added = false;
        for agent in 0..n_agents {
            if frozen[agent].is_none() {
                added |= extend_bundle(agent, &views[agent], &mut states[agent], params, &excluded[agent]);
            }
        }
        let dropped = resolve_conflicts(&mut states);
        if !added && !dropped {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("allocation hit the round cap ({cap}) without reaching a fixed point");
    }
    Allocation { states, rounds, converged }
}

/// Fixed-dwell baseline: once the current target is below threshold and has
/// been observed for at least `hysteresis` seconds, move to the most uncertain
/// target not held by another agent (ties to the lowest id).
pub fn hysteresis_baseline(
    current: Option<usize>,
    entropies: &[f64],
    epsilon: f64,
    hysteresis: f64,
    dwell: f64,
    taken: &[bool],
) -> Option<usize> {
    if let Some(t) = current {
        if !(entropies[t] < epsilon && dwell >= hysteresis) {
            return current;
        }
    }
    let mut best: Option<usize> = None;
    for (j, &e) in entropies.iter().enumerate() {
        if taken[j] || Some(j) == current {
            continue;
        }
        if best.is_none_or(|b| e > entropies[b]) {
            best = Some(j);
        }
    }
    best.or(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn view(scores: &[f64], dirs: &[Vec3]) -> AgentView {
        AgentView { boresight: Vec3::x(), scores: scores.to_vec(), directions: dirs.iter().map(|d| Some(d.normalize())).collect() }
    }

    fn nobl(n: usize) -> Vec<bool> {
        vec![false; n]
    }

    #[test]
    fn single_aligned_task() {
        let v = view(&[2.0], &[Vec3::x()]);
        assert_eq!(path_score(&[0], &v, 0.7, SlewOrigin::Boresight, &nobl(1)), 2.0);
    }

    #[test]
    fn zero_discount_ignores_geometry() {
        let v = view(&[1.0, 2.0, 3.0], &[Vec3::y(), -Vec3::x(), Vec3::z()]);
        for p in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
            assert_eq!(path_score(&p, &v, 0.0, SlewOrigin::Boresight, &nobl(3)), 6.0);
        }
    }

    #[test]
    fn discounted_two_task_path() {
        let v = view(&[1.5, 1.5], &[Vec3::y(), -Vec3::x()]);
        let s = path_score(&[0, 1], &v, 0.1, SlewOrigin::Boresight, &nobl(2));
        // slews: boresight -> +y is 90 deg, +y -> -x another 90 deg (180 total)
        let expect = 1.5 * ((-0.1 * FRAC_PI_2).exp() + (-0.1 * PI).exp());
        assert_relative_eq!(s, expect, epsilon = 1e-12);
        let literal = path_score(&[0, 1], &v, 0.1, SlewOrigin::FirstTask, &nobl(2));
        assert_relative_eq!(literal, 1.5 * (1.0 + (-0.1 * FRAC_PI_2).exp()), epsilon = 1e-12);
    }

    #[test]
    fn blacklisted_path_scores_zero() {
        let v = view(&[1.0, 1.0], &[Vec3::x(), Vec3::y()]);
        assert_eq!(path_score(&[0, 1], &v, 0.1, SlewOrigin::Boresight, &[false, true]), 0.0);
    }

    #[test]
    fn depth_one_bundle() {
        let v = view(&[1.0, 1.2, 0.9], &[Vec3::new(1.0, 0.1, 0.0), -Vec3::x(), Vec3::x()]);
        let params = AllocParams { depth: 1, mu: 0.5, ..Default::default() };
        let b = build_bundle(&v, &params, &nobl(3));
        let best = (0..3)
            .max_by(|&a, &b| {
                let f = |t: usize| v.scores[t] * (-0.5 * angle_between(&Vec3::x(), &v.directions[t].unwrap())).exp();
                f(a).total_cmp(&f(b))
            })
            .unwrap();
        assert_eq!(b.bundle, vec![best]);
        assert_eq!(b.path, vec![best]);
    }

    #[test]
    fn all_blacklisted_gives_empty_bundle() {
        let v = view(&[1.0, 2.0], &[Vec3::x(), Vec3::y()]);
        let b = build_bundle(&v, &AllocParams { depth: 3, ..Default::default() }, &[true, true]);
        assert!(b.bundle.is_empty() && b.path.is_empty());
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.is_empty() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn depth_three_matches_enumeration_without_discount() {
        let v = view(&[0.4, 1.3, 0.8], &[Vec3::y(), -Vec3::x(), Vec3::new(0.3, -1.0, 0.2)]);
        let params = AllocParams { depth: 3, mu: 0.0, ..Default::default() };
        let b = build_bundle(&v, &params, &nobl(3));
        let got = path_score(&b.path, &v, 0.0, SlewOrigin::Boresight, &nobl(3));
        let mut best = 0.0f64;
        for mask in 1u32..8 {
            let subset: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
            for p in permutations(&subset) {
                best = best.max(path_score(&p, &v, 0.0, SlewOrigin::Boresight, &nobl(3)));
            }
        }
        assert_relative_eq!(got, best, epsilon = 1e-12);
        let mut sorted = b.bundle.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn nearest_first_on_equal_scores() {
        let v = view(&[1.0, 1.0], &[Vec3::new(1.0, 0.3, 0.0), Vec3::new(0.0, 1.0, 0.2)]);
        let near_first = path_score(&[0, 1], &v, 0.3, SlewOrigin::Boresight, &nobl(2));
        let far_first = path_score(&[1, 0], &v, 0.3, SlewOrigin::Boresight, &nobl(2));
        assert!(near_first > far_first);
    }

    fn with_bundle(n: usize, entries: &[(usize, f64)]) -> BundleState {
        let mut s = BundleState::empty(n);
        for &(t, b) in entries {
            s.bundle.push(t);
            s.path.push(t);
            s.bids.push(b);
        }
        s
    }

    #[test]
    fn disjoint_bundles_unchanged() {
        let mut states = vec![with_bundle(4, &[(0, 1.0), (1, 0.5)]), with_bundle(4, &[(2, 2.0)])];
        let before: Vec<Vec<usize>> = states.iter().map(|s| s.bundle.clone()).collect();
        assert!(!resolve_conflicts(&mut states));
        assert_eq!(states.iter().map(|s| s.bundle.clone()).collect::<Vec<_>>(), before);
        assert_eq!(states[1].winners[2], Some(1));
        assert_eq!(states[0].winners[3], None);
    }

    #[test]
    fn higher_bid_wins_and_loser_drops_tail() {
        let mut states = vec![with_bundle(3, &[(0, 3.0), (2, 1.0)]), with_bundle(3, &[(0, 5.0)])];
        assert!(resolve_conflicts(&mut states));
        assert!(states[0].bundle.is_empty() && states[0].path.is_empty());
        assert_eq!(states[1].bundle, vec![0]);
        assert_eq!(states[0].winners[0], Some(1));
        assert_eq!(states[0].winning_bids[0], 5.0);
        // task 2 was released with the dropped tail
        assert_eq!(states[0].winners[2], None);
    }

    #[test]
    fn tie_goes_to_lower_agent() {
        let mut states = vec![with_bundle(1, &[(0, 2.0)]), with_bundle(1, &[(0, 2.0)])];
        resolve_conflicts(&mut states);
        assert_eq!(states[0].bundle, vec![0]);
        assert!(states[1].bundle.is_empty());
    }

    #[test]
    fn one_task_two_agents() {
        let a = view(&[1.0], &[Vec3::new(1.0, 0.1, 0.0)]);
        let b = view(&[1.0], &[Vec3::new(0.0, 1.0, 0.0)]);
        let params = AllocParams::default();
        let alloc = allocate(&[a, b], &[None, None], &[nobl(1), nobl(1)], &params);
        assert!(alloc.converged);
        assert_eq!(alloc.first_tasks(), vec![Some(0), None]);
    }

    #[test]
    fn frozen_agent_keeps_target_and_reserves_it() {
        let a = view(&[5.0, 1.0], &[Vec3::x(), Vec3::y()]);
        let b = view(&[5.0, 1.0], &[Vec3::x(), Vec3::y()]);
        let alloc = allocate(&[a, b], &[Some(0), None], &[nobl(2), nobl(2)], &AllocParams::default());
        assert_eq!(alloc.first_tasks(), vec![None, Some(1)]);
    }

    fn brute_pair(views: &[AgentView], params: &AllocParams) -> f64 {
        let n = views[0].n_tasks();
        let s = |a: usize, t: usize| path_score(&[t], &views[a], params.mu, params.slew_origin, &nobl(n));
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    best = best.max(s(0, i) + s(1, j));
                }
            }
        }
        best
    }

    #[test]
    fn two_agents_three_tasks_optimal() {
        // agent 0 prefers task 0 slightly over task 1; agent 1 strongly prefers task 0
        let a = view(&[1.0, 0.95, 0.1], &[Vec3::x(), Vec3::x(), Vec3::x()]);
        let b = view(&[0.98, 0.1, 0.1], &[Vec3::x(), Vec3::x(), Vec3::x()]);
        let params = AllocParams { depth: 1, ..Default::default() };
        let views = [a, b];
        let alloc = allocate(&views, &[None, None], &[nobl(3), nobl(3)], &params);
        let got: f64 = alloc
            .first_tasks()
            .iter()
            .enumerate()
            .map(|(i, t)| t.map_or(0.0, |t| path_score(&[t], &views[i], params.mu, params.slew_origin, &nobl(3))))
            .sum();
        assert_relative_eq!(got, brute_pair(&views, &params), epsilon = 1e-12);
        assert_eq!(alloc.first_tasks(), vec![Some(1), Some(0)]);
        // the plain marginal-gain auction settles for the greedy assignment here
        let greedy = allocate(&views, &[None, None], &[nobl(3), nobl(3)], &AllocParams { bid_rule: BidRule::MarginalGain, ..params });
        assert_eq!(greedy.first_tasks(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn hysteresis_rules() {
        let e = [0.0, -20.0, 5.0, 5.0];
        let free = [false; 4];
        assert_eq!(hysteresis_baseline(Some(0), &e, -10.0, 10.0, 100.0, &free), Some(0));
        assert_eq!(hysteresis_baseline(Some(1), &e, -10.0, 10.0, 9.9, &free), Some(1));
        assert_eq!(hysteresis_baseline(Some(1), &e, -10.0, 10.0, 10.0, &free), Some(2));
        assert_eq!(hysteresis_baseline(Some(1), &e, -10.0, 10.0, 10.0, &[false, false, true, false]), Some(3));
        assert_eq!(hysteresis_baseline(None, &e, -10.0, 10.0, 0.0, &free), Some(2));
    }

    #[test]
    fn params_validation() {
        assert!(AllocParams { depth: 0, ..Default::default() }.validate().is_err());
        assert!(AllocParams { mu: -0.1, ..Default::default() }.validate().is_err());
    }
}
