//! Fixtures shared by the benchmarks.

use loctask::allocation::AgentView;
use loctask::estimation::{CatalogEntry, EntropyForm};
use loctask::math::{Mat6, Vec3, Vec6};
use loctask::HillState;

/// Deterministic agent views spread over the sphere.
pub fn views(n_agents: usize, n_tasks: usize) -> Vec<AgentView> {
    (0..n_agents)
        .map(|i| {
            let dir = |k: usize| {
                let a = 0.7 * (k + 3 * i) as f64;
                let b = 0.3 * (k as f64 + 1.0);
                Vec3::new(a.cos() * b.cos(), a.sin() * b.cos(), b.sin()).normalize()
            };
            AgentView {
                boresight: dir(100 + i),
                scores: (0..n_tasks).map(|k| 1.0 + ((k * 7 + i * 3) % 5) as f64 * 0.4).collect(),
                directions: (0..n_tasks).map(|k| Some(dir(k))).collect(),
            }
        })
        .collect()
}

/// A catalog entry with the default initial covariance, 80 m out.
pub fn entry() -> CatalogEntry {
    let p0 = Mat6::from_diagonal(&Vec6::new(10.0, 10.0, 10.0, 1e-3, 1e-3, 1e-3));
    let mean = HillState::new(Vec3::new(60.0, -40.0, 35.0), Vec3::new(0.02, -0.01, 0.03));
    CatalogEntry::new(mean, p0, EntropyForm::FullLogDet).expect("valid covariance")
}
