//! Fuel and clipped-uncertainty metrics, both left Riemann sums on the step grid.

/// Total control effort: sum over agents of the integral of the torque norm.
/// Each series holds `n + 1` samples for `n` intervals; the last sample is not integrated.
pub fn fuel_metric(torque_series: &[Vec<f64>], dt: f64) -> f64 {
    torque_series
        .iter()
        .map(|s| s.iter().take(s.len().saturating_sub(1)).map(|t| t * dt).sum::<f64>())
        .sum()
}

/// Portion of an entropy above the threshold, zero below it.
pub fn clip_above(entropy: f64, epsilon: f64) -> f64 {
    if entropy - epsilon < 0.0 {
        0.0
    } else {
        entropy - epsilon
    }
}

/// Sum over agents and targets of the integral of above-threshold entropy.
/// `entropy_series` is indexed `[agent][target][step]`.
pub fn clipped_integral_metric(entropy_series: &[Vec<Vec<f64>>], epsilon: f64, dt: f64) -> f64 {
    entropy_series
        .iter()
        .flat_map(|agent| agent.iter())
        .map(|s| {
            s.iter()
                .take(s.len().saturating_sub(1))
                .map(|&e| clip_above(e, epsilon) * dt)
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuel_cases() {
        assert_eq!(fuel_metric(&[vec![0.0; 201]], 1.0), 0.0);
        assert_eq!(fuel_metric(&[vec![0.5; 201]], 1.0), 100.0);
        let a: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let b: Vec<f64> = (0..11).map(|k| (k as f64).sin().abs()).collect();
        let both = fuel_metric(&[a.clone(), b.clone()], 0.5);
        assert!((both - fuel_metric(&[a], 0.5) - fuel_metric(&[b], 0.5)).abs() < 1e-12);
    }

    #[test]
    fn clipped_cases() {
        let eps = -10.0;
        assert_eq!(clipped_integral_metric(&[vec![vec![-11.0; 201]; 8]], eps, 1.0), 0.0);
        assert_eq!(clipped_integral_metric(&[vec![vec![eps + 1.0; 201]]], eps, 1.0), 200.0);
        assert_eq!(clip_above(eps, eps), 0.0);
    }

    #[test]
    fn threshold_shift_is_linear_above() {
        let series = vec![vec![vec![-5.0, -4.0, -3.0, -6.0, -2.0]; 3]; 2];
        let (n, o, t, delta) = (2.0, 3.0, 4.0, 0.75);
        let c0 = clipped_integral_metric(&series, -8.0, 1.0);
        let c1 = clipped_integral_metric(&series, -8.0 - delta, 1.0);
        assert!((c1 - c0 - n * o * t * delta).abs() < 1e-12);
    }
}
