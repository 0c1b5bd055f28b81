//! Generalized advantage estimation.

/// Rewards, values and done flags for one environment, time-ordered.
/// `bootstrap` is the value estimate of the state after the last step.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit variance (population). A
/// constant input maps to zeros.
pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn telescoping_sum() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, ret) = compute_gae(&r, &[0.0; 4], &[false; 4], 0.0, 1.0, 1.0);
        assert_eq!(a, vec![10.0, 9.0, 7.0, 4.0]);
        assert_eq!(ret, a);
    }

    #[test]
    fn single_step() {
        let (a, _) = compute_gae(&[1.5], &[0.4], &[false], 2.0, 0.9, 0.7);
        assert!((a[0] - (1.5 + 0.9 * 2.0 - 0.4)).abs() < 1e-15);
        let (a, _) = compute_gae(&[1.5], &[0.4], &[true], 2.0, 0.9, 0.7);
        assert!((a[0] - (1.5 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn normalized_moments() {
        let mut v = vec![1.0, 4.0, -2.0, 8.0, 0.5];
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 5.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-14);
    }
}
