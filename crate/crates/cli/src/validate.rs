//! Self-check of the numerical core: dynamics identities, gradient
//! exactness and actuation semantics, each against an independent oracle.

use erfi_core::actuation::{compute_torque, ImpedanceGains};
use erfi_core::policy::{compute_gae, PolicyParams};
use erfi_core::rbd::*;
use erfi_core::rng::{self, Rng};
use ndarray::Array2;
use rand::Rng as _;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        passed: value.is_finite() && value < tolerance,
        detail: format!("{value:.3e} (limit {tolerance:.0e})"),
    }
}

fn random_q(rng: &mut Rng, model: &RobotModel) -> Vec<f64> {
    let mut q = vec![
        rng.random_range(-1.0..1.0),
        rng.random_range(0.0..1.0),
        rng.random_range(-0.8..0.8),
    ];
    for j in &model.joints {
        q.push(rng.random_range(j.lower..j.upper));
    }
    q
}

fn mass_matrix_checks(model: &RobotModel, rng: &mut Rng) -> Vec<Check> {
    let mut asym = 0.0f64;
    let mut all_pd = true;
    for _ in 0..200 {
        let m = mass_matrix(model, &random_q(rng, model));
        asym = asym.max((&m - m.transpose()).amax() / m.amax());
        all_pd &= m.cholesky().is_some();
    }
    vec![
        check("mass matrix symmetry", asym, 1e-12),
        Check {
            name: "mass matrix positive definite",
            passed: all_pd,
            detail: "Cholesky on 200 configurations".into(),
        },
    ]
}

fn jacobian_check(model: &RobotModel, rng: &mut Rng) -> Check {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let q = random_q(rng, model);
        let jac = contact_jacobian(model, &q);
        for c in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[c] += h;
            qm[c] -= h;
            let (fp, fm) = (forward_kinematics(model, &qp).feet, forward_kinematics(model, &qm).feet);
            for i in 0..fp.len() {
                let d = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst
                    .max((d.x - jac[(2 * i, c)]).abs())
                    .max((d.y - jac[(2 * i + 1, c)]).abs());
            }
        }
    }
    check("contact Jacobian vs finite differences", worst, 1e-6)
}

fn free_model() -> RobotModel {
    let mut m = build_model(&ModelParams::default()).expect("default model");
    for j in &mut m.joints {
        j.lower = -1e6;
        j.upper = 1e6;
        j.velocity_limit = 1e6;
    }
    m
}

fn energy_check() -> Check {
    let model = free_model();
    let mut s = GeneralizedState::at_rest(vec![0.0, 0.5, 0.1, 0.3, -0.6, 0.2, -0.4]);
    s.u = vec![0.2, 0.1, 0.5, 2.0, -1.5, -1.0, 2.5];
    let tau = vec![0.0; model.num_joints()];
    let e0 = total_energy(&model, &s, 0.0);
    let mut worst = 0.0f64;
    for _ in 0..40_000 {
        match step_dynamics(&model, &s, &tau, &ExternalWrench::none(), &NoGround, 0.0, 2.5e-4) {
            Ok(out) => s = out.state,
            Err(_) => return check("energy drift over 10 s", f64::NAN, 1e-3),
        }
        worst = worst.max((total_energy(&model, &s, 0.0) - e0).abs());
    }
    check("energy drift over 10 s", worst / e0, 1e-3)
}

fn momentum_check() -> Check {
    let model = free_model();
    let mut s = GeneralizedState::at_rest(vec![0.0, 0.5, 0.0, 0.2, -0.5, 0.4, -0.5]);
    s.u[0] = 0.3;
    let p0 = momentum(&model, &s).0;
    let mut worst = 0.0f64;
    for k in 0..2000 {
        let t = k as f64 * 1e-3;
        let tau = vec![2.0 * t.sin(), -1.0, 1.5 * t.cos(), 0.5];
        s = step_dynamics(&model, &s, &tau, &ExternalWrench::none(), &NoGround, 0.0, 1e-3)
            .expect("finite")
            .state;
        worst = worst.max((momentum(&model, &s).0 - p0).norm());
    }
    check("linear momentum with internal torques", worst / p0.norm(), 1e-9)
}

/// Central differences of a scalar loss over a 3-layer network.
fn gradient_check(rng: &mut Rng) -> Check {
    let mut net = PolicyParams::init(rng, &[5, 8, 6, 3], 3, 1.0, 1.0);
    net.activation = erfi_core::policy::Activation::Tanh;
    let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
    let loss = |p: &PolicyParams| (p.predict(x.view()).unwrap() * &w).sum();
    let (_, cache) = net.forward(x.view()).unwrap();
    let grads = net.backward(&cache, w.view()).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let layer = rng.random_range(0..net.weights.len());
        let (r, c) = net.weights[layer].dim();
        let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
        let mut p = net.clone();
        p.weights[layer][(i, j)] += h;
        let up = loss(&p);
        p.weights[layer][(i, j)] -= 2.0 * h;
        let down = loss(&p);
        let numeric = (up - down) / (2.0 * h);
        let exact = grads.weights[layer][(i, j)];
        worst = worst.max((numeric - exact).abs() / exact.abs().max(numeric.abs()).max(1e-6));
    }
    check("backprop vs finite differences", worst, 1e-4)
}

fn injection_check(rng: &mut Rng) -> Check {
    let n = 4;
    let gains = ImpedanceGains::uniform(80.0, 2.0, n).expect("valid gains");
    let mut exact = true;
    for _ in 0..1000 {
        let v = |rng: &mut Rng| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (qd, q, u) = (v(rng), v(rng), v(rng));
        let tau = compute_torque(&gains, &qd, &q, &u, &[0.0; 4], &[0.0; 4], &[1e9; 4]);
        for i in 0..n {
            exact &= tau[i] == 80.0 * (qd[i] - q[i]) - 2.0 * u[i];
        }
    }
    Check {
        name: "zero-limit injection equals impedance law",
        passed: exact,
        detail: "bit-exact on 1000 draws".into(),
    }
}

/// Every advantage against the explicit discounted sum of TD residuals.
fn gae_check(rng: &mut Rng) -> Check {
    let (gamma, lambda) = (0.97, 0.9);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = rng.random_range(1..=6usize);
        let r: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<bool> = (0..t).map(|_| rng.random_bool(0.3)).collect();
        let boot = rng.random_range(-1.0..1.0);
        let (adv, _) = compute_gae(&r, &v, &d, boot, gamma, lambda);
        for s in 0..t {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in s..t {
                let next = if d[k] {
                    0.0
                } else if k + 1 < t {
                    v[k + 1]
                } else {
                    boot
                };
                sum += w * (r[k] + gamma * next - v[k]);
                if d[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            worst = worst.max((sum - adv[s]).abs());
        }
    }
    check("GAE vs brute-force sum", worst, 1e-12)
}

pub fn run() -> Vec<Check> {
    let mut rng = rng::stream(2024, 0);
    let model = build_model(&ModelParams::default()).expect("default model");
    let mut checks = mass_matrix_checks(&model, &mut rng);
    checks.push(jacobian_check(&model, &mut rng));
    checks.push(energy_check());
    checks.push(momentum_check());
    checks.push(gradient_check(&mut rng));
    checks.push(injection_check(&mut rng));
    checks.push(gae_check(&mut rng));
    checks
}
