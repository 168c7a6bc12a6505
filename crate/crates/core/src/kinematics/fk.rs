//! Forward kinematics of the strap stage by damped least squares.
//!
//! Four lengths over-determine the two chart coordinates, so the problem is
//! posed as minimising `sum_i (|anchor_i - q(u,v,t)| - L_i)^2` and solved with
//! Levenberg damping, warm-started from the previous robot state.

use nalgebra::{Matrix2, Vector2, Vector3};

use super::{KinematicsError, StrapLengths, StrapRig};
use crate::phantom::{ChartSurface, DomainError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkOptions {
    pub initial_damping: f64,
    pub max_iterations: usize,
    /// Converged once the squared residual drops below this (mm²).
    pub residual_tolerance_mm2: f64,
    /// Converged once a chart step is shorter than this.
    pub step_tolerance: f64,
    /// Largest residual accepted from inconsistent lengths (mm²).
    pub accept_residual_mm2: f64,
}

impl Default for FkOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            max_iterations: 100,
            residual_tolerance_mm2: 1e-9,
            step_tolerance: 1e-12,
            accept_residual_mm2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkSolution {
    pub chart: (f64, f64),
    pub residual_mm2: f64,
    pub iterations: usize,
    pub converged: bool,
}

// Finite-difference step for the normal derivative when straps attach off-surface.
const NORMAL_FD_STEP: f64 = 1e-6;

fn residuals<S: ChartSurface>(
    rig: &StrapRig,
    surface: &S,
    lengths: &StrapLengths,
    x: Vector2<f64>,
    t: f64,
) -> Result<([f64; 4], Vector3<f64>), DomainError> {
    let q = rig.attachment(surface, x.x, x.y, t)?;
    let r = std::array::from_fn(|i| (rig.anchor(i) - q).norm() - lengths.0[i]);
    Ok((r, q))
}

fn attachment_tangents<S: ChartSurface>(
    rig: &StrapRig,
    surface: &S,
    x: Vector2<f64>,
    t: f64,
) -> Result<(Vector3<f64>, Vector3<f64>), DomainError> {
    let (mut du, mut dv) = surface.tangents(x.x, x.y, t)?;
    let off = rig.attachment_offset_mm;
    if off != 0.0 {
        let h = NORMAL_FD_STEP;
        let n = |u: f64, v: f64| surface.normal(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0), t);
        let (u0, u1) = ((x.x - h).max(0.0), (x.x + h).min(1.0));
        let (v0, v1) = ((x.y - h).max(0.0), (x.y + h).min(1.0));
        du += (n(u1, x.y)? - n(u0, x.y)?) * (off / (u1 - u0));
        dv += (n(x.x, v1)? - n(x.x, v0)?) * (off / (v1 - v0));
    }
    Ok((du, dv))
}

fn cost(r: &[f64; 4]) -> f64 {
    r.iter().map(|ri| ri * ri).sum()
}

/// Run the damped solver and report the final state whether or not it is
/// acceptable. Fails only on an out-of-domain initial guess.
pub fn solve_lengths<S: ChartSurface>(
    lengths: &StrapLengths,
    t: f64,
    rig: &StrapRig,
    surface: &S,
    initial_guess: (f64, f64),
    opts: &FkOptions,
) -> Result<FkSolution, KinematicsError> {
    let mut x = Vector2::new(initial_guess.0, initial_guess.1);
    let (mut r, mut q) = residuals(rig, surface, lengths, x, t)?;
    let mut c = cost(&r);
    let mut lambda = opts.initial_damping;
    let mut converged = c < opts.residual_tolerance_mm2;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let (du, dv) = attachment_tangents(rig, surface, x, t)?;
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (i, ri) in r.iter().enumerate() {
            let d = q - rig.anchor(i);
            let len = d.norm();
            if len == 0.0 {
                // Attachment on the anchor: the residual is not differentiable there.
                continue;
            }
            let row = Vector2::new(d.dot(&du), d.dot(&dv)) / len;
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        let damped = jtj + Matrix2::identity() * lambda;
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            lambda = (lambda * 10.0).min(1e15);
            continue;
        };
        let candidate = Vector2::new((x.x + step.x).clamp(0.0, 1.0), (x.y + step.y).clamp(0.0, 1.0));
        if (candidate - x).norm() < opts.step_tolerance {
            converged = true;
            break;
        }
        let (r_new, q_new) = residuals(rig, surface, lengths, candidate, t)?;
        let c_new = cost(&r_new);
        if c_new < c {
            x = candidate;
            r = r_new;
            q = q_new;
            c = c_new;
            lambda = (lambda / 10.0).max(1e-15);
            converged = c < opts.residual_tolerance_mm2;
        } else {
            lambda = (lambda * 10.0).min(1e15);
        }
    }

    Ok(FkSolution {
        chart: (x.x, x.y),
        residual_mm2: c,
        iterations,
        converged,
    })
}

/// Chart point reached by the straps, warm-started from `initial_guess`.
pub fn forward_kinematics<S: ChartSurface>(
    lengths: &StrapLengths,
    t: f64,
    rig: &StrapRig,
    surface: &S,
    initial_guess: (f64, f64),
) -> Result<(f64, f64), KinematicsError> {
    let opts = FkOptions::default();
    rig.within_limits(lengths)?;
    let sol = solve_lengths(lengths, t, rig, surface, initial_guess, &opts)?;
    if sol.residual_mm2 > opts.accept_residual_mm2 {
        return Err(KinematicsError::SolverFailed {
            residual_mm2: sol.residual_mm2,
            iterations: sol.iterations,
            chart: sol.chart,
        });
    }
    Ok(sol.chart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::inverse_kinematics;
    use crate::kinematics::rig::tests::flat_rig;
    use crate::phantom::BodySurface;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_single_target() {
        let rig = StrapRig::default();
        let body = BodySurface::default();
        let target = (0.41, 0.57);
        let l = inverse_kinematics(target, 0.9, &rig, &body).unwrap();
        let uv = forward_kinematics(&l, 0.9, &rig, &body, (0.5, 0.5)).unwrap();
        assert!((uv.0 - target.0).hypot(uv.1 - target.1) < 1e-6);
    }

    #[test]
    fn symmetric_lengths_on_flat_rig() {
        let (rig, plane) = flat_rig();
        let l = StrapLengths([200.0 * 2f64.sqrt(); 4]);
        let uv = forward_kinematics(&l, 0.0, &rig, &plane, (0.3, 0.6)).unwrap();
        assert!((uv.0 - 0.5).abs() < 1e-9 && (uv.1 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn random_round_trips_with_offset() {
        let rig = StrapRig {
            attachment_offset_mm: 12.0,
            ..StrapRig::default()
        };
        let body = BodySurface::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let target = (rng.random_range(0.3..0.7), rng.random_range(0.3..0.7));
            let t = rng.random_range(0.0..4.0);
            let l = inverse_kinematics(target, t, &rig, &body).unwrap();
            let sol = solve_lengths(&l, t, &rig, &body, (0.5, 0.5), &FkOptions::default()).unwrap();
            assert!(sol.residual_mm2 < 1e-9);
            assert!((sol.chart.0 - target.0).hypot(sol.chart.1 - target.1) < 1e-6);
        }
    }

    #[test]
    fn inconsistent_lengths_fail() {
        let rig = StrapRig::default();
        let body = BodySurface::default();
        let l = StrapLengths([100.0, 500.0, 500.0, 100.0]);
        match forward_kinematics(&l, 0.0, &rig, &body, (0.5, 0.5)) {
            Err(KinematicsError::SolverFailed { residual_mm2, .. }) => assert!(residual_mm2 > 1.0),
            other => panic!("expected SolverFailed, got {other:?}"),
        }
    }

    #[test]
    fn bit_identical_reruns() {
        let rig = StrapRig::default();
        let body = BodySurface::default();
        let l = inverse_kinematics((0.62, 0.44), 2.2, &rig, &body).unwrap();
        let a = solve_lengths(&l, 2.2, &rig, &body, (0.5, 0.5), &FkOptions::default()).unwrap();
        let b = solve_lengths(&l, 2.2, &rig, &body, (0.5, 0.5), &FkOptions::default()).unwrap();
        assert_eq!(a.chart.0.to_bits(), b.chart.0.to_bits());
        assert_eq!(a.chart.1.to_bits(), b.chart.1.to_bits());
    }

    #[test]
    fn breathing_tracking_is_continuous() {
        // Fixed lengths while the body breathes: the solution drifts smoothly.
        let rig = StrapRig::default();
        let body = BodySurface::default();
        let l = inverse_kinematics((0.45, 0.55), 0.0, &rig, &body).unwrap();
        let mut guess = (0.45, 0.55);
        let mut prev = body.point(guess.0, guess.1, 0.0).unwrap();
        for k in 1..=4000 {
            let t = k as f64 * 1e-3;
            let sol = solve_lengths(&l, t, &rig, &body, guess, &FkOptions::default()).unwrap();
            let p = body.point(sol.chart.0, sol.chart.1, t).unwrap();
            assert!((p - prev).norm() < 1.0, "jump at t={t}");
            prev = p;
            guess = sol.chart;
        }
    }
}
