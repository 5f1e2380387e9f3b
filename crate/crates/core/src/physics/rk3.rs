//! Three-stage strong-stability-preserving Runge–Kutta (Shu–Osher form).
//!
//! Stages are written as increments on the step's initial state,
//! `u + c * ((u_s - u) + dt * L(u_s))`, which is algebraically the usual
//! convex combination but leaves `u` bitwise unchanged when `L == 0`.

use super::PhysicsError;

pub const RK3_STAGES: usize = 3;

/// Value of stage `stage` at one point, given the step's initial value
/// `u0`, the current stage value `us` and `l = L(us)`.
#[inline]
pub fn rk3_stage(stage: usize, u0: f64, us: f64, l: f64, dt: f64) -> f64 {
    match stage {
        0 => u0 + dt * l,
        1 => u0 + 0.25 * ((us - u0) + dt * l),
        2 => u0 + (2.0 / 3.0) * ((us - u0) + dt * l),
        _ => panic!("RK3 has three stages, got stage {stage}"),
    }
}

/// One full step on a flat state vector with a caller-supplied operator.
pub fn rk3_step<E>(
    u: &[f64],
    dt: f64,
    mut rhs: impl FnMut(&[f64], &mut [f64]) -> Result<(), E>,
) -> Result<Vec<f64>, E>
where
    E: From<PhysicsError>,
{
    if !(dt > 0.0) {
        return Err(PhysicsError::InvalidDt(dt).into());
    }
    let mut stage = u.to_vec();
    let mut l = vec![0.0; u.len()];
    for s in 0..RK3_STAGES {
        rhs(&stage, &mut l)?;
        for ((x, &x0), &lx) in stage.iter_mut().zip(u).zip(&l) {
            *x = rk3_stage(s, x0, *x, lx, dt);
        }
    }
    Ok(stage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decay(u: &[f64], l: &mut [f64]) -> Result<(), PhysicsError> {
        for (li, ui) in l.iter_mut().zip(u) {
            *li = -ui;
        }
        Ok(())
    }

    #[test]
    fn zero_operator_is_identity_bitwise() {
        let u = vec![0.1, -3.7, 1e-300, 12345.678, std::f64::consts::PI];
        let out = rk3_step(&u, 0.3, |_, l: &mut [f64]| {
            l.fill(0.0);
            Ok::<_, PhysicsError>(())
        })
        .unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn scalar_decay_example() {
        let out = rk3_step(&[1.0], 0.1, decay).unwrap();
        let expected = 1.0 - 0.1 + 0.005 - 0.1f64.powi(3) / 6.0;
        assert!((out[0] - expected).abs() < 1e-15);
        assert!((out[0] - 0.9048333).abs() < 1e-7);
    }

    #[test]
    fn linear_operator_matches_third_order_taylor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let dt: f64 = rng.random_range(0.0..0.5);
            let dt = dt.max(1e-3);
            let lambda = -1.7;
            let out = rk3_step(&[2.0], dt, |u: &[f64], l: &mut [f64]| {
                l[0] = lambda * u[0];
                Ok::<_, PhysicsError>(())
            })
            .unwrap();
            let z = lambda * dt;
            let amp = 1.0 + z + z * z / 2.0 + z * z * z / 6.0;
            assert!((out[0] - 2.0 * amp).abs() < 1e-14, "dt {dt}");
        }
    }

    #[test]
    fn rejects_non_positive_dt() {
        assert!(matches!(rk3_step(&[1.0], 0.0, decay), Err(PhysicsError::InvalidDt(_))));
    }
}
