//! Model equations: conserved/primitive closure, physical fluxes and
//! signal speeds for scalar advection and Newtonian ideal MHD.

use serde::Serialize;

use super::PhysicsError;

/// Number of conserved variables of the ideal-MHD system.
pub const MHD_VARS: usize = 8;

/// Conserved-variable names of the ideal-MHD system, in storage order.
pub const MHD_VAR_NAMES: [&str; MHD_VARS] = ["rho", "mx", "my", "mz", "E", "Bx", "By", "Bz"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModelKind {
    Advection { velocity: [f64; 3] },
    IdealMhd { gamma: f64 },
}

impl ModelKind {
    pub fn nvars(&self) -> usize {
        match self {
            ModelKind::Advection { .. } => 1,
            ModelKind::IdealMhd { .. } => MHD_VARS,
        }
    }

    pub fn var_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Advection { .. } => &["q"],
            ModelKind::IdealMhd { .. } => &MHD_VAR_NAMES,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Advection { .. } => "advection",
            ModelKind::IdealMhd { .. } => "mhd",
        }
    }

    /// Physical fluxes along all three axes for one cell's conserved
    /// vector `u`. `flux` is laid out `[axis][var]`.
    pub fn fluxes(&self, u: &[f64], flux: &mut [f64]) -> Result<(), PhysicsError> {
        match *self {
            ModelKind::Advection { velocity } => {
                for a in 0..3 {
                    flux[a] = velocity[a] * u[0];
                }
                Ok(())
            }
            ModelKind::IdealMhd { gamma } => {
                let w = cons_to_prim(u, gamma)?;
                for a in 0..3 {
                    let f = mhd_flux_with_energy(&w, u[4], a);
                    flux[a * MHD_VARS..(a + 1) * MHD_VARS].copy_from_slice(&f);
                }
                Ok(())
            }
        }
    }

    /// Maximum signal speed along each axis for one cell.
    pub fn signal_speeds(&self, u: &[f64]) -> Result<[f64; 3], PhysicsError> {
        match *self {
            ModelKind::Advection { velocity } => Ok(velocity.map(f64::abs)),
            ModelKind::IdealMhd { gamma } => {
                let w = cons_to_prim(u, gamma)?;
                Ok(std::array::from_fn(|a| max_signal_speed(&w, gamma, a)))
            }
        }
    }

    /// Checks that a cell's conserved vector is finite and, for MHD,
    /// maps to a state with positive density and pressure.
    pub fn validate(&self, u: &[f64]) -> Result<(), PhysicsError> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(PhysicsError::NonFinite { state: u.to_vec() });
        }
        if let ModelKind::IdealMhd { gamma } = *self {
            cons_to_prim(u, gamma)?;
        }
        Ok(())
    }
}

/// Primitive ideal-MHD state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub v: [f64; 3],
    pub p: f64,
    pub b: [f64; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn prim_to_cons(w: &Primitive, gamma: f64) -> Result<[f64; MHD_VARS], PhysicsError> {
    if !(w.rho > 0.0) || !(w.p > 0.0) {
        return Err(PhysicsError::Unphysical {
            rho: w.rho,
            p: w.p,
            state: vec![w.rho, w.v[0], w.v[1], w.v[2], w.p, w.b[0], w.b[1], w.b[2]],
        });
    }
    let m = w.v.map(|v| w.rho * v);
    let e = w.p / (gamma - 1.0) + 0.5 * w.rho * dot(&w.v, &w.v) + 0.5 * dot(&w.b, &w.b);
    Ok([w.rho, m[0], m[1], m[2], e, w.b[0], w.b[1], w.b[2]])
}

pub fn cons_to_prim(u: &[f64], gamma: f64) -> Result<Primitive, PhysicsError> {
    let rho = u[0];
    let unphysical = |p| PhysicsError::Unphysical {
        rho,
        p,
        state: u.to_vec(),
    };
    if !(rho > 0.0) {
        return Err(unphysical(f64::NAN));
    }
    let v = [u[1] / rho, u[2] / rho, u[3] / rho];
    let b = [u[5], u[6], u[7]];
    let p = (gamma - 1.0) * (u[4] - 0.5 * rho * dot(&v, &v) - 0.5 * dot(&b, &b));
    if !(p > 0.0) {
        return Err(unphysical(p));
    }
    Ok(Primitive { rho, v, p, b })
}

/// Ideal-MHD flux along `axis` for a primitive state.
pub fn mhd_flux(w: &Primitive, gamma: f64, axis: usize) -> [f64; MHD_VARS] {
    let e = w.p / (gamma - 1.0) + 0.5 * w.rho * dot(&w.v, &w.v) + 0.5 * dot(&w.b, &w.b);
    mhd_flux_with_energy(w, e, axis)
}

fn mhd_flux_with_energy(w: &Primitive, energy: f64, axis: usize) -> [f64; MHD_VARS] {
    let (v, b) = (&w.v, &w.b);
    let va = v[axis];
    let ba = b[axis];
    let ptot = w.p + 0.5 * dot(b, b);
    let ma = w.rho * va;
    let mut f = [0.0; MHD_VARS];
    f[0] = ma;
    for d in 0..3 {
        f[1 + d] = ma * v[d] - ba * b[d];
        f[5 + d] = va * b[d] - ba * v[d];
    }
    f[1 + axis] += ptot;
    f[4] = (energy + ptot) * va - ba * dot(v, b);
    f[5 + axis] = 0.0;
    f
}

/// `|v_a|` plus the fast magnetosonic speed along `axis`.
pub fn max_signal_speed(w: &Primitive, gamma: f64, axis: usize) -> f64 {
    let a2 = gamma * w.p / w.rho;
    let b2 = dot(&w.b, &w.b) / w.rho;
    let ba2 = w.b[axis] * w.b[axis] / w.rho;
    let sum = a2 + b2;
    let disc = (sum * sum - 4.0 * a2 * ba2).max(0.0);
    let cf2 = 0.5 * (sum + disc.sqrt());
    w.v[axis].abs() + cf2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const G: f64 = 5.0 / 3.0;

    fn rest() -> Primitive {
        Primitive {
            rho: 1.0,
            v: [0.0; 3],
            p: 1.0,
            b: [0.0; 3],
        }
    }

    #[test]
    fn convert_examples() {
        let u = prim_to_cons(&rest(), G).unwrap();
        assert_relative_eq!(u[4], 1.5, max_relative = 1e-15);
        assert_eq!(&u[1..4], &[0.0; 3]);
        let w = cons_to_prim(&[1.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0], G).unwrap();
        assert_relative_eq!(w.p, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn convert_rejects_unphysical() {
        let err = cons_to_prim(&[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0], G).unwrap_err();
        match err {
            PhysicsError::Unphysical { p, state, .. } => {
                assert!(p < 0.0);
                assert_eq!(state[4], -1.0);
            }
            e => panic!("{e:?}"),
        }
        assert!(cons_to_prim(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], G).is_err());
        let mut w = rest();
        w.p = 0.0;
        assert!(prim_to_cons(&w, G).is_err());
    }

    #[test]
    fn round_trip_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let w = Primitive {
                rho: rng.random_range(0.01..10.0),
                v: std::array::from_fn(|_| rng.random_range(-3.0..3.0)),
                p: rng.random_range(0.01..10.0),
                b: std::array::from_fn(|_| rng.random_range(-3.0..3.0)),
            };
            let back = cons_to_prim(&prim_to_cons(&w, G).unwrap(), G).unwrap();
            assert_relative_eq!(back.rho, w.rho, max_relative = 1e-12);
            // pressure is recovered from a difference of energies; compare
            // against the energy scale
            let scale = w.p + 0.5 * w.rho * dot(&w.v, &w.v) + 0.5 * dot(&w.b, &w.b);
            assert!((back.p - w.p).abs() <= 1e-12 * scale, "{w:?} -> {back:?}");
            for d in 0..3 {
                assert!((back.v[d] - w.v[d]).abs() <= 1e-12 * w.v[d].abs().max(1.0));
                assert_eq!(back.b[d], w.b[d]);
            }
        }
    }

    #[test]
    fn flux_examples() {
        let adv = ModelKind::Advection {
            velocity: [1.0, 0.0, 0.0],
        };
        let mut f = [0.0; 3];
        adv.fluxes(&[2.0], &mut f).unwrap();
        assert_eq!(f[0], 2.0);
        assert_eq!(mhd_flux(&rest(), G, 0), [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn induction_flux_normal_component_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = Primitive {
                rho: 1.0,
                v: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
                p: 1.0,
                b: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
            };
            for a in 0..3 {
                assert_eq!(mhd_flux(&w, G, a)[5 + a], 0.0);
            }
        }
    }

    #[test]
    fn model_flux_matches_primitive_flux() {
        let w = Primitive {
            rho: 1.3,
            v: [0.2, -0.4, 0.1],
            p: 0.8,
            b: [0.3, 0.5, -0.2],
        };
        let u = prim_to_cons(&w, G).unwrap();
        let mut f = [0.0; 24];
        ModelKind::IdealMhd { gamma: G }.fluxes(&u, &mut f).unwrap();
        for a in 0..3 {
            let direct = mhd_flux(&w, G, a);
            for v in 0..MHD_VARS {
                assert_relative_eq!(f[a * MHD_VARS + v], direct[v], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn signal_speed_examples() {
        assert_relative_eq!(max_signal_speed(&rest(), G, 0), (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let mut w = rest();
        w.b = [1.0, 0.0, 0.0];
        assert_relative_eq!(max_signal_speed(&w, G, 0), 1.29099, epsilon = 1e-5);
        let base = max_signal_speed(&w, G, 1);
        w.v[1] = 2.0;
        assert_relative_eq!(max_signal_speed(&w, G, 1), base + 2.0, epsilon = 1e-14);
    }
}
