//! Conservative flux-split finite-difference operator and its helpers.
//!
//! The spatial operator is evaluated in two passes so that it can be
//! chunked over z-planes by the executor:
//!
//! 1. [`compute_fluxes`] evaluates the physical fluxes of every padded cell
//!    along all three axes into a plane-major buffer;
//! 2. [`rhs_planes`] splits them with the global per-axis speeds,
//!    reconstructs interface fluxes with WENO5 and differences them.
//!
//! Every interface flux is computed by the same expression from the same
//! inputs no matter which plane, chunk or rank asks for it, so results do
//! not depend on how the work is partitioned.

use std::ops::Range;

use super::weno::{weno5_left, weno5_right};
use super::{FieldBlock, ModelKind, PhysicsError};

/// Per-worker temporaries for the kernels. Never shared between workers.
#[derive(Debug, Default, Clone)]
pub struct KernelScratch {
    fp: Vec<f64>,
    fm: Vec<f64>,
    h: Vec<f64>,
    cell: Vec<f64>,
    flux: Vec<f64>,
}

impl KernelScratch {
    pub fn for_block(block: &FieldBlock) -> Self {
        let longest = block.full().into_iter().max().unwrap_or(0);
        let v = block.nvars();
        Self {
            fp: vec![0.0; longest],
            fm: vec![0.0; longest],
            h: vec![0.0; longest + 1],
            cell: vec![0.0; v],
            flux: vec![0.0; 3 * v],
        }
    }
}

/// Values per padded plane in the flux buffer (`[axis][var][j][i]`).
pub fn flux_plane_len(block: &FieldBlock) -> usize {
    let f = block.full();
    3 * block.nvars() * f[0] * f[1]
}

/// Values per owned plane in the right-hand-side buffer (`[var][j][i]`).
pub fn rhs_plane_len(block: &FieldBlock) -> usize {
    block.nvars() * block.count[0] * block.count[1]
}

/// Evaluates physical fluxes for padded planes `planes`; `out` holds
/// exactly those planes.
pub fn compute_fluxes(
    block: &FieldBlock,
    planes: Range<usize>,
    out: &mut [f64],
    scratch: &mut KernelScratch,
) -> Result<(), PhysicsError> {
    let [fx, fy, _] = block.full();
    let nv = block.nvars();
    let plane = flux_plane_len(block);
    debug_assert_eq!(out.len(), plane * planes.len());
    let k0 = planes.start;
    for kk in planes {
        let dst = &mut out[(kk - k0) * plane..(kk - k0 + 1) * plane];
        for j in 0..fy {
            for i in 0..fx {
                block.cell(i, j, kk, &mut scratch.cell);
                block.model.fluxes(&scratch.cell, &mut scratch.flux)?;
                for a in 0..3 {
                    for v in 0..nv {
                        dst[((a * nv + v) * fy + j) * fx + i] = scratch.flux[a * nv + v];
                    }
                }
            }
        }
    }
    Ok(())
}

/// Interface flux at `c + 1/2` from split fluxes along one line.
#[inline]
fn interface_flux(fp: &[f64], fm: &[f64], c: usize) -> f64 {
    weno5_left([fp[c - 2], fp[c - 1], fp[c], fp[c + 1], fp[c + 2]])
        + weno5_right([fm[c - 1], fm[c], fm[c + 1], fm[c + 2], fm[c + 3]])
}

/// Interface fluxes `h[m]` at `(w - 1 + m) + 1/2` for `m = 0..=n`.
#[inline]
fn line_interfaces(fp: &[f64], fm: &[f64], w: usize, n: usize, h: &mut [f64]) {
    for (m, hm) in h[..=n].iter_mut().enumerate() {
        *hm = interface_flux(fp, fm, w - 1 + m);
    }
}

/// Spatial operator `L(U)` on owned planes `planes`; `out` holds exactly
/// those planes. Halos of `block` and the matching flux buffer must be
/// current, and `alpha[a]` must bound the signal speed along `a`.
pub fn rhs_planes(
    block: &FieldBlock,
    flux: &[f64],
    spacing: [f64; 3],
    alpha: [f64; 3],
    planes: Range<usize>,
    out: &mut [f64],
    scratch: &mut KernelScratch,
) {
    let w = block.halo;
    assert!(w >= 3, "WENO5 needs a halo of at least 3");
    let [nx, ny, _] = block.count;
    let [fx, fy, _] = block.full();
    let nv = block.nvars();
    let fplane = flux_plane_len(block);
    let oplane = rhs_plane_len(block);
    let fidx = |kk: usize, a: usize, v: usize, j: usize, i: usize| {
        kk * fplane + ((a * nv + v) * fy + j) * fx + i
    };
    let [dx, dy, dz] = spacing;
    let KernelScratch { fp, fm, h, .. } = scratch;
    let k0 = planes.start;

    for k in planes {
        let kk = k + w;
        let o = &mut out[(k - k0) * oplane..(k - k0 + 1) * oplane];
        for v in 0..nv {
            let ov = &mut o[v * nx * ny..(v + 1) * nx * ny];

            for j in 0..ny {
                let jj = j + w;
                for ii in 0..fx {
                    let f = flux[fidx(kk, 0, v, jj, ii)];
                    let u = block.data[block.idx(v, ii, jj, kk)];
                    fp[ii] = 0.5 * (f + alpha[0] * u);
                    fm[ii] = 0.5 * (f - alpha[0] * u);
                }
                line_interfaces(fp, fm, w, nx, h);
                for i in 0..nx {
                    ov[j * nx + i] = -((h[i + 1] - h[i]) / dx);
                }
            }

            for i in 0..nx {
                let ii = i + w;
                for jj in 0..fy {
                    let f = flux[fidx(kk, 1, v, jj, ii)];
                    let u = block.data[block.idx(v, ii, jj, kk)];
                    fp[jj] = 0.5 * (f + alpha[1] * u);
                    fm[jj] = 0.5 * (f - alpha[1] * u);
                }
                line_interfaces(fp, fm, w, ny, h);
                for j in 0..ny {
                    ov[j * nx + i] -= (h[j + 1] - h[j]) / dy;
                }
            }

            let (zp, zm) = (&mut fp[..7], &mut fm[..7]);
            for j in 0..ny {
                let jj = j + w;
                for i in 0..nx {
                    let ii = i + w;
                    for s in 0..7 {
                        let kz = kk + s - 3;
                        let f = flux[fidx(kz, 2, v, jj, ii)];
                        let u = block.data[block.idx(v, ii, jj, kz)];
                        zp[s] = 0.5 * (f + alpha[2] * u);
                        zm[s] = 0.5 * (f - alpha[2] * u);
                    }
                    let lower = interface_flux(zp, zm, 2);
                    let upper = interface_flux(zp, zm, 3);
                    ov[j * nx + i] -= (upper - lower) / dz;
                }
            }
        }
    }
}

/// Whole-block operator on one worker; output is `[k][var][j][i]` over
/// owned cells.
pub fn rhs(block: &FieldBlock, spacing: [f64; 3], alpha: [f64; 3]) -> Result<Vec<f64>, PhysicsError> {
    let mut scratch = KernelScratch::for_block(block);
    let fz = block.full()[2];
    let mut flux = vec![0.0; flux_plane_len(block) * fz];
    compute_fluxes(block, 0..fz, &mut flux, &mut scratch)?;
    let nz = block.count[2];
    let mut out = vec![0.0; rhs_plane_len(block) * nz];
    rhs_planes(block, &flux, spacing, alpha, 0..nz, &mut out, &mut scratch);
    Ok(out)
}

/// Per-axis maximum signal speeds and the largest `sum_a lambda_a / dx_a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpeedBound {
    pub alpha: [f64; 3],
    pub rate: f64,
}

impl SpeedBound {
    /// Exact (order-independent) combination.
    pub fn max(self, other: SpeedBound) -> SpeedBound {
        SpeedBound {
            alpha: std::array::from_fn(|a| self.alpha[a].max(other.alpha[a])),
            rate: self.rate.max(other.rate),
        }
    }
}

/// Speed bound over owned planes `planes` of a block.
pub fn speed_bound(
    block: &FieldBlock,
    spacing: [f64; 3],
    planes: Range<usize>,
    cell: &mut [f64],
) -> Result<SpeedBound, PhysicsError> {
    let w = block.halo;
    let [nx, ny, _] = block.count;
    let mut bound = SpeedBound::default();
    for k in planes {
        for j in 0..ny {
            for i in 0..nx {
                block.cell(i + w, j + w, k + w, cell);
                let s = block.model.signal_speeds(cell)?;
                let rate = s[0] / spacing[0] + s[1] / spacing[1] + s[2] / spacing[2];
                bound = bound.max(SpeedBound { alpha: s, rate });
            }
        }
    }
    Ok(bound)
}

/// Time step from a local speed bound; infinite when nothing moves.
pub fn local_dt(bound: &SpeedBound, cfl: f64) -> f64 {
    if bound.rate > 0.0 {
        cfl / bound.rate
    } else {
        f64::INFINITY
    }
}

/// CFL time step across blocks: `cfl / max_cells sum_a lambda_a / dx_a`.
pub fn cfl_dt(blocks: &[FieldBlock], spacing: [f64; 3], cfl: f64) -> Result<f64, PhysicsError> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(PhysicsError::InvalidCfl(cfl));
    }
    let mut dt = f64::INFINITY;
    for b in blocks {
        let mut cell = vec![0.0; b.nvars()];
        let bound = speed_bound(b, spacing, 0..b.count[2], &mut cell)?;
        dt = dt.min(local_dt(&bound, cfl));
    }
    if dt.is_finite() {
        Ok(dt)
    } else {
        Err(PhysicsError::StaticField)
    }
}

/// Maximum `|div B|` over owned cells, by second-order central differences.
/// Halos must be filled.
pub fn divb_diagnostic(block: &FieldBlock, spacing: [f64; 3]) -> Result<f64, PhysicsError> {
    if !matches!(block.model, ModelKind::IdealMhd { .. }) {
        return Err(PhysicsError::NotMhd);
    }
    let w = block.halo;
    let [nx, ny, nz] = block.count;
    let at = |v: usize, i: usize, j: usize, k: usize| block.data[block.idx(v, i, j, k)];
    let mut max = 0.0f64;
    for k in w..nz + w {
        for j in w..ny + w {
            for i in w..nx + w {
                let dbx = (at(5, i + 1, j, k) - at(5, i - 1, j, k)) / (2.0 * spacing[0]);
                let dby = (at(6, i, j + 1, k) - at(6, i, j - 1, k)) / (2.0 * spacing[1]);
                let dbz = (at(7, i, j, k + 1) - at(7, i, j, k - 1)) / (2.0 * spacing[2]);
                max = max.max((dbx + dby + dbz).abs());
            }
        }
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::state::{prim_to_cons, Primitive};
    use crate::physics::testutil::{fill_periodic, sample_block};
    use std::f64::consts::PI;

    const G: f64 = 5.0 / 3.0;

    fn adv(velocity: [f64; 3]) -> ModelKind {
        ModelKind::Advection { velocity }
    }

    #[test]
    fn uniform_state_has_zero_rhs() {
        let m = ModelKind::IdealMhd { gamma: G };
        let u = prim_to_cons(
            &Primitive {
                rho: 1.3,
                v: [0.3, -0.2, 0.7],
                p: 0.9,
                b: [0.4, 0.1, -0.6],
            },
            G,
        )
        .unwrap();
        let mut b = sample_block(m, [6, 7, 8], |_, _| u.to_vec());
        fill_periodic(&mut b);
        let sp = [0.1, 0.2, 0.3];
        let mut cell = vec![0.0; 8];
        let bound = speed_bound(&b, sp, 0..8, &mut cell).unwrap();
        let l = rhs(&b, sp, bound.alpha).unwrap();
        assert!(l.iter().all(|&x| x == 0.0));
    }

    fn advection_l1_error(n: usize) -> f64 {
        let m = adv([1.0, 0.0, 0.0]);
        let dx = 1.0 / n as f64;
        let mut b = sample_block(m, [n, 6, 6], |g, _| {
            vec![(2.0 * PI * (g[0] as f64 + 0.5) * dx).sin()]
        });
        fill_periodic(&mut b);
        let l = rhs(&b, [dx, 1.0 / 6.0, 1.0 / 6.0], [1.0, 0.0, 0.0]).unwrap();
        // first owned plane, first row
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * dx;
                (l[i] + 2.0 * PI * (2.0 * PI * x).cos()).abs()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn advection_operator_converges_fifth_order() {
        let e = [64, 128, 256].map(advection_l1_error);
        let order = (e[1] / e[2]).log2();
        assert!(order > 4.5, "errors {e:?}, order {order}");
        assert!(e[0] > e[1]);
    }

    #[test]
    fn periodic_rhs_telescopes() {
        let m = ModelKind::IdealMhd { gamma: G };
        let n = [12, 10, 8];
        let mut b = sample_block(m, n, |g, _| {
            let x = g.map(|c| c as f64 / 12.0);
            prim_to_cons(
                &Primitive {
                    rho: 1.0 + 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).cos(),
                    v: [0.2 * (2.0 * PI * x[1]).sin(), 0.1, -0.3 * (2.0 * PI * x[0]).cos()],
                    p: 1.0 + 0.2 * (2.0 * PI * x[1]).cos(),
                    b: [0.5, 0.2 * (2.0 * PI * x[2]).sin(), 0.3],
                },
                G,
            )
            .unwrap()
            .to_vec()
        });
        fill_periodic(&mut b);
        let sp = [0.1, 0.1, 0.1];
        let mut cell = vec![0.0; 8];
        let bound = speed_bound(&b, sp, 0..n[2], &mut cell).unwrap();
        let l = rhs(&b, sp, bound.alpha).unwrap();
        let plane = rhs_plane_len(&b);
        let per_var = n[0] * n[1];
        for v in 0..8 {
            let (mut total, mut scale) = (0.0, 0.0);
            for k in 0..n[2] {
                for x in &l[k * plane + v * per_var..k * plane + (v + 1) * per_var] {
                    total += x;
                    scale += x.abs();
                }
            }
            assert!(total.abs() <= 1e-12 * scale.max(1.0), "var {v}: {total} vs {scale}");
        }
    }

    #[test]
    fn cfl_examples() {
        let mut one = sample_block(adv([1.0, 0.0, 0.0]), [10, 6, 6], |_, _| vec![1.0]);
        fill_periodic(&mut one);
        let dt = cfl_dt(&[one.clone()], [0.1, 0.1, 0.1], 0.4).unwrap();
        assert!((dt - 0.04).abs() < 1e-15);
        let dt2 = cfl_dt(&[one], [0.2, 0.2, 0.2], 0.4).unwrap();
        assert_eq!(dt2, 2.0 * dt);

        let u = prim_to_cons(
            &Primitive {
                rho: 1.0,
                v: [0.0; 3],
                p: 1.0,
                b: [0.0; 3],
            },
            G,
        )
        .unwrap();
        let mhd = sample_block(ModelKind::IdealMhd { gamma: G }, [6; 3], |_, _| u.to_vec());
        let dt = cfl_dt(&[mhd], [0.1; 3], 0.4).unwrap();
        assert!((dt - 0.4 / (3.0 * (5.0f64 / 3.0).sqrt() / 0.1)).abs() < 1e-15);
        assert!((dt - 0.010328).abs() < 1e-6);
    }

    #[test]
    fn cfl_rejects_static_field() {
        let still = sample_block(adv([0.0; 3]), [6; 3], |_, _| vec![1.0]);
        assert!(matches!(cfl_dt(std::slice::from_ref(&still), [0.1; 3], 0.4), Err(PhysicsError::StaticField)));
        assert!(matches!(cfl_dt(&[still], [0.1; 3], 1.5), Err(PhysicsError::InvalidCfl(_))));
    }

    fn mhd_with_b(n: usize, bfield: impl Fn([f64; 3]) -> [f64; 3]) -> FieldBlock {
        let h = 1.0 / n as f64;
        let mut b = sample_block(ModelKind::IdealMhd { gamma: G }, [n, 6, 6], |g, _| {
            let x = [(g[0] as f64 + 0.5) * h, (g[1] as f64 + 0.5) / 6.0, (g[2] as f64 + 0.5) / 6.0];
            prim_to_cons(
                &Primitive {
                    rho: 1.0,
                    v: [0.0; 3],
                    p: 1.0,
                    b: bfield(x),
                },
                G,
            )
            .unwrap()
            .to_vec()
        });
        fill_periodic(&mut b);
        b
    }

    #[test]
    fn divb_examples() {
        let sp = |n: usize| [1.0 / n as f64, 1.0 / 6.0, 1.0 / 6.0];
        let uniform = mhd_with_b(16, |_| [0.3, -0.2, 0.5]);
        assert_eq!(divb_diagnostic(&uniform, sp(16)).unwrap(), 0.0);
        let transverse = mhd_with_b(16, |x| [0.0, (2.0 * PI * x[0]).sin(), 0.0]);
        assert!(divb_diagnostic(&transverse, sp(16)).unwrap() <= 1e-12);

        let err = |n: usize| {
            let b = mhd_with_b(n, |x| [(2.0 * PI * x[0]).sin(), 0.0, 0.0]);
            (divb_diagnostic(&b, sp(n)).unwrap() - 2.0 * PI).abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 0.05 * 2.0 * PI);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");

        let adv_block = sample_block(adv([1.0; 3]), [6; 3], |_, _| vec![1.0]);
        assert!(matches!(divb_diagnostic(&adv_block, [0.1; 3]), Err(PhysicsError::NotMhd)));
    }
}
