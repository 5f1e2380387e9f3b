//! Fifth-order WENO reconstruction with Jiang–Shu smoothness indicators.

/// Regularization added to the smoothness indicators.
pub const WENO_EPS: f64 = 1e-6;

const IDEAL: [f64; 3] = [0.1, 0.6, 0.3];

/// Left-biased reconstruction at `i+1/2` from `u[i-2..=i+2]`.
#[inline]
pub fn weno5_left(u: [f64; 5]) -> f64 {
    let [um2, um1, u0, up1, up2] = u;

    let q0 = (2.0 * um2 - 7.0 * um1 + 11.0 * u0) / 6.0;
    let q1 = (-um1 + 5.0 * u0 + 2.0 * up1) / 6.0;
    let q2 = (2.0 * u0 + 5.0 * up1 - up2) / 6.0;

    let sq = |x: f64| x * x;
    let b0 = 13.0 / 12.0 * sq(um2 - 2.0 * um1 + u0) + 0.25 * sq(um2 - 4.0 * um1 + 3.0 * u0);
    let b1 = 13.0 / 12.0 * sq(um1 - 2.0 * u0 + up1) + 0.25 * sq(um1 - up1);
    let b2 = 13.0 / 12.0 * sq(u0 - 2.0 * up1 + up2) + 0.25 * sq(3.0 * u0 - 4.0 * up1 + up2);

    let a0 = IDEAL[0] / sq(WENO_EPS + b0);
    let a1 = IDEAL[1] / sq(WENO_EPS + b1);
    let a2 = IDEAL[2] / sq(WENO_EPS + b2);
    let sum = a0 + a1 + a2;

    (a0 * q0 + a1 * q1 + a2 * q2) / sum
}

/// Right-biased reconstruction at `i+1/2` from `u[i-1..=i+3]`; the mirror
/// image of [`weno5_left`].
#[inline]
pub fn weno5_right(u: [f64; 5]) -> f64 {
    weno5_left([u[4], u[3], u[2], u[1], u[0]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data_is_reproduced() {
        for c in [0.0, 1.0, -3.25, 0.1, 1e6] {
            let l = weno5_left([c; 5]);
            let r = weno5_right([c; 5]);
            assert!((l - c).abs() <= 4.0 * f64::EPSILON * c.abs());
            assert!((r - c).abs() <= 4.0 * f64::EPSILON * c.abs());
        }
    }

    #[test]
    fn linear_data_is_exact() {
        assert!((weno5_left([1.0, 2.0, 3.0, 4.0, 5.0]) - 3.5).abs() < 1e-14);
        // mirrored stencil u_{i-1..i+3} = 2..6 also reconstructs 3.5 at i+1/2
        assert!((weno5_right([2.0, 3.0, 4.0, 5.0, 6.0]) - 3.5).abs() < 1e-14);
    }

    /// Point values of sin at cell centers reconstruct sin at the interface.
    /// Max interface error for cell averages of `sin(x)` on stencils away
    /// from the extrema, where the nonlinear weights approach the ideal
    /// ones. (The candidates reconstruct a point value from cell averages.)
    fn interface_error(dx: f64) -> f64 {
        let average = |x: f64| ((x - 0.5 * dx).cos() - (x + 0.5 * dx).cos()) / dx;
        let mut max = 0.0f64;
        for s in 0..16 {
            let xi = 0.2 + 0.05 * s as f64;
            let u = std::array::from_fn(|m| average(xi + (m as f64 - 2.0) * dx));
            let exact = (xi + 0.5 * dx).sin();
            max = max.max((weno5_left(u) - exact).abs());
        }
        max
    }

    #[test]
    fn fifth_order_on_smooth_data() {
        let e = [0.1, 0.05, 0.025].map(interface_error);
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 4.5, "order {order} ({:e} -> {:e})", w[0], w[1]);
        }
    }
}
