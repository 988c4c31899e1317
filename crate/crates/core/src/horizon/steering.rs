//! Minimum-energy steering on the unit interval.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm2, singular_values, symmetrize};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Control steering `xa` at `s = 0` to `xb` at `s = 1`:
/// `u(s) = Bᵀe^{Aᵀ(1−s)} G⁻¹ (xb − e^A xa)`.
#[derive(Debug, Clone, Serialize)]
pub struct SteeringControl<T: Real> {
    #[serde(serialize_with = "crate::serde_util::scalars")]
    pub times: Vec<T>,
    /// Row `j` is `u(s_j)`.
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub u: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub gramian: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub multiplier: DVector<T>,
    /// `‖x(1) − xb‖` from an independent RK4 integration.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub endpoint_error: T,
    /// `‖u(s)‖ ≤ K(‖xa‖ + ‖xb‖)` on `[0, 1]`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub bound_k: T,
    pub gramian_condition: f64,
}

impl<T: Real> SteeringControl<T> {
    pub fn max_control_norm(&self) -> T {
        (0..self.u.nrows()).map(|j| self.u.row(j).norm()).fold(T::zero(), T::max)
    }
}

/// Gramian by composite Simpson on `quad_points` (odd, ≥ 3) nodes.
pub fn steering_control<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    xa: &DVector<T>,
    xb: &DVector<T>,
    quad_points: usize,
) -> Result<SteeringControl<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || xa.len() != n || xb.len() != n {
        return Err(Error::Dimension("steering data do not match A".into()));
    }
    if quad_points < 3 || quad_points.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!(
            "Simpson rule needs an odd number ≥ 3 of points, got {quad_points}"
        )));
    }
    let intervals = quad_points - 1;
    let h = T::one() / from_usize::<T>(intervals);
    let step = (a * h).exp();
    // phi[j] = e^{A s_j}
    let mut phi = Vec::with_capacity(quad_points);
    phi.push(DMatrix::<T>::identity(n, n));
    for j in 1..quad_points {
        let next = &step * &phi[j - 1];
        phi.push(next);
    }
    let bbt = b * b.transpose();
    let mut g = DMatrix::<T>::zeros(n, n);
    for (j, pj) in phi.iter().enumerate() {
        let w = if j == 0 || j == intervals {
            T::one()
        } else if j % 2 == 1 {
            lit(4.0)
        } else {
            lit(2.0)
        };
        g += pj * &bbt * pj.transpose() * w;
    }
    let g = symmetrize(&(g * (h / lit::<T>(3.0))));
    let sv = singular_values(&g);
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let smin = sv.iter().copied().fold(T::max_value().unwrap(), T::min);
    let condition = if smin > T::zero() { to_f64(smax / smin) } else { f64::INFINITY };
    if !(condition <= super::SHOOTING_COND_MAX) {
        return Err(Error::Conditioning {
            what: "controllability Gramian",
            condition,
        });
    }
    let e_a = &phi[intervals];
    let mult = g
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&(xb - e_a * xa)))
        .ok_or_else(|| Error::Precondition("controllability Gramian is not positive definite".into()))?;

    let mut u = DMatrix::zeros(quad_points, b.ncols());
    for j in 0..quad_points {
        let uj = b.transpose() * phi[intervals - j].transpose() * &mult;
        u.set_row(j, &uj.transpose());
    }

    // RK4 with step 2h so that midpoints fall on odd nodes
    let mut x = xa.clone();
    let big = h + h;
    let sixth = big / lit::<T>(6.0);
    let two = lit::<T>(2.0);
    let f = |x: &DVector<T>, j: usize| a * x + b * u.row(j).transpose();
    for j in (0..intervals).step_by(2) {
        let k1 = f(&x, j);
        let k2 = f(&(&x + &k1 * h), j + 1);
        let k3 = f(&(&x + &k2 * h), j + 1);
        let k4 = f(&(&x + &k3 * big), j + 2);
        x += (k1 + (k2 + k3) * two + k4) * sixth;
    }
    let endpoint_error = (x - xb).norm();

    let max_exp = phi.iter().map(norm2).fold(T::zero(), T::max);
    let bound_k = norm2(b) * max_exp / smin * norm2(e_a).max(T::one());
    let times = (0..quad_points).map(|j| from_usize::<T>(j) * h).collect();
    Ok(SteeringControl {
        times,
        u,
        gramian: g,
        multiplier: mult,
        endpoint_error,
        bound_k,
        gramian_condition: condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::block2x2;
    use nalgebra::{dmatrix, dvector};

    /// Gramian from the block exponential
    /// `exp([[−A, BBᵀ], [0, Aᵀ]]) = [[·, F12], [0, F22]]`, `G = F22ᵀF12`.
    fn gramian_block_exp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let big = block2x2(&(-a), &(b * b.transpose()), &DMatrix::zeros(n, n), &a.transpose()).exp();
        let f12 = big.view((0, n), (n, n)).into_owned();
        let f22 = big.view((n, n), (n, n)).into_owned();
        f22.transpose() * f12
    }

    #[test]
    fn gramian_and_endpoint_match_block_exponential() {
        let a = dmatrix![0.0, 1.0; -2.0, 0.3];
        let b = dmatrix![0.0; 1.0];
        let xa = dvector![1.0, -1.0];
        let xb = dvector![0.5, 2.0];
        let s = steering_control(&a, &b, &xa, &xb, 1001).unwrap();
        let g = gramian_block_exp(&a, &b);
        assert!((&s.gramian - &g).norm() < 1e-10 * g.norm());
        // x(1) = e^A xa + G_exact · multiplier
        let x1 = a.clone().exp() * &xa + &g * &s.multiplier;
        assert!((x1 - &xb).norm() < 1e-8);
        assert!(s.endpoint_error < 1e-8);
        assert!(s.max_control_norm() <= s.bound_k * (xa.norm() + xb.norm()));
    }

    #[test]
    fn uncontrollable_pair_is_rejected() {
        let a = dmatrix![1.0, 0.0; 0.0, 2.0];
        let b = dmatrix![1.0; 0.0];
        let r = steering_control(&a, &b, &dvector![0.0, 0.0], &dvector![1.0, 1.0], 101);
        assert!(matches!(r, Err(Error::Conditioning { .. }) | Err(Error::Precondition(_))));
    }
}
