//! Steady problem `min ½‖u‖² + ½‖Cx − z‖²` subject to `Ax + Bu = 0`, the
//! structure of its minimizer set and the kernel and range of the
//! Hamiltonian matrix.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{block2x2, default_tol, hstack, norm2, null_space, projector, range_space, svd_full, vstack};
use crate::scalar::{lit, tiny, Real};
use crate::subspace::SubspaceBasis;

/// Steady minimizer `(ū, x̄)` with minimal `‖x̄‖`, the multiplier `p̄` when
/// the steady optimality system is solvable, and `ker A ∩ ker C`, along which
/// the minimizer set extends.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct SteadySolution<T: Real> {
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub u_bar: DVector<T>,
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub x_bar: DVector<T>,
    #[serde(serialize_with = "crate::serde_util::opt_vector")]
    pub p_bar: Option<DVector<T>>,
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub j_value: T,
    pub kernel_dir: SubspaceBasis<T>,
    /// `‖Ax̄ + Bū‖`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub feasibility: T,
}

impl<T: Real> SteadySolution<T> {
    /// Squared distance of `(u, x)` to the minimizer set
    /// `{(ū, x̄ + d) : d ∈ ker A ∩ ker C}`.
    pub fn dist_sq(&self, u: &DVector<T>, x: &DVector<T>) -> T {
        let n = self.x_bar.len();
        let dx = x - &self.x_bar;
        let off = (DMatrix::identity(n, n) - self.kernel_dir.projector()) * dx;
        (u - &self.u_bar).norm_squared() + off.norm_squared()
    }
}

pub fn steady_cost<T: Real>(c: &DMatrix<T>, z: &DVector<T>, u: &DVector<T>, x: &DVector<T>) -> T {
    let half = lit::<T>(0.5);
    half * u.norm_squared() + half * (c * x - z).norm_squared()
}

fn check<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<(usize, usize)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "inconsistent shapes A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    Ok((n, b.ncols()))
}

/// Minimal-norm least-squares solution through the SVD, singular values
/// below `RANK_RTOL·σ_max` discarded.
fn lstsq<T: Real>(m: &DMatrix<T>, rhs: &DVector<T>) -> DVector<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(m.ncols());
    }
    let tol = default_tol(m).max(tiny::<T>());
    let (u, s, v) = svd_full(m);
    let mut coef = u.transpose() * rhs;
    for (k, c) in coef.iter_mut().enumerate() {
        *c = if s[k] > tol { *c / s[k] } else { T::zero() };
    }
    v.columns(0, s.len()) * coef
}

/// Orthonormal basis of `ker A ∩ ker C`.
pub fn kernel_directions<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> SubspaceBasis<T> {
    SubspaceBasis::new(null_space(&vstack(&[a.clone(), c.clone()])))
}

pub fn solve_steady<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<SteadySolution<T>> {
    let (n, m) = check(a, b, c)?;
    if z.len() != c.nrows() {
        return Err(Error::Dimension(format!(
            "target has length {}, expected {}",
            z.len(),
            c.nrows()
        )));
    }
    // w = (x, u) = N y parametrizes {Ax + Bu = 0}
    let nm = null_space(&hstack(&[a.clone(), b.clone()]));
    let k = nm.ncols();
    let (x, u) = if k == 0 {
        (DVector::zeros(n), DVector::zeros(m))
    } else {
        let nx = nm.rows(0, n).into_owned();
        let nu = nm.rows(n, m).into_owned();
        let g = vstack(&[nu.clone(), c * &nx]);
        let rhs = DVector::from_iterator(m + c.nrows(), (0..m).map(|_| T::zero()).chain(z.iter().copied()));
        let y = lstsq(&g, &rhs);
        (&nx * &y, &nu * &y)
    };
    let kernel_dir = kernel_directions(a, c);
    let x = &x - kernel_dir.projector() * &x;
    let j_value = steady_cost(c, z, &u, &x);
    let feasibility = (a * &x + b * &u).norm();
    let p_bar = steady_system_solvable(a, b, c, z)?.1.map(|(_, p)| p);
    Ok(SteadySolution {
        u_bar: u,
        x_bar: x,
        p_bar,
        j_value,
        kernel_dir,
        feasibility,
    })
}

/// Kernel and range of `Ham` as products of subspaces of `ℝⁿ`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct HamiltonianSubspaces<T: Real> {
    pub kernel: SubspaceBasis<T>,
    pub range: SubspaceBasis<T>,
}

fn block_diag<T: Real>(u: &DMatrix<T>, v: &DMatrix<T>) -> DMatrix<T> {
    let z12 = DMatrix::zeros(u.nrows(), v.ncols());
    let z21 = DMatrix::zeros(v.nrows(), u.ncols());
    block2x2(u, &z12, &z21, v)
}

/// `ker Ham = [ker A ∩ ker C] × [ker Aᵀ ∩ ker Bᵀ]` and
/// `range Ham = [range A + range B] × [range Aᵀ + range Cᵀ]`.
pub fn hamiltonian_kernel_range<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<HamiltonianSubspaces<T>> {
    check(a, b, c)?;
    let k1 = null_space(&vstack(&[a.clone(), c.clone()]));
    let k2 = null_space(&vstack(&[a.transpose(), b.transpose()]));
    let r1 = range_space(&hstack(&[a.clone(), b.clone()]));
    let r2 = range_space(&hstack(&[a.transpose(), c.transpose()]));
    Ok(HamiltonianSubspaces {
        kernel: SubspaceBasis::new(block_diag(&k1, &k2)),
        range: SubspaceBasis::new(block_diag(&r1, &r2)),
    })
}

/// Solves `Ax̄ − BBᵀp̄ = 0`, `−Aᵀp̄ − Cᵀ(Cx̄ − z) = 0` in the least-squares
/// sense with minimal norm. Solvable when the residual is at most
/// `1e−8·(1 + ‖z‖)`, in which case `(x̄, p̄)` is returned.
#[allow(clippy::type_complexity)]
pub fn steady_system_solvable<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<(bool, Option<(DVector<T>, DVector<T>)>)> {
    let (n, _) = check(a, b, c)?;
    let ham = crate::riccati::build_hamiltonian(a, b, c)?;
    let ctz = c.transpose() * z;
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(n, n).copy_from(&(-ctz));
    let w = lstsq(&ham, &rhs);
    let resid = (&ham * &w - &rhs).norm();
    if resid <= lit::<T>(1e-8) * (T::one() + z.norm()) {
        Ok((true, Some((w.rows(0, n).into_owned(), w.rows(n, n).into_owned()))))
    } else {
        Ok((false, None))
    }
}

/// Projector onto the `x`-part of the minimizer-set directions, for callers
/// comparing full states.
pub fn kernel_projector<T: Real>(s: &SteadySolution<T>) -> DMatrix<T> {
    projector(&s.kernel_dir.basis)
}

/// `‖Ax + Bu‖` relative to `(‖A‖ + ‖B‖)·max(1, ‖x‖, ‖u‖)`.
pub fn relative_feasibility<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    x: &DVector<T>,
    u: &DVector<T>,
) -> T {
    let scale = (norm2(a) + norm2(b)).max(tiny::<T>()) * x.norm().max(u.norm()).max(T::one());
    (a * x + b * u).norm() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::subspace_gap;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn zero_target_gives_zero_minimizer() {
        let a = dmatrix![0.5, 1.0; -1.0, 0.2];
        let b = dmatrix![1.0; 0.0];
        let c = dmatrix![1.0, 1.0];
        let s = solve_steady(&a, &b, &c, &dvector![0.0]).unwrap();
        assert!(s.u_bar.norm() < 1e-14 && s.x_bar.norm() < 1e-14);
        assert_eq!(s.j_value, 0.0);
    }

    #[test]
    fn identity_system_has_half_way_minimizer() {
        let n = 3;
        let a = -DMatrix::<f64>::identity(n, n);
        let id = DMatrix::identity(n, n);
        let z = dvector![1.0, 0.0, 0.0];
        let s = solve_steady(&a, &id, &id, &z).unwrap();
        assert!((&s.x_bar - &z * 0.5).norm() < 1e-12);
        assert!((&s.u_bar - &z * 0.5).norm() < 1e-12);
        assert!((s.j_value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_minimizer_set() {
        let a: DMatrix<f64> = dmatrix![0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        let s = solve_steady(&a, &b, &c, &dvector![0.0]).unwrap();
        assert!(s.x_bar.norm() < 1e-14 && s.u_bar.norm() < 1e-14);
        assert_eq!(s.kernel_dir.dim, 1);
        assert!((s.kernel_dir.basis[(0, 0)].abs() - 1.0).abs() < 1e-14);
        // nonzero target: x₂ is pinned to zero by the constraint
        let s = solve_steady(&a, &b, &c, &dvector![2.0]).unwrap();
        assert!(s.x_bar.norm() < 1e-12);
        assert!((s.j_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_kernel_matches_svd_on_double_integrator() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        let hs = hamiltonian_kernel_range(&a, &b, &c).unwrap();
        assert_eq!(hs.kernel.dim, 1);
        let ham = crate::riccati::build_hamiltonian(&a, &b, &c).unwrap();
        let oracle = null_space(&ham);
        assert!(subspace_gap(&oracle, &hs.kernel.basis) < 1e-12);
        assert!(subspace_gap(&range_space(&ham), &hs.range.basis) < 1e-12);
    }

    #[test]
    fn degenerate_hamiltonians() {
        let z = DMatrix::<f64>::zeros(2, 2);
        let hs = hamiltonian_kernel_range(&z, &z, &z).unwrap();
        assert_eq!(hs.kernel.dim, 4);
        assert_eq!(hs.range.dim, 0);
        let a = dmatrix![1.0, 2.0; -3.0, 1.0];
        let hs = hamiltonian_kernel_range(&a, &z, &z).unwrap();
        assert_eq!(hs.kernel.dim, 0);
        assert_eq!(hs.range.dim, 4);
    }

    #[test]
    fn steady_system_zero_target() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        let (ok, sol) = steady_system_solvable(&a, &b, &c, &dvector![0.0]).unwrap();
        assert!(ok);
        let (x, p) = sol.unwrap();
        assert!(x.norm() < 1e-14 && p.norm() < 1e-14);
    }
}
