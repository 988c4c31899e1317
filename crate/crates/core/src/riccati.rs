//! Hamiltonian matrix, antistrong solution of the algebraic Riccati equation
//! `ÊA + AᵀÊ − ÊBBᵀÊ + CᵀC = 0` and the velocity-turnpike projections.
//!
//! The solution is read off the graph of an `n`-dimensional invariant
//! subspace of `Ham` taken from an ordered Schur form: stable clusters
//! first, then critical clusters by ascending `|Im λ|`. Within a critical
//! cluster the Schur order is kept, so a Jordan chain contributes its
//! leading vectors.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{block2x2, hstack, norm2, null_space_tol, symmetrize};
use crate::scalar::{lit, tiny, to_f64, Real};
use crate::schur::{ordered_schur, RealSchur};
use crate::subspace::{
    critical_unobservable_space, eig_tol, is_stabilizable, spectral_subspace, weak_hautus,
    SpectralClass, SubspaceBasis,
};

/// Graph condition threshold for `X₁` in `Ê = X₂X₁⁻¹`.
const GRAPH_COND_MAX: f64 = 1e12;

/// `[[A, −BBᵀ], [−CᵀC, −Aᵀ]]`.
pub fn build_hamiltonian<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "inconsistent shapes A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let bb = b * b.transpose();
    let cc = c.transpose() * c;
    Ok(block2x2(a, &(-bb), &(-cc), &(-a.transpose())))
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct RiccatiResult<T: Real> {
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub e_hat: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub a_plus: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub ham: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub lambda: DMatrix<T>,
    /// `‖ÊA + AᵀÊ − ÊBBᵀÊ + CᵀC‖₂`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub residual: T,
    /// Residual divided by `(‖A‖ + ‖B‖²‖Ê‖ + ‖C‖²)(1 + ‖Ê‖)`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub relative_residual: T,
    /// Condition number of the graph block `X₁`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub graph_condition: T,
    /// Dimension of the critical subspace `𝓛⁰(Ham)`.
    pub critical_dim: usize,
    #[serde(serialize_with = "crate::serde_util::complexes")]
    pub ham_spectrum: Vec<Complex<T>>,
    #[serde(serialize_with = "crate::serde_util::complexes")]
    pub closed_loop_spectrum: Vec<Complex<T>>,
}

impl<T: Real> RiccatiResult<T> {
    pub fn n(&self) -> usize {
        self.e_hat.nrows()
    }
}

fn cond<T: Real>(m: &DMatrix<T>) -> T {
    let s = crate::linalg::singular_values(m);
    let smax = s.iter().copied().fold(T::zero(), T::max);
    let smin = s.iter().copied().fold(T::max_value().unwrap(), T::min);
    if smin == T::zero() {
        T::max_value().unwrap()
    } else {
        smax / smin
    }
}

pub fn are_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    e: &DMatrix<T>,
) -> DMatrix<T> {
    e * a + a.transpose() * e - e * b * b.transpose() * e + c.transpose() * c
}

/// Antistrong solution: symmetric `Ê ⪰ 0` with `Re σ(A − BBᵀÊ) ≤ 0`.
pub fn solve_are_antistrong<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<RiccatiResult<T>> {
    let ham = build_hamiltonian(a, b, c)?;
    let n = a.nrows();
    if !is_stabilizable(a, b)? {
        return Err(Error::Precondition("(A, B) is not stabilizable".into()));
    }
    let tau = eig_tol(&ham);
    // 0 stable, 1 critical (by |Im|), 2 unstable
    let (schur, clusters, assign) = ordered_schur(&ham, |cl| {
        let re = cl.center.re;
        if re < -tau {
            (0u8, T::zero())
        } else if re <= tau {
            (1u8, cl.center.im.abs())
        } else {
            (2u8, T::zero())
        }
    })?;
    let critical_dim = clusters
        .iter()
        .filter(|cl| cl.center.re.abs() <= tau)
        .map(|cl| cl.dim)
        .sum();
    // the first n columns must not cut through a 2×2 block
    let mut taken = 0;
    for (blk, &cl) in schur.blocks.iter().zip(&assign) {
        if taken >= n {
            break;
        }
        if clusters[cl].center.re > tau {
            return Err(Error::Degenerate(format!(
                "only {taken} of {n} Hamiltonian eigenvalues have Re ≤ τ"
            )));
        }
        taken += blk.size;
    }
    if taken != n {
        return Err(Error::Degenerate(
            "the n-dimensional selection splits a complex conjugate pair".into(),
        ));
    }
    let basis = schur.leading_basis(n);
    let x1 = basis.rows(0, n).into_owned();
    let x2 = basis.rows(n, n).into_owned();
    let graph_condition = cond(&x1);
    if !(to_f64(graph_condition) <= GRAPH_COND_MAX) {
        return Err(Error::Degenerate(format!(
            "invariant subspace is not a graph: cond(X₁) = {:e}",
            to_f64(graph_condition)
        )));
    }
    let x1t = x1.transpose();
    // Ê = X₂X₁⁻¹, solved as X₁ᵀÊᵀ = X₂ᵀ
    let et = x1t
        .full_piv_lu()
        .solve(&x2.transpose())
        .ok_or_else(|| Error::Degenerate("singular graph block".into()))?;
    let e_hat = symmetrize(&et.transpose());
    let a_plus = a - b * b.transpose() * &e_hat;
    let residual = norm2(&are_residual(a, b, c, &e_hat));
    let en = norm2(&e_hat);
    let bn = norm2(b);
    let scale = (norm2(a) + bn * bn * en + norm2(c).powi(2)).max(tiny::<T>()) * (T::one() + en);
    let id = DMatrix::<T>::identity(n, n);
    let lambda = block2x2(&id, &DMatrix::zeros(n, n), &(-&e_hat), &id);
    Ok(RiccatiResult {
        ham_spectrum: RealSchur::new(&ham)?.eigenvalues(),
        closed_loop_spectrum: RealSchur::new(&a_plus)?.eigenvalues(),
        relative_residual: residual / scale,
        residual,
        graph_condition,
        critical_dim,
        e_hat,
        a_plus,
        ham,
        lambda,
    })
}

/// `Λ Ham Λ⁻¹` with `Λ = [[I, 0], [−Ê, I]]` and the norm of its lower-left
/// block, which vanishes exactly when `Ê` solves the Riccati equation.
pub fn lambda_triangularize<T: Real>(res: &RiccatiResult<T>) -> (DMatrix<T>, T) {
    let n = res.n();
    let id = DMatrix::<T>::identity(n, n);
    let inv = block2x2(&id, &DMatrix::zeros(n, n), &res.e_hat, &id);
    let t = &res.lambda * &res.ham * inv;
    let defect = norm2(&t.view((n, 0), (n, n)).into_owned());
    (t, defect)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HautusEquivalence {
    pub critical_dim: usize,
    pub critical_trivial: bool,
    pub hautus: bool,
    pub agree: bool,
}

/// Compares `𝓛⁰(Ham) = {0}` with the weak Hautus test.
pub fn check_weak_hautus_equivalence<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<HautusEquivalence> {
    let ham = build_hamiltonian(a, b, c)?;
    if !is_stabilizable(a, b)? {
        return Err(Error::Precondition("(A, B) is not stabilizable".into()));
    }
    let critical_dim = spectral_subspace(&ham, SpectralClass::Zero)?.dim;
    let (hautus, _) = weak_hautus(a, c)?;
    let critical_trivial = critical_dim == 0;
    Ok(HautusEquivalence {
        critical_dim,
        critical_trivial,
        hautus,
        agree: critical_trivial == hautus,
    })
}

/// Oblique projectors for `ℝⁿ = NO⁰(C, A) ⊕ 𝓛⁻(A₊)`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct VelocityProjections<T: Real> {
    /// Projector onto `NO⁰(C, A)` along `𝓛⁻(A₊)`.
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub p1: DMatrix<T>,
    /// Projector onto `𝓛⁻(A₊)` along `NO⁰(C, A)`.
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub p2: DMatrix<T>,
    pub critical_unobservable: SubspaceBasis<T>,
    pub closed_loop_stable: SubspaceBasis<T>,
    /// `ker(A₊ᵀ)`.
    pub adjoint_kernel: SubspaceBasis<T>,
    /// `𝓛⁻(A₊ᵀ)`.
    pub adjoint_stable: SubspaceBasis<T>,
    /// Condition number of `[V₁ V₂]`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub condition: T,
}

/// Builds `P₁`, `P₂` from bases `V₁` of `NO⁰(C, A)` and `V₂` of `𝓛⁻(A₊)`
/// as `[V₁ V₂]·diag(I, 0)·[V₁ V₂]⁻¹`. Requires `NO⁰(C, A) ⊆ ker A`.
pub fn velocity_projections<T: Real>(
    a: &DMatrix<T>,
    _b: &DMatrix<T>,
    c: &DMatrix<T>,
    res: &RiccatiResult<T>,
) -> Result<VelocityProjections<T>> {
    let n = a.nrows();
    let no0 = critical_unobservable_space(a, c)?;
    let leak = norm2(&(a * &no0.basis));
    if leak > lit::<T>(1e-8) * norm2(a).max(T::one()) {
        return Err(Error::Precondition(format!(
            "NO⁰(C, A) is not contained in ker A (‖A·V‖ = {:e})",
            to_f64(leak)
        )));
    }
    let stable = spectral_subspace(&res.a_plus, SpectralClass::Neg)?;
    if no0.dim + stable.dim != n {
        return Err(Error::Precondition(format!(
            "NO⁰(C, A) (dim {}) and 𝓛⁻(A₊) (dim {}) do not split ℝ^{}",
            no0.dim, stable.dim, n
        )));
    }
    let m = hstack(&[no0.basis.clone(), stable.basis.clone()]);
    let condition = cond(&m);
    if !(to_f64(condition) <= GRAPH_COND_MAX) {
        return Err(Error::Conditioning {
            what: "direct sum NO⁰(C, A) ⊕ 𝓛⁻(A₊)",
            condition: to_f64(condition),
        });
    }
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("subspaces are not complementary".into()))?;
    let k = no0.dim;
    let p1 = m.columns(0, k) * minv.rows(0, k);
    let p2 = m.columns(k, n - k) * minv.rows(k, n - k);
    let apt = res.a_plus.transpose();
    let ker_tol = eig_tol(&apt);
    let adjoint_kernel = SubspaceBasis::new(null_space_tol(&apt, ker_tol));
    let adjoint_stable = spectral_subspace(&apt, SpectralClass::Neg)?;
    Ok(VelocityProjections {
        p1,
        p2,
        critical_unobservable: no0,
        closed_loop_stable: stable,
        adjoint_kernel,
        adjoint_stable,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn double_integrator() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0; 1.0],
            dmatrix![0.0, 1.0],
        )
    }

    #[test]
    fn hamiltonian_blocks() {
        let (a, b, c) = double_integrator();
        let h = build_hamiltonian(&a, &b, &c).unwrap();
        let expected = dmatrix![
            0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 0.0, -1.0;
            0.0, 0.0, 0.0, 0.0;
            0.0, -1.0, -1.0, 0.0
        ];
        assert_eq!(h, expected);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(build_hamiltonian(&z, &z, &z).unwrap(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn double_integrator_solution() {
        let (a, b, c) = double_integrator();
        let r = solve_are_antistrong(&a, &b, &c).unwrap();
        let expected = dmatrix![0.0, 0.0; 0.0, 1.0];
        assert!((&r.e_hat - expected).amax() < 1e-8, "{}", r.e_hat);
        let (_, defect) = lambda_triangularize(&r);
        assert!(defect < 1e-10);
        assert_eq!(r.critical_dim, 2);
    }

    #[test]
    fn hurwitz_unobserved_gives_zero() {
        let a = dmatrix![-1.0, 2.0; 0.0, -3.0];
        let b = dmatrix![1.0; 0.0];
        let c = DMatrix::zeros(1, 2);
        let r = solve_are_antistrong(&a, &b, &c).unwrap();
        assert!(r.e_hat.amax() < 1e-12);
    }

    #[test]
    fn unstabilizable_is_rejected() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let b = dmatrix![0.0; 1.0];
        let c = DMatrix::identity(2, 2);
        assert!(matches!(
            solve_are_antistrong(&a, &b, &c),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn skew_generator_without_observation() {
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let b = DMatrix::identity(2, 2);
        let c = DMatrix::zeros(1, 2);
        let eq = check_weak_hautus_equivalence(&a, &b, &c).unwrap();
        assert!(!eq.critical_trivial && !eq.hautus && eq.agree);
        let eq = check_weak_hautus_equivalence(&a, &b, &DMatrix::identity(2, 2)).unwrap();
        assert!(eq.critical_trivial && eq.hautus && eq.agree);
    }

    #[test]
    fn double_integrator_equivalence() {
        let (a, b, c) = double_integrator();
        let eq = check_weak_hautus_equivalence(&a, &b, &c).unwrap();
        assert_eq!(eq.critical_dim, 2);
        assert!(!eq.hautus && eq.agree);
    }

    #[test]
    fn double_integrator_projections() {
        let (a, b, c) = double_integrator();
        let r = solve_are_antistrong(&a, &b, &c).unwrap();
        let vp = velocity_projections(&a, &b, &c, &r).unwrap();
        let p1 = dmatrix![1.0, 1.0; 0.0, 0.0];
        let p2 = dmatrix![0.0, -1.0; 0.0, 1.0];
        assert!((&vp.p1 - p1).amax() < 1e-8);
        assert!((&vp.p2 - p2).amax() < 1e-8);
        assert_eq!(vp.adjoint_kernel.dim, 1);
        let k = vp.adjoint_kernel.basis.column(0);
        assert!((k[0] - k[1]).abs() < 1e-8);
    }

    #[test]
    fn detectable_system_has_trivial_first_projector() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![1.0, 0.0];
        let r = solve_are_antistrong(&a, &b, &c).unwrap();
        let vp = velocity_projections(&a, &b, &c, &r).unwrap();
        assert!(vp.p1.amax() < 1e-10);
        assert!((vp.p2 - DMatrix::identity(2, 2)).amax() < 1e-10);
    }
}
