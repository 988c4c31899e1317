//! Spectral, observability and stabilizability subspaces of `(A, B, C)`
//! together with the decision predicates built on them.
//!
//! Krylov spaces are assembled one spectral cluster at a time on top of a
//! modal decomposition. Stacking `[C; CA; …; CA^{n−1}]` globally mixes
//! columns scaled by `‖A‖^k`, which destroys the rank decision as soon as
//! the spectrum spreads over a few orders of magnitude (16 heat modes
//! already reach `‖A‖^15 ≈ 1e21`).

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    complement, complex_sigma_min, hstack, inclusion_defect, intersect, norm2, orth, projector,
    range_space_tol, sum_spaces, vstack, RANK_RTOL,
};
use crate::scalar::{lit, to_f64, Real};
use crate::schur::{invariant_subspace, modal_decomposition, Cluster};

/// Inclusion tolerance on projector defect norms.
pub const INCLUSION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralClass {
    /// `Re λ < −τ`
    Neg,
    /// `|Re λ| ≤ τ`
    Zero,
    /// `Re λ > τ`
    Pos,
    /// `Re λ ≥ −τ`
    NonNeg,
}

impl SpectralClass {
    pub fn contains<T: Real>(self, re: T, tau: T) -> bool {
        match self {
            SpectralClass::Neg => re < -tau,
            SpectralClass::Zero => re.abs() <= tau,
            SpectralClass::Pos => re > tau,
            SpectralClass::NonNeg => re >= -tau,
        }
    }
}

/// Subspace of `ℝⁿ` given by an orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct SubspaceBasis<T: Real> {
    pub dim: usize,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub basis: DMatrix<T>,
}

impl<T: Real> SubspaceBasis<T> {
    pub fn new(basis: DMatrix<T>) -> Self {
        Self {
            dim: basis.ncols(),
            basis,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, 0))
    }

    pub fn full(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn projector(&self) -> DMatrix<T> {
        projector(&self.basis)
    }

    pub fn is_trivial(&self) -> bool {
        self.dim == 0
    }
}

/// Eigenvalue classification tolerance `τ = 1e−8·max(1, ‖A‖₂)`.
pub fn eig_tol<T: Real>(a: &DMatrix<T>) -> T {
    lit::<T>(1e-8) * norm2(a).max(T::one())
}

fn check_square<T: Real>(a: &DMatrix<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "A must be square, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn check_input<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<usize> {
    let n = check_square(a)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "input matrix has {} rows, expected {}",
            b.nrows(),
            n
        )));
    }
    Ok(n)
}

fn check_output<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<usize> {
    let n = check_square(a)?;
    if c.ncols() != n {
        return Err(Error::Dimension(format!(
            "output matrix has {} columns, expected {}",
            c.ncols(),
            n
        )));
    }
    Ok(n)
}

/// Invariant subspace of the eigenvalues in `class`.
pub fn spectral_subspace<T: Real>(a: &DMatrix<T>, class: SpectralClass) -> Result<SubspaceBasis<T>> {
    check_square(a)?;
    let tau = eig_tol(a);
    let v = invariant_subspace(a, |c: &Cluster<T>| class.contains(c.center.re, tau))?;
    Ok(SubspaceBasis::new(v))
}

/// `Σ range(AⁱB)`.
pub fn controllable_space<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let n = check_input(a, b)?;
    if n == 0 || b.ncols() == 0 || b.amax() == T::zero() {
        return Ok(SubspaceBasis::zero(n));
    }
    let bnorm = norm2(b);
    let mut pieces = Vec::new();
    for mode in modal_decomposition(a)? {
        let d = mode.cluster.dim;
        let ai = &mode.left * a * &mode.right;
        let bi = &mode.left * b;
        // shifted Krylov sequence, rescaled so no column ever grows
        let shifted = &ai - DMatrix::identity(d, d) * mode.cluster.center.re;
        let nu = norm2(&shifted);
        let mut blocks = vec![bi.clone()];
        let mut cur = bi;
        for _ in 1..d {
            if nu <= T::default_epsilon() {
                break;
            }
            cur = &shifted * cur / nu;
            blocks.push(cur.clone());
        }
        let krylov = hstack(&blocks);
        let tol = lit::<T>(RANK_RTOL) * norm2(&mode.left).max(T::one()) * bnorm;
        let local = range_space_tol(&krylov, tol);
        if local.ncols() > 0 {
            pieces.push(&mode.right * local);
        }
    }
    if pieces.is_empty() {
        return Ok(SubspaceBasis::zero(n));
    }
    Ok(SubspaceBasis::new(orth(&hstack(&pieces))))
}

/// `NO(C, A) = ∩ ker(CAⁱ)`, the orthogonal complement of the controllable
/// space of `(Aᵀ, Cᵀ)`.
pub fn unobservable_space<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    check_output(a, c)?;
    let dual = controllable_space(&a.transpose(), &c.transpose())?;
    Ok(SubspaceBasis::new(complement(&dual.basis)))
}

/// `NO⁰⁺(C, A) = NO(C, A) ∩ 𝓛^{0,+}(A)`.
pub fn undetectable_space<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let no = unobservable_space(a, c)?;
    let l0p = spectral_subspace(a, SpectralClass::NonNeg)?;
    Ok(SubspaceBasis::new(intersect(&no.basis, &l0p.basis)))
}

/// `NO⁰(C, A) = NO(C, A) ∩ 𝓛⁰(A)`.
pub fn critical_unobservable_space<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<SubspaceBasis<T>> {
    let no = unobservable_space(a, c)?;
    let l0 = spectral_subspace(a, SpectralClass::Zero)?;
    Ok(SubspaceBasis::new(intersect(&no.basis, &l0.basis)))
}

/// Orthogonal splitting `ℝⁿ = W ⊕ NO⁰⁺` with `W = (NO⁰⁺)^⊥`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct DetectableProjections<T: Real> {
    pub undetectable: SubspaceBasis<T>,
    pub detectable: SubspaceBasis<T>,
    /// Orthogonal projector onto `W`.
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub d: DMatrix<T>,
    /// Orthogonal projector onto `NO⁰⁺`.
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub r: DMatrix<T>,
}

pub fn detectable_projections<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<DetectableProjections<T>> {
    let n = check_output(a, c)?;
    let undetectable = undetectable_space(a, c)?;
    let detectable = SubspaceBasis::new(complement(&undetectable.basis));
    let r = undetectable.projector();
    let d = DMatrix::identity(n, n) - &r;
    Ok(DetectableProjections {
        undetectable,
        detectable,
        d,
        r,
    })
}

/// `S(A, B) = Σ range(AⁱB) + 𝓛⁻(A)`.
pub fn stabilizable_subspace<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let ctrb = controllable_space(a, b)?;
    let neg = spectral_subspace(a, SpectralClass::Neg)?;
    Ok(SubspaceBasis::new(sum_spaces(&ctrb.basis, &neg.basis)))
}

/// `S(A, B) + NO⁰⁺(C, A) = ℝⁿ`, i.e. every mode that can neither be
/// stabilized nor left unstable unseen is absent. Decided on
/// `‖(I − P_{S+NO⁰⁺})·P_W‖₂`, which is returned as the defect.
///
/// The stricter `W ⊆ S` with `W = NO⁰⁺^⊥` implies this, and agrees with it
/// whenever `NO⁰⁺` is orthogonal to the uncontrollable unstable dynamics
/// (diagonal models); it is reported as [`orthogonal_inclusion_defect`].
pub fn is_c_stabilizable<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<(bool, T)> {
    check_input(a, b)?;
    let proj = detectable_projections(a, c)?;
    let s = stabilizable_subspace(a, b)?;
    let defect = c_stabilizability_defect(&proj, &s);
    Ok((defect <= lit::<T>(INCLUSION_TOL), defect))
}

fn c_stabilizability_defect<T: Real>(proj: &DetectableProjections<T>, s: &SubspaceBasis<T>) -> T {
    let reach = sum_spaces(&s.basis, &proj.undetectable.basis);
    inclusion_defect(&proj.detectable.basis, &reach)
}

/// `‖(I − P_S)·P_W‖₂`, the defect of `W ⊆ S(A, B)`.
pub fn orthogonal_inclusion_defect<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<T> {
    let proj = detectable_projections(a, c)?;
    let s = stabilizable_subspace(a, b)?;
    Ok(inclusion_defect(&proj.detectable.basis, &s.basis))
}

/// Rank test of `[A − λI; C]` at every eigenvalue `λ` with `|Re λ| ≤ τ`.
/// Returns the verdict and the failing eigenvalues (conjugate pairs listed
/// in full).
pub fn weak_hautus<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<(bool, Vec<Complex<T>>)> {
    let n = check_output(a, c)?;
    if n == 0 {
        return Ok((true, Vec::new()));
    }
    let tau = eig_tol(a);
    let s = crate::schur::RealSchur::new(a)?;
    let (_, clusters) = s.clusters(crate::schur::cluster_tol(norm2(a)));
    let mut failing = Vec::new();
    for cl in clusters.iter().filter(|cl| cl.center.re.abs() <= tau) {
        let lam = cl.center;
        let id = DMatrix::<T>::identity(n, n);
        let re = vstack(&[a - &id * lam.re, c.clone()]);
        let im = vstack(&[-&id * lam.im, DMatrix::zeros(c.nrows(), n)]);
        let smax = norm2(&re).max(norm2(&im)).max(T::one());
        if complex_sigma_min(&re, &im) <= lit::<T>(RANK_RTOL) * smax {
            failing.push(lam);
            if lam.im > T::zero() {
                failing.push(lam.conj());
            }
        }
    }
    Ok((failing.is_empty(), failing))
}

pub fn is_controllable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let n = check_input(a, b)?;
    Ok(controllable_space(a, b)?.dim == n)
}

/// `(A, B)` stabilizable iff `S(A, B) = ℝⁿ`.
pub fn is_stabilizable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let n = check_input(a, b)?;
    Ok(stabilizable_subspace(a, b)?.dim == n)
}

/// Restriction of `(DA, DB, C)` to `W`, in an orthonormal basis `U` of `W`:
/// `A_r = UᵀAU`, `B_r = UᵀB`, `C_r = CU`. For `y = Uᵀx` one has
/// `Cx = C_r y` because `C` vanishes on `NO⁰⁺`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct ReducedSystem<T: Real> {
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub basis: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub a: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub b: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub c: DMatrix<T>,
}

impl<T: Real> ReducedSystem<T> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

pub fn kalman_reduce<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<ReducedSystem<T>> {
    check_input(a, b)?;
    let proj = detectable_projections(a, c)?;
    let u = proj.detectable.basis;
    Ok(ReducedSystem {
        a: u.transpose() * a * &u,
        b: u.transpose() * b,
        c: c * &u,
        basis: u,
    })
}

/// Everything `subspace_lab` knows about a triple, ready for JSON output.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct SubspaceReport<T: Real> {
    pub n: usize,
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub eig_tol: T,
    #[serde(serialize_with = "crate::serde_util::complexes")]
    pub spectrum: Vec<Complex<T>>,
    pub stable: SubspaceBasis<T>,
    pub critical: SubspaceBasis<T>,
    pub unstable: SubspaceBasis<T>,
    pub controllable_space: SubspaceBasis<T>,
    pub unobservable: SubspaceBasis<T>,
    pub undetectable: SubspaceBasis<T>,
    pub critical_unobservable: SubspaceBasis<T>,
    pub detectable_space: SubspaceBasis<T>,
    pub stabilizable_space: SubspaceBasis<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub d: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub r: DMatrix<T>,
    pub controllable: bool,
    pub stabilizable: bool,
    pub detectable: bool,
    pub c_stabilizable: bool,
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub c_stabilizable_defect: T,
    /// Defect of the stricter `W ⊆ S(A, B)`.
    #[serde(serialize_with = "crate::serde_util::scalar")]
    pub orthogonal_inclusion_defect: T,
    pub weak_hautus: bool,
    #[serde(serialize_with = "crate::serde_util::complexes")]
    pub hautus_failing: Vec<Complex<T>>,
}

pub fn subspace_report<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<SubspaceReport<T>> {
    let n = check_input(a, b)?;
    check_output(a, c)?;
    let spectrum = crate::schur::RealSchur::new(a)?.eigenvalues();
    let stable = spectral_subspace(a, SpectralClass::Neg)?;
    let critical = spectral_subspace(a, SpectralClass::Zero)?;
    let unstable = spectral_subspace(a, SpectralClass::Pos)?;
    let ctrb = controllable_space(a, b)?;
    let unobservable = unobservable_space(a, c)?;
    let proj = detectable_projections(a, c)?;
    let critical_unobservable = critical_unobservable_space(a, c)?;
    let stab = SubspaceBasis::new(sum_spaces(&ctrb.basis, &stable.basis));
    let defect = c_stabilizability_defect(&proj, &stab);
    let orthogonal_defect = inclusion_defect(&proj.detectable.basis, &stab.basis);
    let (hautus, failing) = weak_hautus(a, c)?;
    Ok(SubspaceReport {
        n,
        eig_tol: eig_tol(a),
        spectrum,
        controllable: ctrb.dim == n,
        stabilizable: stab.dim == n,
        detectable: proj.undetectable.is_trivial(),
        c_stabilizable: defect <= lit::<T>(INCLUSION_TOL),
        c_stabilizable_defect: defect,
        orthogonal_inclusion_defect: orthogonal_defect,
        weak_hautus: hautus,
        hautus_failing: failing,
        stable,
        critical,
        unstable,
        controllable_space: ctrb,
        unobservable,
        undetectable: proj.undetectable,
        critical_unobservable,
        detectable_space: proj.detectable,
        stabilizable_space: stab,
        d: proj.d,
        r: proj.r,
    })
}

impl<T: Real> SubspaceReport<T> {
    /// Short human readable summary used in logs.
    pub fn summary(&self) -> String {
        format!(
            "dims −/0/+ = {}/{}/{}, NO = {}, NO0+ = {}, S = {}; controllable={}, C-stabilizable={} (defect {:.2e}), weak Hautus={}",
            self.stable.dim,
            self.critical.dim,
            self.unstable.dim,
            self.unobservable.dim,
            self.undetectable.dim,
            self.stabilizable_space.dim,
            self.controllable,
            self.c_stabilizable,
            to_f64(self.c_stabilizable_defect),
            self.weak_hautus
        )
    }
}
