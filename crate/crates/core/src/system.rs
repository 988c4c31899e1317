//! LQ problem instances and the Fourier-projected pointwise heat and wave
//! systems on an interval `(0, L)`.
//!
//! Eigenpairs of `−∂²ₓ` with Dirichlet conditions are explicit on an interval:
//! `φ_k(x) = √(2/L)·sin(kπx/L)` with eigenvalue `(kπ/L)²`, all simple.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Linear-quadratic problem: `ẋ = Ax + Bu`, cost `½∫ ‖u‖² + ‖Cx − z‖²`,
/// `x(0) = x0` and, for fixed-endpoint problems, `x(T) = x1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct SystemSpec<T: Real> {
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub a: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub b: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::mat")]
    pub c: DMatrix<T>,
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub z: DVector<T>,
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub x0: DVector<T>,
    #[serde(serialize_with = "crate::serde_util::opt_vector")]
    pub x1: Option<DVector<T>>,
}

impl<T: Real> SystemSpec<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        z: DVector<T>,
        x0: DVector<T>,
        x1: Option<DVector<T>>,
    ) -> Result<Self> {
        let spec = Self { a, b, c, z, x0, x1 };
        spec.validate()?;
        Ok(spec)
    }

    /// Problem with zero target, zero initial state and free endpoint.
    pub fn from_matrices(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        let p = c.nrows();
        Self::new(a, b, c, DVector::zeros(p), DVector::zeros(n), None)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}×{}",
                n,
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows, expected {}",
                self.b.nrows(),
                n
            )));
        }
        if self.c.ncols() != n {
            return Err(Error::Dimension(format!(
                "C has {} columns, expected {}",
                self.c.ncols(),
                n
            )));
        }
        if self.z.len() != self.c.nrows() {
            return Err(Error::Dimension(format!(
                "z has length {}, expected {}",
                self.z.len(),
                self.c.nrows()
            )));
        }
        if self.x0.len() != n {
            return Err(Error::Dimension(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                n
            )));
        }
        if let Some(x1) = &self.x1 {
            if x1.len() != n {
                return Err(Error::Dimension(format!(
                    "x1 has length {}, expected {}",
                    x1.len(),
                    n
                )));
            }
        }
        let checks: [(&'static str, bool); 5] = [
            ("A", self.a.iter().all(|v| v.is_finite())),
            ("B", self.b.iter().all(|v| v.is_finite())),
            ("C", self.c.iter().all(|v| v.is_finite())),
            ("z", self.z.iter().all(|v| v.is_finite())),
            ("x0", self.x0.iter().all(|v| v.is_finite())),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::NonFinite(name));
        }
        if let Some(x1) = &self.x1 {
            if !x1.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("x1"));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_x0(mut self, x0: DVector<T>) -> Result<Self> {
        self.x0 = x0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_x1(mut self, x1: Option<DVector<T>>) -> Result<Self> {
        self.x1 = x1;
        self.validate()?;
        Ok(self)
    }

    pub fn with_target(mut self, z: DVector<T>) -> Result<Self> {
        self.z = z;
        self.validate()?;
        Ok(self)
    }

    pub fn is_fixed_endpoint(&self) -> bool {
        self.x1.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeKind {
    Heat,
    Wave,
}

/// Pointwise-controlled, pointwise-observed PDE on `(0, length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec<T: Real> {
    pub kind: PdeKind,
    /// Number of retained Fourier modes `N`.
    pub modes: usize,
    pub length: T,
    /// Constant potential (heat only).
    pub potential: T,
    pub x_con: T,
    pub x_obs: T,
    /// Scalar running target.
    pub target: T,
    /// Initial state; defaults to all ones.
    pub x0: Option<Vec<T>>,
}

impl<T: Real> PdeSpec<T> {
    pub fn heat(modes: usize, length: T, potential: T, x_con: T, x_obs: T) -> Self {
        Self {
            kind: PdeKind::Heat,
            modes,
            length,
            potential,
            x_con,
            x_obs,
            target: T::zero(),
            x0: None,
        }
    }

    pub fn wave(modes: usize, length: T, x_con: T, x_obs: T) -> Self {
        Self {
            kind: PdeKind::Wave,
            modes,
            length,
            potential: T::zero(),
            x_con,
            x_obs,
            target: T::zero(),
            x0: None,
        }
    }

    pub fn with_target(mut self, z: T) -> Self {
        self.target = z;
        self
    }

    /// Heat configuration of the reference simulations: `(0, 10)`, 16 modes,
    /// `c = −(2π/10)² − 1`, control at `L/3`, observation at `L/2`, `z = 1`.
    pub fn paper_heat() -> Self {
        let l = lit::<T>(10.0);
        let two_pi_l = lit::<T>(2.0) * T::pi() / l;
        Self::heat(
            16,
            l,
            -(two_pi_l * two_pi_l) - T::one(),
            l / lit::<T>(3.0),
            l / lit::<T>(2.0),
        )
        .with_target(T::one())
    }

    /// Wave configuration of the reference simulations: `(0, 10)`, 16 modes,
    /// control and observation at `L/2`, `z = 1`.
    pub fn paper_wave() -> Self {
        let l = lit::<T>(10.0);
        let mid = l / lit::<T>(2.0);
        Self::wave(16, l, mid, mid).with_target(T::one())
    }

    fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::InvalidSpec("mode count N must be at least 1".into()));
        }
        if !(self.length > T::zero()) || !self.length.is_finite() {
            return Err(Error::InvalidSpec("interval length must be positive".into()));
        }
        for (name, pt) in [("x_con", self.x_con), ("x_obs", self.x_obs)] {
            if !(pt > T::zero() && pt < self.length) {
                return Err(Error::InvalidSpec(format!(
                    "{name} = {pt} must lie strictly inside (0, {})",
                    self.length
                )));
            }
        }
        if !self.potential.is_finite() || !self.target.is_finite() {
            return Err(Error::NonFinite("PDE coefficients"));
        }
        Ok(())
    }

    /// `φ_k(x) = √(2/L)·sin(kπx/L)`, `k ≥ 1`.
    pub fn eigenfunction(&self, k: usize, x: T) -> T {
        eigenfunction(k, self.length, x)
    }

    /// Dirichlet Laplacian eigenvalue `(kπ/L)²`.
    pub fn laplace_eigenvalue(&self, k: usize) -> T {
        let w = from_usize::<T>(k) * T::pi() / self.length;
        w * w
    }

    /// Heat operator eigenvalue `λ_k = (kπ/L)² + c`.
    pub fn heat_eigenvalue(&self, k: usize) -> T {
        self.laplace_eigenvalue(k) + self.potential
    }

    /// Threshold below which an eigenfunction value counts as zero.
    pub fn zero_tol(&self) -> T {
        lit::<T>(1e-9) * (lit::<T>(2.0) / self.length).sqrt()
    }

    fn initial_state(&self, dim: usize) -> Result<DVector<T>> {
        match &self.x0 {
            Some(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
            Some(v) => Err(Error::Dimension(format!(
                "x0 has length {}, expected {}",
                v.len(),
                dim
            ))),
            None => Ok(DVector::from_element(dim, T::one())),
        }
    }
}

pub fn eigenfunction<T: Real>(k: usize, length: T, x: T) -> T {
    (lit::<T>(2.0) / length).sqrt() * (from_usize::<T>(k) * T::pi() * x / length).sin()
}

/// Uniform time grid `t_k = k·T/steps`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T: Real> {
    pub horizon: T,
    pub steps: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 time steps, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn step(&self) -> T {
        self.horizon / from_usize::<T>(self.steps)
    }

    pub fn times(&self) -> Vec<T> {
        let h = self.step();
        (0..=self.steps).map(|k| from_usize::<T>(k) * h).collect()
    }
}

/// `A = diag(−λ_k)`, `B_k = φ_k(x_con)`, `C = [φ_1(x_obs) … φ_N(x_obs)]`.
pub fn build_heat<T: Real>(spec: &PdeSpec<T>) -> Result<SystemSpec<T>> {
    if spec.kind != PdeKind::Heat {
        return Err(Error::InvalidSpec("build_heat needs a heat specification".into()));
    }
    spec.validate()?;
    let n = spec.modes;
    let a = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| -spec.heat_eigenvalue(i + 1)));
    let b = DMatrix::from_fn(n, 1, |i, _| spec.eigenfunction(i + 1, spec.x_con));
    let c = DMatrix::from_fn(1, n, |_, j| spec.eigenfunction(j + 1, spec.x_obs));
    let z = DVector::from_element(1, spec.target);
    let x0 = spec.initial_state(n)?;
    SystemSpec::new(a, b, c, z, x0, None)
}

/// State `(y, ẏ)` in modal coordinates: `A = [[0, I], [−D, 0]]` with
/// `D = diag((kπ/L)²)`, `B = [0; φ(x_con)]`, `C = [φ(x_obs), 0]`.
pub fn build_wave<T: Real>(spec: &PdeSpec<T>) -> Result<SystemSpec<T>> {
    if spec.kind != PdeKind::Wave {
        return Err(Error::InvalidSpec("build_wave needs a wave specification".into()));
    }
    spec.validate()?;
    let n = spec.modes;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, 1);
    let mut c = DMatrix::zeros(1, 2 * n);
    for k in 0..n {
        a[(k, n + k)] = T::one();
        a[(n + k, k)] = -spec.laplace_eigenvalue(k + 1);
        b[(n + k, 0)] = spec.eigenfunction(k + 1, spec.x_con);
        c[(0, k)] = spec.eigenfunction(k + 1, spec.x_obs);
    }
    let z = DVector::from_element(1, spec.target);
    let x0 = spec.initial_state(2 * n)?;
    SystemSpec::new(a, b, c, z, x0, None)
}

pub fn build<T: Real>(spec: &PdeSpec<T>) -> Result<SystemSpec<T>> {
    match spec.kind {
        PdeKind::Heat => build_heat(spec),
        PdeKind::Wave => build_wave(spec),
    }
}

/// Outcome of a closed-form turnpike predicate; `witnesses` lists the
/// (1-based) mode indices violating the condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredicateVerdict {
    pub holds: bool,
    pub witnesses: Vec<usize>,
}

/// Mode-wise predicate on raw eigenfunction values: mode `i` violates when
/// it is observed, not controlled and (if `growth_ok` is given) not strictly
/// stable. Values with `|v| ≤ zero_tol` count as zero.
pub fn predicate_from_values<T: Real>(
    phi_obs: &[T],
    phi_con: &[T],
    decay_ok: Option<&[bool]>,
    zero_tol: T,
) -> PredicateVerdict {
    let witnesses: Vec<usize> = phi_obs
        .iter()
        .zip(phi_con)
        .enumerate()
        .filter(|(i, (o, c))| {
            let observed = o.abs() > zero_tol;
            let controlled = c.abs() > zero_tol;
            let stable = decay_ok.map(|d| d[*i]).unwrap_or(false);
            observed && !controlled && !stable
        })
        .map(|(i, _)| i + 1)
        .collect();
    PredicateVerdict {
        holds: witnesses.is_empty(),
        witnesses,
    }
}

/// `C_N`-turnpike holds iff every observed mode is controlled or has `λ_i > 0`.
pub fn heat_turnpike_predicate<T: Real>(spec: &PdeSpec<T>) -> Result<PredicateVerdict> {
    if spec.kind != PdeKind::Heat {
        return Err(Error::InvalidSpec("heat predicate needs a heat specification".into()));
    }
    spec.validate()?;
    let n = spec.modes;
    let obs: Vec<T> = (1..=n).map(|k| spec.eigenfunction(k, spec.x_obs)).collect();
    let con: Vec<T> = (1..=n).map(|k| spec.eigenfunction(k, spec.x_con)).collect();
    let stable: Vec<bool> = (1..=n).map(|k| spec.heat_eigenvalue(k) > T::zero()).collect();
    Ok(predicate_from_values(&obs, &con, Some(&stable), spec.zero_tol()))
}

/// `C_N`-turnpike holds iff every observed mode is controlled.
pub fn wave_turnpike_predicate<T: Real>(spec: &PdeSpec<T>) -> Result<PredicateVerdict> {
    if spec.kind != PdeKind::Wave {
        return Err(Error::InvalidSpec("wave predicate needs a wave specification".into()));
    }
    spec.validate()?;
    let n = spec.modes;
    let obs: Vec<T> = (1..=n).map(|k| spec.eigenfunction(k, spec.x_obs)).collect();
    let con: Vec<T> = (1..=n).map(|k| spec.eigenfunction(k, spec.x_con)).collect();
    Ok(predicate_from_values(&obs, &con, None, spec.zero_tol()))
}

pub fn turnpike_predicate<T: Real>(spec: &PdeSpec<T>) -> Result<PredicateVerdict> {
    match spec.kind {
        PdeKind::Heat => heat_turnpike_predicate(spec),
        PdeKind::Wave => wave_turnpike_predicate(spec),
    }
}
