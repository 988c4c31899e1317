//! Finite-horizon optimality systems
//!
//! ```text
//! ẋ = Ax − BBᵀp,   ṗ = −CᵀCx − Aᵀp + Cᵀz,   u = −Bᵀp
//! ```
//!
//! with `x(0) = x0` and either `p(T) = 0` (free endpoint) or `x(T) = x1`
//! (fixed endpoint). Both solvers return the exact solution of the implicit
//! midpoint discretization of this two-point problem.

mod cg;
mod steering;

pub use cg::{solve_cg_oracle, CgDiagnostics, CgOptions};
pub use steering::{steering_control, SteeringControl};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hstack, norm2};
use crate::riccati::{build_hamiltonian, solve_are_antistrong, RiccatiResult};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::subspace::is_controllable;
use crate::system::{GridSpec, SystemSpec};

/// State norm beyond which an integration is declared blown up.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Shooting matrices with a larger condition number are rejected.
pub const SHOOTING_COND_MAX: f64 = 1e12;

/// Sampled solution on the uniform grid; row `k` holds node `t_k`.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub u: DMatrix<T>,
    pub x: DMatrix<T>,
    pub p: DMatrix<T>,
    /// `q = p − Êx`, filled by the fixed-endpoint solver.
    pub q: Option<DMatrix<T>>,
    pub horizon: T,
    /// Largest relative defect of the discrete optimality system.
    pub residual: T,
    /// `‖p(T)‖` for free endpoint, `‖x(T) − x1‖` for fixed endpoint,
    /// plus `‖x(0) − x0‖`.
    pub boundary_error: T,
    pub solver_tag: String,
    pub cg: Option<CgDiagnostics>,
}

/// Scalar diagnostics of a trajectory, for JSON summaries.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub solver: String,
    pub horizon: f64,
    pub steps: usize,
    pub cost: f64,
    pub residual: f64,
    pub boundary_error: f64,
    pub control_consistency: f64,
    pub max_adjoint_norm: f64,
    pub final_state: Vec<f64>,
}

fn row<T: Real>(m: &DMatrix<T>, k: usize) -> DVector<T> {
    m.row(k).transpose()
}

impl<T: Real> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.u.ncols()
    }

    pub fn step(&self) -> T {
        self.horizon / from_usize::<T>(self.steps())
    }

    pub fn x_at(&self, k: usize) -> DVector<T> {
        row(&self.x, k)
    }

    pub fn u_at(&self, k: usize) -> DVector<T> {
        row(&self.u, k)
    }

    pub fn p_at(&self, k: usize) -> DVector<T> {
        row(&self.p, k)
    }

    /// Index of the node nearest to time `t`.
    pub fn node_at(&self, t: T) -> usize {
        let k = (t / self.step()).round();
        to_f64(k).clamp(0.0, self.steps() as f64) as usize
    }

    /// Trapezoid rule for `½∫₀ᵀ ‖u‖² + ‖Cx − z‖² dt`.
    pub fn cost(&self, c: &DMatrix<T>, z: &DVector<T>) -> T {
        let h = self.step();
        let half = lit::<T>(0.5);
        let mut acc = T::zero();
        for k in 0..=self.steps() {
            let w = if k == 0 || k == self.steps() { half } else { T::one() };
            let e = c * self.x_at(k) - z;
            acc += w * (self.u_at(k).norm_squared() + e.norm_squared());
        }
        half * h * acc
    }

    /// `max_k ‖u_k + Bᵀp_k‖`.
    pub fn control_consistency(&self, b: &DMatrix<T>) -> T {
        let r = &self.u + &self.p * b;
        (0..r.nrows()).map(|k| r.row(k).norm()).fold(T::zero(), T::max)
    }

    pub fn max_adjoint_norm(&self) -> T {
        (0..self.p.nrows()).map(|k| self.p.row(k).norm()).fold(T::zero(), T::max)
    }

    /// Largest central-difference defect
    /// `‖(y_{k+1} − y_{k−1})/(2h) − (Hy_k + f)‖` over interior nodes, for
    /// `y = (x, p)`. Second order in `h` for smooth solutions.
    pub fn node_defect(&self, sys: &SystemSpec<T>) -> Result<T> {
        let ham = build_hamiltonian(&sys.a, &sys.b, &sys.c)?;
        let f = forcing(sys);
        let h = self.step();
        let two_h = h + h;
        let y = hstack(&[self.x.clone(), self.p.clone()]);
        let mut worst = T::zero();
        for k in 1..self.steps() {
            let d = (row(&y, k + 1) - row(&y, k - 1)) / two_h - (&ham * row(&y, k) + &f);
            worst = worst.max(d.norm());
        }
        Ok(worst)
    }

    pub fn summary(&self, sys: &SystemSpec<T>) -> TrajectorySummary {
        TrajectorySummary {
            solver: self.solver_tag.clone(),
            horizon: to_f64(self.horizon),
            steps: self.steps(),
            cost: to_f64(self.cost(&sys.c, &sys.z)),
            residual: to_f64(self.residual),
            boundary_error: to_f64(self.boundary_error),
            control_consistency: to_f64(self.control_consistency(&sys.b)),
            max_adjoint_norm: to_f64(self.max_adjoint_norm()),
            final_state: self.x_at(self.steps()).iter().map(|&v| to_f64(v)).collect(),
        }
    }

    /// CSV with header `t,u_1..u_m,x_1..x_n,p_1..p_n`; 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.m()).map(|i| format!("u_{i}")));
        header.extend((1..=self.n()).map(|i| format!("x_{i}")));
        header.extend((1..=self.n()).map(|i| format!("p_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..=self.steps() {
            let mut line = fmt17(self.times[k]);
            for m in [&self.u, &self.x, &self.p] {
                for j in 0..m.ncols() {
                    line.push(',');
                    line.push_str(&fmt17(m[(k, j)]));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Decimal float with 17 significant digits.
pub fn fmt17<T: Real>(v: T) -> String {
    format!("{:.16e}", to_f64(v))
}

/// `f = (0, Cᵀz)`.
fn forcing<T: Real>(sys: &SystemSpec<T>) -> DVector<T> {
    let n = sys.n();
    let mut f = DVector::zeros(2 * n);
    f.rows_mut(n, n).copy_from(&(sys.c.transpose() * &sys.z));
    f
}

/// One implicit midpoint step for `ẏ = Hy + f`: `y⁺ = My + g`.
struct MidpointMap<T: Real> {
    m: DMatrix<T>,
    g: DVector<T>,
}

impl<T: Real> MidpointMap<T> {
    fn new(h: T, ham: &DMatrix<T>, f: &DVector<T>) -> Result<Self> {
        let k = ham.nrows();
        let half = h * lit::<T>(0.5);
        let id = DMatrix::<T>::identity(k, k);
        let lu = (&id - ham * half).full_piv_lu();
        let m = lu
            .solve(&(&id + ham * half))
            .ok_or_else(|| Error::Degenerate("implicit midpoint matrix is singular".into()))?;
        let g = lu
            .solve(&(f * h))
            .ok_or_else(|| Error::Degenerate("implicit midpoint matrix is singular".into()))?;
        Ok(Self { m, g })
    }

    fn block(&self, i: usize, j: usize, n: usize) -> DMatrix<T> {
        self.m.view((i * n, j * n), (n, n)).into_owned()
    }

    fn part(&self, i: usize, n: usize) -> DVector<T> {
        self.g.rows(i * n, n).into_owned()
    }
}

/// Largest relative defect `‖(I − hH/2)y_{k+1} − (I + hH/2)y_k − hf‖`.
fn midpoint_residual<T: Real>(
    h: T,
    ham: &DMatrix<T>,
    f: &DVector<T>,
    x: &DMatrix<T>,
    p: &DMatrix<T>,
) -> T {
    let half = h * lit::<T>(0.5);
    let y = hstack(&[x.clone(), p.clone()]);
    let mut worst = T::zero();
    for k in 0..y.nrows() - 1 {
        let y0 = row(&y, k);
        let y1 = row(&y, k + 1);
        let mid = (&y0 + &y1) * lit::<T>(0.5);
        let d = &y1 - &y0 - (ham * mid * (half + half) + f * h);
        let scale = T::one() + y0.norm().max(y1.norm());
        worst = worst.max(d.norm() / scale);
    }
    worst
}

fn check_guard<T: Real>(x: &DVector<T>, t: T) -> Result<()> {
    let norm = x.norm();
    if !(to_f64(norm) <= OVERFLOW_GUARD) {
        let mode = x
            .iter()
            .enumerate()
            .fold((0, T::zero()), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
            .0;
        return Err(Error::BlowUp {
            time: to_f64(t),
            norm: to_f64(norm),
            mode: mode + 1,
        });
    }
    Ok(())
}

/// Free endpoint `p(T) = 0`. The discrete problem is swept backward with
/// the exact discrete Riccati recursion `p_k = P_k x_k + s_k` of the
/// midpoint map, then integrated forward.
pub fn solve_free_endpoint<T: Real>(sys: &SystemSpec<T>, grid: &GridSpec<T>) -> Result<Trajectory<T>> {
    sys.validate()?;
    if sys.is_fixed_endpoint() {
        return Err(Error::InvalidSpec(
            "free-endpoint solver called with a terminal state".into(),
        ));
    }
    let grid = GridSpec::new(grid.horizon, grid.steps)?;
    let n = sys.n();
    let steps = grid.steps;
    let h = grid.step();
    let ham = build_hamiltonian(&sys.a, &sys.b, &sys.c)?;
    let f = forcing(sys);
    let map = MidpointMap::new(h, &ham, &f)?;
    let (m11, m12, m21, m22) = (map.block(0, 0, n), map.block(0, 1, n), map.block(1, 0, n), map.block(1, 1, n));
    let (g1, g2) = (map.part(0, n), map.part(1, n));

    let mut gains: Vec<DMatrix<T>> = vec![DMatrix::zeros(n, n); steps + 1];
    let mut offsets: Vec<DVector<T>> = vec![DVector::zeros(n); steps + 1];
    for k in (0..steps).rev() {
        let pn = &gains[k + 1];
        let s = &m22 - pn * &m12;
        let lu = s.full_piv_lu();
        let rhs_p = pn * &m11 - &m21;
        let rhs_s = pn * &g1 + &offsets[k + 1] - &g2;
        let pk = lu
            .solve(&rhs_p)
            .ok_or_else(|| Error::Degenerate("discrete Riccati sweep hit a singular step".into()))?;
        let sk = lu
            .solve(&rhs_s)
            .ok_or_else(|| Error::Degenerate("discrete Riccati sweep hit a singular step".into()))?;
        if !crate::linalg::is_finite(&pk) {
            return Err(Error::NonFinite("Riccati sweep"));
        }
        gains[k] = pk;
        offsets[k] = sk;
    }

    let times = grid.times();
    let mut x = DMatrix::zeros(steps + 1, n);
    let mut p = DMatrix::zeros(steps + 1, n);
    let mut xk = sys.x0.clone();
    for k in 0..=steps {
        check_guard(&xk, times[k])?;
        let pk = &gains[k] * &xk + &offsets[k];
        x.set_row(k, &xk.transpose());
        p.set_row(k, &pk.transpose());
        if k < steps {
            xk = &m11 * &xk + &m12 * &pk + &g1;
        }
    }
    let u = -(&p * &sys.b);
    let residual = midpoint_residual(h, &ham, &f, &x, &p);
    let boundary_error = row(&p, steps).norm() + (row(&x, 0) - &sys.x0).norm();
    Ok(Trajectory {
        times,
        u,
        x,
        p,
        q: None,
        horizon: grid.horizon,
        residual,
        boundary_error,
        solver_tag: "free-endpoint/riccati-sweep".into(),
        cg: None,
    })
}

/// Fixed endpoint `x(T) = x1`, solved in the variables `(x, q = p − Êx)`
/// where the optimality system is block triangular:
///
/// ```text
/// ẋ = A₊x − BBᵀq,   q̇ = −A₊ᵀq + Cᵀz.
/// ```
///
/// `q` is swept backward from the unknown `q(T)` and `x` forward from `x0`;
/// both only see the `Re ≤ 0` spectrum of `A₊`. The affine map
/// `q(T) ↦ x(T)` is assembled by matrix propagation and inverted.
pub fn solve_fixed_endpoint<T: Real>(sys: &SystemSpec<T>, grid: &GridSpec<T>) -> Result<Trajectory<T>> {
    sys.validate()?;
    if !is_controllable(&sys.a, &sys.b)? {
        return Err(Error::Precondition(
            "fixed-endpoint problem needs (A, B) controllable".into(),
        ));
    }
    let ric = solve_are_antistrong(&sys.a, &sys.b, &sys.c)?;
    solve_fixed_endpoint_with(sys, grid, &ric)
}

/// As [`solve_fixed_endpoint`] with a precomputed Riccati solution.
pub fn solve_fixed_endpoint_with<T: Real>(
    sys: &SystemSpec<T>,
    grid: &GridSpec<T>,
    ric: &RiccatiResult<T>,
) -> Result<Trajectory<T>> {
    sys.validate()?;
    let x1 = sys
        .x1
        .clone()
        .ok_or_else(|| Error::InvalidSpec("fixed-endpoint solver needs x1".into()))?;
    let grid = GridSpec::new(grid.horizon, grid.steps)?;
    let n = sys.n();
    let steps = grid.steps;
    let h = grid.step();
    let bb = &sys.b * sys.b.transpose();
    let ap = &ric.a_plus;
    let tri = crate::linalg::block2x2(ap, &(-&bb), &DMatrix::zeros(n, n), &(-ap.transpose()));
    let f = forcing(sys);
    let map = MidpointMap::new(h, &tri, &f)?;
    let (m11, m12, m22) = (map.block(0, 0, n), map.block(0, 1, n), map.block(1, 1, n));
    let (g1, g2) = (map.part(0, n), map.part(1, n));
    // q_k = R (q_{k+1} − g2)
    let r = m22
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("backward adjoint step is singular".into()))?;

    // q_k = Φ_k v + ψ_k with v = q_N
    let mut phi: Vec<DMatrix<T>> = vec![DMatrix::identity(n, n); steps + 1];
    let mut psi: Vec<DVector<T>> = vec![DVector::zeros(n); steps + 1];
    for k in (0..steps).rev() {
        phi[k] = &r * &phi[k + 1];
        psi[k] = &r * (&psi[k + 1] - &g2);
    }
    // x_N = G v + ξ_N
    let mut gmat = DMatrix::<T>::zeros(n, n);
    let mut xi = sys.x0.clone();
    for k in 0..steps {
        gmat = &m11 * &gmat + &m12 * &phi[k];
        xi = &m11 * &xi + &m12 * &psi[k] + &g1;
    }
    let sv = crate::linalg::singular_values(&gmat);
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let smin = sv.iter().copied().fold(T::max_value().unwrap(), T::min);
    let condition = if smin > T::zero() { to_f64(smax / smin) } else { f64::INFINITY };
    if !(condition <= SHOOTING_COND_MAX) {
        return Err(Error::Conditioning {
            what: "fixed-endpoint shooting matrix",
            condition,
        });
    }
    let lu = gmat.full_piv_lu();
    let mut v = lu
        .solve(&(&x1 - &xi))
        .ok_or_else(|| Error::Degenerate("shooting matrix is singular".into()))?;

    let times = grid.times();
    let forward = |v: &DVector<T>| -> Result<(DMatrix<T>, DMatrix<T>)> {
        let mut x = DMatrix::zeros(steps + 1, n);
        let mut q = DMatrix::zeros(steps + 1, n);
        let mut xk = sys.x0.clone();
        for k in 0..=steps {
            check_guard(&xk, times[k])?;
            let qk = &phi[k] * v + &psi[k];
            x.set_row(k, &xk.transpose());
            q.set_row(k, &qk.transpose());
            if k < steps {
                xk = &m11 * &xk + &m12 * &qk + &g1;
            }
        }
        Ok((x, q))
    };
    let (mut x, mut q) = forward(&v)?;
    // one round of refinement against accumulated rounding
    let miss = &x1 - row(&x, steps);
    if miss.norm() > T::zero() {
        if let Some(dv) = lu.solve(&miss) {
            let v2 = &v + dv;
            let (x2, q2) = forward(&v2)?;
            if (&x1 - row(&x2, steps)).norm() < miss.norm() {
                v = v2;
                x = x2;
                q = q2;
            }
        }
    }
    let _ = v;
    let p = &q + &x * &ric.e_hat;
    let u = -(&p * &sys.b);
    let ham = build_hamiltonian(&sys.a, &sys.b, &sys.c)?;
    let residual = midpoint_residual(h, &ham, &f, &x, &p);
    let boundary_error = (row(&x, steps) - &x1).norm() + (row(&x, 0) - &sys.x0).norm();
    Ok(Trajectory {
        times,
        u,
        x,
        p,
        q: Some(q),
        horizon: grid.horizon,
        residual,
        boundary_error,
        solver_tag: "fixed-endpoint/decoupled-shooting".into(),
        cg: None,
    })
}

/// Dispatches on the presence of a terminal state.
pub fn solve<T: Real>(sys: &SystemSpec<T>, grid: &GridSpec<T>) -> Result<Trajectory<T>> {
    if sys.is_fixed_endpoint() {
        solve_fixed_endpoint(sys, grid)
    } else {
        solve_free_endpoint(sys, grid)
    }
}

/// Maximum nodewise control difference relative to the largest control
/// norm of `reference`.
pub fn relative_control_difference<T: Real>(reference: &Trajectory<T>, other: &Trajectory<T>) -> T {
    let d = &reference.u - &other.u;
    let num = (0..d.nrows()).map(|k| d.row(k).norm()).fold(T::zero(), T::max);
    let den = (0..reference.u.nrows())
        .map(|k| reference.u.row(k).norm())
        .fold(T::zero(), T::max);
    if den == T::zero() {
        num
    } else {
        num / den
    }
}

/// Spectral norm helper re-exported for trajectory consumers.
pub fn matrix_norm<T: Real>(m: &DMatrix<T>) -> T {
    norm2(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_system(x1: Option<f64>) -> SystemSpec<f64> {
        SystemSpec::new(
            dmatrix![-1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dvector![0.0],
            dvector![1.0],
            x1.map(|v| dvector![v]),
        )
        .unwrap()
    }

    /// Closed form of the scalar free-endpoint problem `ẋ = −x + u`,
    /// cost `½∫u² + x²`. With `σ = √2`, the Hamiltonian flow gives
    /// `x(t) = cosh(σ(T−t))·σ − sinh(σ(T−t))·(−1)` up to normalization:
    /// `x(t) = [σ cosh(σ(T−t)) + sinh(σ(T−t))] / [σ cosh(σT) + sinh(σT)]`.
    fn scalar_closed_form(t: f64, horizon: f64) -> (f64, f64) {
        let s = 2f64.sqrt();
        let tau = horizon - t;
        let den = s * (s * horizon).cosh() + (s * horizon).sinh();
        let x = (s * (s * tau).cosh() + (s * tau).sinh()) / den;
        // p = −ẋ − x, from ẋ = −x − p
        let xdot = -(s * s * (s * tau).sinh() + s * (s * tau).cosh()) / den;
        (x, -xdot - x)
    }

    #[test]
    fn scalar_free_endpoint_matches_closed_form() {
        let sys = scalar_system(None);
        let grid = GridSpec::new(5.0, 4000).unwrap();
        let tr = solve_free_endpoint(&sys, &grid).unwrap();
        for k in (0..=4000).step_by(250) {
            let (x, p) = scalar_closed_form(tr.times[k], 5.0);
            assert!((tr.x[(k, 0)] - x).abs() < 1e-6, "x at node {k}");
            assert!((tr.p[(k, 0)] - p).abs() < 1e-6, "p at node {k}");
        }
        assert!(tr.residual < 1e-12);
        assert!(tr.boundary_error < 1e-14);
        assert!(tr.control_consistency(&sys.b) < 1e-14);
    }

    #[test]
    fn steady_initial_state_stays_put() {
        let a = dmatrix![-1.0, 0.5; 0.0, -2.0];
        let b = dmatrix![1.0; 1.0];
        let c = dmatrix![1.0, 0.0];
        let z = dvector![1.0];
        let st = crate::steady::solve_steady(&a, &b, &c, &z).unwrap();
        let sys = SystemSpec::new(a, b, c, z, st.x_bar.clone(), None).unwrap();
        let tr = solve_free_endpoint(&sys, &GridSpec::new(40.0, 4000).unwrap()).unwrap();
        let mid = tr.x_at(2000);
        assert!((mid - &st.x_bar).norm() < 1e-6);
    }

    #[test]
    fn fixed_endpoint_meets_both_ends() {
        let sys = scalar_system(Some(2.0));
        let tr = solve_fixed_endpoint(&sys, &GridSpec::new(10.0, 2000).unwrap()).unwrap();
        assert!((tr.x[(2000, 0)] - 2.0).abs() < 1e-10);
        assert!(tr.residual < 1e-10);
        let q = tr.q.as_ref().unwrap();
        assert_eq!(q.nrows(), 2001);
    }

    #[test]
    fn fixed_endpoint_requires_controllability() {
        let sys = SystemSpec::new(
            dmatrix![1.0, 0.0; 0.0, -1.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 1.0],
            dvector![0.0],
            dvector![1.0, 1.0],
            Some(dvector![0.0, 0.0]),
        )
        .unwrap();
        assert!(matches!(
            solve_fixed_endpoint(&sys, &GridSpec::new(1.0, 10).unwrap()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn unstable_uncontrolled_mode_blows_up() {
        let sys = SystemSpec::new(
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
            dvector![0.0],
            dvector![1.0],
            None,
        )
        .unwrap();
        let err = solve_free_endpoint(&sys, &GridSpec::new(40.0, 400).unwrap()).unwrap_err();
        assert!(matches!(err, Error::BlowUp { mode: 1, .. }));
    }

    #[test]
    fn csv_layout() {
        let sys = scalar_system(None);
        let tr = solve_free_endpoint(&sys, &GridSpec::new(1.0, 4).unwrap()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,u_1,x_1,p_1");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 4);
        assert_eq!(first[0], "0.0000000000000000e0");
        assert_eq!(text.lines().count(), 6);
    }
}
