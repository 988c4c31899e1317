//! Deviation curves, exponential fits and turnpike verdicts.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::horizon::{fmt17, solve_fixed_endpoint_with, solve_free_endpoint, Trajectory};
use crate::linalg::{hstack, projector};
use crate::riccati::{solve_are_antistrong, RiccatiResult, VelocityProjections};
use crate::scalar::{lit, to_f64, Real};
use crate::schur::{invariant_subspace, Cluster};
use crate::steady::SteadySolution;
use crate::subspace::{detectable_projections, eig_tol, is_c_stabilizable, is_controllable, weak_hautus};
use crate::system::{GridSpec, SystemSpec};

/// Fits with `r²` below this are flagged as non-exponential.
pub const R2_FLAG: f64 = 0.5;

/// Relative floor under log fits.
pub const LOG_FLOOR: f64 = 1e-14;

/// Midpoint deviations must shrink by at least this factor per horizon step.
pub const GEOMETRIC_RATIO: f64 = 0.5;

/// Implied midpoint decay rates may drop by at most this factor from one
/// horizon step to the next. Exponential decay keeps the rate fixed, while
/// algebraic `1/T` decay halves it with every doubling of `T`.
pub const RATE_CONSISTENCY: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Entry,
    Exit,
}

/// `e ≈ K·exp(−μ·s)` with `s = t` (entry) or `s = T − t` (exit).
#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeFit {
    #[serde(rename = "K")]
    pub k: f64,
    pub mu: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub side: Side,
    pub flagged: bool,
}

impl TurnpikeFit {
    pub fn model(&self, t: f64, horizon: f64) -> f64 {
        let s = match self.side {
            Side::Entry => t,
            Side::Exit => horizon - t,
        };
        self.k * (-self.mu * s).exp()
    }
}

/// Ordinary least squares `y ≈ a + b·x`; returns `(a, b, r²)`.
/// A series without variance has `r² = 0`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let r2 = if syy > 1e-300 * n && sxx > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a, b, r2)
}

/// `e(t) = ‖u(t) − ū‖ + ‖D(x(t) − x̄)‖` at every node.
pub fn deviation_curve<T: Real>(traj: &Trajectory<T>, steady: &SteadySolution<T>, d: &DMatrix<T>) -> Vec<T> {
    (0..=traj.steps())
        .map(|k| (traj.u_at(k) - &steady.u_bar).norm() + (d * (traj.x_at(k) - &steady.x_bar)).norm())
        .collect()
}

/// Log-linear least squares on `[0.05T, 0.5T]` (entry) or `[0.5T, 0.95T]`
/// (exit).
pub fn fit_exponential<T: Real>(times: &[T], e: &[T], side: Side) -> Result<TurnpikeFit> {
    if times.len() != e.len() || times.len() < 2 {
        return Err(Error::Dimension("time series length mismatch".into()));
    }
    let ts: Vec<f64> = times.iter().map(|&t| to_f64(t)).collect();
    let es: Vec<f64> = e.iter().map(|&v| to_f64(v)).collect();
    let emax = es.iter().copied().fold(0.0, f64::max);
    if !(emax > 0.0) {
        return Err(Error::FitUndefined("series is identically zero".into()));
    }
    let horizon = ts[ts.len() - 1] - ts[0];
    let t0 = ts[0];
    let (lo, hi) = match side {
        Side::Entry => (t0 + 0.05 * horizon, t0 + 0.5 * horizon),
        Side::Exit => (t0 + 0.5 * horizon, t0 + 0.95 * horizon),
    };
    let floor = LOG_FLOOR * emax;
    let slack = 1e-9 * horizon;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &v) in ts.iter().zip(&es) {
        if t >= lo - slack && t <= hi + slack {
            let s = match side {
                Side::Entry => t - t0,
                Side::Exit => ts[ts.len() - 1] - t,
            };
            xs.push(s);
            ys.push(v.max(floor).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::FitUndefined("fewer than two samples in the fit window".into()));
    }
    let (a, b, r2) = linear_fit(&xs, &ys);
    Ok(TurnpikeFit {
        k: a.exp(),
        mu: -b,
        r2,
        window: (lo, hi),
        side,
        flagged: r2 < R2_FLAG,
    })
}

/// `y ≈ c·x^α` by log-log regression; returns `(c, α, r²)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Dimension("power-law fit needs two or more points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::FitUndefined("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (a, b, r2) = linear_fit(&lx, &ly);
    Ok((a.exp(), b, r2))
}

/// Largest `e(t) / (K[e^{−μt} + e^{−μ(T−t)}])` with `K`, `μ` the weaker of
/// the two fits. The turnpike inequality holds with slack `s` if this is `≤ s`.
pub fn bound_ratio<T: Real>(times: &[T], e: &[T], entry: &TurnpikeFit, exit: &TurnpikeFit) -> f64 {
    let horizon = to_f64(times[times.len() - 1]);
    let k = entry.k.max(exit.k);
    let mu = entry.mu.min(exit.mu);
    times
        .iter()
        .zip(e)
        .map(|(&t, &v)| {
            let t = to_f64(t);
            to_f64(v) / (k * ((-mu * t).exp() + (-mu * (horizon - t)).exp()))
        })
        .fold(0.0, f64::max)
}

/// CSV `t,e,entry_model,exit_model`; a missing fit prints `nan`.
pub fn write_curve_csv<T: Real, W: Write>(
    mut w: W,
    times: &[T],
    e: &[T],
    entry: Option<&TurnpikeFit>,
    exit: Option<&TurnpikeFit>,
) -> std::io::Result<()> {
    let horizon = to_f64(times[times.len() - 1]);
    writeln!(w, "t,e,entry_model,exit_model")?;
    let model = |f: Option<&TurnpikeFit>, t: f64| match f {
        Some(f) => format!("{:.16e}", f.model(t, horizon)),
        None => "nan".to_string(),
    };
    for (&t, &v) in times.iter().zip(e) {
        let tf = to_f64(t);
        writeln!(w, "{},{},{},{}", fmt17(t), fmt17(v), model(entry, tf), model(exit, tf))?;
    }
    Ok(())
}

/// One horizon of a C-turnpike sweep.
#[derive(Debug, Clone, Serialize)]
pub struct HorizonRun {
    pub horizon: f64,
    /// Blow-up diagnostic if the solve was aborted.
    pub blow_up: Option<String>,
    pub midpoint_deviation: Option<f64>,
    pub noise_floor: f64,
    pub entry: Option<TurnpikeFit>,
    pub exit: Option<TurnpikeFit>,
    pub bound_ratio: Option<f64>,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub curve: Vec<f64>,
}

impl HorizonRun {
    pub fn low_r2(&self) -> bool {
        self.blow_up.is_none()
            && [&self.entry, &self.exit]
                .iter()
                .any(|f| f.as_ref().is_some_and(|f| f.flagged))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CTurnpikeReport {
    pub runs: Vec<HorizonRun>,
    /// `(max μ − min μ)/max μ` over entry fits.
    pub mu_spread: Option<f64>,
    pub mu_consistent: bool,
    /// `max K / min K` over entry fits.
    pub k_ratio: Option<f64>,
    pub midpoint_ratios: Vec<f64>,
    pub geometric_decay: bool,
    /// `−2 ln(ratio)/(T_{k+1} − T_k)` per horizon step; `None` once the
    /// deviation is below its noise floor.
    pub midpoint_rates: Vec<Option<f64>>,
    pub rate_consistent: bool,
    pub blow_up: bool,
    pub low_r2: bool,
    pub verdict: bool,
    pub predicate: bool,
    pub predicate_defect: f64,
    pub agrees: bool,
}

fn run_horizon<T: Real, F>(
    solver: &F,
    steady: &SteadySolution<T>,
    d: &DMatrix<T>,
    horizon: T,
    steps: usize,
) -> Result<HorizonRun>
where
    F: Fn(&GridSpec<T>) -> Result<Trajectory<T>>,
{
    let grid = GridSpec::new(horizon, steps)?;
    let traj = match solver(&grid) {
        Ok(t) => t,
        Err(e @ Error::BlowUp { .. }) => {
            log::info!("T = {horizon}: {e}");
            return Ok(HorizonRun {
                horizon: to_f64(horizon),
                blow_up: Some(e.to_string()),
                midpoint_deviation: None,
                noise_floor: 0.0,
                entry: None,
                exit: None,
                bound_ratio: None,
                times: Vec::new(),
                curve: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let e = deviation_curve(&traj, steady, d);
    let scale = (0..=traj.steps())
        .map(|k| traj.x_at(k).norm() + traj.u_at(k).norm())
        .fold(T::zero(), T::max);
    let noise_floor = 1e-9 * (1.0 + to_f64(scale));
    let mid = e[traj.node_at(horizon * lit::<T>(0.5))];
    let entry = fit_exponential(&traj.times, &e, Side::Entry).ok();
    let exit = fit_exponential(&traj.times, &e, Side::Exit).ok();
    let bound = match (&entry, &exit) {
        (Some(a), Some(b)) => Some(bound_ratio(&traj.times, &e, a, b)),
        _ => None,
    };
    log::debug!("T = {horizon}: e(T/2) = {:e}", to_f64(mid));
    Ok(HorizonRun {
        horizon: to_f64(horizon),
        blow_up: None,
        midpoint_deviation: Some(to_f64(mid)),
        noise_floor,
        entry,
        exit,
        bound_ratio: bound,
        times: traj.times.iter().map(|&t| to_f64(t)).collect(),
        curve: e.iter().map(|&v| to_f64(v)).collect(),
    })
}

/// Solves the free-endpoint problem for every horizon (concurrently) and
/// decides the C-turnpike property from the midpoint deviations. The verdict
/// is true iff no run blew up and `e(T/2)` shrinks by at least
/// [`GEOMETRIC_RATIO`] per horizon step or drops under its noise floor,
/// at a rate that does not fall off with the horizon ([`RATE_CONSISTENCY`]).
/// The predicate is C-stabilizability.
pub fn verify_c_turnpike<T: Real>(
    sys: &SystemSpec<T>,
    steady: &SteadySolution<T>,
    horizons: &[T],
    steps: usize,
) -> Result<CTurnpikeReport> {
    check_horizons(horizons)?;
    let d = detectable_projections(&sys.a, &sys.c)?.d;
    let (predicate, defect) = is_c_stabilizable(&sys.a, &sys.b, &sys.c)?;
    let solver = |g: &GridSpec<T>| solve_free_endpoint(sys, g);
    sweep(&solver, steady, &d, horizons, steps, predicate, to_f64(defect))
}

/// Fixed-endpoint counterpart of [`verify_c_turnpike`]: deviations use the
/// full state and the predicate is controllability plus the weak Hautus
/// test (`predicate_defect` is 0 or 1).
pub fn verify_fixed_turnpike<T: Real>(
    sys: &SystemSpec<T>,
    steady: &SteadySolution<T>,
    horizons: &[T],
    steps: usize,
) -> Result<CTurnpikeReport> {
    check_horizons(horizons)?;
    let n = sys.n();
    let predicate = is_controllable(&sys.a, &sys.b)? && weak_hautus(&sys.a, &sys.c)?.0;
    let ric = solve_are_antistrong(&sys.a, &sys.b, &sys.c)?;
    let solver = |g: &GridSpec<T>| solve_fixed_endpoint_with(sys, g, &ric);
    let defect = if predicate { 0.0 } else { 1.0 };
    sweep(&solver, steady, &DMatrix::identity(n, n), horizons, steps, predicate, defect)
}

/// Dispatches on the endpoint condition of `sys`.
pub fn verify_turnpike<T: Real>(
    sys: &SystemSpec<T>,
    steady: &SteadySolution<T>,
    horizons: &[T],
    steps: usize,
) -> Result<CTurnpikeReport> {
    if sys.is_fixed_endpoint() {
        verify_fixed_turnpike(sys, steady, horizons, steps)
    } else {
        verify_c_turnpike(sys, steady, horizons, steps)
    }
}

fn check_horizons<T: Real>(horizons: &[T]) -> Result<()> {
    if horizons.len() < 3 {
        return Err(Error::InvalidSpec("need at least three horizons".into()));
    }
    if horizons.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidSpec("horizons must be strictly ascending".into()));
    }
    Ok(())
}

fn sweep<T: Real, F>(
    solver: &F,
    steady: &SteadySolution<T>,
    d: &DMatrix<T>,
    horizons: &[T],
    steps: usize,
    predicate: bool,
    predicate_defect: f64,
) -> Result<CTurnpikeReport>
where
    F: Fn(&GridSpec<T>) -> Result<Trajectory<T>> + Sync,
{
    let runs: Vec<Result<HorizonRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = horizons
            .iter()
            .map(|&h| s.spawn(move || run_horizon(solver, steady, d, h, steps)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("horizon worker panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let blow_up = runs.iter().any(|r| r.blow_up.is_some());
    let mut midpoint_ratios = Vec::new();
    let mut midpoint_rates = Vec::new();
    let mut geometric = !blow_up;
    if !blow_up {
        for w in runs.windows(2) {
            let (a, b) = (w[0].midpoint_deviation.unwrap(), w[1].midpoint_deviation.unwrap());
            let ratio = if a > 0.0 { b / a } else if b > 0.0 { f64::INFINITY } else { 0.0 };
            midpoint_ratios.push(ratio);
            let resolved = b > w[1].noise_floor && a > w[0].noise_floor;
            midpoint_rates.push(resolved.then(|| -2.0 * ratio.ln() / (w[1].horizon - w[0].horizon)));
            if !(b <= w[1].noise_floor || ratio <= GEOMETRIC_RATIO) {
                geometric = false;
            }
        }
    }
    let rate_consistent = !blow_up
        && midpoint_rates.windows(2).all(|w| match (w[0], w[1]) {
            (Some(r0), Some(r1)) => r1 >= RATE_CONSISTENCY * r0,
            _ => true,
        });
    let mus: Vec<f64> = runs.iter().filter_map(|r| r.entry.as_ref().map(|f| f.mu)).collect();
    let ks: Vec<f64> = runs.iter().filter_map(|r| r.entry.as_ref().map(|f| f.k)).collect();
    let spread = |v: &[f64]| {
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        (hi, lo)
    };
    let mu_spread = (mus.len() == runs.len()).then(|| {
        let (hi, lo) = spread(&mus);
        if hi > 0.0 { (hi - lo) / hi } else { f64::INFINITY }
    });
    let k_ratio = (ks.len() == runs.len()).then(|| {
        let (hi, lo) = spread(&ks);
        hi / lo
    });
    let low_r2 = runs.iter().any(HorizonRun::low_r2);
    let verdict = !blow_up && geometric && rate_consistent;
    Ok(CTurnpikeReport {
        runs,
        mu_consistent: mu_spread.is_some_and(|s| s <= 0.25),
        mu_spread,
        k_ratio,
        midpoint_ratios,
        geometric_decay: geometric,
        midpoint_rates,
        rate_consistent,
        blow_up,
        low_r2,
        verdict,
        predicate,
        predicate_defect,
        agrees: verdict == predicate,
    })
}

/// Velocity-turnpike estimators for a fixed-endpoint trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct VelocityReport {
    pub u_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
    /// `−BBᵀq̂`.
    pub ramp_slope: Vec<f64>,
    /// Slope of the straight line fitted to `P₁x(t)` on `[0.1T, 0.9T]`.
    pub ramp_fit_slope: Vec<f64>,
    pub ramp_r2: f64,
    pub dist_sq_to_argmin: f64,
    /// `‖A₊ᵀq̂‖`.
    pub q_hat_kernel_defect: f64,
    /// Distance of `x̂` to `𝓛⁻(A₊)`.
    pub x_hat_stable_defect: f64,
    /// `‖û + BᵀÊx̂ + Bᵀq̂‖`.
    pub identity_defect: f64,
    pub entry: Option<TurnpikeFit>,
    pub exit: Option<TurnpikeFit>,
}

/// Straight-line regression of a vector series; pooled `r²` over components.
fn vector_ramp(ts: &[f64], rows: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let dim = rows.first().map_or(0, Vec::len);
    let mut slopes = Vec::with_capacity(dim);
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for j in 0..dim {
        let ys: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let (a, b, _) = linear_fit(ts, &ys);
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        for (t, y) in ts.iter().zip(&ys) {
            ss_res += (y - a - b * t).powi(2);
            ss_tot += (y - my).powi(2);
        }
        slopes.push(b);
    }
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 0.0 };
    (slopes, r2)
}

pub fn velocity_report<T: Real>(
    traj: &Trajectory<T>,
    sys: &SystemSpec<T>,
    ric: &RiccatiResult<T>,
    proj: &VelocityProjections<T>,
    steady: &SteadySolution<T>,
) -> Result<VelocityReport> {
    let q = traj
        .q
        .as_ref()
        .ok_or_else(|| Error::Precondition("velocity report needs a fixed-endpoint trajectory".into()))?;
    let n = sys.n();
    let steps = traj.steps();
    let horizon = traj.horizon;

    // q̂: oblique projection of q(T) onto ker A₊ᵀ along 𝓛⁻(A₊ᵀ)
    let qt = q.row(steps).transpose();
    let kdim = proj.adjoint_kernel.dim;
    let q_hat = if kdim == 0 {
        DVector::zeros(n)
    } else {
        let basis = hstack(&[proj.adjoint_kernel.basis.clone(), proj.adjoint_stable.basis.clone()]);
        let coef = basis
            .clone()
            .full_piv_lu()
            .solve(&qt)
            .ok_or_else(|| Error::Degenerate("ker A₊ᵀ and 𝓛⁻(A₊ᵀ) do not split the space".into()))?;
        proj.adjoint_kernel.basis.clone() * coef.rows(0, kdim)
    };

    let lo = traj.node_at(horizon * lit::<T>(0.4));
    let hi = traj.node_at(horizon * lit::<T>(0.6));
    let mut x_hat = DVector::zeros(n);
    for k in lo..=hi {
        x_hat += &proj.p2 * traj.x_at(k);
    }
    x_hat /= crate::scalar::from_usize::<T>(hi - lo + 1);

    let bt = sys.b.transpose();
    let u_hat = -(&bt * &ric.e_hat * &x_hat) - &bt * &q_hat;
    let identity_defect = (&u_hat + &bt * &ric.e_hat * &x_hat + &bt * &q_hat).norm();
    let ramp_slope = -(&sys.b * &bt * &q_hat);

    let e: Vec<T> = (0..=steps)
        .map(|k| (traj.u_at(k) - &u_hat).norm() + (&proj.p2 * traj.x_at(k) - &x_hat).norm())
        .collect();
    let entry = fit_exponential(&traj.times, &e, Side::Entry).ok();
    let exit = fit_exponential(&traj.times, &e, Side::Exit).ok();

    let r0 = traj.node_at(horizon * lit::<T>(0.1));
    let r1 = traj.node_at(horizon * lit::<T>(0.9));
    let ts: Vec<f64> = (r0..=r1).map(|k| to_f64(traj.times[k])).collect();
    let rows: Vec<Vec<f64>> = (r0..=r1)
        .map(|k| (&proj.p1 * traj.x_at(k)).iter().map(|&v| to_f64(v)).collect())
        .collect();
    let (ramp_fit_slope, ramp_r2) = vector_ramp(&ts, &rows);

    let stable = &proj.closed_loop_stable.basis;
    let x_hat_stable_defect = if stable.ncols() == 0 {
        x_hat.norm()
    } else {
        ((DMatrix::identity(n, n) - projector(stable)) * &x_hat).norm()
    };
    let vec = |v: &DVector<T>| v.iter().map(|&x| to_f64(x)).collect::<Vec<_>>();
    Ok(VelocityReport {
        dist_sq_to_argmin: to_f64(steady.dist_sq(&u_hat, &x_hat)),
        q_hat_kernel_defect: to_f64((ric.a_plus.transpose() * &q_hat).norm()),
        x_hat_stable_defect: to_f64(x_hat_stable_defect),
        identity_defect: to_f64(identity_defect),
        u_hat: vec(&u_hat),
        x_hat: vec(&x_hat),
        q_hat: vec(&q_hat),
        ramp_slope: vec(&ramp_slope),
        ramp_fit_slope,
        ramp_r2,
        entry,
        exit,
    })
}

/// Decay of the spectral components of a sampled solution of `ẏ = Hy`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSplitReport {
    pub stable_dim: usize,
    pub critical_dim: usize,
    pub unstable_dim: usize,
    /// Forward decay of the `𝓛⁻` component.
    pub stable_fit: Option<TurnpikeFit>,
    /// Backward decay of the `𝓛⁺` component.
    pub unstable_fit: Option<TurnpikeFit>,
    /// `min |Re λ|` over the stable spectrum of `H`.
    pub stable_rate: Option<f64>,
    /// Largest `dist(y(t), 𝓛⁰) / (e^{−μt}‖y(0)‖ + e^{−μ(T−t)}‖y(T)‖)`.
    pub bound_constant: f64,
    /// Condition number of the spectral basis, the natural size of `K`.
    pub basis_condition: f64,
    pub bound_holds: bool,
    pub defect: f64,
    #[serde(skip)]
    pub distance: Vec<f64>,
}

/// Relative central-difference defect above which `y` is rejected.
pub const SPLIT_DEFECT_TOL: f64 = 1e-3;

/// `y` holds one sample per row at `times`.
pub fn spectral_split_decay<T: Real>(times: &[T], y: &DMatrix<T>, h: &DMatrix<T>) -> Result<SpectralSplitReport> {
    let dim = h.nrows();
    if h.ncols() != dim || y.ncols() != dim || y.nrows() != times.len() || times.len() < 3 {
        return Err(Error::Dimension("spectral split input shapes disagree".into()));
    }
    let row = |k: usize| y.row(k).transpose();
    let mut defect = T::zero();
    let mut scale = T::zero();
    for k in 1..times.len() - 1 {
        let d = (row(k + 1) - row(k - 1)) / (times[k + 1] - times[k - 1]) - h * row(k);
        defect = defect.max(d.norm());
        scale = scale.max((h * row(k)).norm());
    }
    let defect = to_f64(defect / (T::one() + scale));
    if defect > SPLIT_DEFECT_TOL {
        return Err(Error::NotASolution { defect });
    }

    let tau = eig_tol(h);
    let stable = invariant_subspace(h, |c: &Cluster<T>| c.center.re < -tau)?;
    let critical = invariant_subspace(h, |c: &Cluster<T>| c.center.re.abs() <= tau)?;
    let unstable = invariant_subspace(h, |c: &Cluster<T>| c.center.re > tau)?;
    let (ds, dc, du) = (stable.ncols(), critical.ncols(), unstable.ncols());
    let basis = hstack(&[stable.clone(), critical.clone(), unstable.clone()]);
    let sv = crate::linalg::singular_values(&basis);
    let basis_condition = to_f64(sv.max() / sv.min());
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("spectral subspaces do not split the space".into()))?;

    let n_t = times.len();
    let mut s_norm = Vec::with_capacity(n_t);
    let mut u_norm = Vec::with_capacity(n_t);
    let mut dist = Vec::with_capacity(n_t);
    let crit_proj = if dc > 0 { projector(&critical) } else { DMatrix::zeros(dim, dim) };
    let id = DMatrix::<T>::identity(dim, dim);
    for k in 0..n_t {
        let coef = &inv * row(k);
        s_norm.push((&stable * coef.rows(0, ds)).norm());
        u_norm.push((&unstable * coef.rows(ds + dc, du)).norm());
        dist.push(to_f64(((&id - &crit_proj) * row(k)).norm()));
    }
    let stable_fit = if ds > 0 { fit_exponential(times, &s_norm, Side::Entry).ok() } else { None };
    let unstable_fit = if du > 0 { fit_exponential(times, &u_norm, Side::Exit).ok() } else { None };

    let eigs = h.clone().complex_eigenvalues();
    let stable_rate = eigs
        .iter()
        .filter(|l| l.re < -tau)
        .map(|l| to_f64(-l.re))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));

    let mu = [stable_fit.as_ref(), unstable_fit.as_ref()]
        .iter()
        .flatten()
        .map(|f| f.mu)
        .fold(f64::INFINITY, f64::min);
    let horizon = to_f64(times[n_t - 1] - times[0]);
    let y0 = to_f64(row(0).norm());
    let yt = to_f64(row(n_t - 1).norm());
    let bound_constant = if mu.is_finite() && mu > 0.0 {
        times
            .iter()
            .zip(&dist)
            .map(|(&t, &dv)| {
                let t = to_f64(t - times[0]);
                let env = (-mu * t).exp() * y0 + (-mu * (horizon - t)).exp() * yt;
                if env > 0.0 { dv / env } else if dv > 0.0 { f64::INFINITY } else { 0.0 }
            })
            .fold(0.0, f64::max)
    } else if dist.iter().all(|&v| v <= 1e-12 * (1.0 + y0.max(yt))) {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SpectralSplitReport {
        stable_dim: ds,
        critical_dim: dc,
        unstable_dim: du,
        stable_fit,
        unstable_fit,
        stable_rate,
        bound_holds: bound_constant <= 10.0 * basis_condition,
        bound_constant,
        basis_condition,
        defect,
        distance: dist,
    })
}
