//! Seeded generators of test systems.
//!
//! Every generator is deterministic in its seed. Structured families are
//! assembled in a block form that fixes the property of interest and then
//! rotated by a random orthogonal similarity so that no structure is visible
//! in the coordinates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::riccati::build_hamiltonian;
use crate::system::SystemSpec;

pub type Triple = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn uniform_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0))
}

/// Orthogonal factor of the QR decomposition of a uniform random matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    uniform_matrix(rng, n, n).qr().q()
}

/// `(QAQᵀ, QB, CQᵀ)`.
pub fn rotate(t: Triple, q: &DMatrix<f64>) -> Triple {
    let (a, b, c) = t;
    (q * a * q.transpose(), q * b, c * q.transpose())
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest `|Re λ|` over the spectrum of the Hamiltonian.
pub fn hamiltonian_gap(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    build_hamiltonian(a, b, c)
        .expect("consistent shapes")
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min)
}

fn rotation_block(omega: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0])
}

fn block_upper(a11: &DMatrix<f64>, a12: &DMatrix<f64>, a22: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, r) = (a11.nrows(), a22.nrows());
    let mut a = DMatrix::zeros(k + r, k + r);
    a.view_mut((0, 0), (k, k)).copy_from(a11);
    a.view_mut((0, k), (k, r)).copy_from(a12);
    a.view_mut((k, k), (r, r)).copy_from(a22);
    a
}

/// Random `A` shifted so that its spectral abscissa equals `-margin`.
pub fn stable_triple<R: Rng>(rng: &mut R, n: usize, m: usize, p: usize, margin: f64) -> Triple {
    let a = uniform_matrix(rng, n, n);
    let shift = spectral_abscissa(&a) + margin;
    let a = a - DMatrix::identity(n, n) * shift;
    (a, uniform_matrix(rng, n, m), uniform_matrix(rng, p, n))
}

pub fn stable_system(seed: u64, n: usize, m: usize, p: usize) -> SystemSpec<f64> {
    let mut r = rng(seed);
    let (a, b, c) = stable_triple(&mut r, n, m, p, 0.5);
    let z = uniform_vector(&mut r, p);
    let x0 = uniform_vector(&mut r, n);
    SystemSpec::new(a, b, c, z, x0, None).expect("generated system is valid")
}

/// Structural classes of the C-stabilizability family (4 states, 2 inputs,
/// 2 outputs). The last two violate C-stabilizability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CStabKind {
    /// `(A, B)` controllable.
    Controllable,
    /// Unstable uncontrollable mode hidden from the output.
    UnobservedUnstable,
    /// Stable uncontrollable mode seen by the output.
    UncontrolledStable,
    /// Unstable uncontrollable mode seen by the output.
    ObservedUnstable,
    /// Uncontrollable oscillator seen by the output.
    ObservedOscillator,
}

impl CStabKind {
    pub const ALL: [CStabKind; 5] = [
        CStabKind::Controllable,
        CStabKind::UnobservedUnstable,
        CStabKind::UncontrolledStable,
        CStabKind::ObservedUnstable,
        CStabKind::ObservedOscillator,
    ];

    pub fn expected(self) -> bool {
        matches!(
            self,
            CStabKind::Controllable | CStabKind::UnobservedUnstable | CStabKind::UncontrolledStable
        )
    }
}

/// Lower bound on the optimal decay rate of the controllable block of every
/// C-stabilizability case, so that horizons up to 40 resolve the turnpike.
pub const MIN_BLOCK_RATE: f64 = 0.3;

pub fn c_stabilizability_case<R: Rng>(rng: &mut R, kind: CStabKind) -> SystemSpec<f64> {
    let n = 4;
    let (a, b, c) = loop {
        let (a, b, c, k) = c_stabilizability_block_form(rng, kind);
        let block = (
            a.view((0, 0), (k, k)).into_owned(),
            b.view((0, 0), (k, b.ncols())).into_owned(),
            c.view((0, 0), (c.nrows(), k)).into_owned(),
        );
        if hamiltonian_gap(&block.0, &block.1, &block.2) >= MIN_BLOCK_RATE {
            break (a, b, c);
        }
    };
    let q = random_orthogonal(rng, n);
    let (a, b, c) = rotate((a, b, c), &q);
    let z = uniform_vector(rng, 2);
    let x0 = uniform_vector(rng, n);
    SystemSpec::new(a, b, c, z, x0, None).expect("generated system is valid")
}

/// Kalman-like form `[[A₁₁, A₁₂], [0, A₂₂]]`, `B = [B₁; 0]`; returns the
/// size of the controllable block as well.
fn c_stabilizability_block_form<R: Rng>(rng: &mut R, kind: CStabKind) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, usize) {
    let n = 4;
    match kind {
        CStabKind::Controllable => (uniform_matrix(rng, n, n), uniform_matrix(rng, n, 2), uniform_matrix(rng, 2, n), n),
        CStabKind::ObservedOscillator => {
            let acc = uniform_matrix(rng, 2, 2);
            let a12 = uniform_matrix(rng, 2, 2);
            let a = block_upper(&acc, &a12, &rotation_block(rng.gen_range(0.5..1.5)));
            let mut b = DMatrix::zeros(n, 2);
            b.view_mut((0, 0), (2, 2)).copy_from(&uniform_matrix(rng, 2, 2));
            (a, b, uniform_matrix(rng, 2, n), 2)
        }
        _ => {
            let lambda = match kind {
                CStabKind::UncontrolledStable => -rng.gen_range(0.5..1.5),
                _ => rng.gen_range(0.2..0.5),
            };
            let acc = uniform_matrix(rng, 3, 3);
            let a12 = uniform_matrix(rng, 3, 1);
            let a = block_upper(&acc, &a12, &DMatrix::from_element(1, 1, lambda));
            let mut b = DMatrix::zeros(n, 2);
            b.view_mut((0, 0), (3, 2)).copy_from(&uniform_matrix(rng, 3, 2));
            let mut c = uniform_matrix(rng, 2, n);
            if kind == CStabKind::UnobservedUnstable {
                // eigenvector of λ: ((λ − A11)⁻¹A12, 1)
                let top = (DMatrix::identity(3, 3) * lambda - &acc)
                    .try_inverse()
                    .expect("λ is not an eigenvalue of the controllable block")
                    * &a12;
                let mut v = DVector::zeros(n);
                v.rows_mut(0, 3).copy_from(&top.column(0));
                v[3] = 1.0;
                let v = v.normalize();
                c = &c - &c * &v * v.transpose();
            }
            (a, b, c, 3)
        }
    }
}

/// `count` systems cycling through [`CStabKind::ALL`].
pub fn c_stabilizability_family(seed: u64, count: usize) -> Vec<(CStabKind, SystemSpec<f64>)> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let kind = CStabKind::ALL[i % CStabKind::ALL.len()];
            (kind, c_stabilizability_case(&mut r, kind))
        })
        .collect()
}

/// Labelled stabilizable systems for the critical-subspace test, covering
/// both weak Hautus outcomes.
pub fn hautus_family(seed: u64, count: usize) -> Vec<(&'static str, Triple)> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| match i % 6 {
            0 => {
                let n = r.gen_range(2..=5);
                let m = r.gen_range(1..=2);
                let p = r.gen_range(1..=2);
                ("random", (uniform_matrix(&mut r, n, n), uniform_matrix(&mut r, n, m), uniform_matrix(&mut r, p, n)))
            }
            1 => {
                let n = if r.gen_bool(0.5) { 2 } else { 4 };
                let k = uniform_matrix(&mut r, n, n);
                let a = &k - k.transpose();
                let m = r.gen_range(1..=2);
                let b = uniform_matrix(&mut r, n, m);
                ("skew-unobserved", (a, b, DMatrix::zeros(1, n)))
            }
            2 => {
                let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
                let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
                let c = match (i / 6) % 3 {
                    0 => DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
                    1 => DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                    _ => DMatrix::from_row_slice(1, 2, &[r.gen_range(0.5..1.5), r.gen_range(-1.0..1.0)]),
                };
                ("double-integrator", (a, b, c))
            }
            3 | 4 => {
                let n = r.gen_range(3..=5);
                let mut a = DMatrix::zeros(n, n);
                a.view_mut((0, 0), (2, 2)).copy_from(&rotation_block(r.gen_range(0.5..2.0)));
                a.view_mut((2, 2), (n - 2, n - 2)).copy_from(&uniform_matrix(&mut r, n - 2, n - 2));
                let b = uniform_matrix(&mut r, n, 1);
                let mut c = uniform_matrix(&mut r, 2, n);
                let label = if i % 6 == 3 {
                    c.view_mut((0, 0), (2, 2)).fill(0.0);
                    "oscillator-unobserved"
                } else {
                    "oscillator-observed"
                };
                let q = random_orthogonal(&mut r, n);
                (label, rotate((a, b, c), &q))
            }
            _ => {
                let n = r.gen_range(2..=5);
                let m = r.gen_range(1..=2);
                let p = r.gen_range(1..=2);
                ("stable", stable_triple(&mut r, n, m, p, 0.2))
            }
        })
        .collect()
}

/// Random triples with `n ≤ 5`; every other one has a forced common kernel
/// so that the Hamiltonian is singular.
pub fn hamiltonian_family(seed: u64, count: usize) -> Vec<Triple> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let n = r.gen_range(1..=5);
            let m = r.gen_range(1..=3);
            let p = r.gen_range(1..=3);
            let (mut a, mut b, mut c) = (uniform_matrix(&mut r, n, n), uniform_matrix(&mut r, n, m), uniform_matrix(&mut r, p, n));
            if i % 2 == 1 {
                let id = DMatrix::<f64>::identity(n, n);
                let v = uniform_vector(&mut r, n).normalize();
                let pv = &id - &v * v.transpose();
                a = &a * &pv;
                c = &c * &pv;
                if i % 4 == 3 {
                    let w = uniform_vector(&mut r, n).normalize();
                    let pw = &id - &w * w.transpose();
                    a = &pw * &a;
                    b = &pw * &b;
                }
            }
            (a, b, c)
        })
        .collect()
}

/// Controllable system with fixed endpoints whose Hamiltonian has no
/// eigenvalue with `|Re λ| < min_gap`; candidates are drawn until one
/// qualifies.
pub fn fixed_endpoint_system(seed: u64, n: usize, m: usize, p: usize, min_gap: f64) -> SystemSpec<f64> {
    let mut r = rng(seed);
    loop {
        let a = uniform_matrix(&mut r, n, n);
        let b = uniform_matrix(&mut r, n, m);
        let c = uniform_matrix(&mut r, p, n);
        let z = uniform_vector(&mut r, p);
        let x0 = uniform_vector(&mut r, n);
        let x1 = uniform_vector(&mut r, n);
        let controllable = crate::subspace::is_controllable(&a, &b).unwrap_or(false);
        if controllable && hamiltonian_gap(&a, &b, &c) >= min_gap {
            return SystemSpec::new(a, b, c, z, x0, Some(x1)).expect("generated system is valid");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::is_c_stabilizable;

    #[test]
    fn generators_are_deterministic() {
        let a = c_stabilizability_family(7, 5);
        let b = c_stabilizability_family(7, 5);
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            assert_eq!(x.a, y.a);
            assert_eq!(x.c, y.c);
        }
        assert_eq!(hamiltonian_family(3, 4), hamiltonian_family(3, 4));
    }

    #[test]
    fn family_kinds_match_predicate() {
        for (kind, sys) in c_stabilizability_family(11, 20) {
            let (ok, _) = is_c_stabilizable(&sys.a, &sys.b, &sys.c).unwrap();
            assert_eq!(ok, kind.expected(), "{kind:?}");
        }
    }

    #[test]
    fn orthogonal_factor() {
        let q = random_orthogonal(&mut rng(1), 5);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn stable_shift() {
        let sys = stable_system(4, 4, 2, 2);
        assert!((spectral_abscissa(&sys.a) + 0.5).abs() < 1e-10);
    }
}
