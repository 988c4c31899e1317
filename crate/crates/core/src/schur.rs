//! Real Schur form with block reordering, eigenvalue clustering and modal
//! (block-diagonal) decomposition.
//!
//! Invariant subspaces are always read off the leading columns of a
//! reordered Schur basis, which stays well defined for defective
//! eigenvalues where eigenvector bases break down.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};
use crate::linalg::{norm2, solve_sylvester};
use crate::scalar::{lit, Real};

/// Diagonal block of a quasi-triangular Schur factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub size: usize,
}

/// `A = Q · T · Qᵀ` with `T` quasi upper triangular (1×1 and 2×2 blocks,
/// 2×2 blocks carrying complex conjugate pairs only).
#[derive(Debug, Clone)]
pub struct RealSchur<T: Real> {
    pub q: DMatrix<T>,
    pub t: DMatrix<T>,
    pub blocks: Vec<Block>,
}

/// Group of blocks whose eigenvalues coincide up to the clustering tolerance.
#[derive(Debug, Clone)]
pub struct Cluster<T: Real> {
    /// Mean eigenvalue of the cluster, imaginary part taken nonnegative.
    pub center: Complex<T>,
    pub eigenvalues: Vec<Complex<T>>,
    pub dim: usize,
}

fn eig2x2<T: Real>(a: T, b: T, c: T, d: T) -> (Complex<T>, Complex<T>) {
    let half = lit::<T>(0.5);
    let tr = (a + d) * half;
    let disc = ((a - d) * half).powi(2) + b * c;
    if disc >= T::zero() {
        let r = disc.sqrt();
        (Complex::new(tr + r, T::zero()), Complex::new(tr - r, T::zero()))
    } else {
        let r = (-disc).sqrt();
        (Complex::new(tr, r), Complex::new(tr, -r))
    }
}

impl<T: Real> RealSchur<T> {
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension(format!(
                "Schur form needs a square matrix, got {}×{}",
                n,
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Schur input"));
        }
        if n == 0 {
            return Ok(Self {
                q: DMatrix::zeros(0, 0),
                t: DMatrix::zeros(0, 0),
                blocks: Vec::new(),
            });
        }
        let max_iter = 200 * n.max(10);
        let schur = Schur::try_new(a.clone(), T::default_epsilon(), max_iter).ok_or(
            Error::Convergence {
                what: "real Schur decomposition",
                iterations: max_iter,
                residual: f64::NAN,
            },
        )?;
        let (q, t) = schur.unpack();
        let mut s = Self {
            q,
            t,
            blocks: Vec::new(),
        };
        s.standardize();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Detects the block structure, flushes negligible subdiagonal entries
    /// and splits 2×2 blocks that carry real eigenvalues.
    fn standardize(&mut self) {
        let n = self.dim();
        let eps = T::default_epsilon();
        let scale = self.t.amax().max(T::min_value().unwrap());
        for i in 0..n.saturating_sub(1) {
            let sub = self.t[(i + 1, i)].abs();
            let diag = self.t[(i, i)].abs() + self.t[(i + 1, i + 1)].abs();
            if sub <= eps * diag.max(scale * eps) {
                self.t[(i + 1, i)] = T::zero();
            }
        }
        for j in 0..n {
            for i in (j + 2)..n {
                self.t[(i, j)] = T::zero();
            }
        }
        // pairs closer than this are treated as one perturbed double eigenvalue
        let close = lit::<T>(10.0) * eps.sqrt() * scale.max(T::one());
        let mut blocks = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            if i + 1 < n && self.t[(i + 1, i)] != T::zero() {
                let (a, b, c, d) = (
                    self.t[(i, i)],
                    self.t[(i, i + 1)],
                    self.t[(i + 1, i)],
                    self.t[(i + 1, i + 1)],
                );
                let (l1, l2) = eig2x2(a, b, c, d);
                let mean = (a + d) * lit::<T>(0.5);
                let split = if l1.im == T::zero() {
                    if (l1.re - l2.re).abs() > close || !self.split_defective_pair(i, mean) {
                        self.split_real_pair(i, l1.re);
                    }
                    true
                } else {
                    l1.im.abs() <= close && self.split_defective_pair(i, mean)
                };
                if split {
                    blocks.push(Block { start: i, size: 1 });
                    blocks.push(Block {
                        start: i + 1,
                        size: 1,
                    });
                } else {
                    blocks.push(Block { start: i, size: 2 });
                }
                i += 2;
            } else {
                blocks.push(Block { start: i, size: 1 });
                i += 1;
            }
        }
        // adjacent 1×1 blocks forming a perturbed Jordan pair
        for k in 0..blocks.len().saturating_sub(1) {
            let (b1, b2) = (blocks[k], blocks[k + 1]);
            if b1.size != 1 || b2.size != 1 {
                continue;
            }
            let i = b1.start;
            let (a, b, d) = (self.t[(i, i)], self.t[(i, i + 1)], self.t[(i + 1, i + 1)]);
            if (a - d).abs() <= close && b.abs() > close {
                self.split_defective_pair(i, (a + d) * lit::<T>(0.5));
            }
        }
        self.blocks = blocks;
    }

    /// Rotates a 2×2 block with real eigenvalues into upper triangular form.
    fn split_real_pair(&mut self, i: usize, lambda: T) {
        let (a, b, c, d) = (
            self.t[(i, i)],
            self.t[(i, i + 1)],
            self.t[(i + 1, i)],
            self.t[(i + 1, i + 1)],
        );
        // eigenvector candidates (b, λ − a) and (λ − d, c)
        let v1 = (b, lambda - a);
        let v2 = (lambda - d, c);
        let n1 = (v1.0 * v1.0 + v1.1 * v1.1).sqrt();
        let n2 = (v2.0 * v2.0 + v2.1 * v2.1).sqrt();
        let (x, y, nn) = if n1 >= n2 {
            (v1.0, v1.1, n1)
        } else {
            (v2.0, v2.1, n2)
        };
        if nn == T::zero() {
            self.t[(i + 1, i)] = T::zero();
            return;
        }
        let (cs, sn) = (x / nn, y / nn);
        let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
        self.apply_local(i, &g);
        self.t[(i + 1, i)] = T::zero();
    }

    /// Triangularizes the 2×2 block at `i` around a double eigenvalue
    /// `lambda`. The leading column becomes the least singular right vector
    /// of `block − λI`, which approximates the Jordan eigenvector to working
    /// precision when `λ` is the mean of the pair. The rotation is applied
    /// only if the dropped subdiagonal entry is negligible.
    fn split_defective_pair(&mut self, i: usize, lambda: T) -> bool {
        let blk = self.t.view((i, i), (2, 2)).into_owned();
        let shifted = &blk - DMatrix::identity(2, 2) * lambda;
        let (_, _, v) = crate::linalg::svd_full(&shifted);
        let (x, y) = (v[(0, 1)], v[(1, 1)]);
        let nn = (x * x + y * y).sqrt();
        if nn == T::zero() {
            return false;
        }
        let (cs, sn) = (x / nn, y / nn);
        let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
        let rotated = g.transpose() * &blk * &g;
        let eps = T::default_epsilon();
        let scale = self.t.amax().max(T::one());
        if rotated[(1, 0)].abs() > lit::<T>(100.0) * eps * scale {
            return false;
        }
        self.apply_local(i, &g);
        self.t[(i + 1, i)] = T::zero();
        true
    }

    /// `T ← Gᵀ T G` and `Q ← Q G` for an orthogonal `g` acting on rows and
    /// columns `i .. i + g.nrows()`.
    fn apply_local(&mut self, i: usize, g: &DMatrix<T>) {
        let k = g.nrows();
        let n = self.dim();
        let rows = self.t.view((i, 0), (k, n)).into_owned();
        self.t.view_mut((i, 0), (k, n)).copy_from(&(g.transpose() * rows));
        let cols = self.t.view((0, i), (n, k)).into_owned();
        self.t.view_mut((0, i), (n, k)).copy_from(&(cols * g));
        let qc = self.q.view((0, i), (n, k)).into_owned();
        self.q.view_mut((0, i), (n, k)).copy_from(&(qc * g));
    }

    /// Eigenvalues carried by one block.
    pub fn block_eigenvalues(&self, b: Block) -> Vec<Complex<T>> {
        let i = b.start;
        if b.size == 1 {
            vec![Complex::new(self.t[(i, i)], T::zero())]
        } else {
            let (l1, l2) = eig2x2(
                self.t[(i, i)],
                self.t[(i, i + 1)],
                self.t[(i + 1, i)],
                self.t[(i + 1, i + 1)],
            );
            vec![l1, l2]
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        self.blocks
            .iter()
            .flat_map(|&b| self.block_eigenvalues(b))
            .collect()
    }

    /// Swaps the adjacent blocks `k` and `k + 1`.
    fn swap_blocks(&mut self, k: usize) -> Result<()> {
        let b1 = self.blocks[k];
        let b2 = self.blocks[k + 1];
        let (i, p, q) = (b1.start, b1.size, b2.size);
        let m = p + q;
        let t11 = self.t.view((i, i), (p, p)).into_owned();
        let t12 = self.t.view((i, i + p), (p, q)).into_owned();
        let t22 = self.t.view((i + p, i + p), (q, q)).into_owned();
        let x = solve_sylvester(&t11, &t22, &(-t12)).ok_or_else(|| {
            Error::Degenerate("Schur block swap: blocks share eigenvalues".into())
        })?;
        // columns [X; I_q] span the invariant subspace of the trailing block
        let mut basis = DMatrix::<T>::zeros(m, m);
        basis.view_mut((0, 0), (p, q)).copy_from(&x);
        for j in 0..q {
            basis[(p + j, j)] = T::one();
        }
        for j in 0..p {
            basis[(j, q + j)] = T::one();
        }
        let g = basis.qr().q();
        self.apply_local(i, &g);
        let scale = norm2(&self.t).max(T::one());
        let leak = self.t.view((i + q, i), (p, q)).amax();
        if leak > lit::<T>(1e-8) * scale {
            return Err(Error::Degenerate(format!(
                "Schur block swap lost accuracy (leak {:e})",
                leak.to_f64().unwrap_or(f64::NAN)
            )));
        }
        self.t.view_mut((i + q, i), (p, q)).fill(T::zero());
        self.blocks[k] = Block { start: i, size: q };
        self.blocks[k + 1] = Block {
            start: i + q,
            size: p,
        };
        Ok(())
    }

    /// Stable bubble sort of the blocks by `keys` (one key per block, moved
    /// along with its block). Blocks with equal keys are never swapped.
    /// Returns the original index of the block now at each position.
    pub fn reorder_by<K: PartialOrd + Clone>(&mut self, keys: &[K]) -> Result<Vec<usize>> {
        assert_eq!(keys.len(), self.blocks.len());
        let mut keys = keys.to_vec();
        let nb = keys.len();
        let mut perm: Vec<usize> = (0..nb).collect();
        for pass in 0..nb {
            let mut swapped = false;
            for k in 0..nb.saturating_sub(1 + pass) {
                if keys[k] > keys[k + 1] {
                    self.swap_blocks(k)?;
                    keys.swap(k, k + 1);
                    perm.swap(k, k + 1);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }
        Ok(perm)
    }

    pub fn leading_basis(&self, k: usize) -> DMatrix<T> {
        self.q.columns(0, k).into_owned()
    }

    /// Clusters blocks whose eigenvalues (compared as `(Re, |Im|)`) lie within
    /// `tol` of each other, transitively. Returns the cluster index of every
    /// block and the cluster summaries.
    pub fn clusters(&self, tol: T) -> (Vec<usize>, Vec<Cluster<T>>) {
        let nb = self.blocks.len();
        let reps: Vec<(T, T)> = self
            .blocks
            .iter()
            .map(|&b| {
                let e = self.block_eigenvalues(b);
                (e[0].re, e[0].im.abs())
            })
            .collect();
        let mut id: Vec<usize> = (0..nb).collect();
        fn find(id: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while id[r] != r {
                r = id[r];
            }
            id[i] = r;
            r
        }
        for a in 0..nb {
            for b in (a + 1)..nb {
                let d = ((reps[a].0 - reps[b].0).powi(2) + (reps[a].1 - reps[b].1).powi(2)).sqrt();
                if d <= tol {
                    let ra = find(&mut id, a);
                    let rb = find(&mut id, b);
                    if ra != rb {
                        id[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut label = vec![usize::MAX; nb];
        let mut clusters: Vec<Cluster<T>> = Vec::new();
        let mut assign = vec![0usize; nb];
        #[allow(clippy::needless_range_loop)]
        for blk in 0..nb {
            let root = find(&mut id, blk);
            if label[root] == usize::MAX {
                label[root] = clusters.len();
                clusters.push(Cluster {
                    center: Complex::new(T::zero(), T::zero()),
                    eigenvalues: Vec::new(),
                    dim: 0,
                });
            }
            let c = label[root];
            assign[blk] = c;
            let eigs = self.block_eigenvalues(self.blocks[blk]);
            clusters[c].dim += eigs.len();
            clusters[c].eigenvalues.extend(eigs);
        }
        for c in clusters.iter_mut() {
            let k = crate::scalar::from_usize::<T>(c.eigenvalues.len());
            let re = c.eigenvalues.iter().fold(T::zero(), |s, e| s + e.re) / k;
            let im = c.eigenvalues.iter().fold(T::zero(), |s, e| s + e.im.abs()) / k;
            c.center = Complex::new(re, im);
        }
        (assign, clusters)
    }
}

/// Reordered form, clusters and the cluster index of every block.
pub type OrderedSchur<T> = (RealSchur<T>, Vec<Cluster<T>>, Vec<usize>);

/// Schur form of `a` reordered so that clusters appear in ascending
/// `key` order. Returns the form, the clusters and the cluster index of
/// every block in its new position.
pub fn ordered_schur<T: Real, K: PartialOrd + Clone>(
    a: &DMatrix<T>,
    key: impl Fn(&Cluster<T>) -> K,
) -> Result<OrderedSchur<T>> {
    let mut s = RealSchur::new(a)?;
    let (assign, clusters) = s.clusters(cluster_tol(norm2(a)));
    let keys: Vec<K> = assign.iter().map(|&c| key(&clusters[c])).collect();
    let perm = s.reorder_by(&keys)?;
    let assign = perm.iter().map(|&b| assign[b]).collect();
    Ok((s, clusters, assign))
}

/// Orthonormal basis of the invariant subspace of the clusters accepted by
/// `select`.
pub fn invariant_subspace<T: Real>(
    a: &DMatrix<T>,
    select: impl Fn(&Cluster<T>) -> bool,
) -> Result<DMatrix<T>> {
    let (s, clusters, _) = ordered_schur(a, |c| !select(c))?;
    let dim = clusters.iter().filter(|c| select(c)).map(|c| c.dim).sum();
    Ok(s.leading_basis(dim))
}

/// Default eigenvalue clustering tolerance for a matrix of norm `scale`.
pub fn cluster_tol<T: Real>(scale: T) -> T {
    lit::<T>(1e-6) * scale.max(T::one())
}

/// One spectral component of a modal decomposition: `right` has orthonormal
/// columns spanning the generalized eigenspace, `left` is the matching row
/// block of the inverse so that `Σ right·left = I` and `left·right = I`.
#[derive(Debug, Clone)]
pub struct Mode<T: Real> {
    pub cluster: Cluster<T>,
    pub right: DMatrix<T>,
    pub left: DMatrix<T>,
}

/// Block diagonalizes `a` along its eigenvalue clusters.
pub fn modal_decomposition<T: Real>(a: &DMatrix<T>) -> Result<Vec<Mode<T>>> {
    let n = a.nrows();
    let mut s = RealSchur::new(a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let (assign, clusters) = s.clusters(cluster_tol(norm2(a)));
    s.reorder_by(&assign)?;
    // contiguous ranges per cluster, in cluster order
    let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(clusters.len());
    let mut at = 0;
    for c in &clusters {
        ranges.push((at, c.dim));
        at += c.dim;
    }
    // peel clusters off one at a time: S⁻¹ T S block diagonal
    let mut sm = DMatrix::<T>::identity(n, n);
    let mut sinv = DMatrix::<T>::identity(n, n);
    for &(start, d) in ranges.iter() {
        let rest = n - start - d;
        if rest == 0 {
            break;
        }
        let t11 = s.t.view((start, start), (d, d)).into_owned();
        let t12 = s.t.view((start, start + d), (d, rest)).into_owned();
        let t22 = s.t.view((start + d, start + d), (rest, rest)).into_owned();
        let x = solve_sylvester(&t11, &t22, &(-t12)).ok_or_else(|| {
            Error::Degenerate("modal decomposition: clusters not separated".into())
        })?;
        // S ← S·[[I, X], [0, I]] on the trailing indices
        let cols = sm.view((0, start), (n, d)).into_owned();
        let mut tail = sm.view_mut((0, start + d), (n, rest));
        tail += cols * &x;
        // S⁻¹ ← [[I, −X], [0, I]]·S⁻¹
        let rows = sinv.view((start + d, 0), (rest, n)).into_owned();
        let mut head = sinv.view_mut((start, 0), (d, n));
        head -= &x * rows;
    }
    let qt = s.q.transpose();
    let mut modes = Vec::with_capacity(clusters.len());
    for (c, &(start, d)) in clusters.into_iter().zip(ranges.iter()) {
        let right = &s.q * sm.columns(start, d);
        let left = sinv.rows(start, d) * &qt;
        let qr = right.qr();
        let rq = qr.q();
        let rr = qr.r();
        modes.push(Mode {
            cluster: c,
            right: rq,
            left: rr * left,
        });
    }
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn reconstruct(s: &RealSchur<f64>) -> DMatrix<f64> {
        &s.q * &s.t * s.q.transpose()
    }

    #[test]
    fn reorder_preserves_similarity_and_moves_eigenvalues() {
        let a = dmatrix![
            1.0, 2.0, 0.5, 0.0;
            0.0, -3.0, 1.0, 2.0;
            0.0, 1.0, -1.0, 0.3;
            0.5, 0.0, 0.0, 2.0
        ];
        let mut s = RealSchur::new(&a).unwrap();
        let keys: Vec<u8> = s
            .blocks
            .iter()
            .map(|&b| if s.block_eigenvalues(b)[0].re < 0.0 { 0 } else { 1 })
            .collect();
        s.reorder_by(&keys).unwrap();
        assert!((reconstruct(&s) - &a).norm() < 1e-10);
        let eigs = s.eigenvalues();
        let nneg = eigs.iter().filter(|e| e.re < 0.0).count();
        assert!(eigs[..nneg].iter().all(|e| e.re < 0.0));
        // leading columns are invariant
        let v = s.leading_basis(nneg);
        let av = &a * &v;
        let resid = &av - &v * (v.transpose() * &av);
        assert!(resid.norm() < 1e-10);
    }

    #[test]
    fn complex_pair_swaps_with_real_eigenvalue() {
        let a: DMatrix<f64> = dmatrix![
            0.0, 1.0, 0.3;
            -1.0, 0.0, 0.2;
            0.0, 0.0, -2.0
        ];
        let mut s = RealSchur::new(&a).unwrap();
        let keys: Vec<u8> = s
            .blocks
            .iter()
            .map(|&b| if s.block_eigenvalues(b)[0].re < -0.5 { 0 } else { 1 })
            .collect();
        s.reorder_by(&keys).unwrap();
        assert_eq!(s.blocks[0].size, 1);
        assert!((s.t[(0, 0)] + 2.0).abs() < 1e-12);
        assert!((reconstruct(&s) - &a).norm() < 1e-12);
    }

    #[test]
    fn modal_decomposition_resolves_identity() {
        let a = dmatrix![
            -1.0, 1.0, 0.0, 0.0;
            0.0, -1.0, 0.0, 2.0;
            0.0, 0.0, 0.0, 1.0;
            0.0, 0.0, -1.0, 0.0
        ];
        let modes = modal_decomposition(&a).unwrap();
        assert_eq!(modes.len(), 2);
        let mut sum = DMatrix::<f64>::zeros(4, 4);
        for m in &modes {
            sum += &m.right * &m.left;
            let lr = &m.left * &m.right;
            assert!((lr - DMatrix::identity(m.cluster.dim, m.cluster.dim)).norm() < 1e-10);
            // invariance
            let av = &a * &m.right;
            assert!((&av - &m.right * (&m.left * &av)).norm() < 1e-10);
        }
        assert!((sum - DMatrix::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn jordan_block_is_one_cluster() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let s = RealSchur::new(&a).unwrap();
        let (_, cl) = s.clusters(cluster_tol(1.0));
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].dim, 2);
    }

    #[test]
    fn perturbed_jordan_pair_splits_into_triangular_form() {
        // similarity of a 2×2 Jordan block, so rounding yields a tiny complex pair
        let j: DMatrix<f64> = dmatrix![0.0, 1.0; 0.0, 0.0];
        let r = dmatrix![0.6, -0.8; 0.8, 0.6];
        let a = &r * j * r.transpose();
        let s = RealSchur::new(&a).unwrap();
        assert_eq!(s.blocks.len(), 2);
        assert!((reconstruct(&s) - &a).norm() < 1e-14);
        let v = s.leading_basis(1);
        assert!((&a * &v).norm() < 1e-8);
    }

    #[test]
    fn invariant_subspace_selects_clusters() {
        let a = dmatrix![-1.0, 3.0, 0.0; 0.0, 2.0, 1.0; 0.0, 0.0, -4.0];
        let v = invariant_subspace(&a, |c| c.center.re < 0.0).unwrap();
        assert_eq!(v.ncols(), 2);
        let av = &a * &v;
        assert!((&av - &v * (v.transpose() * &av)).norm() < 1e-12);
    }
}
