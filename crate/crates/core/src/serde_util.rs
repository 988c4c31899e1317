//! Serialization of matrices and vectors as plain nested JSON arrays.

use nalgebra::{Complex, DMatrix, DVector};
use serde::ser::{SerializeSeq, Serializer};

use crate::scalar::{to_f64, Real};

pub fn matrix_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| to_f64(m[(i, j)])).collect())
        .collect()
}

pub fn vector_values<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|&x| to_f64(x)).collect()
}

pub fn mat<T: Real, S: Serializer>(m: &DMatrix<T>, s: S) -> Result<S::Ok, S::Error> {
    let rows = matrix_rows(m);
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in &rows {
        seq.serialize_element(r)?;
    }
    seq.end()
}

pub fn vector<T: Real, S: Serializer>(v: &DVector<T>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| to_f64(x)))
}

pub fn opt_vector<T: Real, S: Serializer>(
    v: &Option<DVector<T>>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => vector(v, s),
        None => s.serialize_none(),
    }
}

pub fn scalar<T: Real, S: Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(to_f64(*x))
}

pub fn scalars<T: Real, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| to_f64(x)))
}

/// Complex numbers as `[re, im]` pairs.
pub fn complexes<T: Real, S: Serializer>(v: &[Complex<T>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|c| [to_f64(c.re), to_f64(c.im)]))
}

pub fn window<T: Real, S: Serializer>(w: &(T, T), s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq([to_f64(w.0), to_f64(w.1)])
}
