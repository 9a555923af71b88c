//! Orthonormal frames and the subspace geometry used across the crate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Orthonormal d×k column frame (k ≤ d, k may be 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    columns: DMatrix<f64>,
}

impl Frame {
    /// Wraps a matrix whose columns are already orthonormal.
    pub fn from_orthonormal(columns: DMatrix<f64>) -> Frame {
        debug_assert!(orthonormality_defect(&columns) < 1e-8);
        Frame { columns }
    }

    /// Orthonormalizes the columns (QR with positive R diagonal).
    pub fn orthonormalize(columns: &DMatrix<f64>) -> Frame {
        Frame {
            columns: qr_positive(columns).0,
        }
    }

    pub fn identity(d: usize) -> Frame {
        Frame {
            columns: DMatrix::identity(d, d),
        }
    }

    pub fn empty(d: usize) -> Frame {
        Frame {
            columns: DMatrix::zeros(d, 0),
        }
    }

    /// Span of the given unit basis vectors.
    pub fn coordinate(d: usize, indices: &[usize]) -> Frame {
        let mut m = DMatrix::zeros(d, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        Frame { columns: m }
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_columns(self) -> DMatrix<f64> {
        self.columns
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    /// ‖FᵀF − I‖ (max-abs entry).
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.columns)
    }

    /// Orthogonal projector F·Fᵀ onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.columns * self.columns.transpose()
    }

    /// Frame spanning the orthogonal complement.
    pub fn complement(&self) -> Frame {
        let d = self.ambient_dim();
        let k = self.rank();
        if k == 0 {
            return Frame::identity(d);
        }
        if k == d {
            return Frame::empty(d);
        }
        let mut full = DMatrix::zeros(d, d);
        full.columns_mut(0, k).copy_from(&self.columns);
        // Fill remaining columns with the unit vectors least aligned with the span.
        let p = self.projector();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| p[(a, a)].total_cmp(&p[(b, b)]));
        for (j, &i) in order.iter().take(d - k).enumerate() {
            full[(i, k + j)] = 1.0;
        }
        let q = qr_positive(&full).0;
        Frame {
            columns: q.columns(k, d - k).into_owned(),
        }
    }

    /// Flips column signs so that the leading k×k minor is positive.
    pub fn orient_leading_minor(&mut self) {
        let k = self.rank();
        if k == 0 {
            return;
        }
        let minor = self.columns.view((0, 0), (k, k)).determinant();
        if minor < 0.0 {
            let mut c = self.columns.column_mut(k - 1);
            c.neg_mut();
        }
    }

    /// Distance of v from the span, measured as an angle in radians.
    pub fn angle_to(&self, v: &DVector<f64>) -> f64 {
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        let inside = self.columns.transpose() * v;
        let outside = v - &self.columns * &inside;
        outside.norm().atan2(inside.norm())
    }
}

pub fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    let g = m.transpose() * m - DMatrix::identity(k, k);
    g.amax()
}

/// Thin QR with nonnegative R diagonal.
pub fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (d, k) = m.shape();
    if k == 0 {
        return (DMatrix::zeros(d, 0), DMatrix::zeros(0, 0));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k.min(d) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Sines of the principal angles between span(a) and span(b), ascending.
/// The number of angles is min(rank a, rank b).
pub fn principal_sines(a: &Frame, b: &Frame) -> Vec<f64> {
    let (big, small) = if a.rank() >= b.rank() { (a, b) } else { (b, a) };
    if small.rank() == 0 {
        return Vec::new();
    }
    let residual = small.columns() - big.columns() * (big.columns().transpose() * small.columns());
    let mut s: Vec<f64> = residual
        .svd(false, false)
        .singular_values
        .iter()
        .map(|v| v.min(1.0))
        .collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Principal angles in radians, ascending.
pub fn principal_angles(a: &Frame, b: &Frame) -> Vec<f64> {
    principal_sines(a, b).into_iter().map(f64::asin).collect()
}

/// Largest principal angle between two subspaces of equal dimension
/// (the gap metric, as an angle).
pub fn subspace_distance(a: &Frame, b: &Frame) -> f64 {
    assert_eq!(
        a.rank(),
        b.rank(),
        "subspace_distance needs equal dimensions"
    );
    principal_angles(a, b).last().copied().unwrap_or(0.0)
}

/// Rotates `new` within its span to the orthonormal basis closest to `reference`
/// (orthogonal Procrustes). Returns the aligned frame and the smallest singular
/// value of `newᵀ·reference` (cosine of the largest principal angle).
pub fn procrustes_align(new: &Frame, reference: &Frame) -> (Frame, f64) {
    let k = new.rank();
    if k == 0 {
        return (new.clone(), 1.0);
    }
    let m = new.columns().transpose() * reference.columns();
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let rotation = u * vt;
    let min_sv = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let aligned = new.columns() * rotation;
    (Frame { columns: aligned }, min_sv)
}

/// Deterministic pseudo-random orthogonal d×d matrix.
pub fn generic_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    qr_positive(&m).0
}

/// det of the d×d matrix [a | b].
pub fn joint_determinant(a: &Frame, b: &Frame) -> f64 {
    let d = a.ambient_dim();
    assert_eq!(
        a.rank() + b.rank(),
        d,
        "frames must have complementary dimensions"
    );
    let mut m = DMatrix::zeros(d, d);
    m.columns_mut(0, a.rank()).copy_from(a.columns());
    m.columns_mut(a.rank(), b.rank()).copy_from(b.columns());
    m.determinant()
}

/// Oblique projector with range span(range) and kernel span(kernel).
pub fn oblique_projector(range: &Frame, kernel: &Frame) -> Option<DMatrix<f64>> {
    let d = range.ambient_dim();
    let k = range.rank();
    assert_eq!(k + kernel.rank(), d);
    let mut m = DMatrix::zeros(d, d);
    m.columns_mut(0, k).copy_from(range.columns());
    m.columns_mut(k, d - k).copy_from(kernel.columns());
    let inv = m.clone().try_inverse()?;
    let mut sel = DMatrix::zeros(d, d);
    for i in 0..k {
        sel[(i, i)] = 1.0;
    }
    Some(m * sel * inv)
}

/// Orthonormal bases of the column space and null space of a square matrix.
pub fn range_and_kernel(p: &DMatrix<f64>, tol: f64) -> (Frame, Frame) {
    let d = p.nrows();
    let svd = p.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let scale = svd.singular_values.max().max(1.0);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let rank = idx
        .iter()
        .filter(|&&i| svd.singular_values[i] > tol * scale)
        .count();
    let range = DMatrix::from_fn(d, rank, |r, c| u[(r, idx[c])]);
    let kernel = DMatrix::from_fn(d, d - rank, |r, c| vt[(idx[rank + c], r)]);
    (Frame { columns: range }, Frame { columns: kernel })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthogonal() {
        let f = Frame::orthonormalize(&DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]));
        let c = f.complement();
        assert_eq!(c.rank(), 2);
        assert!((f.columns().transpose() * c.columns()).amax() < 1e-14);
        assert!(c.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn principal_angles_of_planes() {
        let a = Frame::coordinate(3, &[0, 1]);
        let theta: f64 = 0.3;
        let b = Frame::orthonormalize(&DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 0.0, 0.0, theta.cos(), 0.0, theta.sin()],
        ));
        let ang = principal_angles(&a, &b);
        assert!(ang[0].abs() < 1e-14);
        assert!((ang[1] - theta).abs() < 1e-14);
        // tiny angles are resolved through the sine form
        let eps: f64 = 1e-9;
        let c = Frame::orthonormalize(&DMatrix::from_row_slice(3, 1, &[1.0, eps, 0.0]));
        let e1 = Frame::coordinate(3, &[0]);
        assert!((principal_angles(&e1, &c)[0] - eps).abs() < 1e-20);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let reference = Frame::coordinate(3, &[0, 1]);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let rotated = Frame::from_orthonormal(reference.columns() * rot);
        let (aligned, cos) = procrustes_align(&rotated, &reference);
        assert!((aligned.columns() - reference.columns()).amax() < 1e-14);
        assert!((cos - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oblique_projector_is_idempotent() {
        let r = Frame::orthonormalize(&DMatrix::from_row_slice(2, 1, &[1.0, 0.5]));
        let n = Frame::coordinate(2, &[1]);
        let p = oblique_projector(&r, &n).unwrap();
        assert!((&p * &p - &p).amax() < 1e-14);
        assert!((&p * r.columns() - r.columns()).amax() < 1e-14);
        assert!((&p * n.columns()).amax() < 1e-14);
    }

    #[test]
    fn range_and_kernel_of_example_projector() {
        let c = -1.0;
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, c, 0.0]);
        let (r, n) = range_and_kernel(&p, 1e-12);
        assert_eq!((r.rank(), n.rank()), (1, 1));
        let expected = Frame::orthonormalize(&DMatrix::from_row_slice(2, 1, &[1.0, c]));
        assert!(subspace_distance(&r, &expected) < 1e-14);
        assert!(subspace_distance(&n, &Frame::coordinate(2, &[1])) < 1e-14);
    }

    #[test]
    fn leading_minor_orientation() {
        let mut f = Frame::from_orthonormal(DMatrix::from_row_slice(2, 1, &[-0.6, 0.8]));
        f.orient_leading_minor();
        assert!(f.columns()[(0, 0)] > 0.0);
    }

    #[test]
    fn generic_orthogonal_is_orthogonal_and_seeded() {
        let a = generic_orthogonal(4, 7);
        assert!(orthonormality_defect(&a) < 1e-14);
        assert_eq!(a, generic_orthogonal(4, 7));
        assert_ne!(a, generic_orthogonal(4, 8));
    }
}
