//! Fixed-capacity dense matrices for the augmented tangent system.
//!
//! The flow matrices are at most `MAX_DIM × MAX_DIM` and are updated once
//! per fine step for every particle, so they live on the stack.

use std::fmt;
use std::ops::{Index, IndexMut};

pub const MAX_DIM: usize = 5;

/// Relative pivot threshold below which a matrix is treated as singular.
pub const PIVOT_RTOL: f64 = 1e-13;

#[derive(Clone, Copy, PartialEq)]
pub struct SmallMat {
    dim: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl fmt::Debug for SmallMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)]).collect())
            .collect();
        f.debug_struct("SmallMat").field("rows", &rows).finish()
    }
}

impl SmallMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "matrix dimension {dim} outside 1..={MAX_DIM}");
        Self { dim, a: [0.0; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mul(&self, rhs: &SmallMat) -> SmallMat {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = SmallMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * MAX_DIM + j] += aik * rhs.a[k * MAX_DIM + j];
                }
            }
        }
        out
    }

    /// `self · x` for a vector of length `dim`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        self.mul_vec_n(self.dim, x, out)
    }

    /// The `*_n` variants take the dimension explicitly so that callers
    /// with a literal dimension get fully unrolled code.
    #[inline(always)]
    pub(crate) fn mul_vec_n(&self, n: usize, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(n, self.dim);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    fn map2(&self, rhs: &SmallMat, f: impl Fn(f64, f64) -> f64) -> SmallMat {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let c = i * MAX_DIM + j;
                out.a[c] = f(self.a[c], rhs.a[c]);
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> SmallMat {
        self.map2(self, |a, _| a * alpha)
    }

    pub fn add(&self, rhs: &SmallMat) -> SmallMat {
        self.map2(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &SmallMat) -> SmallMat {
        self.map2(rhs, |a, b| a - b)
    }

    /// `self + g · self`, i.e. one step `(I + G) ℰ` of a linear recursion.
    #[inline]
    pub fn step_by(&self, g: &SmallMat) -> SmallMat {
        let mut out = SmallMat::zeros(self.dim);
        self.step_into(g, &mut out);
        out
    }

    /// [`step_by`](Self::step_by) writing into `out`.
    pub fn step_into(&self, g: &SmallMat, out: &mut SmallMat) {
        self.step_into_n(self.dim, g, out)
    }

    #[inline(always)]
    pub(crate) fn step_into_n(&self, n: usize, g: &SmallMat, out: &mut SmallMat) {
        debug_assert_eq!(n, self.dim);
        out.dim = n;
        for i in 0..n {
            for j in 0..n {
                let mut s = self.a[i * MAX_DIM + j];
                for k in 0..n {
                    s += g.a[i * MAX_DIM + k] * self.a[k * MAX_DIM + j];
                }
                out.a[i * MAX_DIM + j] = s;
            }
        }
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.is_finite_n(self.dim)
    }

    #[inline(always)]
    pub(crate) fn is_finite_n(&self, n: usize) -> bool {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.a[i * MAX_DIM + j] * 0.0;
            }
        }
        // Any NaN or infinity turns the zero sum into NaN.
        acc == 0.0
    }

    /// LU factorisation with partial pivoting. `None` when a pivot falls
    /// below `PIVOT_RTOL` relative to the largest entry.
    pub fn lu(&self) -> Option<Lu> {
        let mut lu = *self;
        let mut perm = [0usize; MAX_DIM];
        lu_in_place(&mut lu, &mut perm).then_some(Lu { lu, perm })
    }

    pub fn inverse(&self) -> Option<SmallMat> {
        let mut out = SmallMat::zeros(self.dim);
        self.inverse_into(&mut out).then_some(out)
    }

    /// Writes the inverse into `out`; false when the matrix is singular.
    ///
    /// Dimensions up to 3 use the adjugate, which is several times cheaper
    /// than a pivoted factorisation at these sizes; the singularity test is
    /// `|det| ≤ PIVOT_RTOL · max|aᵢⱼ|ⁿ`.
    pub fn inverse_into(&self, out: &mut SmallMat) -> bool {
        self.inverse_into_n(self.dim, out)
    }

    #[inline(always)]
    pub(crate) fn inverse_into_n(&self, n: usize, out: &mut SmallMat) -> bool {
        debug_assert_eq!(n, self.dim);
        if n <= 3 {
            return self.adjugate_inverse(n, out);
        }
        let mut lu = *self;
        let mut perm = [0usize; MAX_DIM];
        if !lu_in_place(&mut lu, &mut perm) {
            return false;
        }
        let n = self.dim;
        out.dim = n;
        let mut x = [0.0; MAX_DIM];
        for col in 0..n {
            for i in 0..n {
                let mut s = if perm[i] == col { 1.0 } else { 0.0 };
                for j in 0..i {
                    s -= lu.a[i * MAX_DIM + j] * x[j];
                }
                x[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[i];
                for j in i + 1..n {
                    s -= lu.a[i * MAX_DIM + j] * x[j];
                }
                x[i] = s / lu.a[i * MAX_DIM + i];
            }
            for row in 0..n {
                out.a[row * MAX_DIM + col] = x[row];
            }
        }
        true
    }

    #[inline(always)]
    fn adjugate_inverse(&self, n: usize, out: &mut SmallMat) -> bool {
        let m = |i: usize, j: usize| self.a[i * MAX_DIM + j];
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                scale = scale.max(m(i, j).abs());
            }
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return false;
        }
        out.dim = n;
        let o = &mut out.a;
        match n {
            1 => o[0] = 1.0 / m(0, 0),
            2 => {
                let det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
                if !(det.abs() > PIVOT_RTOL * scale * scale) {
                    return false;
                }
                let r = 1.0 / det;
                o[0] = m(1, 1) * r;
                o[1] = -m(0, 1) * r;
                o[MAX_DIM] = -m(1, 0) * r;
                o[MAX_DIM + 1] = m(0, 0) * r;
            }
            _ => {
                let c00 = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
                let c01 = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
                let c02 = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
                let det = m(0, 0) * c00 + m(0, 1) * c01 + m(0, 2) * c02;
                if !(det.abs() > PIVOT_RTOL * scale * scale * scale) {
                    return false;
                }
                let r = 1.0 / det;
                o[0] = c00 * r;
                o[1] = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) * r;
                o[2] = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) * r;
                o[MAX_DIM] = c01 * r;
                o[MAX_DIM + 1] = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) * r;
                o[MAX_DIM + 2] = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) * r;
                o[2 * MAX_DIM] = c02 * r;
                o[2 * MAX_DIM + 1] = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) * r;
                o[2 * MAX_DIM + 2] = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) * r;
            }
        }
        true
    }

    /// `‖inv · self − I‖∞` without temporaries.
    pub fn inverse_residual(&self, inv: &SmallMat) -> f64 {
        self.inverse_residual_n(self.dim, inv)
    }

    #[inline(always)]
    pub(crate) fn inverse_residual_n(&self, n: usize, inv: &SmallMat) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let mut s = if i == j { -1.0 } else { 0.0 };
                for k in 0..n {
                    s += inv.a[i * MAX_DIM + k] * self.a[k * MAX_DIM + j];
                }
                row += s.abs();
            }
            // `f64::max` would drop a NaN row.
            if row.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(row);
        }
        worst
    }
}

fn lu_in_place(lu: &mut SmallMat, perm: &mut [usize; MAX_DIM]) -> bool {
    let n = lu.dim;
    let mut scale = 0.0f64;
    for i in 0..n {
        perm[i] = i;
        for j in 0..n {
            scale = scale.max(lu.a[i * MAX_DIM + j].abs());
        }
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return false;
    }
    for col in 0..n {
        let mut piv = col;
        let mut pmax = -1.0;
        for r in col..n {
            let v = lu.a[r * MAX_DIM + col].abs();
            if v > pmax {
                pmax = v;
                piv = r;
            }
        }
        if !(pmax > PIVOT_RTOL * scale) {
            return false;
        }
        if piv != col {
            for j in 0..n {
                lu.a.swap(piv * MAX_DIM + j, col * MAX_DIM + j);
            }
            perm.swap(piv, col);
        }
        let d = lu.a[col * MAX_DIM + col];
        for r in col + 1..n {
            let factor = lu.a[r * MAX_DIM + col] / d;
            lu.a[r * MAX_DIM + col] = factor;
            if factor != 0.0 {
                for j in col + 1..n {
                    lu.a[r * MAX_DIM + j] -= factor * lu.a[col * MAX_DIM + j];
                }
            }
        }
    }
    true
}

/// Packed LU factors (unit lower triangle below the diagonal).
pub struct Lu {
    lu: SmallMat,
    perm: [usize; MAX_DIM],
}

impl Lu {
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.lu.dim;
        for i in 0..n {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
    }

    pub fn inverse(&self) -> SmallMat {
        let n = self.lu.dim;
        let mut inv = SmallMat::zeros(n);
        let mut e = [0.0; MAX_DIM];
        let mut x = [0.0; MAX_DIM];
        for col in 0..n {
            e[..n].fill(0.0);
            e[col] = 1.0;
            self.solve(&e[..n], &mut x[..n]);
            for row in 0..n {
                inv[(row, col)] = x[row];
            }
        }
        inv
    }
}

impl Index<(usize, usize)> for SmallMat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.a[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for SmallMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.a[i * MAX_DIM + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inverse_of_identity() {
        let i = SmallMat::identity(4);
        assert_eq!(i.inverse().unwrap(), i);
    }

    #[test]
    fn singular_is_rejected() {
        let m = SmallMat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(m.inverse().is_none());
        assert!(SmallMat::zeros(3).inverse().is_none());
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let m = SmallMat::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let inv = m.inverse().unwrap();
        assert!(m.mul(&inv).sub(&SmallMat::identity(2)).norm_inf() < 1e-15);
    }

    proptest! {
        #[test]
        fn small_inverses_agree_with_lu(entries in proptest::collection::vec(-1.0f64..1.0, 9), n in 1usize..=3) {
            let mut m = SmallMat::identity(n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += entries[i * 3 + j];
                }
            }
            if let Some(lu) = m.lu() {
                let (a, b) = (m.inverse().unwrap(), lu.inverse());
                prop_assert!(a.sub(&b).norm_inf() <= 1e-9 * (1.0 + b.norm_inf()).powi(2));
            }
        }

        #[test]
        fn well_conditioned_inverse(entries in proptest::collection::vec(-0.3f64..0.3, 25)) {
            let mut m = SmallMat::identity(5);
            for i in 0..5 {
                for j in 0..5 {
                    m[(i, j)] += entries[i * 5 + j];
                }
            }
            let inv = m.inverse().unwrap();
            prop_assert!(m.mul(&inv).sub(&SmallMat::identity(5)).norm_inf() < 1e-8);
            prop_assert!(inv.mul(&m).sub(&SmallMat::identity(5)).norm_inf() < 1e-8);
        }
    }
}
