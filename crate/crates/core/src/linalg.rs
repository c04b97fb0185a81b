//! Dense complex matrices and the handful of factorizations the physics needs.
//!
//! Storage is row-major. Products go through `matrixmultiply::zgemm`; the
//! factorizations are small hand-written kernels.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6e}{:+.6e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Whether a gemm operand is used as stored or conjugate-transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// Use the matrix as is.
    None,
    /// Use the conjugate transpose.
    Adjoint,
}

impl CMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Square matrix with `diag` on the diagonal.
    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Matrix with entries `f(i, j)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Wrap row-major data.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        CMatrix { rows, cols, data }
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// True for square matrices.
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// Mutable row-major entries.
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Row `i`.
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mutable row `i`.
    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j`, copied.
    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Diagonal entries.
    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    /// Copy of the `nr x nc` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> CMatrix {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        let mut out = Self::zeros(nr, nc);
        for i in 0..nr {
            out.row_mut(i)
                .copy_from_slice(&self.row(r0 + i)[c0..c0 + nc]);
        }
        out
    }

    /// Overwrite the block starting at `(r0, c0)` with `src`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &CMatrix) {
        assert!(
            r0 + src.rows <= self.rows && c0 + src.cols <= self.cols,
            "block out of range"
        );
        for i in 0..src.rows {
            let cols = self.cols;
            self.data[(r0 + i) * cols + c0..(r0 + i) * cols + c0 + src.cols]
                .copy_from_slice(src.row(i));
        }
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        product(self, Op::None, rhs, Op::None)
    }

    /// `self† * rhs`.
    pub fn adjoint_matmul(&self, rhs: &CMatrix) -> CMatrix {
        product(self, Op::Adjoint, rhs, Op::None)
    }

    /// `self * rhs†`.
    pub fn matmul_adjoint(&self, rhs: &CMatrix) -> CMatrix {
        product(self, Op::None, rhs, Op::Adjoint)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    /// Entrywise sum.
    pub fn add(&self, rhs: &CMatrix) -> CMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }

    /// Entrywise difference.
    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &CMatrix, f: impl Fn(C64, C64) -> C64) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Multiply every entry by `s`.
    pub fn scale(&mut self, s: C64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// Add `s` to every diagonal entry.
    pub fn add_to_diagonal(&mut self, s: C64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += s;
        }
    }

    /// Sum of diagonal entries.
    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, z) in sums.iter_mut().zip(self.row(i)) {
                *s += z.norm();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry modulus of `self - 1`.
    pub fn max_abs_deviation_from_identity(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((self[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// `(self + self†) / 2`, for matrices that are Hermitian up to roundoff.
    pub fn hermitian_part(&self) -> CMatrix {
        assert!(self.is_square());
        let n = self.rows;
        CMatrix::from_fn(n, n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Unconjugated dot product.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Conjugated inner product `a† b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(&x, &y)| x.conj() * y).sum()
}

fn op_shape(m: &CMatrix, op: Op) -> (usize, usize) {
    match op {
        Op::None => (m.rows, m.cols),
        Op::Adjoint => (m.cols, m.rows),
    }
}

/// `op(a) * op(b)` as a fresh matrix.
pub fn product(a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op) -> CMatrix {
    let (m, _) = op_shape(a, op_a);
    let (_, n) = op_shape(b, op_b);
    let mut c = CMatrix::zeros(m, n);
    gemm(ONE, a, op_a, b, op_b, ZERO, &mut c);
    c
}

/// `c <- alpha op(a) op(b) + beta c`.
///
/// # Panics
/// On inconsistent shapes.
pub fn gemm(alpha: C64, a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op, beta: C64, c: &mut CMatrix) {
    let (m, k) = op_shape(a, op_a);
    let (k2, n) = op_shape(b, op_b);
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape mismatch");
    let ldc = c.cols;
    gemm_strided(
        alpha,
        View::of(a, op_a),
        View::of(b, op_b),
        beta,
        &mut c.data,
        ldc,
    );
}

/// A possibly adjointed operand inside a row-major buffer.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    data: &'a [C64],
    /// Row stride of the stored (not adjointed) matrix.
    ld: usize,
    /// Shape of `op(stored)`.
    rows: usize,
    cols: usize,
    op: Op,
}

impl<'a> View<'a> {
    fn of(m: &'a CMatrix, op: Op) -> Self {
        let (rows, cols) = op_shape(m, op);
        View {
            data: &m.data,
            ld: m.cols,
            rows,
            cols,
            op,
        }
    }

    /// Untransposed `rows x cols` block starting at `offset` with stride `ld`.
    pub(crate) fn raw(data: &'a [C64], offset: usize, ld: usize, rows: usize, cols: usize) -> Self {
        View {
            data: &data[offset..],
            ld,
            rows,
            cols,
            op: Op::None,
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> C64 {
        match self.op {
            Op::None => self.data[i * self.ld + j],
            Op::Adjoint => self.data[j * self.ld + i].conj(),
        }
    }

    /// Row and column strides (in f64 units) of the real plane, and the sign
    /// of the imaginary plane.
    fn planes(&self) -> (isize, isize, f64) {
        let row = 2 * self.ld as isize;
        match self.op {
            Op::None => (row, 2, 1.0),
            Op::Adjoint => (2, row, -1.0),
        }
    }
}

/// Above this many multiply-adds the complex product is formed from three
/// real products (`(a+ib)(c+id)` via `ac`, `bd` and `(a+b)(c+d)`), which
/// beats complex zgemm by about a third at the sizes used here.
const GEMM_3M_THRESHOLD: usize = 24 * 24 * 24;

/// `c <- alpha op(a) op(b) + beta c` on a row-major output with row stride
/// `ldc`.
pub(crate) fn gemm_strided(alpha: C64, a: View<'_>, b: View<'_>, beta: C64, c: &mut [C64], ldc: usize) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions differ");
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= (m - 1) * ldc + n, "output buffer too short");
    if k == 0 {
        for i in 0..m {
            for z in &mut c[i * ldc..i * ldc + n] {
                *z *= beta;
            }
        }
        return;
    }
    if m * n * k >= GEMM_3M_THRESHOLD {
        gemm_3m(alpha, a, b, beta, c, ldc);
        return;
    }
    // zgemm has no conjugation flag, so adjoint operands are materialized.
    let own = |v: View<'_>| -> Option<Vec<C64>> {
        (v.op == Op::Adjoint).then(|| {
            let mut out = Vec::with_capacity(v.rows * v.cols);
            for i in 0..v.rows {
                for j in 0..v.cols {
                    out.push(v.get(i, j));
                }
            }
            out
        })
    };
    let a_owned = own(a);
    let b_owned = own(b);
    let (ap, lda) = match &a_owned {
        Some(v) => (v.as_ptr(), k),
        None => (a.data.as_ptr(), a.ld),
    };
    let (bp, ldb) = match &b_owned {
        Some(v) => (v.as_ptr(), n),
        None => (b.data.as_ptr(), b.ld),
    };
    // SAFETY: Complex<f64> is repr(C) { re, im }, the same layout as [f64; 2].
    // Extents and strides stay inside the operand buffers, and `c` is
    // borrowed mutably so it cannot alias them.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            ap as *const [f64; 2],
            lda as isize,
            1,
            bp as *const [f64; 2],
            ldb as isize,
            1,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            ldc as isize,
            1,
        );
    }
}

/// `Re + Im` of `op(v)` (the adjoint's imaginary part is negated), row-major.
fn plane_sum(v: &View<'_>) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.rows * v.cols);
    match v.op {
        Op::None => {
            for i in 0..v.rows {
                out.extend(v.data[i * v.ld..i * v.ld + v.cols].iter().map(|z| z.re + z.im));
            }
        }
        Op::Adjoint => {
            for i in 0..v.rows {
                out.extend((0..v.cols).map(|j| {
                    let z = v.data[j * v.ld + i];
                    z.re - z.im
                }));
            }
        }
    }
    out
}

fn gemm_3m(alpha: C64, a: View<'_>, b: View<'_>, beta: C64, c: &mut [C64], ldc: usize) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let (a_rs, a_cs, a_sign) = a.planes();
    let (b_rs, b_cs, b_sign) = b.planes();
    let ap = a.data.as_ptr() as *const f64;
    let bp = b.data.as_ptr() as *const f64;

    let a_sum = plane_sum(&a);
    let b_sum = plane_sum(&b);
    // dgemm with beta = 0 never reads its output, so the product buffers
    // are left uninitialized until it writes them.
    let mut t: Vec<f64> = Vec::with_capacity(3 * m * n);
    let t_ptr = t.spare_capacity_mut().as_mut_ptr() as *mut f64;
    // SAFETY: the strided views stay inside the interleaved operand buffers
    // (2 f64 per complex entry, real plane at offset 0 and imaginary plane at
    // offset 1). The three outputs are disjoint m*n ranges of `t`'s
    // capacity, fully written before `set_len` exposes them.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, ap, a_rs, a_cs, bp, b_rs, b_cs, 0.0, t_ptr, n as isize, 1);
        matrixmultiply::dgemm(
            m,
            k,
            n,
            a_sign * b_sign,
            ap.add(1),
            a_rs,
            a_cs,
            bp.add(1),
            b_rs,
            b_cs,
            0.0,
            t_ptr.add(m * n),
            n as isize,
            1,
        );
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a_sum.as_ptr(),
            k as isize,
            1,
            b_sum.as_ptr(),
            n as isize,
            1,
            0.0,
            t_ptr.add(2 * m * n),
            n as isize,
            1,
        );
        t.set_len(3 * m * n);
    }
    let (t1, rest) = t.split_at(m * n);
    let (t2, t3) = rest.split_at(m * n);
    for i in 0..m {
        let row = &mut c[i * ldc..i * ldc + n];
        let span = i * n..(i + 1) * n;
        let parts = t1[span.clone()].iter().zip(t2[span.clone()].iter().zip(&t3[span]));
        let out = row.iter_mut().zip(parts);
        if alpha == ONE && beta == ZERO {
            for (z, (&p, (&q, &r))) in out {
                *z = C64::new(p - q, r - p - q);
            }
        } else if alpha == ONE && beta == ONE {
            for (z, (&p, (&q, &r))) in out {
                *z += C64::new(p - q, r - p - q);
            }
        } else if beta == ZERO {
            for (z, (&p, (&q, &r))) in out {
                *z = alpha * C64::new(p - q, r - p - q);
            }
        } else {
            for (z, (&p, (&q, &r))) in out {
                *z = alpha * C64::new(p - q, r - p - q) + beta * *z;
            }
        }
    }
}

const TRSM_BLOCK: usize = 8;

/// Rows `lo..hi` of `L X = B` for unit lower-triangular `L` (leading
/// dimension `ld`) and row-major `B` with `m` columns, assuming rows before
/// `lo` are already eliminated. Recursive halving puts almost all the work
/// into matrix products.
fn trsm_lower_unit(l: &[C64], ld: usize, lo: usize, hi: usize, b: &mut [C64], m: usize) {
    if hi - lo <= TRSM_BLOCK {
        for i in lo..hi {
            let (done, rest) = b.split_at_mut(i * m);
            let target = &mut rest[..m];
            for k in lo..i {
                let f = l[i * ld + k];
                if f != ZERO {
                    for (x, &y) in target.iter_mut().zip(&done[k * m..(k + 1) * m]) {
                        *x -= f * y;
                    }
                }
            }
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    trsm_lower_unit(l, ld, lo, mid, b, m);
    let (head, tail) = b.split_at_mut(mid * m);
    gemm_strided(
        -ONE,
        View::raw(l, mid * ld + lo, ld, hi - mid, mid - lo),
        View::raw(head, lo * m, m, mid - lo, m),
        ONE,
        tail,
        m,
    );
    trsm_lower_unit(l, ld, mid, hi, b, m);
}

/// Rows `lo..hi` of `U X = B`, assuming rows from `hi` on are solved.
fn trsm_upper(u: &[C64], ld: usize, lo: usize, hi: usize, b: &mut [C64], m: usize) {
    if hi - lo <= TRSM_BLOCK {
        for i in (lo..hi).rev() {
            let (head, rest) = b.split_at_mut((i + 1) * m);
            let target = &mut head[i * m..];
            for k in i + 1..hi {
                let f = u[i * ld + k];
                if f != ZERO {
                    for (x, &y) in target.iter_mut().zip(&rest[(k - i - 1) * m..(k - i) * m]) {
                        *x -= f * y;
                    }
                }
            }
            let inv = u[i * ld + i].inv();
            for x in target.iter_mut() {
                *x *= inv;
            }
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    trsm_upper(u, ld, mid, hi, b, m);
    let (head, tail) = b.split_at_mut(mid * m);
    gemm_strided(
        -ONE,
        View::raw(u, lo * ld + mid, ld, mid - lo, hi - mid),
        View::raw(tail, 0, m, hi - mid, m),
        ONE,
        &mut head[lo * m..],
        m,
    );
    trsm_upper(u, ld, lo, mid, b, m);
}

/// Copy of the `rows x cols` block at `(r0, c0)`.
fn copy_block(a: &[C64], ld: usize, r0: usize, c0: usize, rows: usize, cols: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in r0..r0 + rows {
        out.extend_from_slice(&a[i * ld + c0..i * ld + c0 + cols]);
    }
    out
}

/// Partial-pivoting LU of the panel `a[r0.., c0..c1]` of an `n x n`
/// row-major matrix (`r0 == c0`). Row swaps act on whole rows, as in
/// LAPACK's getrf, so the factors end up in place.
fn lu_recursive(
    a: &mut [C64],
    n: usize,
    r0: usize,
    c0: usize,
    c1: usize,
    perm: &mut [usize],
    odd: &mut bool,
) -> Result<(), Singular> {
    let w = c1 - c0;
    if w <= TRSM_BLOCK {
        for k in c0..c1 {
            let row0 = r0 + (k - c0);
            let mut p = row0;
            let mut best = abs1(a[row0 * n + k]);
            for i in row0 + 1..n {
                let v = abs1(a[i * n + k]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Singular);
            }
            if p != row0 {
                for j in 0..n {
                    a.swap(row0 * n + j, p * n + j);
                }
                perm.swap(row0, p);
                *odd = !*odd;
            }
            let inv = a[row0 * n + k].inv();
            let (head, tail) = a.split_at_mut((row0 + 1) * n);
            let pivot_row = &head[row0 * n + k + 1..row0 * n + c1];
            for row in tail.chunks_exact_mut(n) {
                let l = row[k] * inv;
                row[k] = l;
                if l != ZERO {
                    for (x, &u) in row[k + 1..c1].iter_mut().zip(pivot_row) {
                        *x -= l * u;
                    }
                }
            }
        }
        return Ok(());
    }
    let w1 = w / 2;
    let cm = c0 + w1;
    lu_recursive(a, n, r0, c0, cm, perm, odd)?;
    // A12 <- L11⁻¹ A12
    let l11 = copy_block(a, n, r0, c0, w1, w1);
    let mut a12 = copy_block(a, n, r0, cm, w1, c1 - cm);
    trsm_lower_unit(&l11, w1, 0, w1, &mut a12, c1 - cm);
    for (i, row) in a12.chunks_exact(c1 - cm).enumerate() {
        a[(r0 + i) * n + cm..(r0 + i) * n + c1].copy_from_slice(row);
    }
    // A22 <- A22 − A21 A12
    let below = n - (r0 + w1);
    if below > 0 {
        let a21 = copy_block(a, n, r0 + w1, c0, below, w1);
        gemm_strided(
            -ONE,
            View::raw(&a21, 0, w1, below, w1),
            View::raw(&a12, 0, c1 - cm, w1, c1 - cm),
            ONE,
            &mut a[(r0 + w1) * n + cm..],
            n,
        );
    }
    lu_recursive(a, n, r0 + w1, cm, c1, perm, odd)
}

/// The matrix handed to [`Lu::factor`] has an exactly zero pivot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Singular;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    odd: bool,
}

fn abs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

impl Lu {
    /// Factor a square matrix.
    pub fn factor(mut a: CMatrix) -> Result<Lu, Singular> {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd = false;
        lu_recursive(&mut a.data, n, 0, 0, n, &mut perm, &mut odd)?;
        Ok(Lu { lu: a, perm, odd })
    }

    /// Order of the factored matrix.
    pub fn order(&self) -> usize {
        self.lu.rows
    }

    /// Solve `A X = B` in place for a block of right-hand sides.
    pub fn solve_in_place(&self, b: &mut CMatrix) {
        let n = self.order();
        assert_eq!(b.rows, n, "right-hand side has wrong row count");
        let m = b.cols;
        let mut permuted = CMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            permuted.row_mut(i).copy_from_slice(b.row(p));
        }
        *b = permuted;
        trsm_lower_unit(&self.lu.data, n, 0, n, &mut b.data, m);
        trsm_upper(&self.lu.data, n, 0, n, &mut b.data, m);
    }

    /// Solve `A x = b`.
    pub fn solve_vec(&self, b: &[C64]) -> Vec<C64> {
        let n = self.order();
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    /// Solve `A† x = b`.
    pub fn solve_adjoint_vec(&self, b: &[C64]) -> Vec<C64> {
        let n = self.order();
        // A† = U† L† P, so solve U† y = b, then L† w = y, then x = Pᵀ w.
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[(k, i)].conj() * y[k];
            }
            y[i] = s / self.lu[(i, i)].conj();
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)].conj() * y[k];
            }
            y[i] = s;
        }
        let mut x = vec![ZERO; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Determinant.
    pub fn determinant(&self) -> C64 {
        let d: C64 = (0..self.order()).map(|i| self.lu[(i, i)]).product();
        if self.odd {
            -d
        } else {
            d
        }
    }

    /// Lower-bound estimate of `‖A⁻¹‖₁` (Hager's method with Higham's
    /// safeguard), exact in most cases and never more than a small factor off.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.order();
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve_vec(&x);
            let norm: f64 = y.iter().map(|z| z.norm()).sum();
            if iter > 0 && norm <= est {
                break;
            }
            est = norm;
            let xi: Vec<C64> = y
                .iter()
                .map(|&z| {
                    let a = z.norm();
                    if a > 0.0 {
                        z / a
                    } else {
                        ONE
                    }
                })
                .collect();
            let z = self.solve_adjoint_vec(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            let ztx: f64 = inner(&z, &x).re;
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![ZERO; n];
            x[j] = ONE;
        }
        let alt: Vec<C64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                C64::new(sign * (1.0 + frac), 0.0)
            })
            .collect();
        let y = self.solve_vec(&alt);
        let alt_est = 2.0 * y.iter().map(|z| z.norm()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// 1-norm condition number estimate of `a`, infinite when singular.
pub fn condition_number_1(a: &CMatrix) -> (Option<Lu>, f64) {
    let norm = a.norm1();
    match Lu::factor(a.clone()) {
        Ok(lu) => {
            let c = norm * lu.inverse_norm1_estimate();
            (Some(lu), c)
        }
        Err(Singular) => (None, f64::INFINITY),
    }
}

/// True when the Hermitian matrix `h + tol·1` admits a Cholesky factorization,
/// i.e. every eigenvalue of `h` is above `-tol` (up to roundoff).
pub fn is_positive_semidefinite(h: &CMatrix, tol: f64) -> bool {
    assert!(h.is_square());
    let n = h.rows;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)].re + tol;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    true
}

/// Eigenvalues (ascending) and eigenvectors (as columns) of a Hermitian
/// matrix by cyclic Jacobi rotations. Meant for small matrices and tests.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert!(h.is_square());
    let n = h.rows;
    let mut a = h.hermitian_part();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // V = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let vpp = C64::new(c, 0.0);
                let vpq = C64::new(s, 0.0);
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * vpp + akq * vqp;
                    a[(k, q)] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * vpp + vkq * vqp;
                    v[(k, q)] = vkp * vpq + vkq * vqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    hermitian_eigen(h).0
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let g = a.adjoint_matmul(a);
    let mut s: Vec<f64> = hermitian_eigenvalues(&g)
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    s.reverse();
    s
}

/// Replace the columns of a square matrix by their modified Gram–Schmidt
/// orthonormalization, i.e. the Q factor of its QR decomposition.
pub fn orthonormalize_columns(a: &mut CMatrix) {
    let n = a.cols;
    let rows = a.rows;
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    for j in 0..n {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let r = inner(&done[k], &rest[0]);
            for (x, &q) in rest[0].iter_mut().zip(&done[k]) {
                *x -= r * q;
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    for i in 0..rows {
        for j in 0..n {
            a[(i, j)] = cols[j][i];
        }
    }
}


/// Largest eigenvalue modulus of a Hermitian matrix by power iteration.
/// Converges from below; callers add a margin.
fn spectral_radius_estimate(h: &CMatrix) -> f64 {
    let n = h.rows;
    let mut x: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 + 0.37 * (i as f64 * 0.61).sin(), 0.0))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..16 {
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for z in &mut x {
            *z /= norm;
        }
        let y = h.mul_vec(&x);
        lambda = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        x = y;
    }
    lambda
}

/// Largest 2-norm for which the degree-7 diagonal Padé approximant of
/// `exp` has backward error below unit roundoff.
const PADE7_THETA: f64 = 0.9504178996162932;

/// `exp(X)` for anti-Hermitian `X` by the [7/7] Padé approximant with
/// scaling and squaring. `theta` must bound (or closely estimate) `‖X‖₂`.
///
/// With `X` anti-Hermitian the denominator is the adjoint of the numerator,
/// so the approximant is exactly unitary up to the conditioning of one
/// well-conditioned solve.
fn expm_pade7_skew(x: &CMatrix, theta: f64) -> CMatrix {
    const B: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
    let n = x.rows;
    let mut squarings = 0;
    while theta / (1u64 << squarings) as f64 > PADE7_THETA && squarings < 60 {
        squarings += 1;
    }
    let mut xs = x.clone();
    xs.scale(C64::new(1.0 / (1u64 << squarings) as f64, 0.0));
    let x2 = xs.matmul(&xs);
    let x4 = x2.matmul(&x2);
    let x6 = x4.matmul(&x2);
    let mut odd = CMatrix::zeros(n, n);
    let mut even = CMatrix::zeros(n, n);
    for i in 0..n * n {
        odd.data[i] = x6.data[i] * B[7] + x4.data[i] * B[5] + x2.data[i] * B[3];
        even.data[i] = x6.data[i] * B[6] + x4.data[i] * B[4] + x2.data[i] * B[2];
    }
    odd.add_to_diagonal(C64::new(B[1], 0.0));
    even.add_to_diagonal(C64::new(B[0], 0.0));
    let u = xs.matmul(&odd);
    // exp(X) ≈ (V − U)⁻¹ (V + U).
    let den = even.sub(&u);
    let mut num = even.add(&u);
    let lu = Lu::factor(den).expect("Padé denominator of a skew-Hermitian matrix is nonsingular");
    lu.solve_in_place(&mut num);
    for _ in 0..squarings {
        num = num.matmul(&num);
    }
    num
}

/// `exp(i ε K)` for Hermitian `K`. The result is unitary to roundoff; if the
/// measured drift `‖U†U − 1‖_max` exceeds `1e-12` the columns are
/// re-orthonormalized.
pub fn exp_i_hermitian(k: &CMatrix, eps: f64) -> CMatrix {
    assert!(k.is_square());
    let theta = eps.abs() * spectral_radius_estimate(k) * 1.25;
    let mut x = k.clone();
    x.scale(C64::new(0.0, eps));
    let mut u = expm_pade7_skew(&x, theta);
    // The approximant is unitary to roundoff, so drift is normally ~1e-15. Cheap
    // O(n²) probes decide whether the full O(n³) check is needed.
    if unitarity_probe(&u) > 1e-13 {
        let drift = u.adjoint_matmul(&u).max_abs_deviation_from_identity();
        if drift > 1e-12 {
            orthonormalize_columns(&mut u);
        }
    }
    u
}

/// Largest of `|‖u_j‖² − 1|` over columns and `‖U†U v − v‖_∞` for two fixed
/// probe vectors. Zero for an exactly unitary matrix.
fn unitarity_probe(u: &CMatrix) -> f64 {
    let n = u.rows;
    let mut worst: f64 = 0.0;
    let mut norms = vec![0.0; u.cols];
    for row in u.data.chunks_exact(u.cols) {
        for (acc, z) in norms.iter_mut().zip(row) {
            *acc += z.norm_sqr();
        }
    }
    for v in norms {
        worst = worst.max((v - 1.0).abs());
    }
    let scale = 1.0 / (n as f64).sqrt();
    for probe in 0..2u32 {
        let v: Vec<C64> = (0..u.cols)
            .map(|j| C64::from_polar(scale, (j as f64 + 1.0) * (0.7548776662 + probe as f64 * 0.5698402910)))
            .collect();
        let w = u.mul_vec(&v);
        let back: Vec<C64> = (0..u.cols)
            .map(|j| (0..n).map(|i| u.data[i * u.cols + j].conj() * w[i]).sum())
            .collect();
        for (b, a) in back.iter().zip(&v) {
            worst = worst.max((b - a).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_matrix(n: usize, seed: u64) -> CMatrix {
        let mut state = seed;
        CMatrix::from_fn(n, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            c(a, b)
        })
    }

    #[test]
    fn gemm_matches_naive_product_for_all_ops() {
        // Both the zgemm path and the three-real-product path.
        for n in [5, 40] {
            let a = sample_matrix(n, 1);
            let b = sample_matrix(n, 2);
            for (oa, ob) in [
                (Op::None, Op::None),
                (Op::Adjoint, Op::None),
                (Op::None, Op::Adjoint),
                (Op::Adjoint, Op::Adjoint),
            ] {
                let am = if oa == Op::Adjoint { a.adjoint() } else { a.clone() };
                let bm = if ob == Op::Adjoint { b.adjoint() } else { b.clone() };
                let naive = CMatrix::from_fn(n, n, |i, j| (0..n).map(|k| am[(i, k)] * bm[(k, j)]).sum());
                let fast = product(&a, oa, &b, ob);
                assert!(fast.sub(&naive).max_abs() < 1e-13);
                let alpha = c(0.3, -1.1);
                let beta = c(-0.7, 0.2);
                let mut acc = sample_matrix(n, 3);
                let expect = naive.scale_by(alpha).add(&acc.scale_by(beta));
                gemm(alpha, &a, oa, &b, ob, beta, &mut acc);
                assert!(acc.sub(&expect).max_abs() < 1e-13);
            }
        }
        let rect_a = CMatrix::from_fn(30, 50, |i, j| c(i as f64 - 0.5 * j as f64, 0.1 * (i * j) as f64));
        let rect_b = CMatrix::from_fn(50, 20, |i, j| c(0.2 * j as f64, i as f64 - j as f64));
        let naive = CMatrix::from_fn(30, 20, |i, j| (0..50).map(|k| rect_a[(i, k)] * rect_b[(k, j)]).sum());
        assert!(rect_a.matmul(&rect_b).sub(&naive).max_abs() < 1e-9);
    }

    impl CMatrix {
        fn scale_by(&self, z: C64) -> CMatrix {
            let mut m = self.clone();
            m.scale(z);
            m
        }
    }

    #[test]
    fn rectangular_blocks_round_trip() {
        let a = sample_matrix(6, 3);
        let blk = a.block(1, 2, 3, 4);
        let mut z = CMatrix::zeros(6, 6);
        z.set_block(1, 2, &blk);
        assert_eq!(z[(3, 5)], a[(3, 5)]);
        assert_eq!(z[(0, 0)], ZERO);
    }

    #[test]
    fn lu_solves_and_reports_determinant() {
        let a = sample_matrix(7, 4);
        let lu = Lu::factor(a.clone()).unwrap();
        let mut b = sample_matrix(7, 5);
        let rhs = b.clone();
        lu.solve_in_place(&mut b);
        assert!(a.matmul(&b).sub(&rhs).max_abs() < 1e-12);

        let v = rhs.column(0);
        let x = lu.solve_adjoint_vec(&v);
        let back = a.adjoint().mul_vec(&x);
        for (p, q) in back.iter().zip(&v) {
            assert!((p - q).norm() < 1e-12);
        }

        // Large enough for the recursive blocked solve.
        let mut big = sample_matrix(53, 6);
        big.add_to_diagonal(c(3.0, 0.0));
        let lu = Lu::factor(big.clone()).unwrap();
        let rhs = CMatrix::from_fn(53, 9, |i, j| c((i * j) as f64 * 0.01, i as f64 - j as f64));
        let mut x = rhs.clone();
        lu.solve_in_place(&mut x);
        assert!(big.matmul(&x).sub(&rhs).max_abs() < 1e-11);

        let two = CMatrix::from_row_major(2, 2, vec![c(0.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(1.0, 1.0)]);
        let d = Lu::factor(two).unwrap().determinant();
        assert!((d - c(-6.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut a = CMatrix::identity(3);
        a[(1, 1)] = ZERO;
        assert!(matches!(Lu::factor(a), Err(Singular)));
    }

    #[test]
    fn condition_estimate_matches_explicit_inverse_norm() {
        for seed in 0..5 {
            let a = sample_matrix(6, 10 + seed);
            let lu = Lu::factor(a.clone()).unwrap();
            let mut inv = CMatrix::identity(6);
            lu.solve_in_place(&mut inv);
            let exact = inv.norm1();
            let est = lu.inverse_norm1_estimate();
            assert!(est <= exact * (1.0 + 1e-12));
            assert!(est >= exact / 3.0, "estimate {est} vs exact {exact}");
        }
        let mut d = CMatrix::identity(3);
        d[(2, 2)] = c(1e-14, 0.0);
        let (_, cond) = condition_number_1(&d);
        assert!((cond / 1e14 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn jacobi_diagonalizes_hermitian_matrices() {
        let a = sample_matrix(8, 7);
        let h = a.add(&a.adjoint());
        let (vals, vecs) = hermitian_eigen(&h);
        let d = CMatrix::from_diagonal(&vals.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>());
        let back = vecs.matmul(&d).matmul_adjoint(&vecs);
        assert!(back.sub(&h).max_abs() < 1e-12);
        assert!(vecs.adjoint_matmul(&vecs).max_abs_deviation_from_identity() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn psd_test_agrees_with_spectrum() {
        let a = sample_matrix(6, 8);
        let g = a.matmul_adjoint(&a);
        assert!(is_positive_semidefinite(&g, 0.0));
        let mut shifted = g.clone();
        let lowest = hermitian_eigenvalues(&g)[0];
        shifted.add_to_diagonal(c(-lowest - 1e-3, 0.0));
        assert!(!is_positive_semidefinite(&shifted, 0.0));
        assert!(is_positive_semidefinite(&shifted, 2e-3));
    }

    #[test]
    fn gram_schmidt_yields_unitary() {
        let mut a = sample_matrix(9, 9);
        orthonormalize_columns(&mut a);
        assert!(a.adjoint_matmul(&a).max_abs_deviation_from_identity() < 1e-13);
    }

    #[test]
    fn exponential_matches_spectral_formula() {
        let a = sample_matrix(10, 11);
        let h = a.add(&a.adjoint());
        for eps in [0.0, 0.05, 0.3, 2.5] {
            let u = exp_i_hermitian(&h, eps);
            let (vals, vecs) = hermitian_eigen(&h);
            let phases: Vec<C64> = vals.iter().map(|&x| C64::from_polar(1.0, eps * x)).collect();
            let expected = vecs.matmul(&CMatrix::from_diagonal(&phases)).matmul_adjoint(&vecs);
            assert!(u.sub(&expected).max_abs() < 1e-13, "eps {eps}");
            assert!(u.adjoint_matmul(&u).max_abs_deviation_from_identity() < 1e-13);
        }
    }

    #[test]
    fn unitarity_probe_sees_off_diagonal_drift() {
        let mut u = CMatrix::identity(6);
        assert_eq!(unitarity_probe(&u), 0.0);
        u[(0, 1)] = c(1e-9, 0.0);
        assert!(unitarity_probe(&u) > 1e-11);
    }
}
