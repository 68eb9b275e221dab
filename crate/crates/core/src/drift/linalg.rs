//! Minimal row-major matrix with fixed-order loops.
//!
//! Summation order is part of the determinism contract (report bytes must
//! match across machines), which rules out SIMD-dispatching GEMM kernels.
//! Products are accumulated in plain `k` order; dot products use eight
//! fixed lanes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        gemm(self.view(), other.view())
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        gemm(self.view(), other.view().t())
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        gemm(self.view().t(), other.view())
    }

    fn view(&self) -> View<'_> {
        View {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            rs: self.cols,
            cs: 1,
        }
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// `self += scale · u vᵀ`
    pub fn add_outer(&mut self, u: &[f64], v: &[f64], scale: f64) {
        assert_eq!((self.rows, self.cols), (u.len(), v.len()));
        for (i, &ui) in u.iter().enumerate() {
            let s = scale * ui;
            if s == 0.0 {
                continue;
            }
            for (o, &vj) in self.row_mut(i).iter_mut().zip(v) {
                *o += s * vj;
            }
        }
    }

    pub fn axpy(&mut self, scale: f64, other: &Matrix) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dot product over eight fixed accumulator lanes, combined pairwise.
/// The order is fixed, so results do not depend on the target's vector width.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7])) + tail
}

/// Strided read-only view; element `(i, j)` is `data[i * rs + j * cs]`.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl View<'_> {
    fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.rs + j * self.cs]
    }
}

/// `a · b` with a register-blocked micro-kernel over packed panels.
///
/// Every output element is accumulated from zero in increasing `k`, so the
/// result equals the textbook triple loop bit for bit on any target. The AVX2
/// build only widens the registers; no operation is fused or reordered.
fn gemm(a: View, b: View) -> Matrix {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { gemm_avx2(a, b) };
    }
    gemm_blocked::<2, 8>(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_avx2(a: View, b: View) -> Matrix {
    gemm_blocked::<6, 8>(a, b)
}

#[inline(always)]
fn gemm_blocked<const MR: usize, const NR: usize>(a: View, b: View) -> Matrix {
    let (m, kd, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);
    if m == 0 || n == 0 || kd == 0 {
        return out;
    }
    // Row-major `b` is read in place; other strips are packed `kd × NR`.
    let strips = n.div_ceil(NR);
    let direct = if b.cs == 1 { n / NR } else { 0 };
    let mut bp = vec![0.0; (strips - direct) * kd * NR];
    for s in direct..strips {
        let w = (n - s * NR).min(NR);
        let panel = &mut bp[(s - direct) * kd * NR..(s - direct + 1) * kd * NR];
        for (k, dst) in panel.chunks_exact_mut(NR).enumerate() {
            for (c, d) in dst[..w].iter_mut().enumerate() {
                *d = b.at(k, s * NR + c);
            }
        }
    }
    let mut i0 = 0;
    while i0 < m {
        let h = (m - i0).min(MR);
        // Rows past the edge repeat the last one; their sums are discarded.
        let rows: [usize; MR] = std::array::from_fn(|r| (i0 + r.min(h - 1)) * a.rs);
        for s in 0..strips {
            let acc = if s < direct {
                micro_kernel::<MR, NR>(a.data, rows, a.cs, b.data, s * NR, b.rs, kd)
            } else {
                micro_kernel::<MR, NR>(a.data, rows, a.cs, &bp, (s - direct) * kd * NR, NR, kd)
            };
            let (j0, w) = (s * NR, (n - s * NR).min(NR));
            for (r, acc_r) in acc.iter().enumerate().take(h) {
                out.data[(i0 + r) * n + j0..(i0 + r) * n + j0 + w].copy_from_slice(&acc_r[..w]);
            }
        }
        i0 += MR;
    }
    out
}

/// `acc[r][c] = Σ_k a[rows[r] + k·acs] · b[b0 + k·brs + c]`, summed in `k` order.
#[inline(always)]
fn micro_kernel<const MR: usize, const NR: usize>(
    a: &[f64],
    rows: [usize; MR],
    acs: usize,
    b: &[f64],
    b0: usize,
    brs: usize,
    kd: usize,
) -> [[f64; NR]; MR] {
    for &r in &rows {
        assert!(r + (kd - 1) * acs < a.len());
    }
    assert!(b0 + (kd - 1) * brs + NR <= b.len());
    let mut acc = [[0.0f64; NR]; MR];
    for k in 0..kd {
        // SAFETY: the largest offsets touched for this `k` were bounds-checked
        // above for `k = kd - 1`, and offsets grow monotonically in `k`.
        let bv: [f64; NR] = unsafe { std::ptr::read_unaligned(b.as_ptr().add(b0 + k * brs).cast()) };
        for r in 0..MR {
            let av = unsafe { *a.get_unchecked(rows[r] + k * acs) };
            for c in 0..NR {
                acc[r][c] += av * bv[c];
            }
        }
    }
    acc
}
