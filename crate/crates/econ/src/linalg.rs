//! Dense least-squares kernels on column-major data.

/// Householder QR that processes columns in order and skips any column whose
/// component orthogonal to the previously kept columns is negligible.
#[derive(Clone, Debug)]
pub struct HouseholderQr {
    n: usize,
    /// Kept column indices, in input order.
    kept: Vec<usize>,
    dropped: Vec<usize>,
    /// Upper-triangular R over kept columns, row-major `k x k`.
    r: Vec<f64>,
    /// Householder vectors (length `n - j` each) and their scalars.
    reflectors: Vec<(Vec<f64>, f64)>,
}

/// Relative size below which a column counts as linearly dependent.
pub const COLLINEARITY_TOL: f64 = 1e-9;

impl HouseholderQr {
    /// Factorizes the `n x p` matrix given as `p` columns of length `n`.
    pub fn new(columns: &[Vec<f64>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let mut work: Vec<Vec<f64>> = columns.to_vec();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut r_cols: Vec<Vec<f64>> = Vec::new();

        for (j, col) in work.iter_mut().enumerate() {
            let orig = norm(col);
            // apply earlier reflectors to this column
            for (i, (v, beta)) in reflectors.iter().enumerate() {
                apply_reflector(v, *beta, &mut col[i..]);
            }
            let k = kept.len();
            if k >= n {
                dropped.push(j);
                continue;
            }
            let tail = norm(&col[k..]);
            if orig == 0.0 || tail <= COLLINEARITY_TOL * orig {
                dropped.push(j);
                continue;
            }
            let alpha = if col[k] >= 0.0 { -tail } else { tail };
            let mut v = col[k..].to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            let beta = 2.0 / vnorm2;
            col[k] = alpha;
            for x in &mut col[k + 1..] {
                *x = 0.0;
            }
            r_cols.push(col[..=k].to_vec());
            reflectors.push((v, beta));
            kept.push(j);
        }

        let k = kept.len();
        let mut r = vec![0.0; k * k];
        for (c, rc) in r_cols.iter().enumerate() {
            for (row, val) in rc.iter().enumerate() {
                r[row * k + c] = *val;
            }
        }
        HouseholderQr { n, kept, dropped, r, reflectors }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    /// `Q' y`, first `rank` entries.
    fn qt(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n);
        let mut w = y.to_vec();
        for (i, (v, beta)) in self.reflectors.iter().enumerate() {
            apply_reflector(v, *beta, &mut w[i..]);
        }
        w.truncate(self.rank());
        w
    }

    /// Least-squares coefficients on the kept columns.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let mut b = self.qt(y);
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| self.r[i * k + j] * b[j]).sum();
            b[i] = (b[i] - s) / self.r[i * k + i];
        }
        b
    }

    /// `R^{-1}`, row-major `k x k`.
    pub fn r_inverse(&self) -> Vec<f64> {
        let k = self.rank();
        let mut inv = vec![0.0; k * k];
        for c in 0..k {
            for i in (0..=c).rev() {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let s: f64 = (i + 1..=c).map(|j| self.r[i * k + j] * inv[j * k + c]).sum();
                inv[i * k + c] = (rhs - s) / self.r[i * k + i];
            }
        }
        inv
    }

    /// `(X'X)^{-1}` over the kept columns, row-major.
    pub fn xtx_inverse(&self) -> Vec<f64> {
        let k = self.rank();
        let ri = self.r_inverse();
        let mut out = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let s: f64 = (b..k).map(|j| ri[a * k + j] * ri[b * k + j]).sum();
                out[a * k + b] = s;
                out[b * k + a] = s;
            }
        }
        out
    }
}

fn norm(x: &[f64]) -> f64 {
    // scaled to avoid overflow on large columns
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

fn apply_reflector(v: &[f64], beta: f64, x: &mut [f64]) {
    let d: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let s = beta * d;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `k x k`).
/// Returns `None` when `A` is not numerically positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let l = cholesky(a, k)?;
    let mut z = b.to_vec();
    for i in 0..k {
        let s: f64 = (0..i).map(|j| l[i * k + j] * z[j]).sum();
        z[i] = (z[i] - s) / l[i * k + i];
    }
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| l[j * k + i] * z[j]).sum();
        z[i] = (z[i] - s) / l[i * k + i];
    }
    Some(z)
}

fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i * k + m] * l[j * k + m]).sum();
            if i == j {
                let d = a[i * k + i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i * k + i] = d.sqrt();
            } else {
                l[i * k + j] = (a[i * k + j] - s) / l[j * k + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix, row-major.
pub(crate) fn spd_inverse(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; k * k];
    let l = cholesky(a, k)?;
    for c in 0..k {
        let mut z = vec![0.0; k];
        z[c] = 1.0;
        for i in 0..k {
            let s: f64 = (0..i).map(|j| l[i * k + j] * z[j]).sum();
            z[i] = (z[i] - s) / l[i * k + i];
        }
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| l[j * k + i] * z[j]).sum();
            z[i] = (z[i] - s) / l[i * k + i];
        }
        for i in 0..k {
            inv[i * k + c] = z[i];
        }
    }
    Some(inv)
}

/// `A B A` for symmetric row-major `k x k` matrices.
pub(crate) fn sandwich(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut ab = vec![0.0; k * k];
    for i in 0..k {
        for m in 0..k {
            let aim = a[i * k + m];
            if aim == 0.0 {
                continue;
            }
            for j in 0..k {
                ab[i * k + j] += aim * b[m * k + j];
            }
        }
    }
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for m in 0..k {
            let v = ab[i * k + m];
            if v == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] += v * a[m * k + j];
            }
        }
    }
    out
}
