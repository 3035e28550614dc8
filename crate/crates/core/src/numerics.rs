//! Envelope `LDLᵀ`, dense symmetric eigensolvers and shift-invert block
//! iteration for the lowest eigenpairs of `A x = λ B x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hermite::SymmetricSparseMatrix;
use crate::{Error, Real, Result};

/// Column-envelope storage of an `LDLᵀ` factorization: column `j` keeps
/// rows `first[j]..j` of the unit upper factor.
#[derive(Clone, Debug)]
pub struct EnvelopeLdl<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<T>,
    d: Vec<T>,
}

/// Relative pivot size below which a factorization is declared singular.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

impl<T: Real> EnvelopeLdl<T> {
    pub fn factor(a: &SymmetricSparseMatrix<T>) -> Result<Self> {
        Self::factor_combination(a, None, T::zero())
    }

    /// Factors `A - σB`.
    pub fn factor_shifted(a: &SymmetricSparseMatrix<T>, b: &SymmetricSparseMatrix<T>, sigma: T) -> Result<Self> {
        Self::factor_combination(a, Some(b), sigma)
    }

    fn factor_combination(a: &SymmetricSparseMatrix<T>, b: Option<&SymmetricSparseMatrix<T>>, sigma: T) -> Result<Self> {
        let n = a.dim();
        if let Some(b) = b {
            if b.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.dim() });
            }
        }
        let mut first: Vec<usize> = (0..n).collect();
        let mut scan = |m: &SymmetricSparseMatrix<T>| {
            for (i, j, _) in m.entries() {
                first[j] = first[j].min(i);
            }
        };
        scan(a);
        if let Some(b) = b {
            scan(b);
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for j in 0..n {
            start.push(start[j] + (j - first[j]));
        }
        let mut vals = vec![T::zero(); start[n]];
        let mut d = vec![T::zero(); n];
        let mut put = |i: usize, j: usize, v: T| {
            if i == j {
                d[j] += v;
            } else {
                vals[start[j] + (i - first[j])] += v;
            }
        };
        for (i, j, v) in a.entries() {
            put(i, j, v);
        }
        if let Some(b) = b {
            for (i, j, v) in b.entries() {
                put(i, j, -sigma * v);
            }
        }
        let scale = d.iter().fold(T::zero(), |m, x| m.max(x.abs())).max(T::min_positive_value());

        for j in 0..n {
            let fj = first[j];
            let sj = start[j];
            for i in fj..j {
                let m = first[i].max(fj);
                let si = start[i];
                let fi = first[i];
                let mut acc = T::zero();
                for k in m..i {
                    acc += vals[si + (k - fi)] * vals[sj + (k - fj)];
                }
                vals[sj + (i - fj)] -= acc;
            }
            let mut dj = d[j];
            for i in fj..j {
                let g = vals[sj + (i - fj)];
                let l = g / d[i];
                vals[sj + (i - fj)] = l;
                dj -= g * l;
            }
            if !dj.is_finite() || dj.abs() <= T::lit(PIVOT_TOLERANCE) * scale {
                return Err(Error::Factorization { pivot: j, reason: format!("pivot {:e} is numerically zero", dj.to_f64_lossy()) });
            }
            d[j] = dj;
        }
        Ok(EnvelopeLdl { first, start, vals, d })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Stored envelope entries, a measure of the factorization cost.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    /// Number of negative pivots, i.e. eigenvalues of the factored matrix
    /// (or of the pencil below the shift) that are negative.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < T::zero()).count()
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = rhs.to_vec();
        // Lᵀ stored by columns: forward substitution with U = Lᵀ
        for j in 0..n {
            let (fj, sj) = (self.first[j], self.start[j]);
            let mut acc = x[j];
            for i in fj..j {
                acc -= self.vals[sj + (i - fj)] * x[i];
            }
            x[j] = acc;
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let (fj, sj) = (self.first[j], self.start[j]);
            let xj = x[j];
            for i in fj..j {
                x[i] -= self.vals[sj + (i - fj)] * xj;
            }
        }
        x
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

#[cfg(test)]
fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `A x = b`: `LDLᵀ` of the `f64`-rounded matrix, then iterative
/// refinement with residuals in `T`.
pub fn solve_linear<T: Real>(a: &SymmetricSparseMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    if rhs.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: rhs.len() });
    }
    let f = EnvelopeLdl::factor(&a.convert::<f64>())?;
    let inf = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let mut x: Vec<T> = raise(&f.solve(&lower(rhs)));
    let mut prev = T::infinity();
    // refinement in T with the f64 factor, until roundoff stalls it
    for _ in 0..MAX_REFINEMENT {
        let ax = a.matvec(&x);
        let r: Vec<T> = rhs.iter().zip(&ax).map(|(b, y)| *b - *y).collect();
        let rn = inf(&r);
        if rn == T::zero() || rn > prev * T::lit(0.25) {
            break;
        }
        prev = rn;
        for (xi, d) in x.iter_mut().zip(f.solve(&lower(&r))) {
            *xi += T::lit(d);
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear solve"));
    }
    Ok(x)
}

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_sparse(a: &SymmetricSparseMatrix<T>) -> Self {
        let n = a.dim();
        let mut m = Self::zeros(n);
        for (i, j, v) in a.entries() {
            m.data[i * n + j] += v;
            if i != j {
                m.data[j * n + i] += v;
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// Eigenpairs sorted ascending; `vectors[k]` belongs to `values[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    /// `‖A x - λ B x‖ / (‖B x‖ (1 + |λ|))` per pair.
    pub residuals: Vec<T>,
    pub iterations: usize,
}

const MAX_JACOBI_SWEEPS: usize = 100;

/// Cyclic Jacobi for a dense symmetric matrix. Returns eigenvalues
/// ascending with orthonormal eigenvectors as columns of the second result.
pub fn symmetric_eigen<T: Real>(a: &DenseMatrix<T>) -> Result<(Vec<T>, DenseMatrix<T>)> {
    let n = a.n;
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let total: T = m.data.iter().map(|x| *x * *x).fold(T::zero(), |s, v| s + v);
    let threshold = T::eps() * T::eps() * total.max(T::min_positive_value());
    let mut converged = n < 2;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: MAX_JACOBI_SWEEPS, residual: f64::NAN });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).partial_cmp(&m.get(j, j)).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vecs = DenseMatrix::zeros(n);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, col, v.get(k, i));
        }
    }
    Ok((values, vecs))
}

/// Lower Cholesky factor of a dense SPD matrix.
pub fn cholesky<T: Real>(b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = b.n;
    let mut l = DenseMatrix::zeros(n);
    for j in 0..n {
        let mut d = b.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > T::zero()) {
            return Err(Error::Factorization { pivot: j, reason: "matrix is not positive definite".into() });
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = b.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// All eigenpairs of the dense pencil `(A, B)` with `B` SPD, through the
/// Cholesky reduction `L⁻¹ A L⁻ᵀ`. `A` may be indefinite. Eigenvectors are
/// `B`-orthonormal.
pub fn generalized_eigen<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch { expected: a.n, got: b.n });
    }
    let n = a.n;
    let l = cholesky(b)?;
    // W = L⁻¹ A, then C = W L⁻ᵀ = L⁻¹ (L⁻¹ A)ᵀ by symmetry
    let forward = |col: Vec<T>| -> Vec<T> {
        let mut y = col;
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        y
    };
    let mut w = DenseMatrix::zeros(n);
    for j in 0..n {
        let y = forward(a.column(j));
        for i in 0..n {
            w.set(i, j, y[i]);
        }
    }
    let mut c = DenseMatrix::zeros(n);
    for i in 0..n {
        let row: Vec<T> = (0..n).map(|j| w.get(i, j)).collect();
        let y = forward(row);
        for j in 0..n {
            c.set(j, i, y[j]);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = (c.get(i, j) + c.get(j, i)) * T::lit(0.5);
            c.set(i, j, s);
            c.set(j, i, s);
        }
    }
    let (vals, z) = symmetric_eigen(&c)?;
    let vectors = (0..n)
        .map(|k| {
            // x = L⁻ᵀ z
            let mut x = z.column(k);
            for i in (0..n).rev() {
                let mut s = x[i];
                for r in i + 1..n {
                    s -= l.get(r, i) * x[r];
                }
                x[i] = s / l.get(i, i);
            }
            x
        })
        .collect();
    Ok((vals, vectors))
}

/// Largest absolute row sum of a symmetric matrix stored by its upper triangle.
pub fn norm_inf<T: Real>(a: &SymmetricSparseMatrix<T>) -> T {
    let mut rows = vec![T::zero(); a.dim()];
    for (i, j, v) in a.entries() {
        rows[i] += v.abs();
        if i != j {
            rows[j] += v.abs();
        }
    }
    rows.into_iter().fold(T::zero(), T::max)
}

/// Normwise backward error `‖Ax - λBx‖ / ((‖A‖ + |λ|‖B‖)‖x‖)`.
///
/// The plain ratio `‖Ax - λBx‖ / ‖Bx‖` has a roundoff floor growing like
/// `h⁻⁶/λ` on fine meshes, so it cannot serve as a stopping test.
pub fn backward_error<T: Real>(
    a: &SymmetricSparseMatrix<T>,
    b: &SymmetricSparseMatrix<T>,
    norms: (T, T),
    lambda: T,
    x: &[T],
) -> T {
    let ax = a.matvec(x);
    let bx = b.matvec(x);
    let r: Vec<T> = ax.iter().zip(&bx).map(|(p, q)| *p - lambda * *q).collect();
    let scale = (norms.0 + lambda.abs() * norms.1) * x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    r.iter().fold(T::zero(), |m, v| m.max(v.abs())) / scale.max(T::min_positive_value())
}

/// Lowest `count` eigenpairs of a sparse pencil by dense reduction; meant
/// for small systems, including indefinite `A`.
pub fn dense_smallest<T: Real>(a: &SymmetricSparseMatrix<T>, b: &SymmetricSparseMatrix<T>, count: usize) -> Result<EigenPairs<T>> {
    let (vals, vecs) = generalized_eigen(&DenseMatrix::from_sparse(a), &DenseMatrix::from_sparse(b))?;
    let count = count.min(vals.len());
    let values: Vec<T> = vals[..count].to_vec();
    let vectors: Vec<Vec<T>> = vecs.into_iter().take(count).collect();
    let norms = (norm_inf(a), norm_inf(b));
    let residuals = values.iter().zip(&vectors).map(|(l, x)| backward_error(a, b, norms, *l, x)).collect();
    Ok(EigenPairs { values, vectors, residuals, iterations: 1 })
}

pub const DEFAULT_SHIFT: f64 = 0.5;
/// Backward-error target.
pub const DEFAULT_TOL: f64 = 1e-13;
/// Shift used when the form may have eigenvalues below 1.
pub const INDEFINITE_SHIFT: f64 = -1.0;
pub const DEFAULT_SEED: u64 = 0x7269_686f_6d6f_6733;

/// Lowest eigenpairs of `A x = λ B x`.
#[derive(Clone, Debug)]
pub struct EigenRequest<'a, T> {
    pub a: &'a SymmetricSparseMatrix<T>,
    pub b: &'a SymmetricSparseMatrix<T>,
    pub count: usize,
    pub shift: T,
    pub tol: T,
    pub max_iter: usize,
    pub seed: u64,
}

impl<'a, T: Real> EigenRequest<'a, T> {
    pub fn new(a: &'a SymmetricSparseMatrix<T>, b: &'a SymmetricSparseMatrix<T>, count: usize) -> Self {
        EigenRequest {
            a,
            b,
            count,
            shift: T::lit(DEFAULT_SHIFT),
            tol: T::lit(DEFAULT_TOL),
            max_iter: 500,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_shift(mut self, shift: T) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }
}

const SHIFT_RETRIES: usize = 3;

fn check_request<T: Real>(req: &EigenRequest<'_, T>) -> Result<()> {
    let n = req.a.dim();
    if req.b.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: req.b.dim() });
    }
    if req.count == 0 || req.count > n {
        return Err(Error::InvalidInput(format!("cannot compute {} eigenpairs of a {n}-dimensional problem", req.count)));
    }
    Ok(())
}

/// Factors `A - σB` after checking `B`, lowering `σ` on failure.
fn shifted_factor(a: &SymmetricSparseMatrix<f64>, b: &SymmetricSparseMatrix<f64>, shift: f64) -> Result<(EnvelopeLdl<f64>, f64)> {
    let fb = EnvelopeLdl::factor(b)?;
    if fb.negative_pivots() > 0 {
        return Err(Error::Factorization { pivot: 0, reason: "mass matrix is not positive definite".into() });
    }
    let mut sigma = shift;
    let mut last_err = None;
    for _ in 0..=SHIFT_RETRIES {
        match EnvelopeLdl::factor_shifted(a, b, sigma) {
            Ok(f) => return Ok((f, sigma)),
            Err(e) => {
                last_err = Some(e);
                sigma -= 0.25 * (1.0 + sigma.abs());
            }
        }
    }
    Err(last_err.expect("a failed attempt"))
}

fn random_block<T: Real>(n: usize, p: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..p).map(|_| (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()).collect()
}

struct Block<T> {
    values: Vec<T>,
    vectors: Vec<Vec<T>>,
    worst: T,
    iterations: usize,
    converged: bool,
}

/// Block inverse iteration with Rayleigh–Ritz projection; `apply` maps
/// `Bx` to `(A - σB)⁻¹Bx`, possibly inexactly, given the current worst
/// backward error of the leading `count` pairs.
fn subspace_iteration<T: Real>(
    a: &SymmetricSparseMatrix<T>,
    b: &SymmetricSparseMatrix<T>,
    count: usize,
    mut x: Vec<Vec<T>>,
    tol: T,
    max_iter: usize,
    apply: impl Fn(&[T], T) -> Vec<T>,
) -> Result<Block<T>> {
    let n = a.dim();
    let p = x.len();
    let norms = (norm_inf(a), norm_inf(b));
    let mut worst = T::one();
    let mut vals = Vec::new();
    for iter in 1..=max_iter {
        let y: Vec<Vec<T>> = x.iter().map(|xi| apply(&b.matvec(xi), worst)).collect();
        let ay: Vec<Vec<T>> = y.iter().map(|v| a.matvec(v)).collect();
        let by: Vec<Vec<T>> = y.iter().map(|v| b.matvec(v)).collect();
        let mut ar = DenseMatrix::zeros(p);
        let mut br = DenseMatrix::zeros(p);
        for i in 0..p {
            for j in i..p {
                let a_ij = (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i])) * T::lit(0.5);
                let b_ij = (dot(&y[i], &by[j]) + dot(&y[j], &by[i])) * T::lit(0.5);
                ar.set(i, j, a_ij);
                ar.set(j, i, a_ij);
                br.set(i, j, b_ij);
                br.set(j, i, b_ij);
            }
        }
        let (v, coeffs) = generalized_eigen(&ar, &br)?;
        vals = v;
        x = coeffs
            .iter()
            .map(|c| {
                let mut v = vec![T::zero(); n];
                for (k, ck) in c.iter().enumerate() {
                    for (vi, yi) in v.iter_mut().zip(&y[k]) {
                        *vi += *ck * *yi;
                    }
                }
                v
            })
            .collect();
        worst = (0..count).map(|k| backward_error(a, b, norms, vals[k], &x[k])).fold(T::zero(), T::max);
        if worst <= tol {
            return Ok(Block { values: vals, vectors: x, worst, iterations: iter, converged: true });
        }
    }
    Ok(Block { values: vals, vectors: x, worst, iterations: max_iter, converged: false })
}

fn finish<T: Real>(req: &EigenRequest<'_, T>, block: Block<T>) -> Result<EigenPairs<T>> {
    if !block.converged {
        return Err(Error::NonConvergence { iterations: block.iterations, residual: block.worst.to_f64_lossy() });
    }
    let norms = (norm_inf(req.a), norm_inf(req.b));
    let values: Vec<T> = block.values[..req.count].to_vec();
    let vectors: Vec<Vec<T>> = block.vectors.into_iter().take(req.count).collect();
    let residuals = values.iter().zip(&vectors).map(|(l, x)| backward_error(req.a, req.b, norms, *l, x)).collect();
    Ok(EigenPairs { values, vectors, residuals, iterations: block.iterations })
}

/// Shift-invert block subspace iteration with Rayleigh–Ritz projection.
/// The block has `count + 4` columns and starts from a seeded random
/// block, so results are reproducible. The factorization runs in `f64`.
pub fn solve_smallest<T: Real>(req: &EigenRequest<'_, T>) -> Result<EigenPairs<T>> {
    check_request(req)?;
    let a64: SymmetricSparseMatrix<f64> = req.a.convert();
    let b64: SymmetricSparseMatrix<f64> = req.b.convert();
    let (factor, _) = shifted_factor(&a64, &b64, req.shift.to_f64_lossy())?;
    let p = (req.count + 4).min(req.a.dim());
    let start = random_block(req.a.dim(), p, req.seed);
    let block = subspace_iteration(req.a, req.b, req.count, start, req.tol, req.max_iter, |r, _| {
        raise(&factor.solve(&lower(r)))
    })?;
    finish(req, block)
}

/// Backward-error target of the `f64` warm-up in [`solve_smallest_mixed`].
const WARMUP_TOL: f64 = 1e-12;

/// Refinement steps allowed per inner solve.
const MAX_REFINEMENT: usize = 30;

/// [`solve_smallest`] for a pencil held in a wider type `T`. The block is
/// first converged on the `f64`-rounded pencil; the iteration then
/// continues on the `T` pencil with inner solves polished by iterative
/// refinement (residuals in `T`, corrections from the `f64` factor), so the
/// eigenpairs reach the accuracy of the `T` matrices at `f64`
/// factorization cost.
pub fn solve_smallest_mixed<T: Real>(req: &EigenRequest<'_, T>) -> Result<EigenPairs<T>> {
    check_request(req)?;
    let a64: SymmetricSparseMatrix<f64> = req.a.convert();
    let b64: SymmetricSparseMatrix<f64> = req.b.convert();
    let (factor, sigma) = shifted_factor(&a64, &b64, req.shift.to_f64_lossy())?;
    let p = (req.count + 4).min(req.a.dim());
    let start = random_block::<f64>(req.a.dim(), p, req.seed);
    let warm = subspace_iteration(&a64, &b64, req.count, start, WARMUP_TOL, req.max_iter, |r, _| factor.solve(r))?;

    let sigma_t = T::lit(sigma);
    let inf = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let floor = T::eps() * T::lit(100.0);
    let apply = |rhs: &[T], worst: T| -> Vec<T> {
        let tol = (worst * T::lit(1e-3)).max(floor).min(T::lit(1e-6));
        let scale = inf(rhs);
        let mut y: Vec<T> = raise(&factor.solve(&lower(rhs)));
        let mut prev = T::infinity();
        for _ in 0..MAX_REFINEMENT {
            let ay = req.a.matvec(&y);
            let by = req.b.matvec(&y);
            let r: Vec<T> = rhs.iter().zip(ay.iter().zip(&by)).map(|(f, (p, q))| *f - (*p - sigma_t * *q)).collect();
            let rn = inf(&r);
            // stop at the tolerance or once roundoff in T stalls progress
            if rn <= tol * scale || rn > prev * T::lit(0.25) {
                break;
            }
            prev = rn;
            for (yi, di) in y.iter_mut().zip(factor.solve(&lower(&r))) {
                *yi += T::lit(di);
            }
        }
        y
    };
    let start: Vec<Vec<T>> = warm.vectors.iter().map(|v| raise(v)).collect();
    let block = subspace_iteration(req.a, req.b, req.count, start, req.tol, req.max_iter, apply)?;
    finish(req, block)
}

fn lower<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn raise<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::lit(*x)).collect()
}
