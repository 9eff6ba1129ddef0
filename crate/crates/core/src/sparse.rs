//! Sparse coding of the channels on the latent dictionary.
//!
//! Solves `min_A ‖X − Z A‖²_F + λ‖A‖₁` channel by channel with cyclic
//! coordinate descent on the Gram matrix `ZᵀZ`, interleaved with exact
//! solves on the current support and sign pattern, which finish the job on
//! ill-conditioned dictionaries where plain descent crawls. The objective is unscaled:
//! there is no `1/2T` factor in front of the quadratic, so `λ` values are not
//! interchangeable with libraries that normalize it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `L × C` coupling between latent components (rows) and channels (columns),
/// with every entry in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Array2<f64>);

impl CoefficientMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid(format!(
                "coefficient {v} outside the box [-1, 1]"
            )));
        }
        Ok(Self(values))
    }

    /// `δ_ij` on an `L × C` matrix: ones on the leading diagonal.
    pub fn identity_like(n_latents: usize, n_channels: usize) -> Self {
        Self(Array2::from_shape_fn((n_latents, n_channels), |(i, j)| {
            if i == j {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_latents(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.0.ncols()
    }

    /// Fraction of entries that are exactly zero.
    pub fn sparsity(&self) -> f64 {
        let zeros = self.0.iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / self.0.len().max(1) as f64
    }
}

/// Divides each column by `max{1, max_i |a_ic|}`.
pub fn rescale_columns(a: ArrayView2<'_, f64>) -> Result<CoefficientMatrix> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite coefficient"));
    }
    let mut out = a.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let peak = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak > 1.0 {
            col.mapv_inplace(|v| v / peak);
            // Guard the box against a last-ulp overshoot from the division.
            col.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        }
    }
    CoefficientMatrix::new(out)
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    /// Unconstrained minimizer, `L × C`.
    pub coefficients: Array2<f64>,
    /// Largest subgradient-optimality violation over all coordinates.
    pub kkt_residual: f64,
    /// Most sweeps used by any channel.
    pub sweeps: usize,
    pub converged: bool,
    /// Latent indices whose dictionary column is identically zero while
    /// `λ = 0`; their coefficients are set to the minimum-norm value 0.
    pub degenerate_latents: Vec<usize>,
}

/// `‖X − Z A‖²_F + λ‖A‖₁`.
pub fn lasso_objective(
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    lambda: f64,
) -> f64 {
    let resid = &x - &z.dot(&a);
    resid.iter().map(|r| r * r).sum::<f64>() + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(u: f64, thresh: f64) -> f64 {
    if u > thresh {
        u - thresh
    } else if u < -thresh {
        u + thresh
    } else {
        0.0
    }
}

/// KKT violation of one channel given `q = Zᵀx_c − G a_c`.
fn kkt_violation(a: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>, gram_diag: &[f64], lambda: f64) -> f64 {
    a.iter()
        .zip(q.iter())
        .zip(gram_diag)
        .map(|((&al, &ql), &g)| {
            if g == 0.0 {
                0.0
            } else if al != 0.0 {
                (2.0 * ql - lambda * al.signum()).abs()
            } else {
                ((2.0 * ql).abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

struct ChannelFit {
    coeffs: Array1<f64>,
    kkt: f64,
    sweeps: usize,
}

/// Sweeps between active-set steps.
const POLISH_EVERY: usize = 4;

/// In-place Cholesky of a small SPD matrix (lower triangle); `None` when a
/// pivot is not safely positive.
fn cholesky(mut m: Array2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    let scale = m.diag().iter().fold(0.0_f64, |a, &v| a.max(v));
    for j in 0..n {
        let mut d = m[[j, j]];
        for k in 0..j {
            d -= m[[j, k]] * m[[j, k]];
        }
        if !(d > 1e-13 * scale) {
            return None;
        }
        let d = d.sqrt();
        m[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = m[[i, j]];
            for k in 0..j {
                v -= m[[i, k]] * m[[j, k]];
            }
            m[[i, j]] = v / d;
        }
    }
    Some(m)
}

fn cholesky_solve(l: &Array2<f64>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for i in 0..n {
        let mut v = rhs[i];
        for k in 0..i {
            v -= l[[i, k]] * rhs[k];
        }
        rhs[i] = v / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = rhs[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * rhs[k];
        }
        rhs[i] = v / l[[i, i]];
    }
    rhs
}

/// Feature-sign search from the current iterate: exact solves on a working
/// support with fixed signs, a line search over the sign-change points of
/// each step, and activation of the worst KKT violator once the support is
/// optimal. Every accepted step strictly lowers the objective.
fn feature_sign(
    gram: &Array2<f64>,
    gram_diag: &[f64],
    b: ArrayView1<'_, f64>,
    a: &mut Array1<f64>,
    lambda: f64,
    tol: f64,
) {
    let n = a.len();
    let mut theta: Vec<f64> = a.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect();
    let mut current = channel_objective(gram, b, a.view(), lambda);
    for _ in 0..(10 * n + 10) {
        let support: Vec<usize> = (0..n).filter(|&i| theta[i] != 0.0).collect();
        if support.is_empty() {
            if !activate(gram, gram_diag, b, a, &mut theta, lambda, tol) {
                return;
            }
            continue;
        }
        let sub = Array2::from_shape_fn((support.len(), support.len()), |(i, j)| gram[[support[i], support[j]]]);
        let chol = match cholesky(sub) {
            Some(c) => c,
            None => return,
        };
        let rhs = support.iter().map(|&i| b[i] - 0.5 * lambda * theta[i]).collect();
        let target = cholesky_solve(&chol, rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return;
        }
        let mut steps = vec![1.0];
        for (&i, &y) in support.iter().zip(&target) {
            if a[i] != 0.0 && y.signum() != a[i].signum() {
                steps.push(a[i] / (a[i] - y));
            }
        }
        let mut best: Option<(f64, Array1<f64>)> = None;
        for &t in &steps {
            let mut trial = a.clone();
            for (&i, &y) in support.iter().zip(&target) {
                let v = trial[i] + t * (y - trial[i]);
                // Land exactly on zero at the crossing this step aims for.
                trial[i] = if t < 1.0 && (a[i] / (a[i] - y) - t).abs() <= f64::EPSILON * t { 0.0 } else { v };
            }
            let obj = channel_objective(gram, b, trial.view(), lambda);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, trial));
            }
        }
        let (obj, trial) = match best {
            Some(bt) => bt,
            None => return,
        };
        if !(obj < current) {
            return;
        }
        current = obj;
        *a = trial;
        let reached = support.iter().zip(&target).all(|(&i, &y)| a[i] == y);
        for i in 0..n {
            theta[i] = if a[i] == 0.0 { 0.0 } else { a[i].signum() };
        }
        if reached && !activate(gram, gram_diag, b, a, &mut theta, lambda, tol) {
            return;
        }
    }
}

/// Adds the zero coordinate with the largest KKT violation to the working
/// signs; `false` when none exceeds `tol`.
fn activate(
    gram: &Array2<f64>,
    gram_diag: &[f64],
    b: ArrayView1<'_, f64>,
    a: &Array1<f64>,
    theta: &mut [f64],
    lambda: f64,
    tol: f64,
) -> bool {
    let q = &b - &gram.dot(a);
    let mut worst = None;
    let mut worst_v = tol;
    for i in 0..a.len() {
        if a[i] == 0.0 && gram_diag[i] != 0.0 {
            let v = (2.0 * q[i]).abs() - lambda;
            if v > worst_v {
                worst_v = v;
                worst = Some(i);
            }
        }
    }
    match worst {
        Some(i) => {
            theta[i] = q[i].signum();
            true
        }
        None => false,
    }
}

fn solve_channel(
    gram: &Array2<f64>,
    gram_diag: &[f64],
    b: ArrayView1<'_, f64>,
    mut a: Array1<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> ChannelFit {
    let l = a.len();
    for (i, &g) in gram_diag.iter().enumerate() {
        if g == 0.0 {
            a[i] = 0.0;
        }
    }
    let mut q = &b - &gram.dot(&a);
    let mut kkt = kkt_violation(a.view(), q.view(), gram_diag, lambda);
    let mut sweeps = 0;
    while kkt > tol && sweeps < max_iter {
        for i in 0..l {
            let g = gram_diag[i];
            if g == 0.0 {
                continue;
            }
            let old = a[i];
            let u = q[i] + g * old;
            let new = soft_threshold(2.0 * u, lambda) / (2.0 * g);
            let delta = new - old;
            if delta != 0.0 {
                a[i] = new;
                q.scaled_add(-delta, &gram.column(i));
            }
        }
        sweeps += 1;
        // Refresh q from scratch so round-off cannot accumulate in the check.
        q = &b - &gram.dot(&a);
        kkt = kkt_violation(a.view(), q.view(), gram_diag, lambda);
        if kkt > tol && sweeps % POLISH_EVERY == 0 {
            feature_sign(gram, gram_diag, b, &mut a, lambda, tol);
            q = &b - &gram.dot(&a);
            kkt = kkt_violation(a.view(), q.view(), gram_diag, lambda);
        }
    }
    ChannelFit { coeffs: a, kkt, sweeps }
}

/// `aᵀGa − 2bᵀa + λ‖a‖₁`, the per-channel objective up to a constant.
fn channel_objective(gram: &Array2<f64>, b: ArrayView1<'_, f64>, a: ArrayView1<'_, f64>, lambda: f64) -> f64 {
    a.dot(&gram.dot(&a)) - 2.0 * b.dot(&a) + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent for `min_A ‖X − Z A‖²_F + λ‖A‖₁`.
///
/// `x` is `T × C`, `z` is `T × L`; the result is `L × C`. Iterates until the
/// KKT residual drops to `tol` or `max_iter` sweeps have run. Channels are
/// independent of each other.
pub fn lasso_solve(
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    lambda: f64,
    warm_start: Option<ArrayView2<'_, f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    let (t, c) = x.dim();
    let (tz, l) = z.dim();
    if t != tz {
        return Err(Error::dim(format!("X has {t} rows but Z has {tz}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("tol and max_iter must be positive"));
    }
    if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in X or Z"));
    }
    if let Some(w) = &warm_start {
        if w.dim() != (l, c) {
            return Err(Error::dim(format!(
                "warm start is {:?}, expected ({l}, {c})",
                w.dim()
            )));
        }
    }

    let gram = z.t().dot(&z);
    let cross = z.t().dot(&x);
    let gram_diag: Vec<f64> = gram.diag().to_vec();
    let degenerate_latents: Vec<usize> = if lambda == 0.0 {
        gram_diag
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == 0.0)
            .map(|(i, _)| i)
            .collect()
    } else {
        Vec::new()
    };
    if !degenerate_latents.is_empty() {
        log::warn!(
            "latent columns {degenerate_latents:?} are zero with lambda = 0; using minimum-norm coefficients"
        );
    }

    let fits: Vec<ChannelFit> = (0..c)
        .map(|ch| {
            let start = match &warm_start {
                Some(w) => w.column(ch).to_owned(),
                None => Array1::zeros(l),
            };
            solve_channel(&gram, &gram_diag, cross.column(ch), start, lambda, tol, max_iter)
        })
        .collect();

    let mut coefficients = Array2::zeros((l, c));
    let mut kkt_residual = 0.0_f64;
    let mut sweeps = 0;
    for (ch, fit) in fits.into_iter().enumerate() {
        coefficients.column_mut(ch).assign(&fit.coeffs);
        kkt_residual = kkt_residual.max(fit.kkt);
        sweeps = sweeps.max(fit.sweeps);
    }
    Ok(LassoFit {
        coefficients,
        kkt_residual,
        sweeps,
        converged: kkt_residual <= tol,
        degenerate_latents,
    })
}

/// Smallest `λ` for which the solution is identically zero:
/// `2 · max_{l,c} |⟨z_l, x_c⟩|`.
pub fn lambda_max(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> f64 {
    2.0 * z.t().dot(&x).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// ISTA on the same objective, step `1 / (2‖ZᵀZ‖₂)`; independent of the
    /// coordinate-descent path.
    fn proximal_gradient(x: &Array2<f64>, z: &Array2<f64>, lambda: f64, iters: usize) -> Array2<f64> {
        let gram = z.t().dot(z);
        // Power iteration for the spectral norm of the Gram matrix.
        let mut v = Array1::from_elem(gram.nrows(), 1.0);
        let mut norm = 0.0;
        for _ in 0..500 {
            let w = gram.dot(&v);
            norm = w.dot(&w).sqrt();
            v = w / norm;
        }
        let step = 1.0 / (2.0 * norm * 1.01);
        let mut a = Array2::<f64>::zeros((z.ncols(), x.ncols()));
        for _ in 0..iters {
            let grad = (z.t().dot(&(z.dot(&a) - x))) * 2.0;
            let next = (&a - &(grad * step)).mapv(|u| soft_threshold(u, lambda * step));
            let change = (&next - &a).iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            a = next;
            if change < 1e-14 {
                break;
            }
        }
        a
    }

    #[test]
    fn unregularized_square_system_is_exact_solve() {
        // Diagonally dominant, well conditioned.
        let z = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.3, 0.4, 5.0]];
        let a_true = array![[0.5, -1.0], [2.0, 0.25], [-0.7, 1.5]];
        let x = z.dot(&a_true);
        let fit = lasso_solve(x.view(), z.view(), 0.0, None, 1e-13, 10_000).unwrap();
        assert!(fit.converged);
        for (got, want) in fit.coefficients.iter().zip(a_true.iter()) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn lambda_above_max_gives_exact_zero() {
        let z = random_matrix(20, 3, 1);
        let x = random_matrix(20, 4, 2);
        let lmax = lambda_max(x.view(), z.view());
        let warm = Array2::from_elem((3, 4), 0.3);
        for lambda in [lmax, lmax * 1.5] {
            let fit = lasso_solve(x.view(), z.view(), lambda, Some(warm.view()), 1e-12, 1000).unwrap();
            assert!(fit.coefficients.iter().all(|&v| v == 0.0));
        }
        let below = lasso_solve(x.view(), z.view(), lmax * 0.9, None, 1e-12, 1000).unwrap();
        assert!(below.coefficients.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn small_instance_matches_proximal_gradient() {
        let z = random_matrix(8, 2, 7);
        let x = random_matrix(8, 1, 8);
        let fit = lasso_solve(x.view(), z.view(), 0.1, None, 1e-12, 10_000).unwrap();
        let oracle = proximal_gradient(&x, &z, 0.1, 200_000);
        for (got, want) in fit.coefficients.iter().zip(oracle.iter()) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    /// Nearly collinear dictionary columns make plain coordinate descent
    /// crawl; the support solves must still certify KKT in few sweeps.
    #[test]
    fn ill_conditioned_dictionary_converges_quickly() {
        let base = random_matrix(200, 6, 11);
        let jitter = random_matrix(200, 6, 12);
        let mut z = Array2::zeros((200, 12));
        for j in 0..6 {
            z.column_mut(2 * j).assign(&base.column(j));
            let near = &base.column(j) + &(&jitter.column(j) * 1e-3);
            z.column_mut(2 * j + 1).assign(&near);
        }
        let truth = random_matrix(12, 4, 13);
        let x = z.dot(&truth);
        let fit = lasso_solve(x.view(), z.view(), 0.05, None, 1e-8, 1000).unwrap();
        assert!(fit.converged, "kkt {} after {} sweeps", fit.kkt_residual, fit.sweeps);
        assert!(fit.sweeps <= 100, "{} sweeps", fit.sweeps);
        let obj = lasso_objective(x.view(), z.view(), fit.coefficients.view(), 0.05);
        let oracle = proximal_gradient(&x, &z, 0.05, 20_000);
        assert!(obj <= lasso_objective(x.view(), z.view(), oracle.view(), 0.05) + 1e-8);
    }

    #[test]
    fn zero_column_flagged_when_unregularized() {
        let mut z = random_matrix(10, 3, 3);
        z.column_mut(1).fill(0.0);
        let x = random_matrix(10, 2, 4);
        let warm = Array2::from_elem((3, 2), 0.5);
        let fit = lasso_solve(x.view(), z.view(), 0.0, Some(warm.view()), 1e-10, 5000).unwrap();
        assert_eq!(fit.degenerate_latents, vec![1]);
        assert!(fit.coefficients.row(1).iter().all(|&v| v == 0.0));
        assert!(fit.converged);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = random_matrix(5, 2, 1);
        let x = random_matrix(6, 2, 1);
        assert!(matches!(
            lasso_solve(x.view(), z.view(), 0.1, None, 1e-8, 10),
            Err(Error::Dimension(_))
        ));
        let mut x = random_matrix(5, 2, 1);
        x[[0, 0]] = f64::NAN;
        assert!(matches!(
            lasso_solve(x.view(), z.view(), 0.1, None, 1e-8, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rescale_examples() {
        let a = array![[0.5, 0.3, -3.0], [2.0, -0.9, 1.5]];
        let r = rescale_columns(a.view()).unwrap();
        assert_eq!(r.values(), array![[0.25, 0.3, -1.0], [1.0, -0.9, 0.5]]);
    }

    #[test]
    fn identity_like_is_rectangular_delta() {
        let a = CoefficientMatrix::identity_like(2, 3);
        assert_eq!(a.values(), array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, f64)> {
            (2usize..5, 1usize..4, any::<u64>(), 0.01f64..2.0).prop_map(|(l, c, seed, lam)| {
                let z = random_matrix(12, l, seed);
                let x = random_matrix(12, c, seed.wrapping_add(1));
                (x, z, lam)
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn kkt_certificate_holds((x, z, lambda) in instance()) {
                let tol = 1e-9;
                let fit = lasso_solve(x.view(), z.view(), lambda, None, tol, 100_000).unwrap();
                prop_assert!(fit.converged);
                let resid = &x - &z.dot(&fit.coefficients);
                for ((l, c), &a) in fit.coefficients.indexed_iter() {
                    let g = 2.0 * z.column(l).dot(&resid.column(c));
                    if a == 0.0 {
                        prop_assert!(g.abs() <= lambda + tol);
                    } else {
                        prop_assert!((g - lambda * a.signum()).abs() <= tol);
                    }
                }
            }

            #[test]
            fn sweeps_never_increase_objective((x, z, lambda) in instance()) {
                let mut a = Array2::<f64>::zeros((z.ncols(), x.ncols()));
                let mut prev = lasso_objective(x.view(), z.view(), a.view(), lambda);
                for _ in 0..20 {
                    a = lasso_solve(x.view(), z.view(), lambda, Some(a.view()), 1e-300, 1)
                        .unwrap()
                        .coefficients;
                    let obj = lasso_objective(x.view(), z.view(), a.view(), lambda);
                    prop_assert!(obj <= prev + 1e-12 * prev.abs().max(1.0));
                    prev = obj;
                }
            }

            #[test]
            fn channels_solve_independently((x, z, lambda) in instance()) {
                let joint = lasso_solve(x.view(), z.view(), lambda, None, 1e-11, 100_000).unwrap();
                for c in 0..x.ncols() {
                    let xc = x.slice(ndarray::s![.., c..c + 1]);
                    let single = lasso_solve(xc, z.view(), lambda, None, 1e-11, 100_000).unwrap();
                    prop_assert_eq!(single.coefficients.column(0), joint.coefficients.column(c));
                }
            }

            #[test]
            fn rescale_is_idempotent_and_boxed(seed in any::<u64>(), scale in 0.1f64..10.0) {
                let a = random_matrix(4, 5, seed) * scale;
                let once = rescale_columns(a.view()).unwrap();
                prop_assert!(once.values().iter().all(|v| v.abs() <= 1.0));
                let twice = rescale_columns(once.values()).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
