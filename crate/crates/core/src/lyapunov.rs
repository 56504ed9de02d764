//! Quadratic Lyapunov regions built from the closed-loop linearization.
//!
//! `build_region` linearizes at an equilibrium `mu`, solves
//! `A^T P + P A = -I`, sizes the level `eps` so that `{V <= eps}` sits
//! inside the admissible set with a margin, and then shrinks `eps` until
//! `V' < 0` holds on sampled shells `{eps/2 <= V <= eps}` at sampled times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Controller;
use crate::linalg::{solve, Matrix};
use crate::models::{linearize, ModelError, SystemKind, SystemModel, SPHERE_SINGULAR_COS};

/// Minimum distance (max metric) between a region and the boundary of M.
pub const MARGIN_MIN: f64 = 1e-3;
/// Smallest level `verify_region` will shrink to.
pub const EPS_MIN: f64 = 1e-8;
/// Time samples used for the "for all t" part of the decrease condition.
pub const TIME_SAMPLES: usize = 32;
pub const DEFAULT_SHELL_SAMPLES: usize = 2048;
const LINEARIZE_STEP: f64 = 1e-3;
const QR_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("linearization is not Hurwitz (largest real part {max_real})")]
    NotHurwitz { max_real: f64 },
    #[error("Lyapunov solve is ill-conditioned (residual {residual:e})")]
    IllConditioned { residual: f64 },
    #[error("QR iteration did not converge")]
    NoConvergence,
    #[error("decrease condition fails down to eps = {eps:e} (worst V' = {worst_rate:e})")]
    VerificationFailed { eps: f64, worst_rate: f64 },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Reduces to upper Hessenberg form by stabilized elementary similarity
/// transforms.
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut i = m;
        for (j, row) in a.iter().enumerate().skip(m) {
            if row[m - 1].abs() > x.abs() {
                x = row[m - 1];
                i = j;
            }
        }
        if i != m {
            a.swap(i, m);
            for row in a.iter_mut() {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
#[allow(clippy::many_single_char_names)]
fn hessenberg_qr(a: &mut [Vec<f64>]) -> Result<Vec<Complex>, LyapunovError> {
    let n = a.len() as isize;
    let mut wr = vec![0.0; n as usize];
    let mut wi = vec![0.0; n as usize];
    let at = |i: isize, j: isize| (i as usize, j as usize);
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            let (r, c) = at(i, j);
            anorm += a[r][c].abs();
        }
    }
    let mut nn = n - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    let (mut x, mut y, mut z, mut w);
    macro_rules! el {
        ($i:expr, $j:expr) => {
            a[($i) as usize][($j) as usize]
        };
    }
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let mut s = el!(l - 1, l - 1).abs() + el!(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if el!(l, l - 1).abs() + s == s {
                    el!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            x = el!(nn, nn);
            if l == nn {
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
                break;
            }
            y = el!(nn - 1, nn - 1);
            w = el!(nn, nn - 1) * el!(nn - 1, nn);
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                let (i0, i1) = ((nn - 1) as usize, nn as usize);
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[i0] = x + z;
                    wr[i1] = x + z;
                    if z != 0.0 {
                        wr[i1] = x - w / z;
                    }
                    wi[i0] = 0.0;
                    wi[i1] = 0.0;
                } else {
                    wr[i0] = x + p;
                    wr[i1] = x + p;
                    wi[i0] = -z;
                    wi[i1] = z;
                }
                nn -= 2;
                break;
            }
            if its == QR_ITERATIONS {
                return Err(LyapunovError::NoConvergence);
            }
            if its == 10 || its == 20 {
                t += x;
                for i in 0..=nn {
                    el!(i, i) -= x;
                }
                let s = el!(nn, nn - 1).abs() + el!(nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            while m >= l {
                z = el!(m, m);
                r = x - z;
                let s = y - z;
                p = (r * s - w) / el!(m + 1, m) + el!(m, m + 1);
                q = el!(m + 1, m + 1) - z - r - s;
                r = el!(m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = el!(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (el!(m - 1, m - 1).abs() + z.abs() + el!(m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                el!(i, i - 2) = 0.0;
                if i != m + 2 {
                    el!(i, i - 3) = 0.0;
                }
            }
            let mut k = m;
            while k <= nn - 1 {
                if k != m {
                    p = el!(k, k - 1);
                    q = el!(k + 1, k - 1);
                    r = 0.0;
                    if k != nn - 1 {
                        r = el!(k + 2, k - 1);
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            el!(k, k - 1) = -el!(k, k - 1);
                        }
                    } else {
                        el!(k, k - 1) = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = el!(k, j) + q * el!(k + 1, j);
                        if k != nn - 1 {
                            p += r * el!(k + 2, j);
                            el!(k + 2, j) -= p * z;
                        }
                        el!(k + 1, j) -= p * y;
                        el!(k, j) -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        p = x * el!(i, k) + y * el!(i, k + 1);
                        if k != nn - 1 {
                            p += z * el!(i, k + 2);
                            el!(i, k + 2) -= p * r;
                        }
                        el!(i, k + 1) -= p * q;
                        el!(i, k) -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex { re, im })
        .collect())
}

/// Coefficients `c` of `det(sI - A) = s^n + c[0] s^(n-1) + ... + c[n-1]`
/// by the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(a: &Matrix) -> Vec<f64> {
    let n = a.dim();
    let mut coeffs = Vec::with_capacity(n);
    let mut m = Matrix::zeros(n);
    let id = Matrix::identity(n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = a.mul(&m).add(&id.scale(c_prev));
        let am = a.mul(&m);
        let trace: f64 = (0..n).map(|i| am[(i, i)]).sum();
        let c = -trace / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Relative residual `|p(s)| / sum_k |c_k| |s|^(n-k)` of the
/// characteristic polynomial at `s`.
pub fn characteristic_residual(coeffs: &[f64], s: Complex) -> f64 {
    let mut value = Complex { re: 1.0, im: 0.0 };
    let mut scale = 1.0;
    for &c in coeffs {
        value = value.mul(s);
        value.re += c;
        scale = scale * s.abs() + c.abs();
    }
    value.abs() / scale.max(f64::MIN_POSITIVE)
}

/// Eigenvalues of a real matrix of dimension at most four, sorted by real
/// part then imaginary part.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex>, LyapunovError> {
    let n = a.dim();
    if n == 0 || n > 4 {
        return Err(LyapunovError::InvalidRegion(format!(
            "eigenvalues supports dimensions 1..=4, got {n}"
        )));
    }
    let mut rows = a.rows();
    hessenberg(&mut rows);
    let mut eig = hessenberg_qr(&mut rows)?;
    let coeffs = characteristic_polynomial(a);
    if eig.iter().any(|&s| characteristic_residual(&coeffs, s) > 1e-8) {
        return Err(LyapunovError::NoConvergence);
    }
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(eig)
}

fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// `A^T P + P A + Q` in the max norm.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    a.transpose().mul(p).add(&p.mul(a)).add(q).max_abs()
}

/// Solves `A^T P + P A = -Q` for symmetric `P` as a dense linear system on
/// the `n(n+1)/2` independent entries.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix, LyapunovError> {
    let eig = eigenvalues(a)?;
    let max_real = eig.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.re));
    if !(max_real < 0.0) {
        return Err(LyapunovError::NotHurwitz { max_real });
    }
    let n = a.dim();
    let unknowns = n * (n + 1) / 2;
    let mut lhs = vec![0.0; unknowns * unknowns];
    let mut rhs = vec![0.0; unknowns];
    for i in 0..n {
        for j in i..n {
            let row = sym_index(n, i, j);
            for k in 0..n {
                lhs[row * unknowns + sym_index(n, k, j)] += a[(k, i)];
                lhs[row * unknowns + sym_index(n, i, k)] += a[(k, j)];
            }
            rhs[row] = -q[(i, j)];
        }
    }
    let sol = solve(unknowns, lhs, rhs).ok_or(LyapunovError::IllConditioned {
        residual: f64::INFINITY,
    })?;
    let mut p = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = sol[sym_index(n, i, j)];
        }
    }
    let residual = lyapunov_residual(a, &p, q);
    if residual > 1e-10 * q.max_abs() || p.leading_minors().iter().any(|m| !(*m > 0.0)) {
        return Err(LyapunovError::IllConditioned { residual });
    }
    Ok(p)
}

/// Bounds on the first state coordinate (`q` or `phi`) that a capture
/// region must respect, before the margin.
pub fn admissible_interval(kind: SystemKind) -> (f64, f64) {
    match kind {
        SystemKind::Sphere => (0.0, std::f64::consts::FRAC_PI_2 - 10.0 * SPHERE_SINGULAR_COS),
        _ => (0.0, std::f64::consts::PI),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub initial_eps: f64,
    pub final_eps: f64,
    pub shrink_count: usize,
    pub shell_samples: usize,
    pub time_samples: Vec<f64>,
    /// Smallest `-V'` over all samples at the final level.
    pub min_margin: f64,
    pub evaluations: usize,
    pub rng_seed: u64,
}

/// `{ x : (x - center)^T P (x - center) <= eps }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRegion {
    pub center: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Matrix,
    pub eps: f64,
    pub report: Option<VerificationReport>,
}

impl LyapunovRegion {
    pub fn new(center: Vec<f64>, p: Matrix, eps: f64) -> Result<Self, LyapunovError> {
        if center.len() != p.dim() {
            return Err(LyapunovError::InvalidRegion("center and P dimensions differ".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(LyapunovError::InvalidRegion(format!("eps must be > 0, got {eps}")));
        }
        let asym = p.add(&p.transpose().scale(-1.0)).max_abs();
        if asym > 1e-12 * p.max_abs().max(1.0) {
            return Err(LyapunovError::InvalidRegion("P is not symmetric".into()));
        }
        if p.leading_minors().iter().any(|m| !(*m > 0.0)) {
            return Err(LyapunovError::InvalidRegion("P is not positive definite".into()));
        }
        Ok(LyapunovRegion {
            center,
            p,
            eps,
            report: None,
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.p.quadratic(x, &self.center)
    }

    /// Half-width of the region along coordinate `i`.
    pub fn extent(&self, i: usize) -> f64 {
        let inv = self.p.inverse().expect("P is positive definite");
        (self.eps * inv[(i, i)]).sqrt()
    }

    /// Largest level whose sublevel set keeps coordinate 0 inside
    /// `[lo + margin, hi - margin]`.
    pub fn max_level(center: &[f64], p: &Matrix, (lo, hi): (f64, f64), margin: f64) -> f64 {
        let inv = p.inverse().expect("P is positive definite");
        let room = (center[0] - lo).min(hi - center[0]) - margin;
        if room <= 0.0 {
            return 0.0;
        }
        room * room / inv[(0, 0)]
    }

    /// `V'(x, t) = 2 (x - mu)^T P f(x, t)`.
    pub fn rate(
        &self,
        model: &SystemModel,
        controller: &Controller,
        x: &[f64],
        t: f64,
    ) -> Result<f64, ModelError> {
        let f = model.rhs(controller, x, t)?;
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let pf = self.p.mul_vec(&f);
        Ok(2.0 * d.iter().zip(&pf).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Checks that the region lies inside M with the required margin.
    pub fn check_inside(&self, kind: SystemKind) -> Result<(), LyapunovError> {
        let (lo, hi) = admissible_interval(kind);
        let w = self.extent(0);
        let c = self.center[0];
        if c - w < lo + MARGIN_MIN * 0.999 || c + w > hi - MARGIN_MIN * 0.999 {
            return Err(LyapunovError::InvalidRegion(format!(
                "region [{}, {}] leaves the admissible interval ({lo}, {hi})",
                c - w,
                c + w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOptions {
    pub shell_samples: usize,
    pub rng_seed: u64,
    /// Overrides the default time sampling when set.
    pub time_samples: Option<Vec<f64>>,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            shell_samples: DEFAULT_SHELL_SAMPLES,
            rng_seed: 0x5eed,
            time_samples: None,
        }
    }
}

/// 32 times uniform over the declared period when there is one, else over
/// `[t0, t0 + 10]`.
pub fn default_time_samples(controller: &Controller, t0: f64) -> Vec<f64> {
    let span = controller.declared_period().unwrap_or(10.0);
    (0..TIME_SAMPLES)
        .map(|k| t0 + span * k as f64 / TIME_SAMPLES as f64)
        .collect()
}

pub fn build_region(
    model: &SystemModel,
    controller: &Controller,
    mu: &[f64],
    t0: f64,
) -> Result<LyapunovRegion, LyapunovError> {
    build_region_with(model, controller, mu, t0, &RegionOptions::default())
}

pub fn build_region_with(
    model: &SystemModel,
    controller: &Controller,
    mu: &[f64],
    t0: f64,
    options: &RegionOptions,
) -> Result<LyapunovRegion, LyapunovError> {
    let a = linearize(model, controller, mu, t0, LINEARIZE_STEP)?;
    let p = solve_lyapunov(&a, &Matrix::identity(a.dim()))?;
    let eps = LyapunovRegion::max_level(mu, &p, admissible_interval(model.kind), MARGIN_MIN);
    if !(eps > 0.0) {
        return Err(LyapunovError::InvalidRegion(
            "equilibrium is too close to the boundary of M".into(),
        ));
    }
    let region = LyapunovRegion::new(mu.to_vec(), p, eps)?;
    let times = options
        .time_samples
        .clone()
        .unwrap_or_else(|| default_time_samples(controller, t0));
    verify_region(model, controller, region, options.shell_samples, &times, options.rng_seed)
}

/// Samples `V'` on the shell `{eps/2 <= V <= eps}` at each of `times`,
/// halving `eps` until every sample decreases. Never increases `eps`.
pub fn verify_region(
    model: &SystemModel,
    controller: &Controller,
    mut region: LyapunovRegion,
    n_samples: usize,
    times: &[f64],
    rng_seed: u64,
) -> Result<LyapunovRegion, LyapunovError> {
    if times.is_empty() || n_samples == 0 {
        return Err(LyapunovError::InvalidRegion("need at least one sample".into()));
    }
    let n = region.center.len();
    let chol = region
        .p
        .cholesky()
        .ok_or_else(|| LyapunovError::InvalidRegion("P is not positive definite".into()))?;
    // x - mu = L^{-T} z scales V to |z|^2.
    let whiten = chol.transpose().inverse().ok_or(LyapunovError::IllConditioned {
        residual: f64::INFINITY,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let unit: Vec<(Vec<f64>, f64)> = (0..n_samples)
        .map(|_| {
            let z = loop {
                let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm2: f64 = z.iter().map(|v| v * v).sum();
                if norm2 > 1e-6 && norm2 <= 1.0 {
                    let norm = norm2.sqrt();
                    break z.into_iter().map(|v| v / norm).collect::<Vec<_>>();
                }
            };
            let level = rng.random_range(0.5..=1.0);
            (whiten.mul_vec(&z), level)
        })
        .collect();

    let initial_eps = region.eps;
    let mut eps = region.eps;
    let mut shrink_count = 0;
    let mut evaluations = 0;
    loop {
        let worst = unit
            .par_iter()
            .map(|(dir, level)| {
                let scale = (eps * level).sqrt();
                let x: Vec<f64> = region
                    .center
                    .iter()
                    .zip(dir)
                    .map(|(c, d)| c + scale * d)
                    .collect();
                times.iter().fold(f64::NEG_INFINITY, |worst, &t| {
                    let rate = region.rate(model, controller, &x, t).unwrap_or(f64::INFINITY);
                    worst.max(if rate.is_nan() { f64::INFINITY } else { rate })
                })
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        evaluations += n_samples * times.len();
        if worst < 0.0 {
            region.eps = eps;
            region.report = Some(VerificationReport {
                initial_eps,
                final_eps: eps,
                shrink_count,
                shell_samples: n_samples,
                time_samples: times.to_vec(),
                min_margin: -worst,
                evaluations,
                rng_seed,
            });
            return Ok(region);
        }
        let next = eps / 2.0;
        if next < EPS_MIN {
            return Err(LyapunovError::VerificationFailed {
                eps,
                worst_rate: worst,
            });
        }
        eps = next;
        shrink_count += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{builtin, VarSet};
    use std::f64::consts::FRAC_PI_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eigenvalue_examples() {
        let e = eigenvalues(&Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -1.0]])).unwrap();
        let h = 3f64.sqrt() / 2.0;
        assert!(close(e[0].re, -0.5, 1e-14) && close(e[0].im, -h, 1e-14), "{e:?}");
        assert!(close(e[1].re, -0.5, 1e-14) && close(e[1].im, h, 1e-14));

        let e = eigenvalues(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert!(close(e[0].re, -1.0, 1e-14) && close(e[1].re, 1.0, 1e-14));

        let e = eigenvalues(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, -1.0]])).unwrap();
        let s5 = 5f64.sqrt();
        assert!(close(e[0].re, (-1.0 - s5) / 2.0, 1e-14));
        assert!(close(e[1].re, (-1.0 + s5) / 2.0, 1e-14));
    }

    #[test]
    fn eigenvalues_of_companion_matrices() {
        // Roots chosen up front; the companion matrix has exactly these.
        let cases: [&[(f64, f64)]; 3] = [
            &[(-1.0, 0.0), (-2.0, 0.0), (-3.0, 0.0), (-4.0, 0.0)],
            &[(-0.5, 2.0), (-0.5, -2.0), (1.5, 0.0), (-0.25, 0.0)],
            &[(0.3, 1.0), (0.3, -1.0), (-2.0, 0.5), (-2.0, -0.5)],
        ];
        for roots in cases {
            let mut poly = vec![Complex { re: 1.0, im: 0.0 }];
            for &(re, im) in roots {
                let r = Complex { re, im };
                let mut next = vec![Complex { re: 0.0, im: 0.0 }; poly.len() + 1];
                for (k, c) in poly.iter().enumerate() {
                    next[k].re += c.re;
                    next[k].im += c.im;
                    let prod = c.mul(r);
                    next[k + 1].re -= prod.re;
                    next[k + 1].im -= prod.im;
                }
                poly = next;
            }
            let n = roots.len();
            let mut a = Matrix::zeros(n);
            for j in 0..n {
                a[(0, j)] = -poly[j + 1].re;
            }
            for i in 1..n {
                a[(i, i - 1)] = 1.0;
            }
            let eig = eigenvalues(&a).unwrap();
            for &(re, im) in roots {
                assert!(
                    eig.iter().any(|e| close(e.re, re, 1e-9) && close(e.im, im, 1e-9)),
                    "{roots:?} -> {eig:?}"
                );
            }
        }
    }

    #[test]
    fn lyapunov_examples() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -1.0]]);
        let p = solve_lyapunov(&a, &Matrix::identity(2)).unwrap();
        let want = Matrix::from_rows(&[vec![1.5, 0.5], vec![0.5, 1.0]]);
        assert!(p.add(&want.scale(-1.0)).max_abs() < 1e-14, "{p:?}");

        let a = Matrix::identity(2).scale(-1.0);
        let p = solve_lyapunov(&a, &Matrix::identity(2)).unwrap();
        assert!(p.add(&Matrix::identity(2).scale(-0.5)).max_abs() < 1e-15);

        let saddle = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(
            solve_lyapunov(&saddle, &Matrix::identity(2)),
            Err(LyapunovError::NotHurwitz { .. })
        ));
    }

    #[test]
    fn region_examples() {
        let model = SystemModel::simple();
        let pd = Controller::new(VarSet::Planar, &builtin("pd", &[2.0, 1.0, FRAC_PI_2]).unwrap()).unwrap();
        let region = build_region(&model, &pd, &[FRAC_PI_2, 0.0], 0.0).unwrap();
        let want = Matrix::from_rows(&[vec![1.5, 0.5], vec![0.5, 1.0]]);
        assert!(region.p.add(&want.scale(-1.0)).max_abs() < 1e-10, "{:?}", region.p);
        let report = region.report.as_ref().unwrap();
        assert!(region.eps > 1e-4 && report.min_margin > 0.0);
        assert!(report.final_eps <= report.initial_eps);
        region.check_inside(SystemKind::Simple).unwrap();

        let weak = Controller::new(VarSet::Planar, &builtin("pd", &[0.5, 1.0, FRAC_PI_2]).unwrap()).unwrap();
        assert!(matches!(
            build_region(&model, &weak, &[FRAC_PI_2, 0.0], 0.0),
            Err(LyapunovError::NotHurwitz { .. })
        ));
        let fr = SystemModel::friction(1.0).unwrap();
        assert!(matches!(
            build_region(&fr, &Controller::zero(VarSet::Planar), &[FRAC_PI_2, 0.0], 0.0),
            Err(LyapunovError::NotHurwitz { .. })
        ));
    }

    #[test]
    fn oversized_level_shrinks() {
        let model = SystemModel::simple();
        let pd = Controller::new(VarSet::Planar, &builtin("pd", &[2.0, 1.0, FRAC_PI_2]).unwrap()).unwrap();
        let p = Matrix::from_rows(&[vec![1.5, 0.5], vec![0.5, 1.0]]);
        let region = LyapunovRegion::new(vec![FRAC_PI_2, 0.0], p, 10.0).unwrap();
        let times = default_time_samples(&pd, 0.0);
        let verified = verify_region(&model, &pd, region, 1000, &times, 3).unwrap();
        let report = verified.report.unwrap();
        assert!(report.shrink_count >= 1);
        assert!(report.final_eps < 10.0);
    }

    #[test]
    fn saddle_region_is_rejected() {
        let model = SystemModel::simple();
        let zero = Controller::zero(VarSet::Planar);
        let region = LyapunovRegion::new(vec![FRAC_PI_2, 0.0], Matrix::identity(2), 0.5).unwrap();
        let times = default_time_samples(&zero, 0.0);
        assert!(matches!(
            verify_region(&model, &zero, region, 1000, &times, 1),
            Err(LyapunovError::VerificationFailed { .. })
        ));
    }

    #[test]
    fn invalid_regions() {
        let p = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(LyapunovRegion::new(vec![1.0, 0.0], p, 1.0).is_err());
        assert!(LyapunovRegion::new(vec![1.0, 0.0], Matrix::identity(2), 0.0).is_err());
        let big = LyapunovRegion::new(vec![FRAC_PI_2, 0.0], Matrix::identity(2), 4.0).unwrap();
        assert!(big.check_inside(SystemKind::Simple).is_err());
    }
}
