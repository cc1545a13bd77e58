//! Real polynomials in ascending-degree coefficient form.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree accepted by the companion-matrix root finder.
pub const MAX_ROOT_DEGREE: usize = 32;

/// Default relative residual targeted by Newton polishing of roots.
pub const DEFAULT_ROOT_TOL: f64 = 1e-13;

/// Real polynomial `c[0] + c[1] s + ... + c[n] s^n`.
///
/// Trailing zero coefficients are stripped on construction, so the zero
/// polynomial is the empty coefficient list and `degree()` is unambiguous.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `a0 + a1 s`.
    pub fn linear(a0: f64, a1: f64) -> Self {
        Polynomial::new(vec![a0, a1])
    }

    /// First-order lag denominator `tau s + 1`.
    pub fn lag(tau: f64) -> Self {
        Polynomial::linear(1.0, tau)
    }

    /// Monic polynomial with the given real roots.
    pub fn from_real_roots(roots: &[f64]) -> Self {
        roots
            .iter()
            .fold(Polynomial::constant(1.0), |acc, &r| &acc * &Polynomial::linear(-r, 1.0))
    }

    /// Monic polynomial with the given roots; imaginary parts of the expanded
    /// coefficients are discarded, so the roots should be closed under
    /// conjugation.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (i, &c) in acc.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            acc = next;
        }
        Polynomial::new(acc.into_iter().map(|c| c.re).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn eval_real(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Value and first derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    /// `sum |c_i| r^i`, the natural magnitude against which a value of the
    /// polynomial at a point of modulus `r` is judged.
    pub fn magnitude_scale(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c.abs())
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// `p(s - lambda)`, re-expanded by nested Horner composition.
    pub fn shift(&self, lambda: f64) -> Polynomial {
        if lambda == 0.0 {
            return self.clone();
        }
        let step = Polynomial::linear(-lambda, 1.0);
        let mut acc = Polynomial::zero();
        for &c in self.coeffs.iter().rev() {
            acc = &(&acc * &step) + &Polynomial::constant(c);
        }
        // keep the degree even if rounding produced an exact zero leading term
        let mut coeffs = acc.coeffs;
        coeffs.resize(self.coeffs.len(), 0.0);
        Polynomial::new(coeffs)
    }

    pub fn monic(&self) -> Option<Polynomial> {
        let lead = self.leading();
        (lead != 0.0).then(|| self.scale(1.0 / lead))
    }

    /// All complex roots with multiplicity, see [`poly_roots`].
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        poly_roots(self, DEFAULT_ROOT_TOL)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| match i {
                0 => format!("{c}"),
                1 => format!("{c} s"),
                _ => format!("{c} s^{i}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;

    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;

    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Roots of a real polynomial, with multiplicity.
///
/// Exact zero roots are factored out first; the rest come from the
/// eigenvalues of the balanced companion matrix (Francis double-shift QR via
/// `nalgebra`'s real Schur form), then each root is polished by Newton's
/// method on the original coefficients until its relative residual drops
/// below `tol` or stops improving. Non-real roots are paired into exact
/// conjugates. Output is ordered by ascending real part, then ascending
/// imaginary part.
///
/// A nonzero constant has no roots; the zero polynomial is an error.
pub fn poly_roots(p: &Polynomial, tol: f64) -> Result<Vec<Complex64>> {
    let degree = p.degree().ok_or(Error::DegeneratePolynomial)?;
    if degree > MAX_ROOT_DEGREE {
        return Err(Error::DegreeTooLarge(degree));
    }
    let coeffs = p.coeffs();
    let n_zero = coeffs.iter().take_while(|&&c| c == 0.0).count();
    let reduced = Polynomial::new(coeffs[n_zero..].to_vec());
    let mut roots = vec![Complex64::new(0.0, 0.0); n_zero];

    let m = degree - n_zero;
    let found = match m {
        0 => Vec::new(),
        1 => vec![Complex64::new(-reduced.coeff(0) / reduced.coeff(1), 0.0)],
        _ => {
            let lead = reduced.leading();
            let mut companion = DMatrix::<f64>::zeros(m, m);
            for i in 1..m {
                companion[(i, i - 1)] = 1.0;
            }
            for i in 0..m {
                companion[(i, m - 1)] = -reduced.coeff(i) / lead;
            }
            polish(&reduced, eigenvalues(companion)?, tol)
        }
    };
    roots.extend(found);
    let mut roots = pair_conjugates(roots);
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(roots)
}

/// Eigenvalues of a real square matrix (balanced real Schur form), sorted by
/// ascending real part then imaginary part.
pub fn eigenvalues(mut a: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    balance(&mut a);
    let schur = Schur::try_new(a, f64::EPSILON, 10_000 * n).ok_or(Error::EigenFailure)?;
    let mut eig: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eig)
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// of each index are comparable (Parlett-Reinsch). Eigenvalues are unchanged.
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn polish(p: &Polynomial, estimates: Vec<Complex64>, tol: f64) -> Vec<Complex64> {
    let originals = estimates.clone();
    estimates
        .iter()
        .enumerate()
        .map(|(idx, &z0)| {
            // a polished root may not wander to a neighbouring root
            let separation = originals
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != idx)
                .map(|(_, w)| (w - z0).norm())
                .fold(f64::INFINITY, f64::min);
            let mut z = z0;
            let residual = |z: Complex64| p.eval(z).norm() / p.magnitude_scale(z.norm()).max(f64::MIN_POSITIVE);
            let mut res = residual(z);
            for _ in 0..50 {
                if res <= tol {
                    break;
                }
                let (v, dv) = p.eval_with_derivative(z);
                if dv.norm() == 0.0 {
                    break;
                }
                let candidate = z - v / dv;
                let cand_res = residual(candidate);
                if !(cand_res < res) || (candidate - z0).norm() > 0.5 * separation {
                    break;
                }
                z = candidate;
                res = cand_res;
            }
            z
        })
        .collect()
}

/// Forces the root multiset to be closed under conjugation: upper and lower
/// half-plane roots are matched greedily and averaged, unmatched ones are
/// projected onto the real axis.
fn pair_conjugates(roots: Vec<Complex64>) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::with_capacity(roots.len());
    let mut upper: Vec<Complex64> = Vec::new();
    let mut lower: Vec<Complex64> = Vec::new();
    for z in roots {
        if z.im > 0.0 {
            upper.push(z);
        } else if z.im < 0.0 {
            lower.push(z);
        } else {
            out.push(z);
        }
    }
    for u in upper {
        let best = lower
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - u.conj()).norm().total_cmp(&(*b - u.conj()).norm()))
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                let l = lower.swap_remove(i);
                let re = 0.5 * (u.re + l.re);
                let im = 0.5 * (u.im - l.im);
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
            None => out.push(Complex64::new(u.re, 0.0)),
        }
    }
    out.extend(lower.into_iter().map(|l| Complex64::new(l.re, 0.0)));
    out
}
