//! Orthonormal bases unbiased with the computational basis.
//!
//! For prime-power dimensions `D = p^n` the bases come from the finite field
//! GF(p^n): basis `x` has vectors
//!
//! ```text
//! v_{x,m}[k] = D^{-1/2} · exp(iπ·kᵀB_x k / 2)·(-1)^{m·k}      (p = 2)
//! v_{x,m}[k] = D^{-1/2} · ω^{Tr(x k²) + m·k},  ω = e^{2πi/p}   (p odd)
//! ```
//!
//! with `B_x[i][j] = Tr(x α^{i+j})` the trace form in the polynomial basis.
//! Together with the computational basis these `D` bases form a complete set
//! of mutually unbiased bases, so the rank-one projectors are a 2-design.
//!
//! Other dimensions use quadratic Fourier phases
//! `exp(2πi(mk/D + l k²/D²))`, falling back to seeded random diagonal phases
//! when the union with the computational basis is not informationally
//! complete.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{CMatrix, HermitianMatrix};

use super::numerical_rank;

const MAX_RANDOM_RETRIES: u64 = 32;

/// How a set of unbiased bases was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisConstruction {
    /// Finite-field construction for `D = prime^power`.
    GaloisField { prime: usize, power: u32 },
    /// Deterministic Fourier bases with quadratic diagonal phases.
    QuadraticPhase,
    /// Fourier bases with random diagonal phases drawn from ChaCha20 with `seed`.
    RandomPhase { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasedBases {
    /// Each matrix holds one orthonormal basis as its columns.
    pub bases: Vec<CMatrix>,
    pub construction: BasisConstruction,
}

/// `count` orthonormal bases of `C^dim`, each unbiased with the computational basis.
pub fn unbiased_bases(dim: usize, count: usize) -> Result<UnbiasedBases> {
    if dim == 0 || count == 0 || count > dim {
        return Err(Error::InvalidArgument(format!(
            "unbiased_bases needs 1 <= count <= dim, got dim={dim}, count={count}"
        )));
    }
    if let Some((prime, power)) = prime_power(dim) {
        let field = GaloisField::new(prime, power);
        let bases = (0..count).map(|x| field.basis(x)).collect();
        return Ok(UnbiasedBases {
            bases,
            construction: BasisConstruction::GaloisField { prime, power },
        });
    }

    let quadratic: Vec<CMatrix> = (1..=count)
        .map(|l| {
            let phases: Vec<f64> = (0..dim)
                .map(|k| 2.0 * PI * (l * k * k) as f64 / (dim * dim) as f64)
                .collect();
            phased_fourier_basis(&phases)
        })
        .collect();
    if count < dim || completes_with_computational(dim, &quadratic) {
        return Ok(UnbiasedBases {
            bases: quadratic,
            construction: BasisConstruction::QuadraticPhase,
        });
    }
    for seed in 0..MAX_RANDOM_RETRIES {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bases: Vec<CMatrix> = (0..count)
            .map(|_| {
                let phases: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
                phased_fourier_basis(&phases)
            })
            .collect();
        if completes_with_computational(dim, &bases) {
            return Ok(UnbiasedBases {
                bases,
                construction: BasisConstruction::RandomPhase { seed },
            });
        }
    }
    Err(Error::CompletenessUnreachable {
        dim,
        attempts: MAX_RANDOM_RETRIES as usize + 1,
    })
}

/// Columns `m`: `D^{-1/2} exp(i(2πmk/D + phases[k]))`.
fn phased_fourier_basis(phases: &[f64]) -> CMatrix {
    let d = phases.len();
    let norm = 1.0 / (d as f64).sqrt();
    CMatrix::from_fn(d, d, |k, m| {
        let angle = 2.0 * PI * ((m * k) % d) as f64 / d as f64 + phases[k];
        Complex64::from_polar(norm, angle)
    })
}

fn completes_with_computational(dim: usize, bases: &[CMatrix]) -> bool {
    let mut elements: Vec<HermitianMatrix> = (0..dim)
        .map(|k| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            HermitianMatrix::diagonal(&v)
        })
        .collect();
    for b in bases {
        for m in 0..dim {
            elements.push(HermitianMatrix::outer(&b.column(m).into_owned()));
        }
    }
    numerical_rank(&elements) == dim * dim
}

/// `Some((p, n))` when `dim = p^n` with `p` prime and `n >= 1`.
pub fn prime_power(dim: usize) -> Option<(usize, u32)> {
    if dim < 2 {
        return None;
    }
    let p = (2..=dim).find(|q| dim.is_multiple_of(*q))?;
    let mut rest = dim;
    let mut n = 0;
    while rest.is_multiple_of(p) {
        rest /= p;
        n += 1;
    }
    (rest == 1).then_some((p, n))
}

pub(crate) fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|q| q * q <= n).all(|q| !n.is_multiple_of(q))
}

/// GF(p^n) in the polynomial basis `1, α, …, α^{n-1}` modulo a monic irreducible.
/// Elements are digit vectors of length `n` (least significant first).
#[derive(Debug, Clone)]
pub(crate) struct GaloisField {
    p: usize,
    n: usize,
    /// Monic modulus coefficients `c_0..c_n`, `c_n = 1`.
    modulus: Vec<usize>,
}

impl GaloisField {
    pub(crate) fn new(p: usize, power: u32) -> Self {
        let n = power as usize;
        let modulus = find_irreducible(p, n);
        Self { p, n, modulus }
    }

    pub(crate) fn order(&self) -> usize {
        self.p.pow(self.n as u32)
    }

    pub(crate) fn element(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.n];
        for d in digits.iter_mut() {
            *d = index % self.p;
            index /= self.p;
        }
        digits
    }

    pub(crate) fn mul(&self, a: &[usize], b: &[usize]) -> Vec<usize> {
        let (p, n) = (self.p, self.n);
        let mut prod = vec![0usize; 2 * n];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                prod[i + j] = (prod[i + j] + x * y) % p;
            }
        }
        for deg in (n..2 * n).rev() {
            let c = prod[deg];
            if c != 0 {
                for t in 0..=n {
                    let k = deg - n + t;
                    prod[k] = (prod[k] + (p - c) * self.modulus[t]) % p;
                }
            }
        }
        prod.truncate(n);
        prod
    }

    fn pow(&self, a: &[usize], mut e: usize) -> Vec<usize> {
        let mut base = a.to_vec();
        let mut acc = self.element(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Absolute trace `Σ_i a^{p^i}`, an element of the prime field.
    pub(crate) fn trace(&self, a: &[usize]) -> usize {
        let mut sum = vec![0usize; self.n];
        let mut conj = a.to_vec();
        for _ in 0..self.n {
            for (s, c) in sum.iter_mut().zip(&conj) {
                *s = (*s + c) % self.p;
            }
            conj = self.pow(&conj, self.p);
        }
        debug_assert!(sum[1..].iter().all(|&c| c == 0));
        sum[0]
    }

    /// Integer quadratic form `kᵀ B_x k` with `B_x[i][j] = Tr(x α^{i+j})`.
    fn quadratic_form(&self, x: &[usize], k: &[usize]) -> usize {
        let mut alpha_pows = Vec::with_capacity(2 * self.n);
        let mut cur = self.element(1);
        let alpha = self.element(if self.n > 1 { self.p } else { 0 });
        for _ in 0..(2 * self.n).max(1) {
            alpha_pows.push(cur.clone());
            if self.n > 1 {
                cur = self.mul(&cur, &alpha);
            }
        }
        let mut q = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if k[i] == 0 || k[j] == 0 {
                    continue;
                }
                let b = self.trace(&self.mul(x, &alpha_pows[i + j]));
                q += k[i] * b * k[j];
            }
        }
        q
    }

    /// Basis labelled by field element `x` (as an index), columns indexed by `m`.
    pub(crate) fn basis(&self, x_index: usize) -> CMatrix {
        let d = self.order();
        let x = self.element(x_index);
        let phases: Vec<f64> = (0..d)
            .map(|k_index| {
                let k = self.element(k_index);
                let q = self.quadratic_form(&x, &k);
                if self.p == 2 {
                    2.0 * PI * (q % 4) as f64 / 4.0
                } else {
                    2.0 * PI * (q % self.p) as f64 / self.p as f64
                }
            })
            .collect();
        let norm = 1.0 / (d as f64).sqrt();
        let digits: Vec<Vec<usize>> = (0..d).map(|i| self.element(i)).collect();
        CMatrix::from_fn(d, d, |k, m| {
            let dot: usize = digits[m].iter().zip(&digits[k]).map(|(a, b)| a * b).sum();
            let angle = phases[k] + 2.0 * PI * (dot % self.p) as f64 / self.p as f64;
            Complex64::from_polar(norm, angle)
        })
    }
}

fn find_irreducible(p: usize, n: usize) -> Vec<usize> {
    if n == 1 {
        return vec![0, 1];
    }
    // enumerate monic degree-n polynomials by their lower coefficients
    let total = p.pow(n as u32);
    for index in 0..total {
        let mut coeffs: Vec<usize> = (0..n).map(|i| (index / p.pow(i as u32)) % p).collect();
        coeffs.push(1);
        if coeffs[0] != 0 && is_irreducible(&coeffs, p) {
            return coeffs;
        }
    }
    unreachable!("an irreducible polynomial of every degree exists over GF({p})")
}

fn is_irreducible(f: &[usize], p: usize) -> bool {
    let n = f.len() - 1;
    for deg in 1..=n / 2 {
        for index in 0..p.pow(deg as u32) {
            let mut g: Vec<usize> = (0..deg).map(|i| (index / p.pow(i as u32)) % p).collect();
            g.push(1);
            if poly_rem_is_zero(f, &g, p) {
                return false;
            }
        }
    }
    true
}

/// `f mod g == 0` over GF(p), `g` monic.
fn poly_rem_is_zero(f: &[usize], g: &[usize], p: usize) -> bool {
    let mut r = f.to_vec();
    let dg = g.len() - 1;
    for deg in (dg..r.len()).rev() {
        let c = r[deg];
        if c != 0 {
            for (t, &gt) in g.iter().enumerate().take(dg + 1) {
                let k = deg - dg + t;
                r[k] = (r[k] + (p - c) * gt) % p;
            }
        }
    }
    r[..dg].iter().all(|&c| c == 0)
}

/// `D^{-1/2} exp(2πi(x k + y k²)/N)` for `k = 0..D`: the frame vectors of the
/// prime-frame design. Groups are indexed by `y`, elements by `x`.
pub(crate) fn prime_frame_vector(dim: usize, modulus: usize, x: usize, y: usize) -> DVector<Complex64> {
    let norm = 1.0 / (dim as f64).sqrt();
    DVector::from_fn(dim, |k, _| {
        let e = (x * k + y * ((k * k) % modulus)) % modulus;
        Complex64::from_polar(norm, 2.0 * PI * e as f64 / modulus as f64)
    })
}

/// Smallest prime `N >= 2D - 1`.
pub(crate) fn frame_modulus(dim: usize) -> usize {
    (2 * dim - 1..).find(|&n| is_prime(n)).expect("primes are unbounded")
}
