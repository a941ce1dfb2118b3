//! Reproducing kernels of the generalized quadratic discrepancy.
//!
//! A discrepancy is fixed by a functional parameter `κ` on `[0, 1]` with
//! zero mean and a scale `β`. The product kernel is
//!
//! ```text
//! η(x, y) = Π_i [ M + β² ( κ(xᵢ) + κ(yᵢ) + ½ B₂((xᵢ − yᵢ) mod 1) + B₁(xᵢ) B₁(yᵢ) ) ]
//! M       = 1 − β² ∫₀¹ κ′²
//! ```
//!
//! and the doubly centred kernel `𝒦(x, y) = η(x, y) − g(x) − g(y) + Mᵈ`,
//! with `g(z) = Π_i (M + β² κ(zᵢ))` the marginal `∫ η(z, y) dy`, integrates
//! to zero in either argument.
//!
//! Two families are provided:
//!
//! * `Centered`: `κ(x) = −½ B₂((x − ½) mod 1)`, so `M = 1 − β²/12`.
//! * `Star`: `κ(x) = 1/6 − x²/2`, so `M = 1 − β²/3`. At `β = 1` each
//!   factor of `η` reduces to `4/3 − max(xᵢ, yᵢ)`, the L2-star kernel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which functional parameter `κ` shapes the discrepancy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Star,
    Centered,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Star => "star",
            KernelFamily::Centered => "centered",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "star" => Ok(KernelFamily::Star),
            "centered" | "centred" | "symmetric" => Ok(KernelFamily::Centered),
            other => Err(Error::invalid(format!(
                "unknown kernel family '{other}' (expected star or centered)"
            ))),
        }
    }
}

#[inline]
fn b1(x: f64) -> f64 {
    x - 0.5
}

#[inline]
fn b2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

/// `x mod 1` in `[0, 1)`; exact integers map to 0.
#[inline]
pub fn mod1(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Bernoulli polynomial `B₁` or `B₂`.
pub fn bernoulli_poly(order: u32, x: f64) -> Result<f64> {
    match order {
        1 => Ok(b1(x)),
        2 => Ok(b2(x)),
        other => Err(Error::UnsupportedOrder(other)),
    }
}

#[inline]
fn kappa_unchecked(family: KernelFamily, x: f64) -> f64 {
    match family {
        KernelFamily::Star => 1.0 / 6.0 - 0.5 * x * x,
        KernelFamily::Centered => -0.5 * b2(mod1(x - 0.5)),
    }
}

/// The functional parameter `κ` of `family` at `x ∈ [0, 1]`.
pub fn kappa(family: KernelFamily, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("kappa is defined on [0, 1], got {x}")));
    }
    Ok(kappa_unchecked(family, x))
}

/// `M = 1 − β² ∫₀¹ κ′²`.
pub fn scale_constant(family: KernelFamily, beta: f64) -> f64 {
    let slope_energy = match family {
        KernelFamily::Star => 1.0 / 3.0,
        KernelFamily::Centered => 1.0 / 12.0,
    };
    1.0 - beta * beta * slope_energy
}

/// Kernel family, scale and dimension, with the derived constant `M`.
///
/// Immutable once built; every evaluation method takes points of length
/// [`KernelSpec::dim`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    beta: f64,
    dim: usize,
    m: f64,
    m_pow_d: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, beta: f64, dim: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be finite and > 0, got {beta}")));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be >= 1"));
        }
        let m = scale_constant(family, beta);
        Ok(Self {
            family,
            beta,
            dim,
            m,
            m_pow_d: m.powi(dim as i32),
        })
    }

    /// `β = 1`.
    pub fn with_defaults(family: KernelFamily, dim: usize) -> Self {
        Self::new(family, 1.0, dim).expect("default beta is valid")
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `Mᵈ = ∫∫ η`.
    pub fn m_pow_d(&self) -> f64 {
        self.m_pow_d
    }

    /// Same family and scale in another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(self.family, self.beta, dim)
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        Ok(())
    }

    /// `η(x, y)` without length checks.
    #[inline]
    pub fn eta_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let b2s = self.beta * self.beta;
        let mut prod = 1.0;
        for (&xi, &yi) in x.iter().zip(y) {
            // B₂((x − y) mod 1) = B₂(|x − y|) on the unit square.
            let wrap = 0.5 * b2((xi - yi).abs());
            let k = kappa_unchecked(self.family, xi) + kappa_unchecked(self.family, yi);
            prod *= self.m + b2s * (k + wrap + b1(xi) * b1(yi));
        }
        prod
    }

    /// Marginal `g(z) = ∫ η(z, y) dy = Π_i (M + β² κ(zᵢ))`.
    #[inline]
    pub fn marginal_unchecked(&self, z: &[f64]) -> f64 {
        let b2s = self.beta * self.beta;
        z.iter()
            .map(|&zi| self.m + b2s * kappa_unchecked(self.family, zi))
            .product()
    }

    /// `𝒦(x, y)` given precomputed marginals of `x` and `y`.
    #[inline]
    pub fn centered_with_marginals(&self, x: &[f64], y: &[f64], gx: f64, gy: f64) -> f64 {
        self.eta_unchecked(x, y) - (gx + gy) + self.m_pow_d
    }

    /// `𝒦(x, y)` without length checks.
    #[inline]
    pub fn centered_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.centered_with_marginals(x, y, self.marginal_unchecked(x), self.marginal_unchecked(y))
    }

    pub fn eta(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.eta_unchecked(x, y))
    }

    pub fn marginal(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        Ok(self.marginal_unchecked(z))
    }

    pub fn centered_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.centered_unchecked(x, y))
    }
}
