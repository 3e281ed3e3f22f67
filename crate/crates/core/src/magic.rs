//! The magic input state and its Gaussian decomposition.
//!
//! Each 4-mode register starts in `|α⟩ = cos α|0000⟩ + sin α|1111⟩`. With
//! `|χ⟩ = |1100⟩`, `|Φ₀⟩ = cos α|0000⟩ + |χ⟩` and `|Φ₁⟩ = sin α|1111⟩ − |χ⟩`
//! sum to `|α⟩`, and every `ρ_ab = |Φ_a⟩⟨Φ_b| / ⟨Φ_b|Φ_a⟩` is a unit-trace
//! Gaussian operator. Hence
//!
//! ```text
//! |α⟩⟨α| = Σ_ab N_ab(α) ρ_ab(α) = ρ_Gauss(α) + σ(α),
//! σ(α)   = −ρ_Gauss(α) + Σ_ab N_ab(α) ρ_ab(α),
//! ```
//!
//! where `ρ_Gauss` is the Gaussian state sharing the covariance of `|α⟩⟨α|`.
//! `σ` has zero trace and zero second moments.
//!
//! Majorana labels `m₁…m₈` are stored 0-indexed as rows `0…7`.

use std::f64::consts::TAU;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::skewlin::SkewMatrix;

/// Modes per register.
pub const REGISTER_MODES: usize = 4;
/// Majorana operators per register.
pub const REGISTER_MAJORANAS: usize = 8;

/// Input-state angles, one per register, reduced to `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagicAngles {
    alpha: Vec<f64>,
}

impl MagicAngles {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(invalid("at least one register is required"));
        }
        if let Some(bad) = alpha.iter().find(|a| !a.is_finite()) {
            return Err(invalid(format!("non-finite input angle {bad}")));
        }
        let mut m = Self { alpha };
        m.canonicalize();
        Ok(m)
    }

    pub fn zeros(registers: usize) -> Self {
        Self {
            alpha: vec![0.0; registers],
        }
    }

    pub fn registers(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    /// Reduces every angle into `[0, 2π)`.
    pub fn canonicalize(&mut self) {
        for a in &mut self.alpha {
            let r = a.rem_euclid(TAU);
            *a = if r >= TAU { 0.0 } else { r };
        }
    }
}

/// Label of one Gaussian operator in the expansion of `σ(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentLabel {
    Gauss,
    Phi00,
    Phi11,
    Phi01,
    Phi10,
}

impl ComponentLabel {
    pub const ALL: [ComponentLabel; 5] = [
        ComponentLabel::Gauss,
        ComponentLabel::Phi00,
        ComponentLabel::Phi11,
        ComponentLabel::Phi01,
        ComponentLabel::Phi10,
    ];

    pub fn from_bits(a: u8, b: u8) -> Result<Self> {
        match (a, b) {
            (0, 0) => Ok(Self::Phi00),
            (1, 1) => Ok(Self::Phi11),
            (0, 1) => Ok(Self::Phi01),
            (1, 0) => Ok(Self::Phi10),
            _ => Err(invalid(format!("component bits must be 0 or 1, got ({a}, {b})"))),
        }
    }
}

/// One signed term `coeff · ρ` of `σ(α)`, with `ρ` given by its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub label: ComponentLabel,
    pub coeff: f64,
    pub cov: SkewMatrix,
}

/// Minimal scalar abstraction so the covariance formulas can be evaluated on
/// plain floats and on dual numbers for their α-derivatives.
trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(x: f64) -> Self;
    fn cos(self) -> Self;
    fn sin(self) -> Self;
}

impl Real for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
}

/// Forward-mode dual number `v + d·ε`.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Real for Dual {
    fn constant(x: f64) -> Self {
        Dual { v: x, d: 0.0 }
    }
    fn cos(self) -> Self {
        Dual {
            v: self.v.cos(),
            d: -self.v.sin() * self.d,
        }
    }
    fn sin(self) -> Self {
        Dual {
            v: self.v.sin(),
            d: self.v.cos() * self.d,
        }
    }
}

/// Upper-triangle entries `(p, q, re, im)` of the covariance of `label`.
fn entries<T: Real>(alpha: T, label: ComponentLabel) -> Vec<(usize, usize, T, T)> {
    let zero = T::constant(0.0);
    let one = T::constant(1.0);
    let two = T::constant(2.0);
    let c = alpha.cos();
    let s = alpha.sin();
    match label {
        ComponentLabel::Gauss => {
            let g = c * c - s * s;
            (0..4).map(|j| (2 * j, 2 * j + 1, g, zero)).collect()
        }
        ComponentLabel::Phi00 => {
            let f = one + c * c;
            vec![
                (0, 1, -(s * s) / f, zero),
                (0, 3, two * c / f, zero),
                (1, 2, two * c / f, zero),
                (2, 3, -(s * s) / f, zero),
                (4, 5, one, zero),
                (6, 7, one, zero),
            ]
        }
        ComponentLabel::Phi11 => {
            let f = one + s * s;
            vec![
                (0, 1, -one, zero),
                (2, 3, -one, zero),
                (4, 5, c * c / f, zero),
                (4, 7, -(two * s) / f, zero),
                (5, 6, -(two * s) / f, zero),
                (6, 7, c * c / f, zero),
            ]
        }
        ComponentLabel::Phi01 | ComponentLabel::Phi10 => {
            // Σ₁₀ is the complex conjugate of Σ₀₁
            let i = if label == ComponentLabel::Phi01 { one } else { -one };
            vec![
                (0, 1, -one, zero),
                (0, 2, zero, -(i * c)),
                (0, 3, c, zero),
                (1, 2, c, zero),
                (1, 3, zero, i * c),
                (2, 3, -one, zero),
                (4, 5, one, zero),
                (4, 6, zero, i * s),
                (4, 7, -s, zero),
                (5, 6, -s, zero),
                (5, 7, zero, -(i * s)),
                (6, 7, one, zero),
            ]
        }
    }
}

fn assemble(list: impl IntoIterator<Item = (usize, usize, f64, f64)>) -> SkewMatrix {
    let mut m = SkewMatrix::zeros(REGISTER_MAJORANAS);
    for (p, q, re, im) in list {
        m.set(p, q, Complex64::new(re, im));
    }
    m
}

/// Covariance of the Gaussian state matching `|α⟩⟨α|`: four blocks
/// `[[0, cos 2α], [−cos 2α, 0]]`.
pub fn sigma_gauss(alpha: f64) -> SkewMatrix {
    covariance(alpha, ComponentLabel::Gauss)
}

/// Covariance `Σ_ab(α)` of `ρ_ab(α)`.
pub fn sigma_component(alpha: f64, a: u8, b: u8) -> Result<SkewMatrix> {
    Ok(covariance(alpha, ComponentLabel::from_bits(a, b)?))
}

/// Covariance of any labelled component.
pub fn covariance(alpha: f64, label: ComponentLabel) -> SkewMatrix {
    assemble(entries(alpha, label))
}

/// `d/dα` of [`covariance`], entrywise.
pub fn covariance_derivative(alpha: f64, label: ComponentLabel) -> SkewMatrix {
    let seed = Dual { v: alpha, d: 1.0 };
    assemble(
        entries(seed, label)
            .into_iter()
            .map(|(p, q, re, im)| (p, q, re.d, im.d)),
    )
}

/// `N_ab(α) = ⟨Φ_b|Φ_a⟩`.
pub fn norm_coeff(alpha: f64, a: u8, b: u8) -> Result<f64> {
    Ok(coefficient(alpha, ComponentLabel::from_bits(a, b)?))
}

/// Signed weight of a component inside `σ(α)`; `−1` for the Gaussian part.
pub fn coefficient(alpha: f64, label: ComponentLabel) -> f64 {
    match label {
        ComponentLabel::Gauss => -1.0,
        ComponentLabel::Phi00 => alpha.cos().powi(2) + 1.0,
        ComponentLabel::Phi11 => alpha.sin().powi(2) + 1.0,
        ComponentLabel::Phi01 | ComponentLabel::Phi10 => -1.0,
    }
}

/// `d/dα` of [`coefficient`].
pub fn coefficient_derivative(alpha: f64, label: ComponentLabel) -> f64 {
    match label {
        ComponentLabel::Phi00 => -(2.0 * alpha).sin(),
        ComponentLabel::Phi11 => (2.0 * alpha).sin(),
        _ => 0.0,
    }
}

/// The five signed Gaussian components of `σ(α) = |α⟩⟨α| − ρ_Gauss(α)`.
pub fn sigma_expansion(alpha: f64) -> Vec<GaussianComponent> {
    ComponentLabel::ALL
        .iter()
        .map(|&label| GaussianComponent {
            label,
            coeff: coefficient(alpha, label),
            cov: covariance(alpha, label),
        })
        .collect()
}
