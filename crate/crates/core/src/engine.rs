//! Exact Z-string expectation values of the fermionic Born machine state.
//!
//! Writing each register as `|α⟩⟨α| = ρ_Gauss + σ` and expanding
//! `⊗_k (ρ_Gauss + σ)_k`, a string of length `ℓ` only sees terms with at most
//! `⌊ℓ/2⌋` factors of `σ`: `σ` has no Majorana monomials below degree four,
//! and FLO evolution preserves degree. Each surviving term expands into signed
//! Gaussian operators whose Z-string trace is a Pfaffian of the evolved,
//! row-restricted covariance. For fixed `ℓ` the cost is polynomial in the
//! register count `N`: `Σ_{L ≤ ⌊ℓ/2⌋} C(N, L)·5^L` Pfaffians of size `2ℓ`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flo::{build_orthogonal, FloAnsatz, OrthogonalMatrix, RowProjection};
use crate::magic::{
    coefficient, coefficient_derivative, covariance, covariance_derivative, ComponentLabel, MagicAngles,
    REGISTER_MAJORANAS, REGISTER_MODES,
};
use crate::skewlin::{pfaffian_gradient, pfaffian_in_place};

/// Default longest Z-string the engine accepts.
pub const DEFAULT_MAX_LEN: usize = 5;

/// Largest tolerated imaginary residue of an expectation value.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// Sorted set of measured-variable indices; the empty string is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZString(Vec<usize>);

impl ZString {
    /// Validates strict increase and `index < n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(invalid(format!(
                    "Z-string indices must be strictly increasing: {indices:?}"
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(invalid(format!("Z-string index {last} out of range for {n} variables")));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(−1)^{Σ_{i ∈ z} x_i}` on a bit row.
    pub fn parity(&self, bits: &[u8]) -> f64 {
        let ones = self.0.iter().filter(|&&i| bits[i] != 0).count();
        if ones % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Every string of length `1..=max_len` over `n` variables, shortest first.
    pub fn all_up_to(n: usize, max_len: usize) -> Vec<ZString> {
        let mut out = Vec::new();
        for len in 1..=max_len.min(n) {
            for combo in Combinations::new(n, len) {
                out.push(ZString(combo));
            }
        }
        out
    }
}

/// Lexicographic `k`-subsets of `0..n`.
pub(crate) struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        let current = if k <= n { Some((0..k).collect()) } else { None };
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in (i + 1)..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A fermionic Born machine: magic input angles plus an FLO ansatz over
/// `4N` modes, measuring the first `k` modes of each register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmModel {
    magic: MagicAngles,
    ansatz: FloAnsatz,
    measured: usize,
    hidden: usize,
}

impl FbmModel {
    pub fn new(magic: MagicAngles, ansatz: FloAnsatz, measured: usize, hidden: usize) -> Result<Self> {
        if measured + hidden != REGISTER_MODES {
            return Err(invalid(format!(
                "measured + hidden modes must equal {REGISTER_MODES}, got {measured} + {hidden}"
            )));
        }
        if measured == 0 {
            return Err(invalid("at least one measured mode per register is required"));
        }
        if ansatz.modes() != REGISTER_MODES * magic.registers() {
            return Err(invalid(format!(
                "ansatz acts on {} modes but {} registers need {}",
                ansatz.modes(),
                magic.registers(),
                REGISTER_MODES * magic.registers()
            )));
        }
        Ok(Self {
            magic,
            ansatz,
            measured,
            hidden,
        })
    }

    /// Identity ansatz with all `α` zero, `k = 3`, `m = 1`.
    pub fn vacuum(registers: usize, layers: usize) -> Self {
        Self {
            magic: MagicAngles::zeros(registers),
            ansatz: FloAnsatz::zeros(REGISTER_MODES * registers, layers),
            measured: 3,
            hidden: 1,
        }
    }

    /// Uniform random angles on `[0, 2π)`, `k = 3`, `m = 1`.
    pub fn random<R: Rng + ?Sized>(registers: usize, layers: usize, rng: &mut R) -> Self {
        let alpha = (0..registers)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let magic = MagicAngles::new(alpha).expect("finite angles");
        let ansatz = FloAnsatz::random(REGISTER_MODES * registers, layers, rng);
        Self {
            magic,
            ansatz,
            measured: 3,
            hidden: 1,
        }
    }

    pub fn magic(&self) -> &MagicAngles {
        &self.magic
    }

    pub fn magic_mut(&mut self) -> &mut MagicAngles {
        &mut self.magic
    }

    pub fn ansatz(&self) -> &FloAnsatz {
        &self.ansatz
    }

    pub fn ansatz_mut(&mut self) -> &mut FloAnsatz {
        &mut self.ansatz
    }

    pub fn with_ansatz(&self, ansatz: FloAnsatz) -> Result<Self> {
        Self::new(self.magic.clone(), ansatz, self.measured, self.hidden)
    }

    pub fn registers(&self) -> usize {
        self.magic.registers()
    }

    pub fn modes(&self) -> usize {
        REGISTER_MODES * self.registers()
    }

    pub fn measured_per_register(&self) -> usize {
        self.measured
    }

    pub fn hidden_per_register(&self) -> usize {
        self.hidden
    }

    /// Number of data variables `n = N·k`.
    pub fn variables(&self) -> usize {
        self.registers() * self.measured
    }

    /// Total trainable parameters: `N` input angles plus all Givens angles.
    pub fn parameter_count(&self) -> usize {
        self.registers() + self.ansatz.angles().len()
    }

    /// Modes that are measured, in variable order.
    pub fn measured_modes(&self) -> Vec<usize> {
        (0..self.variables())
            .map(|v| REGISTER_MODES * (v / self.measured) + v % self.measured)
            .collect()
    }
}

/// Fermionic mode carrying data variable `v`: `4⌊v/k⌋ + (v mod k)`.
pub fn mode_index(v: usize, model: &FbmModel) -> Result<usize> {
    if v >= model.variables() {
        return Err(invalid(format!(
            "variable {v} out of range for a model with {} variables",
            model.variables()
        )));
    }
    Ok(REGISTER_MODES * (v / model.measured) + v % model.measured)
}

/// Number of Gaussian terms evaluated for a string of length `len`.
pub fn term_count(registers: usize, len: usize) -> f64 {
    (0..=len / 2)
        .map(|l| binomial(registers, l) * 5f64.powi(l as i32))
        .sum()
}

const CORRECTIONS: [ComponentLabel; 4] = [
    ComponentLabel::Phi00,
    ComponentLabel::Phi11,
    ComponentLabel::Phi01,
    ComponentLabel::Phi10,
];

/// Per-register data shared by every string.
#[derive(Debug, Clone)]
struct RegisterTables {
    gauss: Vec<Complex64>,
    gauss_derivative: Vec<Complex64>,
    /// `Σ_c − Σ_Gauss` for the four non-Gaussian labels.
    delta: [Vec<Complex64>; 4],
    delta_derivative: [Vec<Complex64>; 4],
    coeff: [f64; 4],
    coeff_derivative: [f64; 4],
}

impl RegisterTables {
    fn new(alpha: f64) -> Self {
        let gauss = covariance(alpha, ComponentLabel::Gauss).as_slice().to_vec();
        let gauss_derivative = covariance_derivative(alpha, ComponentLabel::Gauss).as_slice().to_vec();
        let diff =
            |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
        let delta = CORRECTIONS.map(|l| diff(covariance(alpha, l).as_slice(), &gauss));
        let delta_derivative = CORRECTIONS.map(|l| diff(covariance_derivative(alpha, l).as_slice(), &gauss_derivative));
        Self {
            gauss,
            gauss_derivative,
            delta,
            delta_derivative,
            coeff: CORRECTIONS.map(|l| coefficient(alpha, l)),
            coeff_derivative: CORRECTIONS.map(|l| coefficient_derivative(alpha, l)),
        }
    }
}

/// Gradient of `weight · ⟨Z_z⟩` with respect to the model's raw parameters,
/// restricted to what one string touches.
#[derive(Debug, Clone)]
pub struct StringAdjoint {
    /// Majorana rows of `O` the string depends on.
    pub rows: Vec<usize>,
    /// `∂/∂O[rows[i]][j]`, row-major `rows.len() × 2d`.
    pub orthogonal: Vec<f64>,
    /// `∂/∂α_k` for every register.
    pub alpha: Vec<f64>,
}

/// Precomputed state for evaluating many Z-strings on one model.
///
/// Construction builds `O` and the per-register covariance tables once; the
/// engine is immutable afterwards and can be shared across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    registers: usize,
    measured: usize,
    max_len: usize,
    orthogonal: OrthogonalMatrix,
    tables: Vec<RegisterTables>,
}

impl Engine {
    pub fn new(model: &FbmModel) -> Self {
        Self::with_max_len(model, DEFAULT_MAX_LEN)
    }

    pub fn with_max_len(model: &FbmModel, max_len: usize) -> Self {
        Self {
            registers: model.registers(),
            measured: model.measured,
            max_len,
            orthogonal: build_orthogonal(model.ansatz()),
            tables: model.magic.alpha().iter().map(|&a| RegisterTables::new(a)).collect(),
        }
    }

    pub fn orthogonal(&self) -> &OrthogonalMatrix {
        &self.orthogonal
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn rows_for(&self, z: &ZString) -> Result<Vec<usize>> {
        let n = self.registers * self.measured;
        if let Some(&last) = z.indices().last() {
            if last >= n {
                return Err(invalid(format!("Z-string index {last} out of range for {n} variables")));
            }
        }
        if z.len() > self.max_len {
            return Err(Error::Refused(format!(
                "Z-string of length {} exceeds the configured maximum {} ({:.3e} Gaussian terms)",
                z.len(),
                self.max_len,
                term_count(self.registers, z.len())
            )));
        }
        let mut rows = Vec::with_capacity(2 * z.len());
        for &v in z.indices() {
            let mode = REGISTER_MODES * (v / self.measured) + v % self.measured;
            rows.push(2 * mode);
            rows.push(2 * mode + 1);
        }
        Ok(rows)
    }

    /// `⟨Z_z⟩` for the model state.
    pub fn expectation(&self, z: &ZString) -> Result<f64> {
        self.evaluate(z, None).map(|(v, _)| v)
    }

    /// Expectation values for many strings, in input order.
    pub fn batch(&self, strings: &[ZString]) -> Result<Vec<f64>> {
        crate::par::map_collect(strings, |z| self.expectation(z))
            .into_iter()
            .collect()
    }

    /// `⟨Z_z⟩` together with the gradient of `weight · ⟨Z_z⟩`.
    pub fn expectation_with_adjoint(&self, z: &ZString, weight: f64) -> Result<(f64, StringAdjoint)> {
        let (v, adj) = self.evaluate(z, Some(weight))?;
        Ok((v, adj.expect("adjoint requested")))
    }

    fn evaluate(&self, z: &ZString, weight: Option<f64>) -> Result<(f64, Option<StringAdjoint>)> {
        let rows = self.rows_for(z)?;
        let n2 = self.orthogonal.dim();
        if z.is_empty() {
            let adj = weight.map(|_| StringAdjoint {
                rows: Vec::new(),
                orthogonal: Vec::new(),
                alpha: vec![0.0; self.registers],
            });
            return Ok((1.0, adj));
        }
        let l = rows.len();
        let ll = l * l;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let projection = RowProjection::new(&self.orthogonal, &rows, REGISTER_MAJORANAS)?;

        let mut base = vec![zero; ll];
        for (k, t) in self.tables.iter().enumerate() {
            projection.accumulate(k, &t.gauss, one, &mut base);
        }
        let max_order = (z.len() / 2).min(self.registers);
        // evolved corrections P_k (Σ_c − Σ_Gauss) P_kᵀ, only needed beyond order zero
        let mut deltas: Vec<[Vec<Complex64>; 4]> = Vec::new();
        if max_order > 0 {
            deltas = (0..self.registers)
                .map(|k| {
                    std::array::from_fn(|c| {
                        let mut m = vec![zero; ll];
                        projection.accumulate(k, &self.tables[k].delta[c], one, &mut m);
                        m
                    })
                })
                .collect();
        }

        let want_grad = weight.is_some();
        // Σ_t c_t D̃_t over all terms, and per (register, label) partial sums
        let mut acc_all = if want_grad { vec![zero; ll] } else { Vec::new() };
        let mut acc_label: Vec<[Vec<Complex64>; 4]> = Vec::new();
        // Σ_t c_t pf(S_t) / coeff_{k,c} for terms containing (k, c)
        let mut acc_value: Vec<[Complex64; 4]> = Vec::new();
        if want_grad && max_order > 0 {
            acc_label = (0..self.registers)
                .map(|_| std::array::from_fn(|_| vec![zero; ll]))
                .collect();
            acc_value = vec![[zero; 4]; self.registers];
        }

        let mut total = zero;
        let mut work = vec![zero; ll];
        let mut matrix = vec![zero; ll];
        for order in 0..=max_order {
            for subset in Combinations::new(self.registers, order) {
                // choice digit 0 = Gauss, 1..=4 = CORRECTIONS[digit − 1]
                let mut choice = vec![0usize; order];
                for code in 0..5usize.pow(order as u32) {
                    let mut rest = code;
                    for c in choice.iter_mut() {
                        *c = rest % 5;
                        rest /= 5;
                    }
                    matrix.copy_from_slice(&base);
                    let mut coeff = 1.0;
                    for (&k, &c) in subset.iter().zip(&choice) {
                        if c == 0 {
                            coeff = -coeff;
                        } else {
                            coeff *= self.tables[k].coeff[c - 1];
                            for (m, d) in matrix.iter_mut().zip(&deltas[k][c - 1]) {
                                *m += d;
                            }
                        }
                    }
                    work.copy_from_slice(&matrix);
                    let pf = pfaffian_in_place(&mut work, l);
                    let term = pf * coeff;
                    total += term;

                    if want_grad {
                        let grad = pfaffian_gradient(&matrix, l);
                        for (a, g) in acc_all.iter_mut().zip(&grad) {
                            *a += g * coeff;
                        }
                        for (&k, &c) in subset.iter().zip(&choice) {
                            if c > 0 {
                                for (a, g) in acc_label[k][c - 1].iter_mut().zip(&grad) {
                                    *a += g * coeff;
                                }
                                acc_value[k][c - 1] += term / self.tables[k].coeff[c - 1];
                            }
                        }
                    }
                }
            }
        }

        if total.im.abs() > IMAGINARY_TOLERANCE {
            return Err(Error::Numerical(format!(
                "expectation of {:?} has imaginary residue {:e}",
                z.indices(),
                total.im
            )));
        }
        let value = total.re;

        let Some(w) = weight else {
            return Ok((value, None));
        };

        let b = REGISTER_MAJORANAS;
        let mut grad_o = vec![0.0; l * n2];
        let mut grad_alpha = vec![0.0; self.registers];
        let mut tmp = vec![zero; l * b];
        let mut evolved = vec![zero; ll];
        for k in 0..self.registers {
            let t = &self.tables[k];
            let panel = projection.panel(k);
            // ∂v/∂P_k = Re(A P_k Gᵀ + Σ_c A_c P_k Δ_cᵀ)
            let mut gp = vec![zero; l * b];
            add_apbt(&acc_all, panel, &t.gauss, l, b, &mut tmp, &mut gp);
            if max_order > 0 {
                for c in 0..4 {
                    add_apbt(&acc_label[k][c], panel, &t.delta[c], l, b, &mut tmp, &mut gp);
                }
            }
            for i in 0..l {
                for a in 0..b {
                    grad_o[i * n2 + k * b + a] += w * gp[i * b + a].re;
                }
            }

            // ∂v/∂α_k through the blocks and the coefficients
            let mut dv = zero;
            evolved.iter_mut().for_each(|x| *x = zero);
            projection.accumulate(k, &t.gauss_derivative, one, &mut evolved);
            dv += half_inner(&acc_all, &evolved);
            if max_order > 0 {
                for c in 0..4 {
                    evolved.iter_mut().for_each(|x| *x = zero);
                    projection.accumulate(k, &t.delta_derivative[c], one, &mut evolved);
                    dv += half_inner(&acc_label[k][c], &evolved);
                    dv += acc_value[k][c] * t.coeff_derivative[c];
                }
            }
            grad_alpha[k] = w * dv.re;
        }

        Ok((
            value,
            Some(StringAdjoint {
                rows,
                orthogonal: grad_o,
                alpha: grad_alpha,
            }),
        ))
    }
}

/// `out += A · P · Bᵀ` with `A` (`l × l`), `P` (`l × b`, real), `B` (`b × b`).
fn add_apbt(
    a: &[Complex64],
    p: &[f64],
    bmat: &[Complex64],
    l: usize,
    b: usize,
    tmp: &mut [Complex64],
    out: &mut [Complex64],
) {
    // tmp = A · P
    tmp.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
    for i in 0..l {
        for q in 0..l {
            let aiq = a[i * l + q];
            if aiq == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..b {
                tmp[i * b + c] += aiq * p[q * b + c];
            }
        }
    }
    // out += tmp · Bᵀ
    for i in 0..l {
        for r in 0..b {
            let mut s = Complex64::new(0.0, 0.0);
            for c in 0..b {
                s += tmp[i * b + c] * bmat[r * b + c];
            }
            out[i * b + r] += s;
        }
    }
}

/// `½ Σ_pq A_pq X_pq`.
fn half_inner(a: &[Complex64], x: &[Complex64]) -> Complex64 {
    a.iter().zip(x).map(|(u, v)| u * v).sum::<Complex64>() * 0.5
}

/// `⟨Z_z⟩` for the state `U(θ)|α⟩`.
pub fn zstring_expectation(model: &FbmModel, z: &ZString) -> Result<f64> {
    Engine::new(model).expectation(z)
}

/// Expectation values of many strings sharing one precomputation.
pub fn zstring_batch(model: &FbmModel, strings: &[ZString]) -> Result<Vec<f64>> {
    Engine::new(model).batch(strings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_6;

    fn single_register(alpha: f64) -> FbmModel {
        FbmModel::new(MagicAngles::new(vec![alpha]).unwrap(), FloAnsatz::zeros(4, 1), 3, 1).unwrap()
    }

    #[test]
    fn mode_index_skips_hidden_modes() {
        let model = FbmModel::vacuum(3, 1);
        assert_eq!(mode_index(0, &model).unwrap(), 0);
        assert_eq!(mode_index(2, &model).unwrap(), 2);
        assert_eq!(mode_index(3, &model).unwrap(), 4);
        assert_eq!(mode_index(5, &model).unwrap(), 6);
        assert!(mode_index(9, &model).is_err());
    }

    #[test]
    fn single_register_closed_forms() {
        let model = single_register(FRAC_PI_6);
        let z0 = ZString::new(vec![0], 3).unwrap();
        assert!((zstring_expectation(&model, &z0).unwrap() - 0.5).abs() < 1e-14);
        for alpha in [0.0, 0.3, 1.0, 2.5] {
            let model = single_register(alpha);
            let z01 = ZString::new(vec![0, 1], 3).unwrap();
            assert!((zstring_expectation(&model, &z01).unwrap() - 1.0).abs() < 1e-12);
            let z012 = ZString::new(vec![0, 1, 2], 3).unwrap();
            let expected = (2.0 * alpha).cos();
            assert!((zstring_expectation(&model, &z012).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_string_is_one() {
        let model = FbmModel::vacuum(2, 1);
        assert_eq!(
            zstring_expectation(&model, &ZString::new(vec![], 6).unwrap()).unwrap(),
            1.0
        );
    }

    #[test]
    fn long_strings_are_refused() {
        let model = FbmModel::vacuum(3, 1);
        let engine = Engine::with_max_len(&model, 2);
        let z = ZString::new(vec![0, 1, 2], 9).unwrap();
        match engine.expectation(&z) {
            Err(Error::Refused(msg)) => assert!(msg.contains("terms")),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn invalid_strings_are_rejected() {
        assert!(ZString::new(vec![1, 1], 4).is_err());
        assert!(ZString::new(vec![2, 1], 4).is_err());
        assert!(ZString::new(vec![4], 4).is_err());
    }

    #[test]
    fn combinations_enumerate_subsets() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(Combinations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(term_count(4, 4), 1.0 + 4.0 * 5.0 + 6.0 * 25.0);
    }

    #[test]
    fn batch_matches_scalar_bitwise() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let model = FbmModel::random(10, 1, &mut rng);
        let strings = ZString::all_up_to(model.variables(), 2);
        let engine = Engine::new(&model);
        let batch = engine.batch(&strings).unwrap();
        for (z, b) in strings.iter().zip(&batch) {
            assert_eq!(engine.expectation(z).unwrap().to_bits(), b.to_bits());
        }
        assert!(engine.batch(&[]).unwrap().is_empty());
        let dup = vec![strings[3].clone(), strings[3].clone()];
        let vals = engine.batch(&dup).unwrap();
        assert_eq!(vals[0].to_bits(), vals[1].to_bits());
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let model = FbmModel::random(2, 1, &mut rng);
        let z = ZString::new(vec![0, 2, 3, 5], 6).unwrap();
        let engine = Engine::new(&model);
        let (_, adj) = engine.expectation_with_adjoint(&z, 1.0).unwrap();
        let h = 1e-5;
        for k in 0..2 {
            let mut plus = model.clone();
            plus.magic_mut().alpha_mut()[k] += h;
            let mut minus = model.clone();
            minus.magic_mut().alpha_mut()[k] -= h;
            let fd = (zstring_expectation(&plus, &z).unwrap() - zstring_expectation(&minus, &z).unwrap()) / (2.0 * h);
            assert!((fd - adj.alpha[k]).abs() < 1e-8, "alpha {k}: {fd} vs {}", adj.alpha[k]);
        }
    }
}
