//! Brute-force reference: dense statevector simulation of compiled circuits.
//!
//! Everything here is exponential in the number of qubits and capped at
//! [`MAX_QUBITS`]. Amplitudes are indexed with qubit 0 as the most significant
//! bit.

use num_complex::Complex64;

use crate::compiler::{compile_model, Gate, GateList};
use crate::engine::{FbmModel, ZString};
use crate::error::{invalid, Error, Result};

/// Largest register the oracle simulates.
pub const MAX_QUBITS: usize = 16;

/// Pure state on `qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(qubits: usize) -> Result<Self> {
        if qubits > MAX_QUBITS {
            return Err(Error::Refused(format!(
                "statevector simulation is capped at {MAX_QUBITS} qubits, requested {qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, amplitudes })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn probabilities(&self) -> Distribution {
        Distribution {
            bits: self.qubits,
            probs: self.amplitudes.iter().map(Complex64::norm_sqr).collect(),
        }
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    fn mask(&self, q: usize) -> usize {
        1 << (self.qubits - 1 - q)
    }

    fn apply_1q(&mut self, q: usize, u: [[Complex64; 2]; 2]) {
        let m = self.mask(q);
        for i in 0..self.amplitudes.len() {
            if i & m == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | m];
                self.amplitudes[i] = u[0][0] * a0 + u[0][1] * a1;
                self.amplitudes[i | m] = u[1][0] * a0 + u[1][1] * a1;
            }
        }
    }

    /// `u` in the basis `|q0 q1⟩ = |00⟩, |01⟩, |10⟩, |11⟩`.
    fn apply_2q(&mut self, q0: usize, q1: usize, u: &[[Complex64; 4]; 4]) {
        let (m0, m1) = (self.mask(q0), self.mask(q1));
        for i in 0..self.amplitudes.len() {
            if i & m0 == 0 && i & m1 == 0 {
                let idx = [i, i | m1, i | m0, i | m0 | m1];
                let a = idx.map(|j| self.amplitudes[j]);
                for (r, &j) in idx.iter().enumerate() {
                    self.amplitudes[j] = (0..4).map(|c| u[r][c] * a[c]).sum();
                }
            }
        }
    }

    pub fn apply(&mut self, gate: &Gate) {
        let z = Complex64::new(0.0, 0.0);
        let re = |x: f64| Complex64::new(x, 0.0);
        match *gate {
            Gate::Ry { qubit, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                self.apply_1q(qubit, [[re(c), re(-s)], [re(s), re(c)]]);
            }
            Gate::Rz { qubit, angle } => {
                let ph = Complex64::from_polar(1.0, angle / 2.0);
                self.apply_1q(qubit, [[ph.conj(), z], [z, ph]]);
            }
            Gate::H { qubit } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_1q(qubit, [[re(h), re(h)], [re(h), re(-h)]]);
            }
            Gate::Rxx { first, second, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let (c, mis) = (re(c), Complex64::new(0.0, -s));
                let u = [[c, z, z, mis], [z, c, mis, z], [z, mis, c, z], [mis, z, z, c]];
                self.apply_2q(first, second, &u);
            }
            Gate::Cnot { control, target } => {
                let (mc, mt) = (self.mask(control), self.mask(target));
                for i in 0..self.amplitudes.len() {
                    if i & mc != 0 && i & mt == 0 {
                        self.amplitudes.swap(i, i | mt);
                    }
                }
            }
            Gate::Measure { .. } => {}
        }
    }
}

/// Applies every gate of `gates` to `|0…0⟩`; measurements are ignored.
pub fn simulate_circuit(gates: &GateList) -> Result<StateVector> {
    gates.validate()?;
    let mut state = StateVector::zero_state(gates.qubits)?;
    for g in &gates.gates {
        state.apply(g);
    }
    Ok(state)
}

/// Probability vector over `bits`-long bitstrings, first bit most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    bits: usize,
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates nonnegativity and normalization within `1e−10`.
    pub fn new(bits: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << bits {
            return Err(invalid(format!(
                "expected {} probabilities, got {}",
                1usize << bits,
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= -1e-12)) {
            return Err(invalid("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self { bits, probs })
    }

    /// Empirical distribution of bit rows.
    pub fn empirical(bits: usize, rows: impl IntoIterator<Item = impl AsRef<[u8]>>) -> Result<Self> {
        let mut probs = vec![0.0; 1usize << bits];
        let mut count = 0usize;
        for row in rows {
            probs[bits_to_index(row.as_ref())] += 1.0;
            count += 1;
        }
        if count == 0 {
            return Err(invalid("empirical distribution of zero rows"));
        }
        probs.iter_mut().for_each(|p| *p /= count as f64);
        Ok(Self { bits, probs })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `Σ_x p(x)·(−1)^{Σ_{i∈z} x_i}`.
    pub fn parity_expectation(&self, z: &ZString) -> f64 {
        let mask: usize = z.indices().iter().map(|&i| 1usize << (self.bits - 1 - i)).sum();
        self.probs
            .iter()
            .enumerate()
            .map(|(x, &p)| {
                if (x & mask).count_ones().is_multiple_of(2) {
                    p
                } else {
                    -p
                }
            })
            .sum()
    }

    /// Sums out every bit not listed in `keep` (kept in the given order).
    pub fn marginal(&self, keep: &[usize]) -> Distribution {
        let mut probs = vec![0.0; 1usize << keep.len()];
        for (x, &p) in self.probs.iter().enumerate() {
            let mut y = 0usize;
            for &b in keep {
                y = (y << 1) | ((x >> (self.bits - 1 - b)) & 1);
            }
            probs[y] += p;
        }
        Distribution {
            bits: keep.len(),
            probs,
        }
    }
}

pub(crate) fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b != 0))
}

/// Output distribution of the model over its `n` measured bits, obtained by
/// simulating the compiled circuit and marginalizing hidden modes.
pub fn exact_distribution(model: &FbmModel) -> Result<Distribution> {
    if model.modes() > MAX_QUBITS {
        return Err(Error::Refused(format!(
            "model has {} modes; the oracle simulates at most {MAX_QUBITS}",
            model.modes()
        )));
    }
    let state = simulate_circuit(&compile_model(model))?;
    Ok(state.probabilities().marginal(&model.measured_modes()))
}

/// `⟨Z_z⟩` from [`exact_distribution`].
pub fn exact_zstring(model: &FbmModel, z: &ZString) -> Result<f64> {
    if let Some(&last) = z.indices().last() {
        if last >= model.variables() {
            return Err(invalid(format!("Z-string index {last} out of range")));
        }
    }
    Ok(exact_distribution(model)?.parity_expectation(z))
}

/// Total variation distance `½ Σ_x |p(x) − q(x)|`.
pub fn tvd(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.probs.len() != q.probs.len() {
        return Err(invalid(format!(
            "distributions have different supports ({} vs {} outcomes)",
            p.probs.len(),
            q.probs.len()
        )));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Dense operators on the Fock space of a few modes, under Jordan-Wigner
/// `m_{2j} = Z_0⋯Z_{j−1} X_j`, `m_{2j+1} = Z_0⋯Z_{j−1} Y_j`.
pub mod fock {
    use num_complex::Complex64;

    use crate::skewlin::SkewMatrix;

    /// Square complex matrix, row-major.
    #[derive(Debug, Clone, PartialEq)]
    pub struct DenseMatrix {
        pub dim: usize,
        pub data: Vec<Complex64>,
    }

    impl DenseMatrix {
        pub fn zeros(dim: usize) -> Self {
            Self {
                dim,
                data: vec![Complex64::new(0.0, 0.0); dim * dim],
            }
        }

        pub fn identity(dim: usize) -> Self {
            let mut m = Self::zeros(dim);
            for i in 0..dim {
                m.data[i * dim + i] = Complex64::new(1.0, 0.0);
            }
            m
        }

        /// `|u⟩⟨v|`.
        pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
            let dim = u.len();
            let mut m = Self::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    m.data[i * dim + j] = u[i] * v[j].conj();
                }
            }
            m
        }

        pub fn get(&self, i: usize, j: usize) -> Complex64 {
            self.data[i * self.dim + j]
        }

        pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
            let n = self.dim;
            let mut out = Self::zeros(n);
            for i in 0..n {
                for k in 0..n {
                    let a = self.data[i * n + k];
                    if a == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for j in 0..n {
                        out.data[i * n + j] += a * other.data[k * n + j];
                    }
                }
            }
            out
        }

        pub fn scaled(&self, s: Complex64) -> DenseMatrix {
            DenseMatrix {
                dim: self.dim,
                data: self.data.iter().map(|x| x * s).collect(),
            }
        }

        pub fn add_assign(&mut self, other: &DenseMatrix) {
            for (a, b) in self.data.iter_mut().zip(&other.data) {
                *a += b;
            }
        }

        pub fn trace(&self) -> Complex64 {
            (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
        }

        pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
            self.data
                .iter()
                .zip(&other.data)
                .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
        }
    }

    fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let n = a.dim * b.dim;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..a.dim {
            for j in 0..a.dim {
                let x = a.get(i, j);
                if x == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..b.dim {
                    for l in 0..b.dim {
                        out.data[(i * b.dim + k) * n + j * b.dim + l] = x * b.get(k, l);
                    }
                }
            }
        }
        out
    }

    fn pauli(name: char) -> DenseMatrix {
        let (o, z, i) = (
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 1.0),
        );
        let data = match name {
            'I' => vec![o, z, z, o],
            'X' => vec![z, o, o, z],
            'Y' => vec![z, -i, i, z],
            'Z' => vec![o, z, z, -o],
            _ => unreachable!(),
        };
        DenseMatrix { dim: 2, data }
    }

    /// The `2·modes` Majorana operators as dense `2^modes` matrices.
    pub fn majoranas(modes: usize) -> Vec<DenseMatrix> {
        let mut out = Vec::with_capacity(2 * modes);
        for j in 0..modes {
            for p in ['X', 'Y'] {
                let mut m = DenseMatrix::identity(1);
                for q in 0..modes {
                    let factor = if q < j {
                        'Z'
                    } else if q == j {
                        p
                    } else {
                        'I'
                    };
                    m = kron(&m, &pauli(factor));
                }
                out.push(m);
            }
        }
        out
    }

    /// Basis vector `|x⟩` for a bit string, first bit most significant.
    pub fn basis_state(bits: &[u8]) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); 1 << bits.len()];
        v[super::bits_to_index(bits)] = Complex64::new(1.0, 0.0);
        v
    }

    /// `−i·Tr[m_p m_q ρ] / Tr ρ` for `p ≠ q`; zero diagonal.
    pub fn covariance_of(rho: &DenseMatrix, majoranas: &[DenseMatrix]) -> Vec<Complex64> {
        let n = majoranas.len();
        let tr = rho.trace();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    let t = majoranas[p].matmul(&majoranas[q]).matmul(rho).trace();
                    out[p * n + q] = Complex64::new(0.0, -1.0) * t / tr;
                }
            }
        }
        out
    }

    /// Unit-trace Gaussian operator with covariance `cov`:
    /// `ρ = 2^{−d} Σ_{S even} (−i)^{|S|/2} pf(cov_S) m_S`.
    pub fn gaussian_operator(cov: &SkewMatrix, majoranas: &[DenseMatrix]) -> DenseMatrix {
        let n = cov.dim();
        let dim = majoranas[0].dim;
        let mut rho = DenseMatrix::zeros(dim);
        for mask in 0u32..(1 << n) {
            let size = mask.count_ones() as usize;
            if !size.is_multiple_of(2) {
                continue;
            }
            let rows: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let pf = if rows.is_empty() {
                Complex64::new(1.0, 0.0)
            } else {
                cov.principal_submatrix(&rows).expect("valid rows").pfaffian()
            };
            if pf == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut op = DenseMatrix::identity(dim);
            for &r in &rows {
                op = op.matmul(&majoranas[r]);
            }
            let phase = Complex64::new(0.0, -1.0).powu((size / 2) as u32);
            rho.add_assign(&op.scaled(phase * pf / dim as f64));
        }
        rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile_input_prep;
    use crate::magic::MagicAngles;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn empty_circuit_is_zero_state() {
        let s = simulate_circuit(&GateList::new(3)).unwrap();
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn preparation_gives_cat_state_msb_first() {
        let alpha = 0.4;
        let s = simulate_circuit(&compile_input_prep(&MagicAngles::new(vec![alpha]).unwrap())).unwrap();
        assert!((s.amplitudes()[0b0000].re - alpha.cos()).abs() < 1e-15);
        assert!((s.amplitudes()[0b1111].re - alpha.sin()).abs() < 1e-15);
        // a single ry on qubit 0 flips the most significant bit
        let mut list = GateList::new(2);
        list.gates.push(Gate::Ry {
            qubit: 0,
            angle: std::f64::consts::PI,
        });
        let s = simulate_circuit(&list).unwrap();
        assert!((s.amplitudes()[0b10].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rz_only_changes_phase() {
        let mut list = GateList::new(1);
        list.gates.push(Gate::Rz { qubit: 0, angle: 1.3 });
        let s = simulate_circuit(&list).unwrap();
        assert_eq!(s.probabilities().probs(), &[1.0, 0.0]);
    }

    #[test]
    fn unknown_sizes_are_refused() {
        assert!(matches!(StateVector::zero_state(17), Err(Error::Refused(_))));
        let big = FbmModel::vacuum(5, 1);
        assert!(matches!(exact_distribution(&big), Err(Error::Refused(_))));
    }

    #[test]
    fn single_register_distributions() {
        let m = FbmModel::new(
            MagicAngles::new(vec![FRAC_PI_4]).unwrap(),
            crate::flo::FloAnsatz::zeros(4, 1),
            3,
            1,
        )
        .unwrap();
        let d = exact_distribution(&m).unwrap();
        assert!((d.probs()[0b000] - 0.5).abs() < 1e-14);
        assert!((d.probs()[0b111] - 0.5).abs() < 1e-14);
        let v = exact_distribution(&FbmModel::vacuum(1, 1)).unwrap();
        assert!((v.probs()[0] - 1.0).abs() < 1e-14);

        let m = FbmModel::new(
            MagicAngles::new(vec![FRAC_PI_6]).unwrap(),
            crate::flo::FloAnsatz::zeros(4, 1),
            3,
            1,
        )
        .unwrap();
        let z = ZString::new(vec![0], 3).unwrap();
        assert!((exact_zstring(&m, &z).unwrap() - 0.5).abs() < 1e-14);
        assert!((exact_zstring(&m, &ZString::new(vec![], 3).unwrap()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tvd_values() {
        let p = Distribution::new(1, vec![0.5, 0.5]).unwrap();
        let q = Distribution::new(1, vec![1.0, 0.0]).unwrap();
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        assert_eq!(tvd(&p, &q).unwrap(), 0.5);
        let r = Distribution::new(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(tvd(&q, &r).unwrap(), 1.0);
        let wide = Distribution::new(2, vec![0.25; 4]).unwrap();
        assert!(tvd(&p, &wide).is_err());
    }

    #[test]
    fn majoranas_anticommute_and_square_to_one() {
        let m = fock::majoranas(3);
        let id = fock::DenseMatrix::identity(8);
        for p in 0..6 {
            for q in 0..6 {
                let mut ac = m[p].matmul(&m[q]);
                ac.add_assign(&m[q].matmul(&m[p]));
                let expected = if p == q {
                    id.scaled(Complex64::new(2.0, 0.0))
                } else {
                    fock::DenseMatrix::zeros(8)
                };
                assert!(ac.max_abs_diff(&expected) < 1e-15);
            }
        }
        // −i m₀ m₁ = Z₀
        let z0 = m[0].matmul(&m[1]).scaled(Complex64::new(0.0, -1.0));
        assert_eq!(z0.get(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(z0.get(4, 4), Complex64::new(-1.0, 0.0));
    }
}
