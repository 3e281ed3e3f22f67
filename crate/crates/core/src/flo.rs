//! Parametrized fermionic linear optics.
//!
//! An FLO unitary acts on the `2d` Majorana operators as a rotation
//! `O ∈ SO(2d)`. The ansatz is a rectangular brickwork of adjacent-pair Givens
//! rotations: sublayer `s` rotates every Majorana pair `(p, p+1)` with
//! `p ≡ s (mod 2)`, and one layer has `2d` sublayers, `d(2d−1)` angles in all.
//!
//! Convention: the unitary `exp(θ/2 · m_p m_{p+1})` maps
//! `m_p → cos θ·m_p + sin θ·m_{p+1}` and `m_{p+1} → −sin θ·m_p + cos θ·m_{p+1}`.
//! Gates applied later multiply from the left, and covariance matrices evolve
//! as `Σ → O Σ Oᵀ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::skewlin::SkewMatrix;

/// Number of Givens angles in one layer over `modes` fermionic modes.
pub fn rotations_per_layer(modes: usize) -> usize {
    modes * (2 * modes - 1)
}

/// Majorana pair offsets `p` of one layer, in application order.
pub fn brickwork_pairs(modes: usize) -> Vec<usize> {
    let n = 2 * modes;
    let mut pairs = Vec::with_capacity(rotations_per_layer(modes));
    for s in 0..n {
        let mut p = s % 2;
        while p + 1 < n {
            pairs.push(p);
            p += 2;
        }
    }
    pairs
}

/// `(sublayer, pair)` slot of every rotation in one layer, in application order.
fn brickwork_slots(modes: usize) -> Vec<(usize, usize)> {
    let n = 2 * modes;
    let mut slots = Vec::with_capacity(rotations_per_layer(modes));
    for s in 0..n {
        let mut p = s % 2;
        while p + 1 < n {
            slots.push((s, p));
            p += 2;
        }
    }
    slots
}

/// Givens angles of a multi-layer brickwork ansatz, flattened layer by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloAnsatz {
    modes: usize,
    layers: usize,
    angles: Vec<f64>,
}

impl FloAnsatz {
    pub fn new(modes: usize, layers: usize, angles: Vec<f64>) -> Result<Self> {
        if modes == 0 || layers == 0 {
            return Err(invalid("FLO ansatz needs at least one mode and one layer"));
        }
        let expected = layers * rotations_per_layer(modes);
        if angles.len() != expected {
            return Err(invalid(format!(
                "expected {expected} angles for {layers} layer(s) over {modes} modes, got {}",
                angles.len()
            )));
        }
        if let Some(bad) = angles.iter().find(|a| !a.is_finite()) {
            return Err(invalid(format!("non-finite FLO angle {bad}")));
        }
        Ok(Self { modes, layers, angles })
    }

    pub fn zeros(modes: usize, layers: usize) -> Self {
        Self {
            modes,
            layers,
            angles: vec![0.0; layers * rotations_per_layer(modes)],
        }
    }

    /// Angles uniform on `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(modes: usize, layers: usize, rng: &mut R) -> Self {
        let angles = (0..layers * rotations_per_layer(modes))
            .map(|_| rng.gen_range(0.0..2.0 * PI))
            .collect();
        Self { modes, layers, angles }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        let r = rotations_per_layer(self.modes);
        &self.angles[l * r..(l + 1) * r]
    }

    /// `(pair, angle)` for every rotation in circuit order.
    pub fn rotations(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let pairs = brickwork_pairs(self.modes);
        self.angles
            .chunks(pairs.len())
            .flat_map(move |layer| pairs.clone().into_iter().zip(layer.iter().copied()))
    }

    /// Appends the layers of `other` after those of `self`.
    pub fn concat(&self, other: &FloAnsatz) -> Result<FloAnsatz> {
        if self.modes != other.modes {
            return Err(invalid("cannot concatenate ansätze over different mode counts"));
        }
        let mut angles = self.angles.clone();
        angles.extend_from_slice(&other.angles);
        FloAnsatz::new(self.modes, self.layers + other.layers, angles)
    }
}

/// Real `2d × 2d` matrix in `SO(2d)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl OrthogonalMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Wraps `data` after checking `OᵀO = I` and `det O = +1` within `1e−10`.
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(invalid("orthogonal matrix has the wrong number of entries"));
        }
        let m = Self { dim, data };
        let dev = m.orthogonality_defect();
        if dev > 1e-10 {
            return Err(invalid(format!("matrix is not orthogonal: max |OᵀO − I| = {dev:e}")));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("orthogonal matrix has determinant {det}, expected +1")));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn matmul(&self, other: &OrthogonalMatrix) -> OrthogonalMatrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        OrthogonalMatrix { dim: n, data }
    }

    pub fn transpose(&self) -> OrthogonalMatrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        OrthogonalMatrix { dim: n, data }
    }

    /// `max |OᵀO − I|` elementwise.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.data[k * n + i] * self.data[k * n + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim;
        let mut m = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))
                .unwrap_or(k);
            if m[piv * n + k] == 0.0 {
                return 0.0;
            }
            if piv != k {
                for j in 0..n {
                    m.swap(k * n + j, piv * n + j);
                }
                det = -det;
            }
            let d = m[k * n + k];
            det *= d;
            for i in (k + 1)..n {
                let f = m[i * n + k] / d;
                for j in k..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
            }
        }
        det
    }

    pub fn max_abs_diff(&self, other: &OrthogonalMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `O ← R_p(θ)·O`.
    pub(crate) fn rotate_rows(&mut self, p: usize, theta: f64) {
        let (s, c) = theta.sin_cos();
        rotate_rows(&mut self.data, self.dim, p, c, s);
    }

    /// `O ← O·R_p(θ)`.
    fn rotate_cols(&mut self, p: usize, theta: f64) {
        let (s, c) = theta.sin_cos();
        let n = self.dim;
        for i in 0..n {
            let a = self.data[i * n + p];
            let b = self.data[i * n + p + 1];
            self.data[i * n + p] = c * a - s * b;
            self.data[i * n + p + 1] = s * a + c * b;
        }
    }
}

/// Rows `(p, p+1)` of `m` ← `[[c, s], [−s, c]]` applied from the left.
fn rotate_rows(m: &mut [f64], n: usize, p: usize, c: f64, s: f64) {
    let (head, tail) = m.split_at_mut((p + 1) * n);
    let rp = &mut head[p * n..];
    let rq = &mut tail[..n];
    for j in 0..n {
        let a = rp[j];
        let b = rq[j];
        rp[j] = c * a + s * b;
        rq[j] = -s * a + c * b;
    }
}

/// Product of all Givens rotations of `ansatz`, later rotations on the left.
pub fn build_orthogonal(ansatz: &FloAnsatz) -> OrthogonalMatrix {
    let mut o = OrthogonalMatrix::identity(2 * ansatz.modes);
    for (p, theta) in ansatz.rotations() {
        o.rotate_rows(p, theta);
    }
    o
}

/// Gradient of a scalar loss with respect to every angle of `ansatz`.
///
/// `grad_o` is `∂L/∂O` (row-major `2d × 2d`) at `O = build_orthogonal(ansatz)`.
/// One reverse sweep over the rotations costs `O(rotations · d)`.
pub fn angle_gradient(ansatz: &FloAnsatz, grad_o: &[f64]) -> Vec<f64> {
    let n = 2 * ansatz.modes;
    assert_eq!(grad_o.len(), n * n);
    let rotations: Vec<(usize, f64)> = ansatz.rotations().collect();
    let mut prefix = build_orthogonal(ansatz).data;
    let mut adj = grad_o.to_vec();
    let mut grad = vec![0.0; rotations.len()];
    for (k, &(p, theta)) in rotations.iter().enumerate().rev() {
        let (s, c) = theta.sin_cos();
        // prefix ← R_kᵀ·prefix, leaving the product of rotations before k
        rotate_rows(&mut prefix, n, p, c, -s);
        let (rp, rq) = (&prefix[p * n..(p + 1) * n], &prefix[(p + 1) * n..(p + 2) * n]);
        let (ap, aq) = (&adj[p * n..(p + 1) * n], &adj[(p + 1) * n..(p + 2) * n]);
        let mut g = 0.0;
        for j in 0..n {
            let dp = -s * rp[j] + c * rq[j];
            let dq = -c * rp[j] - s * rq[j];
            g += ap[j] * dp + aq[j] * dq;
        }
        grad[k] = g;
        rotate_rows(&mut adj, n, p, c, -s);
    }
    grad
}

/// Offsets of consecutive blocks in a direct sum.
fn block_offsets(blocks: &[SkewMatrix]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut acc = 0;
    for b in blocks {
        offsets.push(acc);
        acc += b.dim();
    }
    offsets
}

/// Rows of `O` restricted to a set of Majorana indices, split per register.
///
/// Holds `P_k = O[rows, reg_k]` for every register block, from which the
/// evolved covariance of any direct sum of per-register blocks, restricted to
/// `rows`, is `Σ_k P_k B_k P_kᵀ`.
#[derive(Debug, Clone)]
pub struct RowProjection {
    rows: Vec<usize>,
    block_dim: usize,
    /// `panels[k]` is `rows.len() × block_dim`, row-major.
    panels: Vec<Vec<f64>>,
}

impl RowProjection {
    /// Projection for equal-sized register blocks of dimension `block_dim`.
    pub fn new(o: &OrthogonalMatrix, rows: &[usize], block_dim: usize) -> Result<Self> {
        if block_dim == 0 || !o.dim().is_multiple_of(block_dim) {
            return Err(invalid(format!(
                "block dimension {block_dim} does not divide matrix dimension {}",
                o.dim()
            )));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= o.dim()) {
            return Err(invalid(format!("row index {r} out of range for dimension {}", o.dim())));
        }
        let registers = o.dim() / block_dim;
        let panels = (0..registers)
            .map(|k| {
                let mut panel = Vec::with_capacity(rows.len() * block_dim);
                for &r in rows {
                    panel.extend_from_slice(&o.row(r)[k * block_dim..(k + 1) * block_dim]);
                }
                panel
            })
            .collect();
        Ok(Self {
            rows: rows.to_vec(),
            block_dim,
            panels,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn registers(&self) -> usize {
        self.panels.len()
    }

    pub fn panel(&self, k: usize) -> &[f64] {
        &self.panels[k]
    }

    /// `P_k B Pᵀ_k` as a row-major `ℓ × ℓ` buffer, accumulated into `out`.
    pub(crate) fn accumulate(&self, k: usize, block: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
        let l = self.rows.len();
        let b = self.block_dim;
        let panel = &self.panels[k];
        // tmp = P_k · B   (ℓ × b)
        let mut tmp = vec![Complex64::new(0.0, 0.0); l * b];
        for i in 0..l {
            for a in 0..b {
                let pia = panel[i * b + a];
                if pia == 0.0 {
                    continue;
                }
                for c in 0..b {
                    tmp[i * b + c] += block[a * b + c] * pia;
                }
            }
        }
        for i in 0..l {
            for j in (i + 1)..l {
                let mut v = Complex64::new(0.0, 0.0);
                for c in 0..b {
                    v += tmp[i * b + c] * panel[j * b + c];
                }
                v *= scale;
                out[i * l + j] += v;
                out[j * l + i] -= v;
            }
        }
    }

    /// `P_k B P_kᵀ` for one register.
    pub fn contribution(&self, k: usize, block: &SkewMatrix) -> SkewMatrix {
        let l = self.rows.len();
        let mut out = vec![Complex64::new(0.0, 0.0); l * l];
        self.accumulate(k, block.as_slice(), Complex64::new(1.0, 0.0), &mut out);
        SkewMatrix::from_raw_unchecked(l, out)
    }
}

/// Restriction of `O(⊕_k B_k)Oᵀ` to `row_indices`, computed without forming
/// the full `2d × 2d` product.
pub fn evolve_block_covariance(
    o: &OrthogonalMatrix,
    blocks: &[SkewMatrix],
    row_indices: &[usize],
) -> Result<SkewMatrix> {
    let total: usize = blocks.iter().map(SkewMatrix::dim).sum();
    if total != o.dim() {
        return Err(invalid(format!(
            "blocks span dimension {total} but the rotation has dimension {}",
            o.dim()
        )));
    }
    if row_indices.is_empty() || !row_indices.len().is_multiple_of(2) {
        return Err(invalid("row selection must have even, nonzero length"));
    }
    for w in row_indices.windows(2) {
        if w[1] <= w[0] {
            return Err(invalid(format!(
                "row indices must be strictly increasing: {row_indices:?}"
            )));
        }
    }
    if let Some(&r) = row_indices.iter().find(|&&r| r >= o.dim()) {
        return Err(invalid(format!("row index {r} out of range for dimension {}", o.dim())));
    }
    let l = row_indices.len();
    let mut out = vec![Complex64::new(0.0, 0.0); l * l];
    for (block, offset) in blocks.iter().zip(block_offsets(blocks)) {
        let b = block.dim();
        for i in 0..l {
            let ri = o.row(row_indices[i]);
            for j in (i + 1)..l {
                let rj = o.row(row_indices[j]);
                let mut v = Complex64::new(0.0, 0.0);
                for a in 0..b {
                    let oia = ri[offset + a];
                    if oia == 0.0 {
                        continue;
                    }
                    for c in 0..b {
                        v += block.get(a, c) * (oia * rj[offset + c]);
                    }
                }
                out[i * l + j] += v;
                out[j * l + i] -= v;
            }
        }
    }
    Ok(SkewMatrix::from_raw_unchecked(l, out))
}

/// Per-register contributions to an evolved, row-restricted covariance.
///
/// Keeps `M_k = P_k B_k P_kᵀ` and their running sum so that replacing one
/// register's block costs a single `O(ℓ²·b²)` contribution.
#[derive(Debug, Clone)]
pub struct BlockContributions {
    projection: RowProjection,
    contributions: Vec<SkewMatrix>,
    sum: SkewMatrix,
}

impl BlockContributions {
    pub fn new(o: &OrthogonalMatrix, blocks: &[SkewMatrix], rows: &[usize]) -> Result<Self> {
        let block_dim = blocks
            .first()
            .map(SkewMatrix::dim)
            .ok_or_else(|| invalid("at least one block is required"))?;
        if blocks.iter().any(|b| b.dim() != block_dim) {
            return Err(invalid("all register blocks must have the same dimension"));
        }
        if blocks.len() * block_dim != o.dim() {
            return Err(invalid("blocks do not span the rotation dimension"));
        }
        let projection = RowProjection::new(o, rows, block_dim)?;
        let contributions: Vec<SkewMatrix> = blocks
            .iter()
            .enumerate()
            .map(|(k, b)| projection.contribution(k, b))
            .collect();
        let l = rows.len();
        let mut sum = vec![Complex64::new(0.0, 0.0); l * l];
        for m in &contributions {
            for (s, v) in sum.iter_mut().zip(m.as_slice()) {
                *s += v;
            }
        }
        Ok(Self {
            projection,
            contributions,
            sum: SkewMatrix::from_raw_unchecked(l, sum),
        })
    }

    pub fn sum(&self) -> &SkewMatrix {
        &self.sum
    }

    pub fn contribution(&self, k: usize) -> &SkewMatrix {
        &self.contributions[k]
    }

    /// The restricted covariance after replacing register `j`'s block.
    pub fn with_replacement(&self, j: usize, block: &SkewMatrix) -> SkewMatrix {
        let l = self.projection.rows().len();
        let mut out: Vec<Complex64> = self
            .sum
            .as_slice()
            .iter()
            .zip(self.contributions[j].as_slice())
            .map(|(s, m)| s - m)
            .collect();
        self.projection
            .accumulate(j, block.as_slice(), Complex64::new(1.0, 0.0), &mut out);
        SkewMatrix::from_raw_unchecked(l, out)
    }
}

/// Re-expresses `o ∈ SO(2d)` as one brickwork layer of Givens angles.
///
/// Elements are nulled alternately by column rotations (input side) and row
/// rotations (output side), the leftover `±1` diagonal is pushed to the output
/// and absorbed by shifting angles by `π`.
pub fn decompose_orthogonal(o: &OrthogonalMatrix) -> Result<FloAnsatz> {
    let n = o.dim();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(invalid("orthogonal matrix dimension must be even"));
    }
    let defect = o.orthogonality_defect();
    if defect > 1e-8 {
        return Err(Error::Numerical(format!(
            "cannot decompose: orthogonality defect {defect:e} exceeds 1e-8"
        )));
    }
    let modes = n / 2;
    let mut u = o.clone();
    let mut right: Vec<(usize, f64)> = Vec::new();
    let mut left: Vec<(usize, f64)> = Vec::new();
    for i in 1..n {
        if i % 2 == 1 {
            for j in 0..i {
                let (r, a) = (n - 1 - j, i - j - 1);
                let phi = u.get(r, a).atan2(u.get(r, a + 1));
                u.rotate_cols(a, phi);
                right.push((a, phi));
            }
        } else {
            for j in 1..=i {
                let (a, col) = (n + j - i - 2, j - 1);
                let phi = u.get(a + 1, col).atan2(u.get(a, col));
                u.rotate_rows(a, phi);
                left.push((a, phi));
            }
        }
    }
    let mut signs = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = u.get(i, j);
            if i == j {
                if (v.abs() - 1.0).abs() > 1e-8 {
                    return Err(Error::Numerical(format!("decomposition left diagonal entry {v}")));
                }
                signs[i] = v.signum();
            } else if v.abs() > 1e-8 {
                return Err(Error::Numerical(format!(
                    "decomposition left off-diagonal entry {v:e} at ({i}, {j})"
                )));
            }
        }
    }

    // o = L₁ᵀ⋯L_bᵀ · D · G_aᵀ⋯G₁ᵀ, rewritten in circuit order with D moved to the output.
    let mut sequence: Vec<(usize, f64)> = right.iter().map(|&(p, phi)| (p, -phi)).collect();
    for &(p, phi) in left.iter().rev() {
        sequence.push((p, -phi * signs[p] * signs[p + 1]));
    }

    let slots = brickwork_slots(modes);
    let mut slot_angle = vec![None; n * n];
    let mut last: Vec<isize> = vec![-1; n];
    for &(p, theta) in &sequence {
        let mut s = (last[p].max(last[p + 1]) + 1) as usize;
        if s % 2 != p % 2 {
            s += 1;
        }
        if s >= n || slot_angle[s * n + p].is_some() {
            return Err(Error::Numerical(
                "rotation sequence does not fit one brickwork layer".into(),
            ));
        }
        slot_angle[s * n + p] = Some(theta);
        last[p] = s as isize;
        last[p + 1] = s as isize;
    }
    let mut angles = slots
        .iter()
        .map(|&(s, p)| slot_angle[s * n + p].ok_or_else(|| Error::Numerical("brickwork slot left empty".into())))
        .collect::<Result<Vec<f64>>>()?;

    for p in 0..n - 1 {
        if signs[p] < 0.0 {
            let k = slots.iter().rposition(|&(_, q)| q == p).expect("every pair has a slot");
            for (i, &(_, q)) in slots.iter().enumerate().skip(k + 1) {
                if q + 1 == p || q == p + 1 {
                    angles[i] = -angles[i];
                }
            }
            angles[k] += PI;
            signs[p] = -signs[p];
            signs[p + 1] = -signs[p + 1];
        }
    }
    if signs[n - 1] < 0.0 {
        return Err(Error::Numerical("matrix has determinant −1".into()));
    }
    for a in &mut angles {
        if *a == 0.0 {
            *a = 0.0; // normalize −0.0
        }
    }
    FloAnsatz::new(modes, 1, angles)
}
