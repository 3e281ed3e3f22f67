//! Bitstring datasets: grid Markov networks, Game-of-Life equilibria and the
//! plain-text dataset format (one `0`/`1` row per line).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::oracle::Distribution;

/// Rows of `n` bits, stored flat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitDataset {
    n: usize,
    bits: Vec<u8>,
}

impl BitDataset {
    pub fn new(n: usize, rows: Vec<Vec<u8>>) -> Result<Self> {
        let mut bits = Vec::with_capacity(n * rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("row {i} has {} bits, expected {n}", row.len())));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(invalid(format!("row {i} contains a value other than 0 or 1")));
            }
            bits.extend_from_slice(row);
        }
        Ok(Self { n, bits })
    }

    pub(crate) fn from_flat(n: usize, bits: Vec<u8>) -> Self {
        debug_assert!(n == 0 || bits.len().is_multiple_of(n));
        Self { n, bits }
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.bits.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.bits.chunks_exact(self.n.max(1))
    }

    /// Rows packed into 64-bit words, variable `i` at bit `i % 64` of word `i / 64`.
    pub(crate) fn packed(&self) -> Vec<Vec<u64>> {
        let words = self.n.div_ceil(64);
        self.rows()
            .map(|row| {
                let mut w = vec![0u64; words];
                for (i, &b) in row.iter().enumerate() {
                    w[i / 64] |= u64::from(b) << (i % 64);
                }
                w
            })
            .collect()
    }

    /// Seeded shuffle followed by a split; the first part holds
    /// `round(fraction · len)` rows.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(BitDataset, BitDataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(invalid(format!("split fraction {fraction} outside [0, 1]")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let cut = (fraction * self.len() as f64).round() as usize;
        let take = |idx: &[usize]| {
            let mut bits = Vec::with_capacity(idx.len() * self.n);
            for &i in idx {
                bits.extend_from_slice(self.row(i));
            }
            BitDataset::from_flat(self.n, bits)
        };
        Ok((take(&order[..cut]), take(&order[cut..])))
    }
}

/// Parses the dataset format; errors carry 1-based line numbers.
pub fn parse_dataset(text: &str) -> Result<BitDataset> {
    let mut n = None;
    let mut bits = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty line".into(),
            });
        }
        for c in line.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            }
        }
        match n {
            None => n = Some(line.len()),
            Some(w) if w != line.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("row has {} bits, expected {w}", line.len()),
                })
            }
            _ => {}
        }
    }
    match n {
        Some(n) => Ok(BitDataset::from_flat(n, bits)),
        None => Err(Error::Parse {
            line: 1,
            message: "dataset has no rows".into(),
        }),
    }
}

pub fn format_dataset(data: &BitDataset) -> String {
    let mut out = String::with_capacity(data.len() * (data.n() + 1));
    for row in data.rows() {
        out.extend(row.iter().map(|&b| if b == 1 { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<BitDataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn save_dataset(data: &BitDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_dataset(data))?;
    Ok(())
}

/// Largest grid whose joint distribution is enumerated.
pub const MAX_GRID_CELLS: usize = 20;

/// Pairwise-grid Markov network with one factor per 2×2 block of cells.
///
/// Cells are numbered row-major; a clique's local configuration index lists
/// its cells (top-left, top-right, bottom-left, bottom-right) from the most
/// significant bit down.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMN {
    rows: usize,
    cols: usize,
    log_factors: Vec<[f64; 16]>,
    joint: Distribution,
}

impl GridMN {
    /// Log-factor entries drawn i.i.d. from `N(0, 1)`.
    pub fn generate(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        check_grid(rows, cols)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cliques = (rows - 1) * (cols - 1);
        let factors = (0..cliques)
            .map(|_| std::array::from_fn(|_| rng.sample(StandardNormal)))
            .collect();
        Self::from_log_factors(rows, cols, factors)
    }

    pub fn from_log_factors(rows: usize, cols: usize, log_factors: Vec<[f64; 16]>) -> Result<Self> {
        check_grid(rows, cols)?;
        if log_factors.len() != (rows - 1) * (cols - 1) {
            return Err(invalid(format!(
                "{}×{} grid has {} cliques, got {} factor tables",
                rows,
                cols,
                (rows - 1) * (cols - 1),
                log_factors.len()
            )));
        }
        if log_factors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("log-factors must be finite"));
        }
        let cells = rows * cols;
        let cliques = clique_cells(rows, cols);
        let mut logp: Vec<f64> = (0..1usize << cells)
            .map(|x| {
                cliques
                    .iter()
                    .zip(&log_factors)
                    .map(|(c, f)| {
                        let local = c
                            .iter()
                            .fold(0, |acc, &cell| (acc << 1) | ((x >> (cells - 1 - cell)) & 1));
                        f[local]
                    })
                    .sum()
            })
            .collect();
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        logp.iter_mut().for_each(|v| *v = (*v - max).exp());
        let z: f64 = logp.iter().sum();
        logp.iter_mut().for_each(|v| *v /= z);
        let joint = Distribution::new(cells, logp)?;
        Ok(Self {
            rows,
            cols,
            log_factors,
            joint,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Cell indices of every maximal clique.
    pub fn cliques(&self) -> Vec<[usize; 4]> {
        clique_cells(self.rows, self.cols)
    }

    pub fn log_factors(&self) -> &[[f64; 16]] {
        &self.log_factors
    }

    pub fn joint(&self) -> &Distribution {
        &self.joint
    }
}

fn check_grid(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 2 {
        return Err(invalid(format!("grid must be at least 2×2, got {rows}×{cols}")));
    }
    if rows * cols > MAX_GRID_CELLS {
        return Err(Error::Refused(format!(
            "{rows}×{cols} grid has {} cells; exact enumeration is limited to {MAX_GRID_CELLS}",
            rows * cols
        )));
    }
    Ok(())
}

fn clique_cells(rows: usize, cols: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity((rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let tl = r * cols + c;
            out.push([tl, tl + 1, tl + cols, tl + cols + 1]);
        }
    }
    out
}

/// I.i.d. rows from the exact joint by inverse CDF.
pub fn mn_sample(mn: &GridMN, count: usize, seed: u64) -> BitDataset {
    sample_distribution(mn.joint(), count, seed)
}

pub(crate) fn sample_distribution(dist: &Distribution, count: usize, seed: u64) -> BitDataset {
    let mut cdf = Vec::with_capacity(dist.probs().len());
    let mut acc = 0.0;
    for &p in dist.probs() {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let n = dist.bits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = Vec::with_capacity(count * n);
    for _ in 0..count {
        let u = rng.gen::<f64>() * total;
        let x = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        bits.extend((0..n).map(|i| ((x >> (n - 1 - i)) & 1) as u8));
    }
    BitDataset::from_flat(n, bits)
}

/// One Conway step with dead cells outside the grid.
pub fn life_step(grid: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let mut next = vec![0u8; grid.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut live = 0;
            for dr in [-1isize, 0, 1] {
                for dc in [-1isize, 0, 1] {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                        live += grid[rr as usize * cols + cc as usize];
                    }
                }
            }
            let alive = grid[r * cols + c] == 1;
            next[r * cols + c] = u8::from(live == 3 || (alive && live == 2));
        }
    }
    next
}

pub fn evolve_life(grid: &[u8], rows: usize, cols: usize, steps: usize) -> Vec<u8> {
    let mut g = grid.to_vec();
    for _ in 0..steps {
        g = life_step(&g, rows, cols);
    }
    g
}

/// Consecutive rejected attempts tolerated per sample (a 99.9% rejection rate).
pub const LIFE_REJECTION_WINDOW: usize = 1000;

/// States reached after `steps` Conway steps from uniformly random grids,
/// flattened row-major, skipping all-dead results.
///
/// Sample `i` uses its own random stream, so output does not depend on the
/// number of workers.
pub fn game_of_life_dataset(rows: usize, cols: usize, steps: usize, count: usize, seed: u64) -> Result<BitDataset> {
    if rows < 3 || cols < 3 {
        return Err(invalid(format!(
            "Game-of-Life grid must be at least 3×3, got {rows}×{cols}"
        )));
    }
    let indices: Vec<u64> = (0..count as u64).collect();
    let samples = crate::par::map_collect(&indices, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        for _ in 0..LIFE_REJECTION_WINDOW {
            let start: Vec<u8> = (0..rows * cols).map(|_| u8::from(rng.gen::<bool>())).collect();
            let end = evolve_life(&start, rows, cols, steps);
            if end.contains(&1) {
                return Ok(end);
            }
        }
        Err(Error::Sampling(format!(
            "sample {i}: {LIFE_REJECTION_WINDOW} consecutive random grids died out after {steps} steps"
        )))
    });
    let mut bits = Vec::with_capacity(count * rows * cols);
    for s in samples {
        bits.extend(s?);
    }
    Ok(BitDataset::from_flat(rows * cols, bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let d = parse_dataset("010\n111\n").unwrap();
        assert_eq!((d.len(), d.n()), (2, 3));
        assert_eq!(d.row(1), &[1, 1, 1]);
        assert_eq!(format_dataset(&d), "010\n111\n");
        assert!(parse_dataset("").is_err());
        assert!(matches!(parse_dataset("01\n0a\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("01\n010\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("01\n\n01\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn dataset_validation() {
        assert!(BitDataset::new(2, vec![vec![0, 2]]).is_err());
        assert!(BitDataset::new(2, vec![vec![0]]).is_err());
        let d = BitDataset::new(70, vec![vec![1; 70]]).unwrap();
        let p = d.packed();
        assert_eq!(p[0][0], u64::MAX);
        assert_eq!(p[0][1], 0b11_1111);
    }

    #[test]
    fn split_partitions_rows() {
        let rows: Vec<Vec<u8>> = (0..10).map(|i| vec![(i % 2) as u8, (i / 5) as u8]).collect();
        let d = BitDataset::new(2, rows).unwrap();
        let (a, b) = d.split(0.7, 3).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(d.split(0.7, 3).unwrap(), (a, b));
    }

    #[test]
    fn grid_clique_counts() {
        assert_eq!(GridMN::generate(3, 4, 0).unwrap().cliques().len(), 6);
        assert_eq!(GridMN::generate(2, 2, 0).unwrap().cliques(), vec![[0, 1, 2, 3]]);
        assert!(matches!(GridMN::generate(5, 5, 0), Err(Error::Refused(_))));
    }

    #[test]
    fn single_clique_joint_is_the_normalized_factor() {
        let f: [f64; 16] = std::array::from_fn(|i| 0.1 * i as f64);
        let mn = GridMN::from_log_factors(2, 2, vec![f]).unwrap();
        let z: f64 = f.iter().map(|x| x.exp()).sum();
        for (i, p) in mn.joint().probs().iter().enumerate() {
            assert!((p - f[i].exp() / z).abs() < 1e-15);
        }
        let flat = GridMN::from_log_factors(2, 3, vec![[0.0; 16]; 2]).unwrap();
        assert!(flat.joint().probs().iter().all(|&p| (p - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn point_mass_sampling() {
        let mut f = [0.0; 16];
        f[0b1010] = 800.0;
        let mn = GridMN::from_log_factors(2, 2, vec![f]).unwrap();
        let d = mn_sample(&mn, 50, 1);
        assert!(d.rows().all(|r| r == [1, 0, 1, 0]));
        assert_eq!(mn_sample(&mn, 50, 1), d);
    }

    #[test]
    fn life_rules() {
        // 2×2 block in a 4×4 grid is a still life
        let mut g = vec![0u8; 16];
        for i in [5, 6, 9, 10] {
            g[i] = 1;
        }
        assert_eq!(evolve_life(&g, 4, 4, 7), g);
        let mut single = vec![0u8; 9];
        single[4] = 1;
        assert!(life_step(&single, 3, 3).iter().all(|&b| b == 0));
        // blinker has period two
        let mut blinker = vec![0u8; 25];
        for i in [11, 12, 13] {
            blinker[i] = 1;
        }
        let once = life_step(&blinker, 5, 5);
        assert_ne!(once, blinker);
        assert_eq!(life_step(&once, 5, 5), blinker);
    }

    #[test]
    fn life_dataset_shape_and_determinism() {
        let d = game_of_life_dataset(6, 7, 30, 20, 5).unwrap();
        assert_eq!((d.len(), d.n()), (20, 42));
        assert!(d.rows().all(|r| r.contains(&1)));
        assert_eq!(game_of_life_dataset(6, 7, 30, 20, 5).unwrap(), d);
        assert!(game_of_life_dataset(2, 7, 30, 20, 5).is_err());
    }
}
