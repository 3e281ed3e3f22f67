//! Classical comparison: Chow-Liu trees and parity covariance matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::BitDataset;
use crate::engine::{Engine, FbmModel, ZString};
use crate::error::{invalid, Result};
use crate::loss::target_expectations;

/// Tree-structured Bayesian network over binary variables.
///
/// `cpt[v][a]` is `P(x_v = 1 | x_parent = a)`; the root uses entry 0 only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChowLiuTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub cpt: Vec<[f64; 2]>,
    /// Variables ordered so that every parent precedes its children.
    pub order: Vec<usize>,
    /// Mutual information (nats) of each tree edge `(parent, child)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl ChowLiuTree {
    pub fn n(&self) -> usize {
        self.parent.len()
    }

    /// Sum of the edge weights.
    pub fn weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Add-one smoothed joint counts of variables `i`, `j`, normalized.
fn pair_joint(data: &BitDataset, i: usize, j: usize) -> [[f64; 2]; 2] {
    let mut c = [[1.0; 2]; 2];
    for row in data.rows() {
        c[row[i] as usize][row[j] as usize] += 1.0;
    }
    let total = data.len() as f64 + 4.0;
    c.map(|r| r.map(|x| x / total))
}

/// Empirical mutual information in nats, after add-one smoothing of the
/// joint counts.
pub fn mutual_information(data: &BitDataset, i: usize, j: usize) -> f64 {
    let p = pair_joint(data, i, j);
    let pi = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
    let pj = [p[0][0] + p[1][0], p[0][1] + p[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            mi += p[a][b] * (p[a][b] / (pi[a] * pj[b])).ln();
        }
    }
    mi.max(0.0)
}

/// All pairwise mutual informations, `(i, j, I)` for `i < j` in lexicographic order.
pub fn pairwise_mutual_information(data: &BitDataset) -> Vec<(usize, usize, f64)> {
    let n = data.n();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    crate::par::map_collect(&pairs, |&(i, j)| (i, j, mutual_information(data, i, j)))
}

/// Maximum mutual-information spanning tree rooted at variable 0.
///
/// Kruskal's algorithm with ties broken by lexicographic edge order; edges
/// are oriented breadth-first from the root; conditional tables are maximum
/// likelihood with add-one smoothing.
pub fn chow_liu_fit(data: &BitDataset) -> Result<ChowLiuTree> {
    if data.len() < 2 {
        return Err(invalid("Chow-Liu fitting needs at least two samples"));
    }
    let n = data.n();
    if n == 0 {
        return Err(invalid("Chow-Liu fitting needs at least one variable"));
    }
    let mut weighted = pairwise_mutual_information(data);
    // stable sort keeps lexicographic order among equal weights
    weighted.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j, w) in &weighted {
        let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
        if ri != rj {
            uf[ri] = rj;
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    let root = 0;
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut order = vec![root];
    let mut edges = Vec::with_capacity(n - 1);
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        let mut next = adjacency[v].clone();
        next.sort_by_key(|e| e.0);
        for (u, w) in next {
            if !seen[u] {
                seen[u] = true;
                parent[u] = Some(v);
                edges.push((v, u, w));
                order.push(u);
            }
        }
    }
    let cpt = (0..n)
        .map(|v| match parent[v] {
            None => {
                let ones = data.rows().filter(|r| r[v] == 1).count() as f64;
                let p = (ones + 1.0) / (data.len() as f64 + 2.0);
                [p, p]
            }
            Some(u) => {
                let mut c = [[1.0; 2]; 2];
                for row in data.rows() {
                    c[row[u] as usize][row[v] as usize] += 1.0;
                }
                [c[0][1] / (c[0][0] + c[0][1]), c[1][1] / (c[1][0] + c[1][1])]
            }
        })
        .collect();
    Ok(ChowLiuTree {
        root,
        parent,
        cpt,
        order,
        edges,
    })
}

/// Ancestral sampling from the root down.
pub fn chow_liu_sample(tree: &ChowLiuTree, count: usize, seed: u64) -> BitDataset {
    let n = tree.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![0u8; count * n];
    for row in bits.chunks_exact_mut(n.max(1)) {
        for &v in &tree.order {
            let cond = tree.parent[v].map_or(0, |u| row[u] as usize);
            row[v] = u8::from(rng.gen::<f64>() < tree.cpt[v][cond]);
        }
    }
    BitDataset::from_flat(n, bits)
}

/// Row-major `n × n` matrix of `⟨Z_iZ_j⟩ − ⟨Z_i⟩⟨Z_j⟩` from singleton and
/// pair expectations.
fn covariance_from(n: usize, eval: impl Fn(&[ZString]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let singles: Vec<ZString> = (0..n).map(|i| ZString::new(vec![i], n)).collect::<Result<_>>()?;
    let pairs: Vec<ZString> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| ZString::new(vec![i, j], n))
        .collect::<Result<_>>()?;
    let z1 = eval(&singles)?;
    let z2 = eval(&pairs)?;
    let mut cov = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        cov[i * n + i] = 1.0 - z1[i] * z1[i];
        for j in i + 1..n {
            let c = z2[k] - z1[i] * z1[j];
            cov[i * n + j] = c;
            cov[j * n + i] = c;
            k += 1;
        }
    }
    Ok(cov)
}

/// Parity covariance of a dataset.
pub fn empirical_covariance(data: &BitDataset) -> Result<Vec<f64>> {
    covariance_from(data.n(), |s| target_expectations(data, s))
}

/// Parity covariance of the model's measured variables.
pub fn model_covariance(model: &FbmModel) -> Result<Vec<f64>> {
    let engine = Engine::with_max_len(model, 2);
    covariance_from(model.variables(), |s| engine.batch(s))
}
