//! Left-looking sparse LU (Gilbert-Peierls) with threshold partial pivoting
//! and a reverse Cuthill-McKee column ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PivotPolicy {
    /// Prefer the diagonal when `|a_kk| >= threshold * max_i |a_ik|`.
    Partial { threshold: f64 },
    /// Always pivot on the diagonal (symmetric elimination). With a symmetric
    /// input the pivots are the `D` of `L D L^T`, so all-positive pivots
    /// certify positive definiteness.
    Diagonal,
}

impl Default for PivotPolicy {
    fn default() -> Self {
        PivotPolicy::Partial { threshold: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    up: Vec<usize>,
    ui: Vec<usize>,
    ux: Vec<f64>,
    /// `prow[k]` is the original row chosen as pivot at step `k`.
    prow: Vec<usize>,
    /// Column order.
    q: Vec<usize>,
    min_pivot: f64,
    max_pivot: f64,
    all_positive: bool,
}

const UNSET: usize = usize::MAX;

impl SparseLu {
    pub fn factor(a: &CscMatrix, policy: PivotPolicy) -> Result<Self> {
        let q = rcm_order(a, None);
        Self::factor_ordered(a, q, policy)
    }

    /// Factor with a caller-provided column order.
    pub fn factor_ordered(a: &CscMatrix, q: Vec<usize>, policy: PivotPolicy) -> Result<Self> {
        let n = a.ncols();
        if a.nrows() != n || q.len() != n {
            return Err(Error::Dimension(format!("LU of {}x{} matrix with order of {}", a.nrows(), n, q.len())));
        }
        let scale = a.max_abs();
        let tiny = (n.max(1) as f64) * f64::EPSILON * scale;
        let (ap, ai, ax) = (a.col_ptr(), a.row_idx(), a.values());

        let mut lp = Vec::with_capacity(n + 1);
        let mut li: Vec<usize> = Vec::with_capacity(4 * a.nnz());
        let mut lx = Vec::with_capacity(4 * a.nnz());
        let mut up = Vec::with_capacity(n + 1);
        let mut ui = Vec::with_capacity(4 * a.nnz());
        let mut ux = Vec::with_capacity(4 * a.nnz());
        let mut pinv = vec![UNSET; n];
        let mut x = vec![0.0; n];
        let mut xi = vec![0usize; n];
        let mut marked = vec![false; n];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        let mut all_positive = true;

        for k in 0..n {
            lp.push(li.len());
            up.push(ui.len());
            let col = q[k];

            // Reach: nonzero pattern of L \ A(:, col) in topological order.
            let mut top = n;
            for &i in &ai[ap[col]..ap[col + 1]] {
                if marked[i] {
                    continue;
                }
                marked[i] = true;
                stack.push((i, col_begin(&pinv, &lp, i)));
                while let Some(&(node, ptr)) = stack.last() {
                    let end = col_end(&pinv, &lp, node);
                    let mut p = ptr;
                    let mut pushed = false;
                    while p < end {
                        let child = li[p];
                        p += 1;
                        if !marked[child] {
                            marked[child] = true;
                            let last = stack.len() - 1;
                            stack[last].1 = p;
                            stack.push((child, col_begin(&pinv, &lp, child)));
                            pushed = true;
                            break;
                        }
                    }
                    if !pushed {
                        stack.pop();
                        top -= 1;
                        xi[top] = node;
                    }
                }
            }
            for &i in &xi[top..n] {
                marked[i] = false;
            }

            // Sparse triangular solve.
            for p in ap[col]..ap[col + 1] {
                x[ai[p]] = ax[p];
            }
            for &j in &xi[top..n] {
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                let xj = x[j];
                for p in lp[jj] + 1..lp[jj + 1] {
                    x[li[p]] -= lx[p] * xj;
                }
            }

            // Pivot selection.
            let mut ipiv = UNSET;
            let mut best = -1.0;
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else {
                    ui.push(pinv[i]);
                    ux.push(x[i]);
                }
            }
            match policy {
                PivotPolicy::Diagonal => {
                    if pinv[col] != UNSET {
                        return Err(Error::Singular { context: "diagonal pivot already used".into() });
                    }
                    ipiv = col;
                }
                PivotPolicy::Partial { threshold } => {
                    if ipiv == UNSET {
                        return Err(Error::Singular { context: format!("structurally singular at column {col}") });
                    }
                    if pinv[col] == UNSET && x[col].abs() >= threshold * best {
                        ipiv = col;
                    }
                }
            }
            let pivot = x[ipiv];
            if pivot.abs() <= tiny || !pivot.is_finite() {
                return Err(Error::Singular { context: format!("pivot {pivot:e} at step {k} of {n}") });
            }
            all_positive &= pivot > 0.0;
            min_pivot = min_pivot.min(pivot.abs());
            max_pivot = max_pivot.max(pivot.abs());
            ui.push(k);
            ux.push(pivot);
            pinv[ipiv] = k;
            li.push(ipiv);
            lx.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    li.push(i);
                    lx.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        lp.push(li.len());
        up.push(ui.len());
        for r in li.iter_mut() {
            *r = pinv[*r];
        }
        let mut prow = vec![0; n];
        for (i, &k) in pinv.iter().enumerate() {
            prow[k] = i;
        }
        Ok(Self { n, lp, li, lx, up, ui, ux, prow, q, min_pivot, max_pivot, all_positive })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap lower estimate
    /// of the condition number.
    pub fn pivot_ratio(&self) -> f64 {
        if self.n == 0 {
            1.0
        } else {
            self.max_pivot / self.min_pivot
        }
    }

    pub fn all_pivots_positive(&self) -> bool {
        self.all_positive
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.prow.iter().map(|&i| b[i]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.lp[k] + 1..self.lp[k + 1] {
                    y[self.li[p]] -= self.lx[p] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let last = self.up[k + 1] - 1;
            y[k] /= self.ux[last];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.up[k]..last {
                    y[self.ui[p]] -= self.ux[p] * yk;
                }
            }
        }
        let mut out = vec![0.0; n];
        for (k, &c) in self.q.iter().enumerate() {
            out[c] = y[k];
        }
        out
    }
}

fn col_begin(pinv: &[usize], lp: &[usize], node: usize) -> usize {
    match pinv[node] {
        UNSET => 0,
        j => lp[j],
    }
}

// Pivotal columns are all complete, so `lp[j + 1]` exists.
fn col_end(pinv: &[usize], lp: &[usize], node: usize) -> usize {
    match pinv[node] {
        UNSET => 0,
        j => lp[j + 1],
    }
}

/// Reverse Cuthill-McKee order of the symmetrized pattern of `a`. When
/// `last` is given that index is excluded from the search and placed at the
/// end (used for dense border rows).
pub fn rcm_order(a: &CscMatrix, last: Option<usize>) -> Vec<usize> {
    let n = a.ncols();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in a.triplets() {
        if r != c && Some(r) != last && Some(c) != last {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    if let Some(l) = last {
        visited[l] = true;
    }
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree, &visited);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    if let Some(l) = last {
        order.push(l);
    }
    order
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize], blocked: &[bool]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(current, adj, blocked);
        let depth = *levels.iter().map(|(_, l)| l).max().unwrap_or(&0);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        let far = levels
            .iter()
            .filter(|(_, l)| *l == depth)
            .min_by_key(|(v, _)| (degree[*v], *v))
            .map(|(v, _)| *v)
            .unwrap_or(current);
        if far == current {
            break;
        }
        current = far;
    }
    current
}

fn bfs_levels(start: usize, adj: &[Vec<usize>], blocked: &[bool]) -> Vec<(usize, usize)> {
    let mut seen = std::collections::HashSet::from([start]);
    let mut out = vec![(start, 0)];
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((v, l)) = queue.pop_front() {
        for &w in &adj[v] {
            if !blocked[w] && seen.insert(w) {
                out.push((w, l + 1));
                queue.push_back((w, l + 1));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_sparse(n: usize, density: f64, seed: u64, symmetric: bool) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.random::<f64>() < density {
                    m[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
        }
        if symmetric {
            m = &m + m.transpose();
        }
        m
    }

    #[test]
    fn solves_unsymmetric_system() {
        for seed in 0..10 {
            let d = random_sparse(40, 0.08, seed, false) + DMatrix::identity(40, 40) * 0.5;
            let lu = SparseLu::factor(&CscMatrix::from_dense(&d), PivotPolicy::default()).unwrap();
            let b = DVector::from_fn(40, |i, _| (i as f64).sin());
            let x = DVector::from_vec(lu.solve(b.as_slice()));
            let r = &d * &x - &b;
            assert!(r.norm() < 1e-10 * b.norm() * d.norm(), "seed {seed}: {}", r.norm());
        }
    }

    #[test]
    fn pivots_around_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row exchange.
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let lu = SparseLu::factor(&CscMatrix::from_dense(&d), PivotPolicy::default()).unwrap();
        assert_eq!(lu.solve(&[2.0, 3.0]), vec![3.0, 2.0]);
        assert!(SparseLu::factor(&CscMatrix::from_dense(&d), PivotPolicy::Diagonal).is_err());
    }

    #[test]
    fn diagonal_policy_detects_definiteness() {
        let spd = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let lu = SparseLu::factor(&CscMatrix::from_dense(&spd), PivotPolicy::Diagonal).unwrap();
        assert!(lu.all_pivots_positive());
        let indef = &spd - DMatrix::identity(3, 3) * 2.5;
        let lu = SparseLu::factor(&CscMatrix::from_dense(&indef), PivotPolicy::Diagonal).unwrap();
        assert!(!lu.all_pivots_positive());
    }

    #[test]
    fn singular_matrix_is_reported() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            SparseLu::factor(&CscMatrix::from_dense(&d), PivotPolicy::default()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn rcm_is_a_permutation_and_keeps_last() {
        let d = random_sparse(30, 0.1, 3, true);
        let a = CscMatrix::from_dense(&d);
        let mut o = rcm_order(&a, Some(7));
        assert_eq!(*o.last().unwrap(), 7);
        o.sort_unstable();
        assert_eq!(o, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_tridiagonal() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut t = Vec::new();
        for i in 0..n {
            t.push((perm[i], perm[i], 2.0));
            if i + 1 < n {
                t.push((perm[i], perm[i + 1], -1.0));
                t.push((perm[i + 1], perm[i], -1.0));
            }
        }
        let a = CscMatrix::from_triplets(n, n, &t).unwrap();
        let order = rcm_order(&a, None);
        let mut pos = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let bw = a.triplets().map(|(r, c, _)| pos[r].abs_diff(pos[c])).max().unwrap();
        assert_eq!(bw, 1);
    }
}
