//! Banded LU with partial pivoting, reverse Cuthill–McKee ordering, and a
//! bordered variant for symmetric saddle-point matrices whose few dense
//! rows (global parameters) would otherwise destroy the band.

use nalgebra::{DMatrix, DVector};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// LU factors of a band matrix in LAPACK `gbtrf` layout: entry `(i, j)`
/// lives at `ab[kv + i - j + j * ldab]` with `kv = kl + ku`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Factorizes the `n × n` matrix given by `entries`, whose lower and upper
    /// bandwidths must not exceed `kl` and `ku`.
    pub fn factor<I>(n: usize, kl: usize, ku: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            kv,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
        };
        let mut scale = 0.0f64;
        for (i, j, v) in entries {
            assert!(i <= j + kl && j <= i + ku, "entry ({i}, {j}) outside band");
            if !v.is_finite() {
                return Err(Error::NonFinite("band matrix"));
            }
            let k = lu.idx(i, j);
            lu.ab[k] += v;
            scale = scale.max(v.abs());
        }
        let tiny = scale * f64::EPSILON;

        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = lu.ab[lu.idx(j, j)].abs();
            for t in 1..=km {
                let v = lu.ab[lu.idx(j + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            if best <= tiny || best == 0.0 {
                return Err(Error::Singular {
                    context: "band LU",
                    pivot: j,
                });
            }
            lu.ipiv[j] = j + jp;
            let ju = (j + kv).min(n - 1);
            if jp != 0 {
                for c in j..=ju {
                    let a = lu.idx(j, c);
                    let b = lu.idx(j + jp, c);
                    lu.ab.swap(a, b);
                }
            }
            let pivot = lu.ab[lu.idx(j, j)];
            for t in 1..=km {
                let k = lu.idx(j + t, j);
                lu.ab[k] /= pivot;
            }
            for c in (j + 1)..=ju {
                let ajc = lu.ab[lu.idx(j, c)];
                if ajc == 0.0 {
                    continue;
                }
                for t in 1..=km {
                    let l = lu.ab[lu.idx(j + t, j)];
                    let k = lu.idx(j + t, c);
                    lu.ab[k] -= l * ajc;
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kv + i - j + j * self.ldab
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=self.kl.min(n - 1 - j) {
                    b[j + t] -= self.ab[self.idx(j + t, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(self.kv)..j {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let mut s = b[j];
            for i in j.saturating_sub(self.kv)..j {
                s -= self.ab[self.idx(i, j)] * b[i];
            }
            b[j] = s / self.ab[self.idx(j, j)];
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            for t in 1..=self.kl.min(n - 1 - j) {
                s -= self.ab[self.idx(j + t, j)] * b[j + t];
            }
            b[j] = s;
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
        }
    }
}

/// Reverse Cuthill–McKee ordering of the nodes in `active` over the
/// symmetric adjacency `adj`. Returns the active nodes in their new order.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>], active: &[bool]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = (0..n)
        .map(|i| adj[i].iter().filter(|&&j| active[j] && j != i).count())
        .collect();
    let mut visited: Vec<bool> = active.iter().map(|a| !a).collect();
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, seen: &mut Vec<bool>| -> (Vec<usize>, usize) {
        // Returns the last level and the eccentricity of `start`.
        let mut frontier = vec![start];
        seen[start] = true;
        let mut touched = vec![start];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &adj[u] {
                    if active[v] && !seen[v] {
                        seen[v] = true;
                        touched.push(v);
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                for t in touched {
                    seen[t] = false;
                }
                return (frontier, depth);
            }
            depth += 1;
            frontier = next;
        }
    };

    let mut scratch = vec![false; n];
    loop {
        let Some(seed) = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
        else {
            break;
        };
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut last, mut ecc) = bfs_levels(start, &mut scratch);
        for _ in 0..4 {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (l2, e2) = bfs_levels(cand, &mut scratch);
            if e2 > ecc {
                start = cand;
                last = l2;
                ecc = e2;
            } else {
                break;
            }
        }

        let head = order.len();
        visited[start] = true;
        order.push(start);
        let mut cursor = head;
        while cursor < order.len() {
            let u = order[cursor];
            cursor += 1;
            let mut nbrs: Vec<usize> = adj[u]
                .iter()
                .copied()
                .filter(|&v| !visited[v])
                .collect();
            nbrs.sort_unstable_by_key(|&v| (degree[v], v));
            nbrs.dedup();
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    order.push(v);
                }
            }
        }
    }
    order.reverse();
    order
}

fn symmetric_adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn bandwidths(entries: impl Iterator<Item = (usize, usize)>) -> (usize, usize) {
    entries.fold((0, 0), |(kl, ku), (i, j)| {
        if i > j {
            (kl.max(i - j), ku)
        } else {
            (kl, ku.max(j - i))
        }
    })
}

/// LU of a general sparse square matrix after a symmetric RCM permutation.
#[derive(Debug, Clone)]
pub struct SparseLu {
    /// `perm[new] = old`
    perm: Vec<usize>,
    band: BandLu,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                what: "square matrix columns",
                expected: n,
                got: a.ncols(),
            });
        }
        let adj = symmetric_adjacency(a);
        let perm = reverse_cuthill_mckee(&adj, &vec![true; n]);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (kl, ku) = bandwidths(a.iter().map(|(i, j, _)| (inv[i], inv[j])));
        let band = BandLu::factor(n, kl, ku, a.iter().map(|(i, j, v)| (inv[i], inv[j], v)))?;
        Ok(Self { perm, band })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut w: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.band.solve_in_place(&mut w);
        let mut x = DVector::zeros(w.len());
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = w[new];
        }
        x
    }

    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut w: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.band.solve_transpose_in_place(&mut w);
        let mut x = DVector::zeros(w.len());
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = w[new];
        }
        x
    }
}

/// Factorization of a symmetric (possibly indefinite) sparse matrix as
///
/// ```text
/// [ B  C ]   B: banded after RCM ordering, factored by band LU
/// [ Cᵀ E ]   C, E: rows of high-degree "border" variables
/// ```
///
/// with the border handled through the dense Schur complement
/// `S = E − Cᵀ B⁻¹ C`.
#[derive(Debug, Clone)]
pub struct BorderedBandLu {
    n: usize,
    interior: Vec<usize>,
    border: Vec<usize>,
    band: BandLu,
    /// `B⁻¹ C`, interior ordering.
    binv_c: DMatrix<f64>,
    /// `C` in interior ordering.
    c: DMatrix<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl BorderedBandLu {
    /// Degree above which a variable is moved to the border: four times the
    /// median row count, at least 16.
    pub fn default_border_threshold(a: &CsrMatrix) -> usize {
        let mut deg: Vec<usize> = (0..a.nrows()).map(|i| a.row(i).count()).collect();
        deg.sort_unstable();
        let median = deg.get(deg.len() / 2).copied().unwrap_or(0);
        (4 * median).max(16)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        Self::factor_with_threshold(a, Self::default_border_threshold(a))
    }

    pub fn factor_with_threshold(a: &CsrMatrix, border_degree: usize) -> Result<Self> {
        let n = a.nrows();
        let adj = symmetric_adjacency(a);
        let is_border: Vec<bool> = adj.iter().map(|l| l.len() > border_degree).collect();
        let active: Vec<bool> = is_border.iter().map(|b| !b).collect();
        let interior = reverse_cuthill_mckee(&adj, &active);
        let border: Vec<usize> = (0..n).filter(|&i| is_border[i]).collect();
        let ni = interior.len();
        let nb = border.len();

        // old index → (is_border, new position)
        let mut slot = vec![(false, 0usize); n];
        for (k, &i) in interior.iter().enumerate() {
            slot[i] = (false, k);
        }
        for (k, &i) in border.iter().enumerate() {
            slot[i] = (true, k);
        }

        let mut c = DMatrix::zeros(ni, nb);
        let mut e = DMatrix::zeros(nb, nb);
        let mut band_entries = Vec::with_capacity(a.nnz());
        for (i, j, v) in a.iter() {
            match (slot[i], slot[j]) {
                ((false, r), (false, s)) => band_entries.push((r, s, v)),
                ((false, r), (true, s)) => c[(r, s)] = v,
                ((true, r), (true, s)) => e[(r, s)] = v,
                ((true, _), (false, _)) => {} // mirrored by the (false, true) entry
            }
        }
        let (kl, ku) = bandwidths(band_entries.iter().map(|&(i, j, _)| (i, j)));
        let band = BandLu::factor(ni, kl, ku, band_entries)?;

        let mut binv_c = c.clone();
        for k in 0..nb {
            let mut col: Vec<f64> = binv_c.column(k).iter().copied().collect();
            band.solve_in_place(&mut col);
            binv_c.set_column(k, &DVector::from_vec(col));
        }
        let schur = if nb > 0 {
            let s = &e - c.transpose() * &binv_c;
            let lu = s.lu();
            if !lu.is_invertible() {
                return Err(Error::Singular {
                    context: "border Schur complement",
                    pivot: ni,
                });
            }
            Some(lu)
        } else {
            None
        };
        Ok(Self {
            n,
            interior,
            border,
            band,
            binv_c,
            c,
            schur,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn border_len(&self) -> usize {
        self.border.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut u: Vec<f64> = self.interior.iter().map(|&i| b[i]).collect();
        self.band.solve_in_place(&mut u);
        let mut x = DVector::zeros(self.n);
        if let Some(schur) = &self.schur {
            let g = DVector::from_iterator(self.border.len(), self.border.iter().map(|&i| b[i]));
            let u0 = DVector::from_column_slice(&u);
            let rhs = g - self.c.transpose() * &u0;
            let v = schur.solve(&rhs).expect("Schur complement checked invertible");
            let uu = u0 - &self.binv_c * &v;
            for (k, &i) in self.interior.iter().enumerate() {
                x[i] = uu[k];
            }
            for (k, &i) in self.border.iter().enumerate() {
                x[i] = v[k];
            }
        } else {
            for (k, &i) in self.interior.iter().enumerate() {
                x[i] = u[k];
            }
        }
        x
    }
}
