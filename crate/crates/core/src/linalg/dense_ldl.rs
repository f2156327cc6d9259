//! Dense symmetric indefinite `P·L·D·Lᵀ·Pᵀ` factorization with Bunch–Kaufman
//! partial pivoting (1×1 and 2×2 pivots).

use nalgebra::{DMatrix, DVector};

use super::Inertia;
use crate::error::{Error, Result};

/// Growth-bounding constant of the Bunch–Kaufman pivot rule.
const ALPHA: f64 = 0.640_388_203_202_208_f64; // (1 + sqrt(17)) / 8

#[derive(Debug, Clone)]
enum Pivot {
    One(f64),
    Two([f64; 3]), // d11, d21, d22
}

#[derive(Debug, Clone)]
pub struct DenseLdl {
    n: usize,
    /// Unit lower-triangular factor; entries above the diagonal are unused.
    l: DMatrix<f64>,
    pivots: Vec<(usize, Pivot)>,
    perm: Vec<usize>,
    inertia: Inertia,
}

impl DenseLdl {
    /// Factorizes a symmetric matrix; only the lower triangle is read.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                what: "symmetric matrix columns",
                expected: n,
                got: a.ncols(),
            });
        }
        // Full symmetric working copy built from the lower triangle.
        let mut w = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                w[(i, j)] = a[(i, j)];
                w[(j, i)] = a[(i, j)];
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense LDLᵀ input"));
        }
        let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let tiny = scale * f64::EPSILON * (n as f64).max(1.0);

        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut inertia = Inertia::default();

        let mut k = 0;
        while k < n {
            let absakk = w[(k, k)].abs();
            let (imax, colmax) = ((k + 1)..n)
                .map(|i| (i, w[(i, k)].abs()))
                .fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });

            if absakk.max(colmax) <= tiny {
                return Err(Error::Singular {
                    context: "dense LDLᵀ",
                    pivot: k,
                });
            }

            let (kp, kstep) = if absakk >= ALPHA * colmax {
                (k, 1)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| w[(imax, j)].abs())
                    .fold(0.0, f64::max);
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    (k, 1)
                } else if w[(imax, imax)].abs() >= ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };

            let kk = k + kstep - 1;
            if kp != kk {
                w.swap_rows(kk, kp);
                for r in k..n {
                    let tmp = w[(r, kk)];
                    w[(r, kk)] = w[(r, kp)];
                    w[(r, kp)] = tmp;
                }
                perm.swap(kk, kp);
            }

            if kstep == 1 {
                let d = w[(k, k)];
                if d.abs() <= tiny {
                    return Err(Error::Singular {
                        context: "dense LDLᵀ",
                        pivot: k,
                    });
                }
                for i in (k + 1)..n {
                    let wik = w[(i, k)];
                    if wik == 0.0 {
                        continue;
                    }
                    let f = wik / d;
                    for j in (k + 1)..n {
                        w[(i, j)] -= f * w[(j, k)];
                    }
                }
                for i in (k + 1)..n {
                    w[(i, k)] /= d;
                }
                inertia.record(d);
                pivots.push((k, Pivot::One(d)));
            } else {
                let d11 = w[(k, k)];
                let d21 = w[(k + 1, k)];
                let d22 = w[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det.abs() <= tiny * tiny {
                    return Err(Error::Singular {
                        context: "dense LDLᵀ",
                        pivot: k,
                    });
                }
                // Rows of the trailing block times D⁻¹.
                let mut l1 = vec![0.0; n];
                let mut l2 = vec![0.0; n];
                for i in (k + 2)..n {
                    let a1 = w[(i, k)];
                    let a2 = w[(i, k + 1)];
                    l1[i] = (d22 * a1 - d21 * a2) / det;
                    l2[i] = (d11 * a2 - d21 * a1) / det;
                }
                for i in (k + 2)..n {
                    if l1[i] == 0.0 && l2[i] == 0.0 {
                        continue;
                    }
                    for j in (k + 2)..n {
                        w[(i, j)] -= l1[i] * w[(j, k)] + l2[i] * w[(j, k + 1)];
                    }
                }
                for i in (k + 2)..n {
                    w[(i, k)] = l1[i];
                    w[(i, k + 1)] = l2[i];
                }
                w[(k + 1, k)] = 0.0;
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                pivots.push((k, Pivot::Two([d11, d21, d22])));
            }
            k += kstep;
        }

        Ok(Self {
            n,
            l: w,
            pivots,
            perm,
            inertia,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: DVector<f64> = DVector::from_iterator(n, self.perm.iter().map(|&p| b[p]));

        // L y = b (unit diagonal, zero sub-diagonal inside 2×2 blocks)
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for i in (j + 1)..n {
                    y[i] -= self.l[(i, j)] * yj;
                }
            }
        }
        for (k, piv) in &self.pivots {
            match *piv {
                Pivot::One(d) => y[*k] /= d,
                Pivot::Two([d11, d21, d22]) => {
                    let det = d11 * d22 - d21 * d21;
                    let (a, b2) = (y[*k], y[*k + 1]);
                    y[*k] = (d22 * a - d21 * b2) / det;
                    y[*k + 1] = (d11 * b2 - d21 * a) / det;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in (j + 1)..n {
                s -= self.l[(i, j)] * y[i];
            }
            y[j] = s;
        }

        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}
