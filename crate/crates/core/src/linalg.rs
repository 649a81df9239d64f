//! Dense least squares via Householder QR with column pivoting.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }
}

/// Householder QR factorisation `A P = Q R` with column pivoting.
///
/// Reflectors are stored below the diagonal of `qr` (LAPACK layout, implicit
/// unit leading entry) together with their scaling factors.
#[derive(Debug, Clone)]
pub struct ColPivQr {
    qr: Matrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl ColPivQr {
    /// Factorises `a`. Diagonal entries of `R` no larger than
    /// `eps · min(m, n) · |R₀₀|` are treated as zero when computing the rank.
    pub fn new(a: &Matrix) -> Self {
        let (m, n) = (a.rows, a.cols);
        let k = m.min(n);
        let mut qr = a.clone();
        let mut tau = vec![0.0; k];
        let mut perm: Vec<usize> = (0..n).collect();

        for j in 0..k {
            // Pick the remaining column with the largest trailing norm.
            let norms: Vec<f64> = (j..n)
                .map(|c| (j..m).map(|r| qr.get(r, c).powi(2)).sum::<f64>())
                .collect();
            let (rel, _) =
                norms.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                );
            let p = j + rel;
            if p != j {
                for r in 0..m {
                    let tmp = qr.get(r, j);
                    qr.set(r, j, qr.get(r, p));
                    qr.set(r, p, tmp);
                }
                perm.swap(j, p);
            }

            let alpha = qr.get(j, j);
            let tail: f64 = (j + 1..m).map(|r| qr.get(r, j).powi(2)).sum();
            if tail == 0.0 {
                tau[j] = 0.0;
                continue;
            }
            let norm = (alpha * alpha + tail).sqrt();
            let beta = if alpha >= 0.0 { -norm } else { norm };
            tau[j] = (beta - alpha) / beta;
            let scale = 1.0 / (alpha - beta);
            for r in j + 1..m {
                qr.set(r, j, qr.get(r, j) * scale);
            }
            qr.set(j, j, beta);

            // Apply H = I - tau v vᵀ to the trailing columns.
            for c in j + 1..n {
                let mut dot = qr.get(j, c);
                for r in j + 1..m {
                    dot += qr.get(r, j) * qr.get(r, c);
                }
                dot *= tau[j];
                qr.set(j, c, qr.get(j, c) - dot);
                for r in j + 1..m {
                    qr.set(r, c, qr.get(r, c) - dot * qr.get(r, j));
                }
            }
        }

        let max_pivot = if k > 0 { qr.get(0, 0).abs() } else { 0.0 };
        let threshold = f64::EPSILON * k as f64 * max_pivot;
        let rank = (0..k).take_while(|&i| qr.get(i, i).abs() > threshold).count();
        Self { qr, tau, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_column_rank(&self) -> bool {
        self.rank == self.qr.cols
    }

    /// Column permutation: column `j` of `A P` is column `perm[j]` of `A`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Least-squares solution of `A x ≈ b`. With rank `r < n` the basic
    /// solution is returned: the `n − r` least significant pivoted unknowns are
    /// zero, which still minimises the residual.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (m, n) = (self.qr.rows, self.qr.cols);
        assert_eq!(b.len(), m);
        let mut c = b.to_vec();
        for j in 0..self.tau.len() {
            if self.tau[j] == 0.0 {
                continue;
            }
            let mut dot = c[j];
            for r in j + 1..m {
                dot += self.qr.get(r, j) * c[r];
            }
            dot *= self.tau[j];
            c[j] -= dot;
            for r in j + 1..m {
                c[r] -= dot * self.qr.get(r, j);
            }
        }
        let r = self.rank;
        let mut z = vec![0.0; n];
        for i in (0..r).rev() {
            let mut acc = c[i];
            for k in i + 1..r {
                acc -= self.qr.get(i, k) * z[k];
            }
            z[i] = acc / self.qr.get(i, i);
        }
        let mut x = vec![0.0; n];
        for (j, &col) in self.perm.iter().enumerate() {
            x[col] = z[j];
        }
        x
    }
}

/// Euclidean norm of `A x − b`.
pub fn residual_norm(a: &Matrix, x: &[f64], b: &[f64]) -> f64 {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| (ax - bi).powi(2))
        .sum::<f64>()
        .sqrt()
}
