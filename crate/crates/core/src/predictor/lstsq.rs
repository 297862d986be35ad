//! Minimum-norm least squares for tall, thin matrices.
//!
//! Householder QR with column pivoting reveals the numerical rank. Full-rank
//! problems are finished by back substitution; rank-deficient ones by a second
//! QR of the leading `r x m` trapezoid, which yields the minimum-norm solution
//! (the pseudo-inverse applied to the right-hand side).

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// `|R_00| / |R_rr|` over the retained pivots; 1 for rank <= 1, infinity for rank 0.
    pub condition_estimate: f64,
}

/// Solves `min ||b - A a||` where `A` is given by its columns (each of length `rows`).
pub fn solve(columns: &[&[f64]], rows: usize, b: &[f64]) -> LsSolution {
    let m = columns.len();
    if m == 0 || rows == 0 {
        return LsSolution {
            coefficients: vec![0.0; m],
            rank: 0,
            condition_estimate: f64::INFINITY,
        };
    }

    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = columns.iter().map(|c| c.to_vec()).collect();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..m).collect();

    let max_norm = a.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let tol = rows.max(m) as f64 * f64::EPSILON * max_norm;

    let steps = rows.min(m);
    let mut diag = Vec::with_capacity(steps);
    for k in 0..steps {
        // Pivot on the largest remaining partial column norm.
        let (pivot, _) = (k..m)
            .map(|j| (j, norm(&a[j][k..])))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        a.swap(k, pivot);
        perm.swap(k, pivot);

        let Some(v) = householder(&a[k][k..]) else {
            diag.push(0.0);
            continue;
        };
        let alpha = reflect_column(&v, &mut a[k][k..]);
        for j in (k + 1)..m {
            reflect(&v, &mut a[j][k..]);
        }
        reflect(&v, &mut rhs[k..]);
        a[k][k] = alpha;
        diag.push(alpha);
    }

    let rank = diag.iter().take_while(|r| r.abs() > tol).count();
    if rank == 0 {
        return LsSolution {
            coefficients: vec![0.0; m],
            rank: 0,
            condition_estimate: f64::INFINITY,
        };
    }
    let condition_estimate = diag[0].abs() / diag[rank - 1].abs();

    // R is stored as a[j][i] for i <= j (column j, row i).
    let c = &rhs[..rank];
    let pivoted = if rank == m {
        back_substitute(|i, j| a[j][i], c)
    } else {
        min_norm_trapezoid(&a, rank, c)
    };

    let mut coefficients = vec![0.0; m];
    for (i, &p) in perm.iter().enumerate() {
        coefficients[p] = pivoted[i];
    }
    LsSolution {
        coefficients,
        rank,
        condition_estimate,
    }
}

/// Minimum-norm solution of `W a = c` with `W = R[0..r, 0..m]` full row rank.
///
/// Factor `W^T = Q2 R2`, so `W = R2^T Q2^T` and `a = Q2 [R2^{-T} c; 0]`.
fn min_norm_trapezoid(r_cols: &[Vec<f64>], rank: usize, c: &[f64]) -> Vec<f64> {
    let m = r_cols.len();
    // W^T is m x rank; store its columns (= rows of W).
    let mut wt: Vec<Vec<f64>> = (0..rank)
        .map(|i| (0..m).map(|j| if j >= i { r_cols[j][i] } else { 0.0 }).collect())
        .collect();
    let mut reflectors = Vec::with_capacity(rank);
    for k in 0..rank {
        let v = householder(&wt[k][k..]);
        if let Some(v) = &v {
            let alpha = reflect_column(v, &mut wt[k][k..]);
            for j in (k + 1)..rank {
                reflect(v, &mut wt[j][k..]);
            }
            wt[k][k] = alpha;
        }
        reflectors.push(v);
    }
    // Forward substitution with R2^T (lower triangular): R2^T[i][j] = R2[j][i] = wt[i][j].
    let mut z = vec![0.0; m];
    for i in 0..rank {
        let mut s = c[i];
        for j in 0..i {
            s -= wt[i][j] * z[j];
        }
        z[i] = s / wt[i][i];
    }
    // Apply Q2 = H_0 H_1 ... H_{r-1} to [z; 0].
    for k in (0..rank).rev() {
        if let Some(v) = &reflectors[k] {
            reflect(v, &mut z[k..]);
        }
    }
    z
}

fn back_substitute(r: impl Fn(usize, usize) -> f64, c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = c[i];
        for j in (i + 1)..n {
            s -= r(i, j) * x[j];
        }
        x[i] = s / r(i, i);
    }
    x
}

/// Unit Householder vector `v` with `(I - 2 v v^T) x = alpha e_1`, or `None` for `x = 0`.
fn householder(x: &[f64]) -> Option<Vec<f64>> {
    let nx = norm(x);
    if nx == 0.0 {
        return None;
    }
    let alpha = if x[0] >= 0.0 { -nx } else { nx };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let nv = norm(&v);
    if nv == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|vi| *vi /= nv);
    Some(v)
}

/// Applies the reflector to the column it was built from and returns the new
/// leading entry; the entries below it are zeroed.
fn reflect_column(v: &[f64], x: &mut [f64]) -> f64 {
    reflect(v, x);
    let alpha = x[0];
    x[1..].iter_mut().for_each(|xi| *xi = 0.0);
    alpha
}

fn reflect(v: &[f64], x: &mut [f64]) {
    let s = 2.0 * v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

fn norm(x: &[f64]) -> f64 {
    // Scaled to avoid overflow/underflow on extreme inputs.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale) * (v / scale)).sum::<f64>().sqrt()
}
