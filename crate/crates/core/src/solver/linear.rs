use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self { lower: vec![0.0; off], diag: vec![0.0; n], upper: vec![0.0; off] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`; `|i - j|` must be at most one.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.diag[i] += v;
        } else if j == i + 1 {
            self.upper[i] += v;
        } else if i == j + 1 {
            self.lower[j] += v;
        } else {
            panic!("entry ({i}, {j}) is outside the tridiagonal band");
        }
    }

    /// Adds `v` at `(i, j)` and `(j, i)` (once if `i == j`).
    pub fn add_symmetric(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Principal sub-block on rows/columns `start..end`.
    pub fn block(&self, start: usize, end: usize) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower[start..end - 1].to_vec(),
            diag: self.diag[start..end].to_vec(),
            upper: self.upper[start..end - 1].to_vec(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.lower, &self.diag, &self.upper, rhs)
    }
}

/// Thomas elimination. `lower[i]` sits at `(i+1, i)`, `upper[i]` at `(i, i+1)`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || lower.len() + 1 != n.max(1) || upper.len() + 1 != n.max(1) {
        return Err(Error::InvalidInput("tridiagonal dimensions do not match".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::ZeroPivot { row: 0 });
    }
    if n > 1 {
        c[0] = upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i - 1] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::ZeroPivot { row: i });
        }
        if i + 1 < n {
            c[i] = upper[i] / pivot;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Dense LU with partial pivoting.
pub fn solve_dense(a: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let b = DVector::from_column_slice(rhs);
    let x = a.clone().lu().solve(&b).ok_or(Error::SingularJacobian)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian);
    }
    Ok(x.iter().copied().collect())
}

/// Linearized system handed back by a Jacobian callback.
#[derive(Debug, Clone)]
pub enum LinearSystem {
    Tridiagonal(Tridiagonal),
    Dense(DMatrix<f64>),
}

impl LinearSystem {
    pub fn len(&self) -> usize {
        match self {
            LinearSystem::Tridiagonal(t) => t.len(),
            LinearSystem::Dense(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            LinearSystem::Tridiagonal(t) => match t.solve(rhs) {
                Ok(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
                // elimination without pivoting broke down; retry with pivoting
                _ => solve_dense(&t.to_dense(), rhs),
            },
            LinearSystem::Dense(m) => solve_dense(m, rhs),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinearSystem::Tridiagonal(t) => t.to_dense(),
            LinearSystem::Dense(m) => m.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let r = vec![1.0, -2.0, 3.5, 4.0];
        let x = solve_tridiagonal(&[0.0; 3], &[1.0; 4], &[0.0; 3], &r).unwrap();
        assert_eq!(x, r);
    }

    #[test]
    fn laplacian_recovers_quadratic() {
        let n = 20;
        let u: Vec<f64> = (1..=n).map(|i| (i as f64 / (n + 1) as f64).powi(2)).collect();
        let a = Tridiagonal { lower: vec![-1.0; n - 1], diag: vec![2.0; n], upper: vec![-1.0; n - 1] };
        let rhs = a.mul_vec(&u);
        let x = a.solve(&rhs).unwrap();
        for (p, q) in x.iter().zip(&u) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let err = solve_tridiagonal(&[1.0], &[0.0, 1.0], &[1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::ZeroPivot { row: 0 }));
    }

    #[test]
    fn fallback_pivots_when_thomas_fails() {
        // [[0, 1], [1, 0]] needs a row swap
        let sys = LinearSystem::Tridiagonal(Tridiagonal { lower: vec![1.0], diag: vec![0.0, 0.0], upper: vec![1.0] });
        let x = sys.solve(&[2.0, 3.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }
}
