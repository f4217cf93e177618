//! Dense Lyapunov solvers.
//!
//! [`LyapunovSolver`] handles the ordinary equation `PA + AᵀP + Q = 0` for a
//! Hurwitz `A` by Bartels–Stewart on the real Schur form. The swing model has
//! one marginal mode `A v₀ = 0`, which makes that equation singular;
//! [`ConstrainedLyapunov`] removes it by restricting to `v₀⊥`.
//!
//! With `U` an orthonormal basis of `v₀⊥` and `P = U Y Uᵀ`, the equation
//! projected onto `v₀⊥` is `Y Ã + ÃᵀY + UᵀQU = 0` with `Ã = UᵀAU`. The
//! components along `v₀` vanish identically because `Av₀ = 0`, `Qv₀ = 0` and
//! `Pv₀ = 0`, so this reduced equation is equivalent to the constrained
//! problem. `Ã` carries the remaining (stable) spectrum of `A`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::symmetrize;

/// Accepted relative residual `‖PA + AᵀP + Q‖_F / (1 + ‖Q‖_F)`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Residual below which no refinement step is attempted.
const REFINE_TOL: f64 = 1e-13;

/// Diagonal block partition `(start, size)` of a quasi-upper-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Result<Vec<(usize, usize)>> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::Schur);
            }
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    Ok(blocks)
}

/// Solves `X T_ll + T_kkᵀ X = R` for a `p×q` block via its Kronecker form.
fn solve_small_sylvester(
    t_kk: &DMatrix<f64>,
    t_ll: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (p, q) = (t_kk.nrows(), t_ll.nrows());
    if p == 1 && q == 1 {
        let denom = t_kk[(0, 0)] + t_ll[(0, 0)];
        if denom == 0.0 {
            return Err(Error::Lyapunov {
                residual: f64::INFINITY,
            });
        }
        return Ok(DMatrix::from_element(1, 1, r[(0, 0)] / denom));
    }
    let dim = p * q;
    let mut k = DMatrix::zeros(dim, dim);
    for j in 0..q {
        for i in 0..p {
            let row = i + p * j;
            for c in 0..q {
                k[(row, i + p * c)] += t_ll[(c, j)];
            }
            for rr in 0..p {
                k[(row, rr + p * j)] += t_kk[(rr, i)];
            }
        }
    }
    let rhs = DVector::from_column_slice(r.as_slice());
    let x = k.lu().solve(&rhs).ok_or(Error::Lyapunov {
        residual: f64::INFINITY,
    })?;
    Ok(DMatrix::from_column_slice(p, q, x.as_slice()))
}

/// Solves `X T + Tᵀ X = R` for quasi-upper-triangular `T`.
fn solve_quasi_triangular(
    t: &DMatrix<f64>,
    blocks: &[(usize, usize)],
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let mut x = DMatrix::zeros(n, n);
    for &(sk, pk) in blocks {
        for &(sl, ql) in blocks {
            let mut rhs = r.view((sk, sl), (pk, ql)).clone_owned();
            if sl > 0 {
                rhs -= x.view((sk, 0), (pk, sl)) * t.view((0, sl), (sl, ql));
            }
            if sk > 0 {
                rhs -= t.view((0, sk), (sk, pk)).transpose() * x.view((0, sl), (sk, ql));
            }
            let t_kk = t.view((sk, sk), (pk, pk)).clone_owned();
            let t_ll = t.view((sl, sl), (ql, ql)).clone_owned();
            let block = solve_small_sylvester(&t_kk, &t_ll, &rhs)?;
            x.view_mut((sk, sl), (pk, ql)).copy_from(&block);
        }
    }
    Ok(x)
}

/// `PA + AᵀP + Q`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    p * a + a.transpose() * p + q
}

/// `‖PA + AᵀP + Q‖_F / (1 + ‖Q‖_F)`.
pub fn relative_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    lyapunov_residual(a, p, q).norm() / (1.0 + q.norm())
}

/// Bartels–Stewart solver for `PA + AᵀP + Q = 0` with `A` Hurwitz. The real
/// Schur factorization is computed once and reused across right-hand sides.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    blocks: Vec<(usize, usize)>,
}

impl LyapunovSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: a.ncols(),
            });
        }
        let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100 * n.max(10))
            .ok_or(Error::Schur)?;
        let (q, t) = schur.unpack();
        let blocks = diagonal_blocks(&t)?;
        Ok(LyapunovSolver {
            a: a.clone(),
            q,
            t,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn solve_once(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        // A = Z T Zᵀ  ⇒  (ZᵀPZ) T + Tᵀ (ZᵀPZ) = -ZᵀQZ
        let r = -(self.q.transpose() * q * &self.q);
        let x = solve_quasi_triangular(&self.t, &self.blocks, &r)?;
        let mut p = &self.q * x * self.q.transpose();
        symmetrize(&mut p);
        Ok(p)
    }

    /// Solution of `PA + AᵀP + Q = 0`, with at most one refinement step.
    pub fn solve(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut p = self.solve_once(q)?;
        let res = relative_residual(&self.a, &p, q);
        if res > REFINE_TOL {
            let correction = self.solve_once(&lyapunov_residual(&self.a, &p, q))?;
            p += correction;
        }
        let res = relative_residual(&self.a, &p, q);
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Lyapunov { residual: res });
        }
        Ok(p)
    }
}

/// Reference solver through the `n²×n²` Kronecker system. Only suitable for
/// small `n`; kept as an independent check of the Schur path.
pub fn solve_lyapunov_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = at.kronecker(&eye) + eye.kronecker(&at);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = k.lu().solve(&rhs).ok_or(Error::Lyapunov {
        residual: f64::INFINITY,
    })?;
    let mut p = DMatrix::from_column_slice(n, n, x.as_slice());
    symmetrize(&mut p);
    Ok(p)
}

/// Orthonormal basis (as columns) of the complement of `v`, from a
/// Householder reflector mapping `v/‖v‖` onto the last unit vector.
pub fn complement_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let mut u = v / v.norm();
    let sign = if u[n - 1] > 0.0 { -1.0 } else { 1.0 };
    // H = I - 2uuᵀ/uᵀu with u = v̂ + sign·e_last avoids cancellation
    u[n - 1] -= sign;
    let h = DMatrix::identity(n, n) - (&u * u.transpose()) * (2.0 / u.norm_squared());
    h.columns(0, n - 1).clone_owned()
}

/// Solver for `PA + AᵀP + Q = 0` subject to `P v₀ = 0`, where `A v₀ = 0` is
/// the only marginal mode and `Q v₀ = 0`.
#[derive(Debug, Clone)]
pub struct ConstrainedLyapunov {
    a: DMatrix<f64>,
    null_vector: DVector<f64>,
    basis: DMatrix<f64>,
    reduced: LyapunovSolver,
}

impl ConstrainedLyapunov {
    pub fn new(a: &DMatrix<f64>, null_vector: &DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if null_vector.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: null_vector.len(),
            });
        }
        let drift = (a * null_vector).norm() / (1.0 + a.norm() * null_vector.norm());
        if drift > 1e-12 {
            return Err(Error::invalid("v0", "is not a right null vector of A"));
        }
        let basis = complement_basis(null_vector);
        let reduced_a = basis.transpose() * a * &basis;
        Ok(ConstrainedLyapunov {
            a: a.clone(),
            null_vector: null_vector.clone(),
            basis,
            reduced: LyapunovSolver::new(&reduced_a)?,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn solve(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let leak = (q * &self.null_vector).norm() / (self.null_vector.norm() * (1.0 + q.norm()));
        if leak > 1e-10 {
            return Err(Error::invalid("Q", "right-hand side must satisfy Q v0 = 0"));
        }
        let reduced_q = self.basis.transpose() * q * &self.basis;
        let y = self.reduced.solve(&reduced_q)?;
        let mut p = &self.basis * y * self.basis.transpose();
        symmetrize(&mut p);
        let res = relative_residual(&self.a, &p, q);
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Lyapunov { residual: res });
        }
        Ok(p)
    }
}

/// Observability Gramian of the swing model, partitioned as
/// `P = [X₁ X₀; X₀ᵀ X₂]` (angle–angle, angle–frequency, frequency–frequency).
#[derive(Debug, Clone)]
pub struct Gramian {
    pub p: DMatrix<f64>,
    pub n: usize,
}

impl Gramian {
    pub fn x1(&self) -> DMatrix<f64> {
        self.p.view((0, 0), (self.n, self.n)).clone_owned()
    }

    pub fn x0(&self) -> DMatrix<f64> {
        self.p.view((0, self.n), (self.n, self.n)).clone_owned()
    }

    pub fn x2(&self) -> DMatrix<f64> {
        self.p
            .view((self.n, self.n), (self.n, self.n))
            .clone_owned()
    }
}

/// Unique `P` with `PA + AᵀP + Q = 0` and `P v₀ = 0`.
pub fn solve_constrained_lyapunov(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    v0: &DVector<f64>,
) -> Result<Gramian> {
    if !a.nrows().is_multiple_of(2) {
        return Err(Error::invalid(
            "A",
            "swing model has an even state dimension",
        ));
    }
    let p = ConstrainedLyapunov::new(a, v0)?.solve(q)?;
    Ok(Gramian {
        p,
        n: a.nrows() / 2,
    })
}
