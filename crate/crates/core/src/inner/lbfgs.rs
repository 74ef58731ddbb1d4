//! Limited-memory BFGS matrix in compact form.
//!
//! With `S = [s_0 .. s_{m-1}]`, `Y = [y_0 .. y_{m-1}]`, `D = diag(s_i'y_i)` and
//! `L` the strictly lower triangle of `S'Y`, the Hessian approximation is
//!
//! ```text
//! B = sigma I - W K^{-1} W',   W = [sigma S, Y],   K = [[sigma S'S, L], [L', -D]]
//! ```
//!
//! so products with `B` and solves with any principal submatrix of `B` only
//! need `2m x 2m` dense work.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Dyn, LU};

use super::obm::OrthantFace;
use crate::error::{check_dim, Result};
use crate::model::LinearOperator;
use crate::Vector;

/// Pairs with `s'y <= CURVATURE_TOL ||s|| ||y||` are skipped.
pub const CURVATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsUpdate {
    Accepted,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct LbfgsStore {
    dim: usize,
    memory: usize,
    s: VecDeque<Vector>,
    y: VecDeque<Vector>,
    sigma: f64,
    middle: Option<LU<f64, Dyn, Dyn>>,
    skipped: usize,
}

impl LbfgsStore {
    pub fn new(dim: usize, memory: usize) -> Self {
        assert!(memory > 0, "L-BFGS memory must be positive");
        Self {
            dim,
            memory,
            s: VecDeque::with_capacity(memory),
            y: VecDeque::with_capacity(memory),
            sigma: 1.0,
            middle: None,
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Diagonal scaling `sigma = y'y / s'y` of the newest pair (1 when empty).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Vector, &Vector)> {
        self.s.iter().zip(self.y.iter())
    }

    pub fn update(&mut self, s: &Vector, y: &Vector) -> Result<LbfgsUpdate> {
        check_dim("correction s", s.len(), self.dim)?;
        check_dim("correction y", y.len(), self.dim)?;
        let sy = s.dot(y);
        if !(sy > CURVATURE_TOL * s.norm() * y.norm()) {
            self.skipped += 1;
            return Ok(LbfgsUpdate::Skipped);
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s.clone());
        self.y.push_back(y.clone());
        self.sigma = y.norm_squared() / sy;
        self.refresh();
        Ok(LbfgsUpdate::Accepted)
    }

    fn middle_matrix(&self) -> DMatrix<f64> {
        let m = self.s.len();
        let mut k = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                k[(i, j)] = self.sigma * self.s[i].dot(&self.s[j]);
                if i > j {
                    let l = self.s[i].dot(&self.y[j]);
                    k[(i, m + j)] = l;
                    k[(m + j, i)] = l;
                }
            }
            k[(m + i, m + i)] = -self.s[i].dot(&self.y[i]);
        }
        k
    }

    fn refresh(&mut self) {
        self.middle = if self.s.is_empty() {
            None
        } else {
            Some(self.middle_matrix().lu())
        };
    }

    /// `W' v` restricted to the rows where `keep` holds.
    fn w_transpose(&self, v: &Vector, keep: impl Fn(usize) -> bool) -> Vector {
        let m = self.s.len();
        let mut out = Vector::zeros(2 * m);
        for i in 0..m {
            let (mut ss, mut yy) = (0.0, 0.0);
            for r in (0..self.dim).filter(|&r| keep(r)) {
                ss += self.s[i][r] * v[r];
                yy += self.y[i][r] * v[r];
            }
            out[i] = self.sigma * ss;
            out[m + i] = yy;
        }
        out
    }

    /// `W c` as a full-length vector.
    fn w_times(&self, c: &Vector) -> Vector {
        let m = self.s.len();
        let mut out = Vector::zeros(self.dim);
        for i in 0..m {
            out.axpy(self.sigma * c[i], &self.s[i], 1.0);
            out.axpy(c[m + i], &self.y[i], 1.0);
        }
        out
    }

    /// `B v` through the compact representation.
    pub fn hessian_apply(&self, v: &Vector) -> Vector {
        let mut out = v * self.sigma;
        if let Some(lu) = &self.middle {
            let wv = self.w_transpose(v, |_| true);
            if let Some(c) = lu.solve(&wv) {
                out -= self.w_times(&c);
            }
        }
        out
    }

    /// `B^{-1} v` by the two-loop recursion with `H_0 = I / sigma`.
    pub fn inverse_apply(&self, v: &Vector) -> Vector {
        let m = self.s.len();
        let mut q = v.clone();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            let rho = 1.0 / self.y[i].dot(&self.s[i]);
            alpha[i] = rho * self.s[i].dot(&q);
            q.axpy(-alpha[i], &self.y[i], 1.0);
        }
        let mut r = q / self.sigma;
        for i in 0..m {
            let rho = 1.0 / self.y[i].dot(&self.s[i]);
            let beta = rho * self.y[i].dot(&r);
            r.axpy(alpha[i] - beta, &self.s[i], 1.0);
        }
        r
    }

    /// Exact solve of the reduced Newton system on the free variables of
    /// `face`: `d_F = -(B_FF)^{-1} v_F`, `d_A = 0`.
    ///
    /// Uses the Sherman-Morrison-Woodbury form of `sigma I_F - W_F K^{-1} W_F'`.
    /// Returns the direction and whether the scaled steepest-descent fallback
    /// was taken.
    pub fn reduced_inverse_solve(&self, face: &OrthantFace, v: &Vector) -> Result<(Vector, bool)> {
        check_dim("subgradient", v.len(), self.dim)?;
        check_dim("face", face.omega().len(), self.dim)?;
        let free = |i: usize| face.omega()[i] != 0;
        let vf = Vector::from_fn(self.dim, |i, _| if free(i) { v[i] } else { 0.0 });
        let steepest = -&vf / self.sigma;
        if self.s.is_empty() {
            return Ok((steepest, false));
        }
        let m = self.s.len();
        // W_F' W_F
        let mut gram = DMatrix::zeros(2 * m, 2 * m);
        let cols: Vec<Vector> = (0..2 * m)
            .map(|c| {
                let src = if c < m { &self.s[c] * self.sigma } else { self.y[c - m].clone() };
                Vector::from_fn(self.dim, |i, _| if free(i) { src[i] } else { 0.0 })
            })
            .collect();
        for a in 0..2 * m {
            for b in a..2 * m {
                let g = cols[a].dot(&cols[b]);
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let small = self.middle_matrix() - gram / self.sigma;
        let rhs = self.w_transpose(&vf, free);
        let Some(c) = small.lu().solve(&rhs) else {
            return Ok((steepest, true));
        };
        let mut correction = Vector::zeros(self.dim);
        for (a, col) in cols.iter().enumerate() {
            correction.axpy(c[a], col, 1.0);
        }
        let d = steepest - correction / (self.sigma * self.sigma);
        if d.iter().all(|x| x.is_finite()) {
            Ok((d, false))
        } else {
            Ok((-&vf / self.sigma, true))
        }
    }
}

impl LinearOperator for LbfgsStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &Vector) -> Vector {
        self.hessian_apply(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::materialize;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_store(n: usize, m: usize, pairs: usize, seed: u64) -> LbfgsStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n);
        let mut store = LbfgsStore::new(n, m);
        for _ in 0..pairs {
            let s = random_vec(n, &mut rng);
            let y = &a * &s;
            store.update(&s, &y).unwrap();
        }
        store
    }

    #[test]
    fn curvature_guard_skips_pairs() {
        let mut store = LbfgsStore::new(2, 5);
        let s = Vector::from_vec(vec![1.0, 0.0]);
        let y = Vector::from_vec(vec![-1.0, 0.0]);
        assert_eq!(store.update(&s, &y).unwrap(), LbfgsUpdate::Skipped);
        assert!(store.is_empty());
        assert_eq!(store.skipped(), 1);
        assert_eq!(store.sigma(), 1.0);
    }

    #[test]
    fn memory_one_keeps_newest() {
        let mut store = LbfgsStore::new(2, 1);
        store.update(&Vector::from_vec(vec![1.0, 0.0]), &Vector::from_vec(vec![2.0, 0.0])).unwrap();
        store.update(&Vector::from_vec(vec![0.0, 1.0]), &Vector::from_vec(vec![0.0, 3.0])).unwrap();
        assert_eq!(store.len(), 1);
        let (s, y) = store.pairs().next().unwrap();
        assert_eq!(s[1], 1.0);
        assert_eq!(y[1], 3.0);
        assert_eq!(store.sigma(), 3.0);
    }

    #[test]
    fn apply_and_inverse_are_mutual_inverses() {
        let store = random_store(12, 5, 9, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let v = random_vec(12, &mut rng);
            let back = store.inverse_apply(&store.hessian_apply(&v));
            assert!((back - &v).norm() <= 1e-8 * v.norm());
        }
    }

    #[test]
    fn recovers_quadratic_hessian_from_conjugate_pairs() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n);
        let eig = SymmetricEigen::new(a.clone());
        let mut store = LbfgsStore::new(n, 10);
        for i in 0..n {
            let s = eig.eigenvectors.column(i).into_owned();
            let y = &a * &s;
            assert_eq!(store.update(&s, &y).unwrap(), LbfgsUpdate::Accepted);
        }
        for _ in 0..5 {
            let v = random_vec(n, &mut rng);
            assert!((store.hessian_apply(&v) - &a * &v).norm() <= 1e-6 * (&a * &v).norm());
        }
    }

    #[test]
    fn hessian_is_spd_after_updates() {
        let store = random_store(10, 4, 12, 8);
        let dense = materialize(&store);
        assert!((&dense - dense.transpose()).amax() < 1e-10);
        let eig = SymmetricEigen::new(dense).eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn empty_store_reduced_solve_is_steepest_descent() {
        let store = LbfgsStore::new(3, 4);
        let face = OrthantFace::new(vec![1, 0, -1]);
        let v = Vector::from_vec(vec![0.5, 0.0, -2.0]);
        let (d, fallback) = store.reduced_inverse_solve(&face, &v).unwrap();
        assert!(!fallback);
        assert_eq!(d, Vector::from_vec(vec![-0.5, 0.0, 2.0]));
    }

    #[test]
    fn full_face_reduced_solve_matches_two_loop() {
        let store = random_store(9, 4, 6, 3);
        let face = OrthantFace::new(vec![1; 9]);
        let v = random_vec(9, &mut ChaCha8Rng::seed_from_u64(7));
        let (d, _) = store.reduced_inverse_solve(&face, &v).unwrap();
        let two_loop = -store.inverse_apply(&v);
        assert!((d - &two_loop).norm() <= 1e-10 * two_loop.norm());
    }

    #[test]
    fn reduced_solve_matches_dense_assembly() {
        for seed in 0..5 {
            let store = random_store(8, 3, 5, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let omega: Vec<i8> = (0..8).map(|_| [-1, 0, 1][rng.random_range(0..3)]).collect();
            let face = OrthantFace::new(omega.clone());
            let v = random_vec(8, &mut rng);
            let (d, _) = store.reduced_inverse_solve(&face, &v).unwrap();

            let dense = materialize(&store);
            let free: Vec<usize> = (0..8).filter(|&i| omega[i] != 0).collect();
            let bff = DMatrix::from_fn(free.len(), free.len(), |a, b| dense[(free[a], free[b])]);
            let vf = Vector::from_fn(free.len(), |a, _| v[free[a]]);
            let df = bff.lu().solve(&(-vf)).unwrap();
            let mut expected = Vector::zeros(8);
            for (a, &i) in free.iter().enumerate() {
                expected[i] = df[a];
            }
            assert!((d - &expected).norm() <= 1e-8 * expected.norm().max(1.0));
        }
    }
}
