//! Adjoint action of the translation element and its rank filtration.
//!
//! The total commutator dimension `p = sum_{l=1}^{s-1} rank((Ad - id)^l)` is the
//! predicted polynomial degree of spanning-set growth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nilgroup::{dimension, index, level_range, NilSystem};

/// Default relative tolerance for singular-value ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Matrix of `Ad_tau` in the level-ordered basis `{E_ij}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointMatrix {
    size: usize,
    matrix: DMatrix<f64>,
}

impl AdjointMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Ad - id`.
    pub fn nilpotent_part(&self) -> DMatrix<f64> {
        &self.matrix - DMatrix::identity(self.dim(), self.dim())
    }

    /// True when `Ad` is block lower triangular over levels with identity diagonal
    /// blocks, to within `tol`.
    pub fn preserves_filtration(&self, tol: f64) -> bool {
        let m = self.size;
        for row_level in 1..m {
            for col_level in row_level..m {
                for r in level_range(m, row_level) {
                    for c in level_range(m, col_level) {
                        let expected = if r == c { 1.0 } else { 0.0 };
                        if row_level <= col_level && (self.matrix[(r, c)] - expected).abs() > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Rank of the level `l -> l + 1` block of `Ad - id`, for `l = 1..s-1`.
    ///
    /// Each entry being positive says that `[tau, G_l]` is not contained in `G_{l+2}`.
    pub fn level_step_ranks(&self, tol: f64) -> Result<Vec<usize>> {
        let m = self.size;
        let n = self.nilpotent_part();
        (1..m.saturating_sub(1))
            .map(|l| {
                let rows = level_range(m, l + 1);
                let cols = level_range(m, l);
                let block = n.view((rows.start, cols.start), (rows.len(), cols.len()));
                numerical_rank(&block.into_owned(), tol)
            })
            .collect()
    }
}

/// Column-wise conjugation `Ad_tau(E_ij) = M_tau E_ij M_tau^-1`.
pub fn adjoint(sys: &NilSystem) -> AdjointMatrix {
    let m = sys.size();
    let d = dimension(m);
    let tau = full_matrix(sys.tau().coords(), m);
    let tau_inv = full_matrix(sys.tau().inverse().coords(), m);
    let mut matrix = DMatrix::zeros(d, d);
    for i in 0..m {
        for j in i + 1..m {
            let mut e = DMatrix::zeros(m, m);
            e[(i, j)] = 1.0;
            let image = &tau * e * &tau_inv;
            let col = index(m, i, j);
            for a in 0..m {
                for b in a + 1..m {
                    matrix[(index(m, a, b), col)] = image[(a, b)];
                }
            }
        }
    }
    AdjointMatrix { size: m, matrix }
}

fn full_matrix(coords: &[f64], m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m, m);
    for i in 0..m {
        for j in i + 1..m {
            out[(i, j)] = coords[index(m, i, j)];
        }
    }
    out
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Precondition(format!("rank tolerance {tol} not in (0, 1)")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank input"));
    }
    if m.is_empty() {
        return Ok(0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|v| **v > tol * max).count())
}

/// Ranks of `(A - id)^l` for `l = 1..s-1` and their sum `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub ranks: Vec<usize>,
    pub p: usize,
    pub tol: f64,
}

impl RankProfile {
    /// `rank(A - id)`, zero when the profile is empty.
    pub fn first_rank(&self) -> usize {
        self.ranks.first().copied().unwrap_or(0)
    }
}

/// Total commutator dimension of a unipotent matrix with nilpotency bound `s`.
///
/// Call with `s = d` for a generic `d x d` unipotent matrix; powers beyond the
/// nilpotency index vanish, so the sum is unchanged.
pub fn total_commutator_dimension(a: &DMatrix<f64>, s: usize, tol: f64) -> Result<RankProfile> {
    if !a.is_square() {
        return Err(Error::Precondition("matrix must be square".into()));
    }
    let d = a.nrows();
    let n = a - DMatrix::identity(d, d);
    let mut pow = DMatrix::identity(d, d);
    let mut ranks = Vec::with_capacity(s.saturating_sub(1));
    for l in 1..=s {
        pow = &pow * &n;
        if l < s {
            ranks.push(numerical_rank(&pow, tol)?);
        }
    }
    let residual = pow.norm();
    let bound = 1e-8 * a.norm().powi(s as i32);
    if residual > bound {
        return Err(Error::NotUnipotent { residual, bound });
    }
    let p = ranks.iter().sum();
    Ok(RankProfile { ranks, p, tol })
}

/// `p >= rank(Ad - id) >= s - 1`; vacuous for `s <= 1`.
pub fn check_exponent_lower_bound(profile: &RankProfile, s: usize) -> bool {
    if s <= 1 {
        return true;
    }
    let r1 = profile.first_rank();
    profile.p >= r1 && r1 >= s - 1
}

/// Rank profile of a nilsystem relative to the full unitriangular group.
pub fn system_profile(sys: &NilSystem, tol: f64) -> Result<RankProfile> {
    let ad = adjoint(sys);
    total_commutator_dimension(ad.matrix(), sys.step(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nilgroup::{GroupElement, LieVector};
    use rand::{Rng, SeedableRng};

    use rand_chacha::ChaCha8Rng;

    fn sys3(a: f64, b: f64, c: f64) -> NilSystem {
        NilSystem::new(GroupElement::from_coords(3, &[a, b, c]).unwrap(), 2).unwrap()
    }

    #[test]
    fn identity_translation_gives_identity() {
        let ad = adjoint(&sys3(0.0, 0.0, 0.0));
        assert_eq!(ad.matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn heisenberg_closed_form() {
        // tau g tau^-1 = (u, v, w + a v - b u)
        let (a, b, c) = (0.3, -0.8, 0.45);
        let n = adjoint(&sys3(a, b, c)).nilpotent_part();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(2, 0)] = -b;
        expected[(2, 1)] = a;
        assert!((n - expected).abs().max() < 1e-15);
    }

    #[test]
    fn ad_minus_id_is_nilpotent_for_defaults() {
        for m in [3, 4, 5] {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let ad = adjoint(&sys);
            let n = ad.nilpotent_part();
            let mut pow = DMatrix::identity(ad.dim(), ad.dim());
            for _ in 0..sys.step() {
                pow = &pow * &n;
            }
            assert!(pow.abs().max() < 1e-10);
            assert!(ad.preserves_filtration(1e-14));
        }
    }

    #[test]
    fn conjugation_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [3, 4] {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let ad = adjoint(&sys);
            for _ in 0..20 {
                let c: Vec<f64> = (0..dimension(m)).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let xi = LieVector::from_coords(m, &c).unwrap();
                let lhs = *sys.tau() * xi.exp() * sys.tau().inverse();
                let image = ad.matrix() * nalgebra::DVector::from_column_slice(&c);
                let rhs = LieVector::from_coords(m, image.as_slice()).unwrap().exp();
                assert!(lhs.max_abs_diff(&rhs) < 1e-10);
            }
        }
    }

    #[test]
    fn finite_difference_oracle() {
        // derivative of g -> tau g tau^-1 at the identity, in log coordinates
        let h = 1e-6;
        for m in [3, 4] {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let d = dimension(m);
            let ad = adjoint(&sys);
            for col in 0..d {
                let mut plus = vec![0.0; d];
                plus[col] = h;
                let mut minus = vec![0.0; d];
                minus[col] = -h;
                let f = |c: &[f64]| {
                    let g = LieVector::from_coords(m, c).unwrap().exp();
                    (*sys.tau() * g * sys.tau().inverse()).log()
                };
                let fp = f(&plus);
                let fm = f(&minus);
                for row in 0..d {
                    let fd = (fp.coords()[row] - fm.coords()[row]) / (2.0 * h);
                    assert!((fd - ad.matrix()[(row, col)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::zeros(4, 4), 1e-8).unwrap(), 0);
        assert_eq!(numerical_rank(&DMatrix::identity(5, 5), 1e-8).unwrap(), 5);
        let n = adjoint(&NilSystem::heisenberg()).nilpotent_part();
        assert_eq!(numerical_rank(&n, 1e-8).unwrap(), 1);
        assert!(numerical_rank(&n, 0.0).is_err());
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = f64::INFINITY;
        assert!(matches!(numerical_rank(&bad, 1e-8), Err(Error::NonFinite(_))));
    }

    #[test]
    fn default_profiles() {
        let p3 = system_profile(&NilSystem::heisenberg(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p3.ranks, vec![1]);
        assert_eq!(p3.p, 1);
        assert!(check_exponent_lower_bound(&p3, 2));

        let p4 = system_profile(&NilSystem::with_default_tau(4).unwrap(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p4.ranks, vec![3, 1]);
        assert_eq!(p4.p, 4);
        assert!(check_exponent_lower_bound(&p4, 3));

        let p2 = system_profile(&NilSystem::with_default_tau(2).unwrap(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p2.p, 0);
        assert!(check_exponent_lower_bound(&p2, 1));
    }

    #[test]
    fn non_unipotent_rejected() {
        let a = DMatrix::from_diagonal_element(2, 2, 2.0);
        assert!(matches!(
            total_commutator_dimension(&a, 2, 1e-8),
            Err(Error::NotUnipotent { .. })
        ));
    }

    #[test]
    fn filtration_is_strict_for_defaults() {
        for m in [3, 4] {
            let ad = adjoint(&NilSystem::with_default_tau(m).unwrap());
            let ranks = ad.level_step_ranks(1e-8).unwrap();
            assert_eq!(ranks.len(), m - 2);
            assert!(ranks.iter().all(|r| *r >= 1));
        }
    }

    #[test]
    fn ranks_drop_strictly_while_nonzero() {
        for m in [3, 4, 5, 6] {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let ad = adjoint(&sys);
            let n = ad.nilpotent_part();
            let mut pow = DMatrix::identity(ad.dim(), ad.dim());
            let mut prev = ad.dim();
            for _ in 0..sys.step() {
                pow = &pow * &n;
                let r = numerical_rank(&pow, 1e-8).unwrap();
                assert!(r < prev || r == 0);
                prev = r;
            }
        }
    }

    fn gaussian_rank(mut a: Vec<Vec<f64>>, tol: f64) -> usize {
        let rows = a.len();
        let cols = a[0].len();
        let mut rank = 0;
        for c in 0..cols {
            let pivot = (rank..rows).max_by(|x, y| a[*x][c].abs().total_cmp(&a[*y][c].abs()));
            let Some(p) = pivot else { break };
            if a[p][c].abs() <= tol {
                continue;
            }
            a.swap(rank, p);
            for r in rank + 1..rows {
                let f = a[r][c] / a[rank][c];
                for k in c..cols {
                    a[r][k] -= f * a[rank][k];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn rank_profile_matches_elimination_oracle() {
        // finite-difference Ad, then powers of (Ad - id) ranked by elimination
        let h = 1e-5;
        for (m, expected) in [(3usize, vec![1usize]), (4, vec![3, 1])] {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let d = dimension(m);
            let mut n = vec![vec![0.0; d]; d];
            for col in 0..d {
                let mut c = vec![0.0; d];
                c[col] = h;
                let g = LieVector::from_coords(m, &c).unwrap().exp();
                let img = (*sys.tau() * g * sys.tau().inverse()).log();
                for row in 0..d {
                    n[row][col] = img.coords()[row] / h - if row == col { 1.0 } else { 0.0 };
                }
            }
            let mut pow = n.clone();
            let mut ranks = Vec::new();
            for l in 1..sys.step() {
                if l > 1 {
                    pow = (0..d)
                        .map(|i| (0..d).map(|j| (0..d).map(|k| pow[i][k] * n[k][j]).sum()).collect())
                        .collect();
                }
                ranks.push(gaussian_rank(pow.clone(), 1e-6));
            }
            assert_eq!(ranks, expected);
        }
    }

    #[test]
    fn profile_json() {
        let p = system_profile(&NilSystem::heisenberg(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"ranks":[1],"p":1,"tol":1e-8}"#);
    }
}
