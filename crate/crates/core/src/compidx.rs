//! Comparative index `mu(Y, Yhat)` and its dual `mu*(Y, Yhat)`.
//!
//! Both are computed on the normalized frames `Y K_Y`, which leaves the
//! indices unchanged (they are invariant under invertible right factors)
//! and puts every block on unit scale, so the rank cuts can use an absolute
//! reference of 1 instead of the largest singular value of each block.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::{is_lower_block_triangular, wronskian, LagrangianFrame, SymplecticMatrix};
use crate::matlib::{
    inertia_ref, numeric_rank, numeric_rank_ref, pseudoinverse_ref, RealMatrix, Tolerances,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparativeIndexBreakdown {
    pub rank_m: usize,
    pub ind_p: usize,
    pub ind_neg_p: usize,
    pub mu: usize,
    pub mu_star: usize,
    /// Smallest |eigenvalue| of `P` that was classified as zero.
    pub smallest_excluded: Option<f64>,
}

pub fn comparative_index(
    y: &LagrangianFrame,
    yhat: &LagrangianFrame,
    tol: &Tolerances,
) -> Result<ComparativeIndexBreakdown> {
    if y.n() != yhat.n() {
        return Err(Error::ShapeMismatch(format!(
            "frames of dimension {} and {}",
            y.n(),
            yhat.n()
        )));
    }
    let n = y.n();
    let y = y.normalized(tol)?;
    let yhat = yhat.normalized(tol)?;
    let x = y.x();
    let xh = yhat.x();
    let w = wronskian(&y, &yhat)?;
    let id = RealMatrix::identity(n, n);

    let xd = pseudoinverse_ref(&x, 1.0, tol);
    let m = (&id - &xd * &x) * &w;
    let rank_m = numeric_rank_ref(&m, 1.0, tol);
    let md = pseudoinverse_ref(&m, 1.0, tol);
    let v = &id - &md * &m;
    let p = &v * w.transpose() * &xd * &xh * &v;
    let p = (&p + p.transpose()) * 0.5;
    let scale = xd.norm().max(1.0);
    let inertia = inertia_ref(&p, scale, tol)?;
    Ok(ComparativeIndexBreakdown {
        rank_m,
        ind_p: inertia.negative,
        ind_neg_p: inertia.positive,
        mu: rank_m + inertia.negative,
        mu_star: rank_m + inertia.positive,
        smallest_excluded: inertia.smallest_excluded,
    })
}

/// `mu` and `mu*` agree for `(Y C1, Yhat C2)` and `(Y, Yhat)`.
pub fn check_prop_right_mult(
    y: &LagrangianFrame,
    yhat: &LagrangianFrame,
    c1: &RealMatrix,
    c2: &RealMatrix,
    tol: &Tolerances,
) -> Result<bool> {
    let n = y.n();
    for (name, c) in [("C1", c1), ("C2", c2)] {
        if c.shape() != (n, n) || numeric_rank(c, tol) < n {
            return Err(Error::PreconditionViolated(format!("{name} is not invertible")));
        }
    }
    let base = comparative_index(y, yhat, tol)?;
    let moved = comparative_index(&y.mul_right(c1, tol)?, &yhat.mul_right(c2, tol)?, tol)?;
    Ok(base.mu == moved.mu && base.mu_star == moved.mu_star)
}

/// `mu` and `mu*` agree for `(L Y, L Yhat)` and `(Y, Yhat)`.
pub fn check_prop_lower_triangular(
    y: &LagrangianFrame,
    yhat: &LagrangianFrame,
    l: &SymplecticMatrix,
    tol: &Tolerances,
) -> Result<bool> {
    if l.n() != y.n() || !is_lower_block_triangular(l, tol) {
        return Err(Error::PreconditionViolated(
            "L is not lower block triangular".into(),
        ));
    }
    let base = comparative_index(y, yhat, tol)?;
    let ly = LagrangianFrame::new(l.matrix() * y.matrix(), tol)?;
    let lyh = LagrangianFrame::new(l.matrix() * yhat.matrix(), tol)?;
    let moved = comparative_index(&ly, &lyh, tol)?;
    Ok(base.mu == moved.mu && base.mu_star == moved.mu_star)
}

/// `mu(Y, Yhat) = mu*(Z^{-1}E, Z^{-1}Yhat)` and the swapped identity, for
/// symplectic `Z` whose image of `E` spans `Y` (`Z E = Y P`, `P` invertible).
pub fn check_prop_duality(
    y: &LagrangianFrame,
    yhat: &LagrangianFrame,
    z: &SymplecticMatrix,
    tol: &Tolerances,
) -> Result<bool> {
    let n = y.n();
    if z.n() != n {
        return Err(Error::PreconditionViolated("Z has the wrong dimension".into()));
    }
    let ze = z.apply_vertical();
    let ym = y.matrix();
    let gram = ym.transpose() * ym;
    let p = gram
        .try_inverse()
        .ok_or_else(|| Error::PreconditionViolated("Y is rank deficient".into()))?
        * ym.transpose()
        * &ze;
    let res = (ym * &p - &ze).amax();
    if res > tol.struct_atol * ze.amax().max(1.0) || numeric_rank(&p, tol) < n {
        return Err(Error::PreconditionViolated(format!(
            "Z E does not span Y (residual {res:.3e})"
        )));
    }
    let zi = z.inverse();
    let a = LagrangianFrame::new(zi.apply_vertical(), tol)?;
    let b = LagrangianFrame::new(zi.matrix() * yhat.matrix(), tol)?;
    let base = comparative_index(y, yhat, tol)?;
    let dual = comparative_index(&a, &b, tol)?;
    Ok(base.mu == dual.mu_star && base.mu_star == dual.mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{vertical_plane, z_frame};
    use crate::matlib::numeric_rank;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn col(v: &[f64]) -> LagrangianFrame {
        LagrangianFrame::new(RealMatrix::from_column_slice(v.len(), 1, v), &tol()).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let t = tol();
        let e = vertical_plane(1);
        let ee = comparative_index(&e, &e, &t).unwrap();
        assert_eq!((ee.mu, ee.mu_star), (0, 0));
        let h = col(&[1.0, 0.0]);
        let eh = comparative_index(&e, &h, &t).unwrap();
        assert_eq!((eh.rank_m, eh.mu, eh.mu_star), (1, 1, 1));
        let th = PI / 4.0;
        let r = comparative_index(&h, &col(&[th.cos(), th.sin()]), &t).unwrap();
        assert_eq!((r.rank_m, r.mu, r.mu_star), (0, 0, 1));
        let th = 3.0 * PI / 4.0;
        let r = comparative_index(&h, &col(&[th.cos(), th.sin()]), &t).unwrap();
        assert_eq!((r.mu, r.mu_star), (1, 0));
    }

    #[test]
    fn equal_arguments_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            let y = random_frame(&mut rng, n, 0.2);
            let b = comparative_index(&y, &y, &tol()).unwrap();
            assert_eq!((b.mu, b.mu_star), (0, 0));
        }
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize, p_defect: f64) -> LagrangianFrame {
        // rotate a graph frame by a random orthogonal symplectic matrix
        let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut s = &a + a.transpose();
        if rng.random_bool(p_defect) {
            s[(0, 0)] = 0.0;
        }
        let g = LagrangianFrame::from_blocks(&RealMatrix::identity(n, n), &s, &tol()).unwrap();
        if rng.random_bool(0.5) {
            // swap X and U so that X may be singular
            let m = g.matrix();
            let mut sw = RealMatrix::zeros(2 * n, n);
            sw.view_mut((0, 0), (n, n)).copy_from(&m.view((n, 0), (n, n)));
            sw.view_mut((n, 0), (n, n)).copy_from(&(-m.view((0, 0), (n, n)).into_owned()));
            LagrangianFrame::new(sw, &tol()).unwrap()
        } else {
            g
        }
    }

    #[test]
    fn bounds_and_sum_identity() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..6 {
            for _ in 0..100 {
                let y = random_frame(&mut rng, n, 0.3);
                let yh = random_frame(&mut rng, n, 0.3);
                let b = comparative_index(&y, &yh, &t).unwrap();
                assert!(b.mu <= n && b.mu_star <= n);
                assert_eq!(b.mu + b.mu_star, 2 * b.rank_m + b.ind_p + b.ind_neg_p);
            }
        }
    }

    #[test]
    fn duality_with_canonical_z() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..5 {
            for _ in 0..50 {
                let y = random_frame(&mut rng, n, 0.3);
                let yh = random_frame(&mut rng, n, 0.3);
                let z = z_frame(&y, &t).unwrap();
                assert!(check_prop_duality(&y, &yh, &z, &t).unwrap());
            }
        }
    }

    #[test]
    fn precondition_errors() {
        let t = tol();
        let e = vertical_plane(2);
        let sing = RealMatrix::zeros(2, 2);
        assert!(matches!(
            check_prop_right_mult(&e, &e, &sing, &RealMatrix::identity(2, 2), &t),
            Err(Error::PreconditionViolated(_))
        ));
        let rot = SymplecticMatrix::rotation(2, 0.3);
        assert!(check_prop_lower_triangular(&e, &e, &rot, &t).is_err());
        assert!(check_prop_duality(&e, &e, &rot, &t).is_err());
        assert!(check_prop_right_mult(
            &e,
            &e,
            &RealMatrix::identity(2, 2),
            &RealMatrix::identity(2, 2),
            &t
        )
        .unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn invariance_properties(seed in any::<u64>(), n in 1usize..5) {
            let t = tol();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = random_frame(&mut rng, n, 0.3);
            let yh = random_frame(&mut rng, n, 0.3);
            let c1 = RealMatrix::identity(n, n) * 2.0
                + RealMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let c2 = RealMatrix::identity(n, n) * 2.0
                + RealMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            prop_assume!(numeric_rank(&c1, &t) == n && numeric_rank(&c2, &t) == n);
            prop_assert!(check_prop_right_mult(&y, &yh, &c1, &c2, &t).unwrap());
            let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let k = &a + a.transpose();
            let p = c1.clone();
            let mut l = RealMatrix::zeros(2 * n, 2 * n);
            l.view_mut((0, 0), (n, n)).copy_from(&p);
            let pit = p.clone().try_inverse().unwrap().transpose();
            l.view_mut((n, 0), (n, n)).copy_from(&(&k * &p));
            l.view_mut((n, n), (n, n)).copy_from(&pit);
            let l = SymplecticMatrix::new(l, &t).unwrap();
            prop_assert!(check_prop_lower_triangular(&y, &yh, &l, &t).unwrap());
        }
    }
}
