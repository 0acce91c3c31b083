use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use smf_core::ellipsoid::{chol_factor, sample_unit_sphere, spectral_norm};
use smf_core::Ellipsoid;

fn pd_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
        let m = DMatrix::from_vec(n, n, v);
        &m * m.transpose() + DMatrix::identity(n, n) * 0.1
    })
}

proptest! {
    #[test]
    fn cholesky_round_trips(p in (1usize..5).prop_flat_map(pd_matrix)) {
        let f = chol_factor(&p, 0.0).unwrap();
        let e = f.matrix();
        let err = (e * e.transpose() - &p).norm() / p.norm();
        prop_assert!(err <= 1e-9);
        prop_assert!(f.gamma() >= 0.0);
        prop_assert!((f.gamma() - spectral_norm(&p).sqrt()).abs() <= 1e-8 * (1.0 + f.gamma()));
    }

    #[test]
    fn containment_is_scale_consistent(
        p in pd_matrix(3),
        d in prop::collection::vec(-2.0f64..2.0, 3),
        s in 0.1f64..10.0,
    ) {
        let c = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let d = DVector::from_vec(d);
        let base = Ellipsoid::new(c.clone(), p.clone()).unwrap();
        let scaled = Ellipsoid::new(c.clone(), &p * (s * s)).unwrap();
        let m_base = base.mahalanobis_sq(&(&c + &d)).unwrap();
        let m_scaled = scaled.mahalanobis_sq(&(&c + &d * s)).unwrap();
        prop_assert!((m_base - m_scaled).abs() <= 1e-9 * (1.0 + m_base));
        // Away from the boundary the boolean answers agree.
        if (m_base - 1.0).abs() > 1e-6 {
            prop_assert_eq!(base.contains(&(&c + &d), 0.0).unwrap(), scaled.contains(&(&c + &d * s), 0.0).unwrap());
        }
        prop_assert!(base.contains(&c, 0.0).unwrap());
    }

    #[test]
    fn sphere_points_map_into_the_ellipsoid(p in pd_matrix(3), seed in any::<u64>()) {
        let e = Ellipsoid::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), p).unwrap();
        for z in sample_unit_sphere::<f64>(3, 50, seed) {
            prop_assert!(e.contains(&e.point(&z), 1e-9).unwrap());
        }
    }
}

#[test]
fn zero_sphere_has_two_points() {
    for z in sample_unit_sphere::<f64>(1, 4, 11) {
        assert!(z[0] == 1.0 || z[0] == -1.0);
    }
}

#[test]
fn sphere_samples_have_zero_mean() {
    let pts = sample_unit_sphere::<f64>(2, 100_000, 5);
    let mut mean = DVector::zeros(2);
    for z in &pts {
        assert!((z.norm() - 1.0).abs() <= 1e-12);
        mean += z;
    }
    mean /= pts.len() as f64;
    assert!(mean.amax() < 0.02);
}

#[test]
fn spectral_norm_golden_ratio() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    // eigenvalues of M^T M = [[1,1],[1,2]] are (3 ± sqrt 5) / 2
    let oracle = ((3.0 + 5.0f64.sqrt()) / 2.0).sqrt();
    assert!((spectral_norm(&m) - oracle).abs() < 1e-12);
    assert!((oracle - 1.618034).abs() < 1e-6);
}
