use proptest::prelude::*;
use rmt_spectre_core::bgn::{self, d_transform, detection_threshold, phi, rho, theta_hat};
use rmt_spectre_core::lowrank::{param_savings, truncate};
use rmt_spectre_core::mp::MpParams;
use rmt_spectre_core::svd::{singular_values, svd};
use rmt_spectre_core::{OrientedMatrix, Provenance};

fn matrix(rows: usize, cols: usize, seed: u64) -> OrientedMatrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|k| ((k as u64 * 2654435761 + seed * 97) % 1000) as f64 / 500.0 - 1.0)
        .collect();
    OrientedMatrix::from_row_major(rows, cols, &data, Provenance::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outlier_location_inverts_strength(q in 0.05f64..=1.0, sigma in 1e-3f64..1e3, lift in 1e-6f64..20.0) {
        let gamma = sigma * (1.0 + q.sqrt()) * (1.0 + lift);
        let theta = theta_hat(gamma, q, sigma).unwrap();
        prop_assert!(theta > detection_threshold(q, sigma));
        let back = rho(theta, q, sigma).unwrap();
        prop_assert!((back - gamma).abs() <= 1e-8 * gamma, "γ={} back={}", gamma, back);
    }

    #[test]
    fn rho_solves_d_equation(q in 0.05f64..=1.0, sigma in 1e-2f64..1e2, f in 1.0001f64..50.0) {
        let theta = detection_threshold(q, sigma) * f;
        let r = rho(theta, q, sigma).unwrap();
        let target = 1.0 / (theta * theta);
        prop_assert!((d_transform(r, q, sigma) - target).abs() <= 1e-12 * target);
    }

    #[test]
    fn similarity_stays_in_unit_interval(q in 0.05f64..=1.0, sigma in 1e-2f64..1e2, f in 1.0f64..50.0) {
        let theta = detection_threshold(q, sigma) * f;
        let v = phi(theta, q, sigma).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn similarity_increases_with_strength(q in 0.05f64..=1.0, f in 1.01f64..20.0, step in 1.01f64..2.0) {
        let floor = detection_threshold(q, 1.0);
        prop_assert!(phi(floor * f * step, q, 1.0).unwrap() >= phi(floor * f, q, 1.0).unwrap());
    }

    #[test]
    fn mp_scale_equivariance(q in 0.05f64..=1.0, sigma in 1e-2f64..1e2, u in 0.0f64..1.0, mass in 0.01f64..0.99) {
        let unit = MpParams::new(1.0, q).unwrap();
        let scaled = MpParams::new(sigma, q).unwrap();
        let x = unit.x_min() + u * (unit.x_max() - unit.x_min());
        let want = unit.density(x) / sigma;
        prop_assert!((scaled.density(sigma * x) - want).abs() <= 1e-10 * want.max(1.0));
        let qs = scaled.upper_quantile(mass).unwrap();
        let q1 = unit.upper_quantile(mass).unwrap();
        prop_assert!((qs - sigma * q1).abs() <= 1e-10 * sigma * q1.max(1.0));
    }

    #[test]
    fn singular_values_scale(c in 1e-3f64..1e3, seed in 0u64..50) {
        let w = matrix(14, 9, seed);
        let base = singular_values(&w).unwrap();
        let scaled = singular_values(&w.scaled(c)).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((b - c * a).abs() <= 1e-12 * c * base[0]);
        }
    }

    #[test]
    fn truncation_error_is_tail_norm(seed in 0u64..50, s in 0usize..=9) {
        let sp = svd(&matrix(15, 9, seed)).unwrap();
        let f = truncate(&sp, s).unwrap();
        let tail = sp.gamma[s..].iter().map(|g| g * g).sum::<f64>().sqrt();
        let norm = sp.gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        prop_assert!((f.recon_error - tail).abs() <= 1e-10 * norm);
        if s > 0 {
            prop_assert!(truncate(&sp, s - 1).unwrap().recon_error >= f.recon_error);
        }
    }

    #[test]
    fn savings_is_strict_inequality(n in 1usize..5000, m in 1usize..5000, s in 0usize..5000) {
        let p = param_savings(n, m, s);
        prop_assert_eq!(p.original, (n * m) as u128);
        prop_assert_eq!(p.factored, (s * (n + m)) as u128);
        prop_assert_eq!(p.saves, s * (n + m) < n * m);
    }

    #[test]
    fn threshold_monotone_in_t(q in 0.05f64..=1.0, t1 in -4.0f64..3.0, dt in 1e-3f64..2.0, n in 10usize..100_000) {
        prop_assert!(bgn::threshold(1.0, q, n, t1 + dt).unwrap() > bgn::threshold(1.0, q, n, t1).unwrap());
    }
}
