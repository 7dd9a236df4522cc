use rmt_spectre_core::bgn::{analyze, AnalysisConfig};
use rmt_spectre_core::io::{self, load_matrix};
use rmt_spectre_core::sim::{gen_spiked, SpikedSpec};
use rmt_spectre_core::svd::svd;
use rmt_spectre_core::{FitMethod, ReshapeMode};

#[test]
fn analysis_is_scale_invariant() {
    let spec = SpikedSpec::new(600, 300, 1.0, vec![4.0, 2.5, 1.5], 21);
    let (w, _) = gen_spiked(&spec).unwrap();
    let config = AnalysisConfig::default();
    let base = analyze(&svd(&w).unwrap(), FitMethod::Bema, &config).unwrap();
    assert!(base.threshold.s_hat >= 2);
    for c in [0.01, 100.0] {
        let r = analyze(&svd(&w.scaled(c)).unwrap(), FitMethod::Bema, &config).unwrap();
        assert_eq!(r.threshold.s_hat, base.threshold.s_hat);
        assert_eq!(r.spikes.len(), base.spikes.len());
        for (a, b) in base.spikes.iter().zip(&r.spikes) {
            assert!((a.phi_hat - b.phi_hat).abs() <= 1e-9);
            assert!((b.theta_hat - c * a.theta_hat).abs() <= 1e-9 * c * a.theta_hat);
        }
        assert!((r.ave_w.unwrap() - base.ave_w.unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn detected_spikes_satisfy_the_bijection() {
    let spec = SpikedSpec::new(800, 400, 0.7, vec![3.0, 2.0], 4);
    let (w, _) = gen_spiked(&spec).unwrap();
    for method in [FitMethod::Bema, FitMethod::Gb] {
        let r = analyze(&svd(&w).unwrap(), method, &AnalysisConfig::default()).unwrap();
        assert_eq!(r.threshold.s_hat, 2, "{method}");
        let sigma = r.fit.sigma_hat;
        for s in &r.spikes {
            assert!(s.theta_hat >= sigma * r.q.powf(0.25));
            let back = rmt_spectre_core::bgn::rho(s.theta_hat, r.q, sigma).unwrap();
            assert!((back - s.gamma).abs() <= 1e-8 * s.gamma);
        }
    }
}

#[test]
fn manifest_layers_load_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SpikedSpec::new(120, 60, 1.0, vec![3.0], 2);
    let (w, _) = gen_spiked(&spec).unwrap();
    let mut data = Vec::with_capacity(120 * 60);
    for i in 0..120 {
        for j in 0..60 {
            data.push(w.mat().read(i, j));
        }
    }
    // stored as (out, in) = (60, 120) so loading transposes it back
    let mut stored = vec![0.0; 120 * 60];
    for i in 0..120 {
        for j in 0..60 {
            stored[j * 120 + i] = data[i * 60 + j];
        }
    }
    io::write_npy(&dir.path().join("fc1.npy"), &[60, 120], &stored).unwrap();
    let conv: Vec<f64> = (0..8 * 4 * 3 * 3).map(|k| (k as f64 * 0.37).sin()).collect();
    io::write_npy(&dir.path().join("conv1.npy"), &[8, 4, 3, 3], &conv).unwrap();
    let manifest = serde_json::json!({
        "model": "toy",
        "entries": [
            {"name": "fc1", "path": "fc1.npy", "kind": "fc", "shape": [60, 120], "dtype": "float64"},
            {"name": "conv1", "path": "conv1.npy", "kind": "conv", "shape": [8, 4, 3, 3]}
        ]
    });
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, manifest.to_string()).unwrap();

    let fc = load_matrix(&path, Some("fc1"), ReshapeMode::OutByRest).unwrap();
    assert_eq!((fc.nrows(), fc.ncols()), (120, 60));
    assert!(fc.transposed());
    assert_eq!(fc.mat(), w.mat());
    let r = analyze(&svd(&fc).unwrap(), FitMethod::Bema, &AnalysisConfig::default()).unwrap();
    assert_eq!(r.threshold.s_hat, 1);
    assert_eq!(r.provenance.as_ref().unwrap().layer.as_deref(), Some("fc1"));

    let c = load_matrix(&path, Some("conv1"), ReshapeMode::InByRest).unwrap();
    assert_eq!((c.nrows(), c.ncols()), (72, 4));
    assert!(load_matrix(&path, Some("missing"), ReshapeMode::OutByRest).is_err());
    assert!(load_matrix(&path, None, ReshapeMode::OutByRest).is_err());
}
