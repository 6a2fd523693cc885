use nalgebra::DMatrix;
use picarz::geometry::{BoundingBox, Point2};
use picarz::likelihoods::TwoPartFamily;
use picarz::rng;
use picarz::simulation::{
    bisquare, build_bisquare_design, covariance_matrix, generate_dataset, grid_sites, matern_cov,
    sample_cross_fields, sample_cross_fields_with, sample_grid_fields, CrossGPConfig, Dataset, MaternParams,
    SimulationConfig, SiteDesign, Split,
};
use proptest::prelude::*;
use rand::Rng;

fn exp_params() -> MaternParams {
    MaternParams::new(0.5, 0.2, 1.0).unwrap()
}

fn sites(n: usize, seed: u64) -> Vec<Point2> {
    let mut r = rng::stream(seed, 0);
    (0..n).map(|_| Point2::new(r.random(), r.random())).collect()
}

fn unit() -> BoundingBox {
    BoundingBox {
        min: Point2::new(0.0, 0.0),
        max: Point2::new(1.0, 1.0),
    }
}

/// Entrywise cross-covariance of (W_o, W_p) over replicates, with standard errors.
fn empirical_cross(s: &[Point2], cfg: &CrossGPConfig, reps: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = s.len();
    let mut r = rng::stream(seed, 0);
    let mut m1 = DMatrix::<f64>::zeros(n, n);
    let mut m2 = DMatrix::<f64>::zeros(n, n);
    for _ in 0..reps {
        let (wo, wp) = sample_cross_fields_with(s, cfg, &mut r).unwrap();
        for j in 0..n {
            for i in 0..n {
                let v = wo[i] * wp[j];
                m1[(i, j)] += v;
                m2[(i, j)] += v * v;
            }
        }
    }
    let r = reps as f64;
    let mean = m1 / r;
    let se = DMatrix::from_fn(n, n, |i, j| ((m2[(i, j)] / r - mean[(i, j)].powi(2)) / r).sqrt());
    (mean, se)
}

#[test]
fn matern_closed_forms() {
    let p = exp_params();
    assert_eq!(matern_cov(0.0, &p).unwrap(), 1.0);
    assert!((matern_cov(0.2, &p).unwrap() - (-1f64).exp()).abs() < 1e-15);
    let p15 = MaternParams::new(1.5, 0.3, 2.0).unwrap();
    let h: f64 = 0.17;
    let a = 3f64.sqrt() * h / 0.3;
    assert!((matern_cov(h, &p15).unwrap() - 2.0 * (1.0 + a) * (-a).exp()).abs() < 1e-14);
    let p25 = MaternParams::new(2.5, 0.3, 2.0).unwrap();
    let a = 5f64.sqrt() * h / 0.3;
    let e = 2.0 * (1.0 + a + 5.0 * h * h / (3.0 * 0.09)) * (-a).exp();
    assert!((matern_cov(h, &p25).unwrap() - e).abs() < 1e-14);
    assert!(MaternParams::new(1.0, 0.2, 1.0).is_err());
    for nu in [0.5, 1.5, 2.5] {
        let p = MaternParams::new(nu, 0.25, 1.0).unwrap();
        let vals: Vec<f64> = (0..50).map(|i| matern_cov(i as f64 * 0.02, &p).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn cross_covariance_matches_rho_lo_lp() {
    let s = sites(20, 1);
    let po = exp_params();
    let pp = MaternParams::new(1.5, 0.3, 0.8).unwrap();
    let cfg = CrossGPConfig { params_o: po, params_p: pp, rho: 0.7 };
    let lo = covariance_matrix(&s, &po).unwrap().cholesky().unwrap().l();
    let lp = covariance_matrix(&s, &pp).unwrap().cholesky().unwrap().l();
    let target = (&lo * lp.transpose()) * 0.7;
    let (mean, se) = empirical_cross(&s, &cfg, 50_000, 2);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        for j in 0..20 {
            worst = worst.max((mean[(i, j)] - target[(i, j)]).abs() / se[(i, j)]);
        }
    }
    assert!(worst < 4.0, "max standardized deviation {worst}");
}

#[test]
fn zero_rho_gives_independent_fields() {
    let s = sites(30, 3);
    let cfg = CrossGPConfig { params_o: exp_params(), params_p: exp_params(), rho: 0.0 };
    let (mean, se) = empirical_cross(&s, &cfg, 20_000, 4);
    let worst = mean.iter().zip(se.iter()).map(|(m, e)| (m / e).abs()).fold(0.0, f64::max);
    assert!(worst < 4.0, "{worst}");
}

#[test]
fn unit_rho_identical_fields() {
    let s = sites(25, 5);
    let cfg = CrossGPConfig { params_o: exp_params(), params_p: exp_params(), rho: 1.0 };
    let (wo, wp) = sample_cross_fields(&s, &cfg, 6).unwrap();
    assert_eq!(wo, wp);
}

#[test]
fn duplicate_sites_are_jittered() {
    let mut s = sites(10, 7);
    s.push(s[0]);
    let cfg = CrossGPConfig { params_o: exp_params(), params_p: exp_params(), rho: 0.5 };
    assert!(sample_cross_fields(&s, &cfg, 1).is_ok());
}

#[test]
fn covariance_matrices_factor_for_random_sites() {
    for n in [50, 400, 2000] {
        let c = covariance_matrix(&sites(n, n as u64), &exp_params()).unwrap();
        assert!(picarz::linalg::cholesky_with_jitter(&c, 1e-8).is_ok());
    }
}

#[test]
fn grid_sampler_matches_covariance() {
    let (nx, ny) = (12, 10);
    let cfg = CrossGPConfig { params_o: exp_params(), params_p: exp_params(), rho: 0.7 };
    let g = grid_sites(nx, ny, &unit());
    let mut r = rng::stream(8, 0);
    let reps = 20_000;
    let pairs = [(0usize, 0usize), (0, 1), (5, 17), (30, 31), (60, 119), (44, 44)];
    let mut acc = vec![(0.0, 0.0, 0.0, 0.0); pairs.len()];
    for _ in 0..reps {
        let (wo, wp) = sample_grid_fields(nx, ny, &unit(), &cfg, &mut r).unwrap();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let a = wo[i] * wo[j];
            let b = wo[i] * wp[j];
            acc[k].0 += a;
            acc[k].1 += a * a;
            acc[k].2 += b;
            acc[k].3 += b * b;
        }
    }
    let rr = reps as f64;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let c = matern_cov(g[i].dist(&g[j]), &exp_params()).unwrap();
        let (m, m2) = (acc[k].0 / rr, acc[k].1 / rr);
        let se = ((m2 - m * m) / rr).sqrt();
        assert!((m - c).abs() < 4.0 * se, "auto ({i},{j}): {m} vs {c}");
        let (m, m2) = (acc[k].2 / rr, acc[k].3 / rr);
        let se = ((m2 - m * m) / rr).sqrt();
        assert!((m - 0.7 * c).abs() < 4.0 * se, "cross ({i},{j}): {m} vs {}", 0.7 * c);
    }
}

#[test]
fn datasets_respect_two_part_structure() {
    let families = [
        TwoPartFamily::hurdle_count(),
        TwoPartFamily::hurdle_lognormal(),
        TwoPartFamily::mixture_poisson(),
        TwoPartFamily::mixture_tobit(0.0),
    ];
    let cfg = SimulationConfig { n: 300, n_cv: 100, ..SimulationConfig::default() };
    for fam in families {
        let ds = generate_dataset(&fam, &cfg, 9).unwrap();
        assert_eq!(ds.data.len(), 400);
        assert_eq!(ds.data.indices(Split::Validate).len(), 100);
        for (i, &z) in ds.data.z.iter().enumerate() {
            assert!(z >= 0.0);
            if fam.is_count() {
                assert_eq!(z.fract(), 0.0);
            }
            if !ds.occurrence[i] {
                assert_eq!(z, 0.0);
            }
            if fam.is_hurdle() && ds.occurrence[i] {
                assert!(z > 0.0);
            }
        }
    }
}

#[test]
fn strongly_negative_occurrence_gives_zeros() {
    let cfg = SimulationConfig {
        n: 200,
        n_cv: 0,
        beta_o: vec![-40.0, 0.0],
        covariates: picarz::simulation::CovariateDesign::Uniform,
        ..SimulationConfig::default()
    };
    let mut cfg = cfg;
    cfg.cross.params_o.sigma2 = 1e-6;
    // x1 ~ U(0,1) gives eta_o <= 0 and mostly far below.
    let ds = generate_dataset(&TwoPartFamily::mixture_poisson(), &cfg, 10).unwrap();
    let zeros = ds.data.z.iter().filter(|&&z| z == 0.0).count();
    assert!(zeros as f64 >= 0.9 * 200.0);
}

#[test]
fn seed_determinism_and_csv_round_trip() {
    let cfg = SimulationConfig { n: 60, n_cv: 20, ..SimulationConfig::default() };
    let fam = TwoPartFamily::mixture_tobit(0.0);
    let a = generate_dataset(&fam, &cfg, 11).unwrap();
    let b = generate_dataset(&fam, &cfg, 11).unwrap();
    assert_eq!(a, b);
    let c = generate_dataset(&fam, &cfg, 12).unwrap();
    assert_ne!(a.data.z, c.data.z);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    a.write(&path).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "x_coord,y_coord,z,x1,x2,split");
    let back = Dataset::read_csv(&path).unwrap();
    assert_eq!(back, a.data);
    let meta = std::fs::read_to_string(path.with_extension("meta")).unwrap();
    assert!(meta.contains("covariates = normal") && meta.contains("seed = 11"));
}

#[test]
fn grid_design_splits_randomly() {
    let cfg = SimulationConfig { n: 80, n_cv: 20, sites: SiteDesign::Grid { nx: 10, ny: 10 }, ..SimulationConfig::default() };
    let ds = generate_dataset(&TwoPartFamily::hurdle_count(), &cfg, 13).unwrap();
    assert_eq!(ds.data.len(), 100);
    assert_eq!(ds.data.indices(Split::Validate).len(), 20);
    let bad = SimulationConfig { n: 80, n_cv: 10, ..cfg };
    assert!(generate_dataset(&TwoPartFamily::hurdle_count(), &bad, 13).is_err());
}

#[test]
fn mixture_poisson_zero_fraction_is_stable() {
    let fam = TwoPartFamily::mixture_poisson();
    let small = SimulationConfig { n: 500, n_cv: 0, ..SimulationConfig::default() };
    // Long-run reference from many independent replicates.
    let frac = |ds: &picarz::simulation::SyntheticDataset| {
        ds.data.z.iter().filter(|&&z| z == 0.0).count() as f64 / ds.data.len() as f64
    };
    let reference: Vec<f64> = (0..60).map(|s| frac(&generate_dataset(&fam, &small, 1000 + s).unwrap())).collect();
    let mean = reference.iter().sum::<f64>() / 60.0;
    let sd = (reference.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 59.0).sqrt();
    let full = SimulationConfig::default();
    for s in 0..3 {
        let f = frac(&generate_dataset(&fam, &full, s).unwrap());
        // Replicate spread is dominated by the latent field, so n = 500 and n = 1400 share it roughly.
        assert!((f - mean).abs() < 4.0 * sd, "{f} vs {mean} +- {sd}");
    }
    // Marginally eta_o, eta_p ~ N(0, 3) with covariance 2 + rho = 2.7; the
    // expected zero fraction is E[(1 - pi) + pi exp(-theta)] over that law.
    let oracle = gauss_hermite_2d(3.0, 3.0, 2.7, |eo, ep| {
        let pi = 1.0 / (1.0 + (-eo).exp());
        1.0 - pi + pi * (-(ep.exp())).exp()
    });
    assert!((mean - oracle).abs() < 4.0 * sd / 60f64.sqrt(), "{mean} vs {oracle}");
}

#[test]
fn bisquare_design_shape_and_values() {
    assert_eq!(bisquare(0.0, 0.3), 1.0);
    assert_eq!(bisquare(0.3, 0.3), 0.0);
    assert!((bisquare(0.15, 0.3) - 0.5625).abs() < 1e-15);
    let s = sites(50, 14);
    let d = build_bisquare_design(&s, &unit());
    assert_eq!(d.phi.ncols(), 84);
    assert_eq!(d.phi.nrows(), 50);
    assert!(d.phi.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let levels: Vec<usize> = d.basis.knots.iter().map(|k| k.level).collect();
    assert_eq!(levels.iter().filter(|&&l| l == levels[0]).count(), 4);
    assert!(levels.windows(2).all(|w| w[0] <= w[1]));
    for lvl in [levels[0], levels[4], levels[20]] {
        let ks: Vec<_> = d.basis.knots.iter().filter(|k| k.level == lvl).collect();
        let mut min = f64::INFINITY;
        for a in &ks {
            for b in &ks {
                let dd = a.center.dist(&b.center);
                if dd > 0.0 {
                    min = min.min(dd);
                }
            }
        }
        assert!(ks.iter().all(|k| (k.omega - 1.5 * min).abs() < 1e-12));
    }
    let at = d.basis.design(&[d.basis.knots[7].center]);
    assert!((at[(0, 7)] - 1.0).abs() < 1e-15);
}

/// E f(U, V) for a zero-mean bivariate normal via a 60-point Gauss-Hermite
/// product rule on the Cholesky-whitened variables.
fn gauss_hermite_2d(vu: f64, vv: f64, cov: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = 60;
    // Golub-Welsch: nodes and weights from the Jacobi matrix of the Hermite recurrence.
    let j = DMatrix::from_fn(n, n, |i, k| if i + 1 == k || k + 1 == i { ((i.max(k)) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = j.symmetric_eigen();
    let nodes: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let weights: Vec<f64> = (0..n).map(|i| std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)).collect();
    let l11 = vu.sqrt();
    let l21 = cov / l11;
    let l22 = (vv - l21 * l21).sqrt();
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            let (x, y) = (2f64.sqrt() * nodes[a], 2f64.sqrt() * nodes[b]);
            total += weights[a] * weights[b] * f(l11 * x, l21 * x + l22 * y);
        }
    }
    total / std::f64::consts::PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn covariance_symmetric_pd(seed in 0u64..10_000, n in 2usize..80, phi in 0.05f64..0.5) {
        let p = MaternParams::new(0.5, phi, 1.0).unwrap();
        let c = covariance_matrix(&sites(n, seed), &p).unwrap();
        prop_assert_eq!(&c, &c.transpose());
        prop_assert!(picarz::linalg::cholesky_with_jitter(&c, 1e-8).is_ok());
    }
}
