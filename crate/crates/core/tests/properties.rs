use conformal_ot::consistency::{mobius_to_sl2, sl2_distance};
use conformal_ot::density::{fit_density, DiskDensity};
use conformal_ot::hyperbolic::{hyperbolic_distance, DiskMobius};
use conformal_ot::mds::mds_embed;
use conformal_ot::mesh::build_midedge;
use conformal_ot::quadrature::QuadratureGrid;
use conformal_ot::sampling::{fps_sample, voronoi_masses};
use conformal_ot::synth::{synth_surface, SurfaceKind};
use conformal_ot::transport::{extract_correspondence, solve_transport, TransportMode, TransportProblem};
use conformal_ot::uniformize::{uniformize, UniformizeOptions};
use num_complex::Complex64;
use proptest::prelude::*;

fn disk_point(max_r: f64) -> impl Strategy<Value = Complex64> {
    (0.0..max_r, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

fn mobius() -> impl Strategy<Value = DiskMobius> {
    (disk_point(0.9), 0.0..std::f64::consts::TAU).prop_map(|(a, t)| DiskMobius::new(a, Complex64::from_polar(1.0, t)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mobius_maps_are_isometries(m in mobius(), z in disk_point(0.95), w in disk_point(0.95)) {
        let (mz, mw) = (m.apply(z), m.apply(w));
        prop_assert!(mz.norm() < 1.0);
        let (d0, d1) = (hyperbolic_distance(z, w), hyperbolic_distance(mz, mw));
        prop_assert!((d0 - d1).abs() <= 1e-8 * (1.0 + d0));
    }

    #[test]
    fn mobius_group_axioms(a in mobius(), b in mobius(), c in mobius(), z in disk_point(0.9)) {
        let left = a.compose(&b).compose(&c).apply(z);
        let right = a.compose(&b.compose(&c)).apply(z);
        prop_assert!((left - right).norm() <= 1e-10);
        prop_assert!((a.compose(&a.inverse()).apply(z) - z).norm() <= 1e-10);
        prop_assert!((a.compose(&b).apply(z) - a.apply(b.apply(z))).norm() <= 1e-10);
    }

    #[test]
    fn family_sends_z_to_w(z in disk_point(0.9), w in disk_point(0.9), t in 0.0..std::f64::consts::TAU) {
        let m = DiskMobius::family(z, w, Complex64::from_polar(1.0, t));
        prop_assert!((m.apply(z) - w).norm() <= 1e-10);
    }

    #[test]
    fn sl2_distance_ignores_sign(a in mobius(), b in mobius()) {
        let (ma, mb) = (mobius_to_sl2(&a), mobius_to_sl2(&b));
        let mut neg = mb;
        neg.iter_mut().flatten().for_each(|x| *x = -*x);
        prop_assert_eq!(sl2_distance(&ma, &mb), sl2_distance(&ma, &neg));
        prop_assert!((sl2_distance(&ma, &mb) - sl2_distance(&mb, &ma)).abs() <= 1e-12);
        prop_assert!(sl2_distance(&ma, &ma) == 0.0);
    }

    #[test]
    fn uniform_transport_is_a_partial_permutation(
        n in 1usize..10,
        raw in prop::collection::vec(0.0f64..1.0, 100),
        m_frac in 0.0f64..1.0,
    ) {
        let cost: Vec<Vec<f64>> = (0..n).map(|i| raw[i * n..(i + 1) * n].to_vec()).collect();
        let m = 1 + ((n - 1) as f64 * m_frac).round() as usize;
        let mode = if m == n { TransportMode::Full } else { TransportMode::Partial(m as f64 / n as f64) };
        let plan = solve_transport(&TransportProblem::uniform(cost.clone(), mode).unwrap()).unwrap();
        let pairs = extract_correspondence(&plan, n).unwrap();
        prop_assert_eq!(pairs.len(), m);
        let unit = 1.0 / n as f64;
        prop_assert!(plan.row_sums().iter().all(|&r| r <= unit + 1e-12));
        prop_assert!(plan.col_sums().iter().all(|&c| c <= unit + 1e-12));
        let direct: f64 = pairs.iter().map(|&(i, j)| cost[i][j] * unit).sum();
        prop_assert!((direct - plan.objective).abs() <= 1e-12);
    }

    #[test]
    fn general_transport_meets_marginals_and_duality(
        rows in 1usize..7,
        cols in 1usize..7,
        raw in prop::collection::vec(0.0f64..1.0, 36),
        mu_raw in prop::collection::vec(0.05f64..1.0, 6),
        nu_raw in prop::collection::vec(0.05f64..1.0, 6),
    ) {
        let cost: Vec<Vec<f64>> = (0..rows).map(|i| raw[i * cols..(i + 1) * cols].to_vec()).collect();
        let (ms, ns): (f64, f64) = (mu_raw[..rows].iter().sum(), nu_raw[..cols].iter().sum());
        let mu: Vec<f64> = mu_raw[..rows].iter().map(|x| x / ms).collect();
        let nu: Vec<f64> = nu_raw[..cols].iter().map(|x| x / ns).collect();
        let plan = solve_transport(&TransportProblem::new(cost.clone(), mu.clone(), nu.clone(), TransportMode::Full).unwrap()).unwrap();
        for (a, b) in plan.row_sums().iter().zip(&mu) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for (a, b) in plan.col_sums().iter().zip(&nu) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        prop_assert!(plan.pi.iter().flatten().all(|&x| x >= 0.0));
        prop_assert!(plan.certificate_defect(&cost) <= 1e-9);
    }

    #[test]
    fn fitted_density_stays_above_its_floor(
        pts in prop::collection::vec(disk_point(0.9), 6..20),
        vals in prop::collection::vec(-1.0f64..1.0, 20),
        probe in prop::collection::vec(disk_point(0.999), 20),
    ) {
        let data: Vec<f64> = vals[..pts.len()].iter().map(|v| 1.0 + v).collect();
        if let Ok(d) = fit_density(&pts, &pts, &data, 0.99) {
            prop_assert!(probe.iter().all(|&z| d.eval(z) >= d.floor));
            let side = d.side_conditions();
            prop_assert!(side.iter().all(|s| s.abs() <= 1e-9));
        }
    }

    #[test]
    fn affine_data_is_reproduced(
        pts in prop::collection::vec(disk_point(0.9), 5..15),
        coef in (0.5f64..2.0, -0.3f64..0.3, -0.3f64..0.3),
        probe in prop::collection::vec(disk_point(0.9), 10),
    ) {
        let f = |z: Complex64| coef.0 + coef.1 * z.re + coef.2 * z.im;
        let data: Vec<f64> = pts.iter().map(|&z| f(z)).collect();
        if let Ok(d) = fit_density(&pts, &pts, &data, 1.0) {
            for &z in &probe {
                prop_assert!((d.eval(z) - f(z)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn quadrature_weights_sum_to_the_disk_area(radius in 0.2f64..2.0, k in 1usize..80, seed in any::<u64>()) {
        let g = QuadratureGrid::build_with_lattice(radius, k, seed, 60, 60);
        let area = std::f64::consts::PI * radius.sinh().powi(2);
        prop_assert!((g.total_weight() - area).abs() <= 1e-12 * area);
        prop_assert!(g.weights.iter().all(|&w| w > 0.0));
        prop_assert_eq!(g.len(), k);
    }

    #[test]
    fn embedding_reproduces_planar_tables(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..9)) {
        let d: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect()).collect();
        let e = mds_embed(&d, 2).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let de = ((e.coords[i][0] - e.coords[j][0]).powi(2) + (e.coords[i][1] - e.coords[j][1]).powi(2)).sqrt();
                prop_assert!((de - d[i][j]).abs() <= 1e-8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn voronoi_masses_partition_the_surface(height in 0.0f64..0.5, count in 1usize..40, seed in any::<u64>()) {
        let mesh = synth_surface(SurfaceKind::GaussianBump { height, width: 0.3 }, 12).unwrap();
        let me = build_midedge(&mesh).unwrap();
        let u = uniformize(&mesh, &UniformizeOptions::default()).unwrap();
        let samples = fps_sample(&me, count, seed).unwrap();
        let m = voronoi_masses(&mesh, &me, &u.disk.phi, &samples).unwrap();
        prop_assert!((m.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(m.masses.iter().all(|&x| x >= 0.0));
        prop_assert!(m.disk.iter().all(|z| z.norm() < 1.0));
    }

    #[test]
    fn uniformized_factors_are_positive_inside(height in 0.0f64..0.6, res in 8usize..20) {
        let mesh = synth_surface(SurfaceKind::GaussianBump { height, width: 0.3 }, res).unwrap();
        let u = uniformize(&mesh, &UniformizeOptions::default()).unwrap();
        prop_assert!(u.disk.phi.iter().all(|z| z.norm() <= 1.0 + 1e-12));
        for (r, &mu) in u.factors.mu_h_vertex.iter().enumerate() {
            if !u.midedge.on_boundary[r] {
                prop_assert!(mu > 0.0);
            }
        }
    }
}
