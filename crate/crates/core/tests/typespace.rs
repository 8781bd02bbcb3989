use suskit_core::typespace::MeshSpec;
use suskit_core::TypeSpace;

#[test]
fn uniform_mesh_examples() {
    let one = TypeSpace::uniform_mesh(1).unwrap();
    assert_eq!(one.points(), &[0.5]);
    assert_eq!(one.weights(), &[1.0]);

    let four = TypeSpace::uniform_mesh(4).unwrap();
    assert_eq!(four.points(), &[0.125, 0.375, 0.625, 0.875]);
    assert!(four.weights().iter().all(|&w| w == 0.25));

    assert_eq!(TypeSpace::uniform_mesh(1000).unwrap().total_mass(), 1.0);
    assert!(TypeSpace::uniform_mesh(0).is_err());
}

#[test]
fn graded_mesh_examples() {
    let g = TypeSpace::graded_mesh(4, 1.0).unwrap();
    let u = TypeSpace::uniform_mesh(4).unwrap();
    assert_eq!(g.points(), u.points());
    assert_eq!(g.weights(), u.weights());

    let g = TypeSpace::graded_mesh(2, 2.0).unwrap();
    assert_eq!(g.points(), &[0.125, 0.625]);
    assert_eq!(g.weights(), &[0.25, 0.75]);

    let g = TypeSpace::graded_mesh(4000, 2.0).unwrap();
    assert!(g.points()[0] > 0.0);
    assert!((g.total_mass() - 1.0).abs() < 1e-12);
    assert!(g.points().windows(2).all(|w| w[0] < w[1]));
    assert!(TypeSpace::graded_mesh(4, 0.5).is_err());
}

#[test]
fn graded_unit_exponent_is_bitwise_uniform() {
    for m in [1, 3, 17, 1000] {
        let g = TypeSpace::graded_mesh(m, 1.0).unwrap();
        let u = TypeSpace::uniform_mesh(m).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.points()), bits(u.points()));
        assert_eq!(bits(g.weights()), bits(u.weights()));
    }
}

#[test]
fn powerlaw_space_examples() {
    let q = 2.5;
    let ts = TypeSpace::powerlaw(q, 1e4, 4000).unwrap();
    let deficit = 1e4f64.powf(-q);
    assert!((ts.total_mass() - (1.0 - deficit)).abs() < 1e-12);
    let mean = ts.integrate(|x| x).unwrap();
    assert!((mean - 5.0 / 3.0).abs() < 1e-2, "{mean}");

    // a geometric mesh with ratio 2 has [1, 2] as its first cell
    let coarse = TypeSpace::powerlaw(q, 1024.0, 10).unwrap();
    assert!((coarse.weights()[0] - (1.0 - 2f64.powf(-q))).abs() < 1e-15);

    let big = TypeSpace::powerlaw(q, 1e12, 2000).unwrap();
    assert!((big.total_mass() - 1.0).abs() < 1e-12);

    assert!(TypeSpace::powerlaw(q, 1.0, 10).is_err());
    assert!(TypeSpace::powerlaw(1.0, 10.0, 10).is_err());
}

#[test]
fn finite_space_examples() {
    let e2 = TypeSpace::finite(&[0.5, 0.5]).unwrap();
    assert_eq!(e2.points(), &[1.0, 2.0]);
    assert_eq!(TypeSpace::finite(&[1.0]).unwrap().total_mass(), 1.0);
    assert!((TypeSpace::finite(&[0.2, 0.3, 0.5]).unwrap().total_mass() - 1.0).abs() < 1e-15);
    assert!(TypeSpace::finite(&[]).is_err());
    assert!(TypeSpace::finite(&[0.5, 0.0]).is_err());
}

#[test]
fn integrate_examples() {
    let ts = TypeSpace::uniform_mesh(1000).unwrap();
    assert_eq!(ts.integrate(|_| 1.0).unwrap(), ts.total_mass());
    assert!((ts.integrate(|x| x).unwrap() - 0.5).abs() < 1e-6);
    assert!(ts.integrate(|x| 1.0 / (x - ts.points()[3])).is_err());
}

#[test]
fn midpoint_error_halves_twice_per_refinement() {
    let err = |m| (TypeSpace::uniform_mesh(m).unwrap().integrate(|x| x * x).unwrap() - 1.0 / 3.0).abs();
    let mut prev = err(10);
    for m in [20, 40, 80, 160] {
        let e = err(m);
        assert!((prev / e - 4.0).abs() < 1e-6, "m={m}: ratio {}", prev / e);
        prev = e;
    }
}

#[test]
fn csv_round_trip() {
    let ts = TypeSpace::powerlaw(2.5, 100.0, 7).unwrap();
    let mut buf = Vec::new();
    ts.write_csv(&mut buf).unwrap();
    let back = TypeSpace::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.points(), ts.points());
    assert_eq!(back.weights(), ts.weights());
    assert_eq!(back.description(), ts.description());
}

#[test]
fn mesh_spec_parses() {
    for s in ["atom", "uniform:10", "graded:10:2", "powerlaw:2.5:10000:50", "finite:0.5,0.5"] {
        let spec: MeshSpec = s.parse().unwrap();
        assert!(spec.build().is_ok(), "{s}");
        let again: MeshSpec = spec.to_string().parse().unwrap();
        assert_eq!(again.to_string(), spec.to_string());
    }
    assert!("graded:0".parse::<MeshSpec>().map(|s| s.build()).map_or(true, |r| r.is_err()));
    assert!("nonsense".parse::<MeshSpec>().is_err());
}
