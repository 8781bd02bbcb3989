use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suskit_core::graphs::{
    components, count_paths, mean_se, planted_count, replicate, sample_chkns_family, sample_graph, ChknsVariant,
    EdgeRule, GraphSample, Strategy, VertexSpec,
};
use suskit_core::kernels::Profile;
use suskit_core::{Kernel, TypeSpace};

fn graph(n: usize, edges: &[(u32, u32)]) -> GraphSample {
    GraphSample::from_edges(n, edges.to_vec())
}

fn iid_uniform() -> VertexSpec {
    VertexSpec::Iid(TypeSpace::uniform_mesh(1).unwrap_or_else(|_| unreachable!()))
}

#[test]
fn component_examples() {
    let c = components(&graph(5, &[]));
    assert_eq!(c.chi, 1.0);
    assert!((c.chi_hat - 0.8).abs() < 1e-15);

    let k4: Vec<(u32, u32)> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
    let c = components(&graph(4, &k4));
    assert_eq!(c.chi, 4.0);
    assert_eq!(c.chi_hat, 0.0);

    let c = components(&graph(5, &[(0, 1), (1, 2), (3, 4)]));
    assert_eq!(c.sizes, vec![3, 2]);
    assert!((c.chi - 2.6).abs() < 1e-15);
    assert!((c.chi_hat - 0.8).abs() < 1e-15);
    assert_eq!(c.n_k, vec![0, 2, 3]);
}

#[test]
fn largest_tie_breaks_on_smallest_vertex() {
    let c = components(&graph(6, &[(4, 5), (1, 3)]));
    assert_eq!(c.largest_size, 2);
    assert_eq!(c.largest_root, 1);
    let c = components(&graph(6, &[(0, 5), (1, 3)]));
    assert_eq!(c.largest_root, 0);
}

#[test]
fn from_edges_normalizes() {
    let g = graph(4, &[(2, 1), (1, 2), (3, 3), (0, 3)]);
    assert_eq!(g.edges, vec![(0, 3), (1, 2)]);
}

#[test]
fn path_count_examples() {
    assert_eq!(count_paths(&graph(2, &[(0, 1)]), 3).unwrap()[..2], [2, 2]);
    let tri = count_paths(&graph(3, &[(0, 1), (1, 2), (0, 2)]), 2).unwrap();
    assert_eq!(tri, vec![3, 6, 6]);
    assert!(count_paths(&graph(20, &[]), 2).is_err());
}

#[test]
fn stats_identities_on_random_graphs() {
    let kernels = [Kernel::constant(1.0).unwrap(), Kernel::chkns(), Kernel::rank1(Profile::one_plus_x())];
    for (i, k) in kernels.iter().enumerate() {
        for seed in 0..10 {
            let g = sample_graph(k, &iid_uniform(), 3000, 0.8, EdgeRule::Clip, seed * 7 + i as u64, Strategy::Auto).unwrap();
            let c = components(&g);
            assert_eq!(c.sizes.iter().sum::<u64>(), 3000);
            assert_eq!(c.n_k.iter().sum::<u64>(), 3000);
            assert!((c.chi - c.chi_from_nk()).abs() < 1e-9 * c.chi);
            assert!(c.chi_hat <= c.chi && c.chi >= 1.0);
            assert!(g.edges.iter().all(|&(u, v)| u < v));
            assert!(g.edges.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn truncated_susceptibility_brackets_chi_hat() {
    let k = Kernel::constant(1.0).unwrap();
    let g = sample_graph(&k, &iid_uniform(), 20_000, 2.0, EdgeRule::Clip, 3, Strategy::Auto).unwrap();
    let c = components(&g);
    let delta = (20_000f64).powf(-0.25);
    // |C₂| ≤ δn < |C₁| here, so truncation removes exactly the giant
    assert!(c.sizes[1] as f64 <= delta * 20_000.0 && c.sizes[0] as f64 > delta * 20_000.0);
    assert!((c.chi_trunc(delta) - c.chi_hat).abs() < 1e-12);
    assert_eq!(c.chi_trunc(1.0), c.chi);
}

#[test]
fn sample_examples() {
    let k = Kernel::constant(2.0).unwrap();
    let g = sample_graph(&k, &iid_uniform(), 2, 1.0, EdgeRule::Clip, 0, Strategy::Auto).unwrap();
    assert_eq!(g.edges, vec![(0, 1)]);
    assert_eq!(components(&g).sizes, vec![2]);

    let g = sample_graph(&Kernel::chkns(), &VertexSpec::Grid, 500, 0.0, EdgeRule::Clip, 0, Strategy::Auto).unwrap();
    assert!(g.edges.is_empty());
    assert_eq!(components(&g).chi, 1.0);

    assert!(sample_graph(&k, &iid_uniform(), 0, 1.0, EdgeRule::Clip, 0, Strategy::Auto).is_err());
    assert!(sample_graph(&k, &iid_uniform(), 10, -1.0, EdgeRule::Clip, 0, Strategy::Auto).is_err());
}

#[test]
fn edge_rules() {
    assert_eq!(EdgeRule::Clip.probability(0.3), 0.3);
    assert_eq!(EdgeRule::Clip.probability(3.0), 1.0);
    assert!((EdgeRule::Exponential.probability(0.3) - (1.0 - (-0.3f64).exp())).abs() < 1e-16);
    assert_eq!("clip".parse::<EdgeRule>().unwrap(), EdgeRule::Clip);
    assert_eq!("exponential".parse::<EdgeRule>().unwrap(), EdgeRule::Exponential);
}

#[test]
fn planting() {
    assert_eq!(planted_count(16), 8);
    assert_eq!(planted_count(10_000), 1000);
    assert_eq!(planted_count(81), 27);
    assert_eq!(planted_count(80), 26);
    for n in 16..2000usize {
        let c = planted_count(n) as u128;
        let n3 = (n as u128).pow(3);
        assert!(c.pow(4) <= n3 && (c + 1).pow(4) > n3);
    }
    let base = TypeSpace::uniform_mesh(1).unwrap();
    let bad = VertexSpec::PlantedAtoms { base, a: 0.5, b: 0.5 };
    assert!(sample_graph(&Kernel::constant(1.0).unwrap(), &bad, 100, 1.0, EdgeRule::Clip, 0, Strategy::Auto).is_err());
}

#[test]
fn deterministic_per_seed() {
    let cases: Vec<(Kernel, VertexSpec)> = vec![
        (Kernel::constant(1.0).unwrap(), iid_uniform()),
        (Kernel::chkns(), VertexSpec::Grid),
        (Kernel::rank1(Profile::one_plus_x()), iid_uniform()),
        (Kernel::two_type(0.3).unwrap(), VertexSpec::Iid(TypeSpace::finite(&[0.5, 0.5]).unwrap())),
    ];
    for (k, vs) in &cases {
        for strategy in [Strategy::Auto, Strategy::Naive] {
            let a = sample_graph(k, vs, 3000, 1.2, EdgeRule::Clip, 11, strategy).unwrap();
            let b = sample_graph(k, vs, 3000, 1.2, EdgeRule::Clip, 11, strategy).unwrap();
            assert_eq!(a.edges, b.edges);
            assert_eq!(a.types, b.types);
            let c = sample_graph(k, vs, 3000, 1.2, EdgeRule::Clip, 12, strategy).unwrap();
            assert_ne!(a.edges, c.edges);
        }
    }
    let a = sample_chkns_family(ChknsVariant::Growth, 0.8, 5000, 1).unwrap();
    let b = sample_chkns_family(ChknsVariant::Growth, 0.8, 5000, 1).unwrap();
    assert_eq!(a.edges, b.edges);
}

fn edge_count_moments(f: impl Fn(u64) -> GraphSample + Sync + Send, seed: u64) -> (f64, f64, f64, f64) {
    let counts = replicate(200, seed, |s| Ok(f(s).edges.len() as f64)).unwrap();
    let (mean, se) = mean_se(&counts);
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 199.0;
    let fourth = counts.iter().map(|c| (c - mean).powi(4)).sum::<f64>() / 200.0;
    let se_var = ((fourth - var * var) / 200.0).sqrt();
    (mean, se, var, se_var)
}

#[test]
fn skip_samplers_match_naive() {
    let n = 2000;
    let cases: Vec<(Kernel, VertexSpec, f64, EdgeRule)> = vec![
        (Kernel::constant(1.0).unwrap(), iid_uniform(), 3.0, EdgeRule::Clip),
        (Kernel::two_type(0.2).unwrap(), VertexSpec::Iid(TypeSpace::finite(&[0.3, 0.7]).unwrap()), 2.0, EdgeRule::Exponential),
        (Kernel::rank1(Profile::one_plus_x()), iid_uniform(), 1.0, EdgeRule::Clip),
        (Kernel::rank1(Profile::linear()), VertexSpec::Iid(TypeSpace::powerlaw(2.5, 1e4, 200).unwrap()), 0.5, EdgeRule::Clip),
        (Kernel::chkns(), VertexSpec::Grid, 0.7, EdgeRule::Exponential),
        (Kernel::dubins(), iid_uniform(), 0.5, EdgeRule::Clip),
        (Kernel::max(Profile::one_minus_x()), iid_uniform(), 2.0, EdgeRule::Clip),
    ];
    for (i, (k, vs, lambda, rule)) in cases.iter().enumerate() {
        let skip = edge_count_moments(|s| sample_graph(k, vs, n, *lambda, *rule, s, Strategy::Skip).unwrap(), 100 + i as u64);
        let naive = edge_count_moments(|s| sample_graph(k, vs, n, *lambda, *rule, s, Strategy::Naive).unwrap(), 200 + i as u64);
        let dm = (skip.0 - naive.0).abs() / (skip.1.powi(2) + naive.1.powi(2)).sqrt();
        let dv = (skip.2 - naive.2).abs() / (skip.3.powi(2) + naive.3.powi(2)).sqrt();
        assert!(dm < 4.0, "{}: means {} vs {} ({dm:.2} SE)", k.name(), skip.0, naive.0);
        assert!(dv < 4.0, "{}: variances {} vs {} ({dv:.2} SE)", k.name(), skip.2, naive.2);
    }
}

#[test]
fn chkns_variant_two_is_the_grid_graph() {
    let (n, lambda) = (3000, 0.7);
    let fam = edge_count_moments(|s| sample_chkns_family(ChknsVariant::II, lambda, n, s).unwrap(), 1);
    let grid = edge_count_moments(
        |s| sample_graph(&Kernel::chkns(), &VertexSpec::Grid, n, lambda, EdgeRule::Exponential, s, Strategy::Naive).unwrap(),
        2,
    );
    let exact: f64 = (2..=n).map(|j| (j - 1) as f64 * -(-lambda * (1.0 / j as f64 - 1.0 / n as f64)).exp_m1()).sum();
    for m in [fam, grid] {
        assert!((m.0 - exact).abs() < 4.0 * m.1, "{} vs {exact}", m.0);
    }
}

#[test]
fn chkns_family_edge_counts() {
    let (n, lambda) = (4000, 0.6);
    let nf = n as f64;
    let intensity = |v: ChknsVariant, j: usize| {
        let j = j as f64;
        match v {
            ChknsVariant::I => lambda * (1.0 / (j - 1.0) - 1.0 / nf),
            ChknsVariant::II => lambda * (1.0 / j - 1.0 / nf),
            _ => lambda * (1.0 / j - 1.0 / (nf + 1.0)),
        }
    };
    for v in [ChknsVariant::I, ChknsVariant::III] {
        let m = edge_count_moments(|s| sample_chkns_family(v, lambda, n, s).unwrap(), 5);
        let exact: f64 = (2..=n).map(|j| (j - 1) as f64 * -(-intensity(v, j)).exp_m1()).sum();
        assert!((m.0 - exact).abs() < 4.0 * m.1, "{v:?}: {} vs {exact}", m.0);
    }
    let g = sample_chkns_family(ChknsVariant::Growth, 0.0, 1000, 0).unwrap();
    assert!(g.edges.is_empty());
    let g = sample_chkns_family(ChknsVariant::Growth, 1.0, 20_000, 0).unwrap();
    // about δn = n/2 attempts, minus loops and repeats
    assert!((g.edges.len() as f64 - 10_000.0).abs() < 500.0, "{}", g.edges.len());
    assert!(sample_chkns_family(ChknsVariant::Growth, 2.5, 100, 0).is_err());
}

#[test]
fn removing_edges_never_increases_chi() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..20 {
        let g = sample_graph(&Kernel::constant(1.0).unwrap(), &iid_uniform(), 400, 1.5, EdgeRule::Clip, seed, Strategy::Auto).unwrap();
        let mut edges = g.edges.clone();
        let mut chi = components(&g).chi;
        while !edges.is_empty() {
            edges.remove(rng.random_range(0..edges.len()));
            let next = components(&graph(400, &edges)).chi;
            assert!(next <= chi);
            chi = next;
        }
        assert_eq!(chi, 1.0);
    }
}

#[test]
fn path_bound_on_random_graphs() {
    let kernels = [Kernel::constant(1.0).unwrap(), Kernel::chkns(), Kernel::dubins(), Kernel::rank1(Profile::one_plus_x())];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..200u64 {
        let n = rng.random_range(2..=12);
        let k = &kernels[trial as usize % kernels.len()];
        let lambda = rng.random_range(0.5..6.0);
        let g = sample_graph(k, &iid_uniform(), n, lambda, EdgeRule::Clip, trial, Strategy::Auto).unwrap();
        let sq: u64 = components(&g).sizes.iter().map(|s| s * s).sum();
        let paths: u64 = count_paths(&g, n - 1).unwrap().iter().sum();
        assert!(sq <= paths, "trial {trial}: {sq} > {paths}");
    }
}

#[test]
fn path_bound_is_tight_on_matchings() {
    let g = graph(7, &[(0, 1), (2, 3)]);
    let sq: u64 = components(&g).sizes.iter().map(|s| s * s).sum();
    assert_eq!(count_paths(&g, 6).unwrap().iter().sum::<u64>(), sq);
}

#[test]
fn small_er_convergence() {
    let k = Kernel::constant(1.0).unwrap();
    let chis = replicate(10, 4, |s| Ok(components(&sample_graph(&k, &iid_uniform(), 50_000, 0.5, EdgeRule::Clip, s, Strategy::Auto)?).chi)).unwrap();
    let (mean, _) = mean_se(&chis);
    assert!((mean - 2.0).abs() < 0.1, "{mean}");
}
