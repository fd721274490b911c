use pesin_core::config::RunConfig;
use pesin_core::graph::{chain_through, enumerate_chains, Chain, EnumerationMode};
use pesin_core::manifold::{
    graph_transform_s, graph_transform_u, limit_manifold_s, AdmissibleManifold, EdgeTransform, Kind, LimitOptions,
    Seed, TransformOptions,
};
use pesin_core::shadow::{shadow_pi, ShadowOptions};
use pesin_core::suite::desk_graph;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> RunConfig {
    RunConfig { max_period: 3, random_windows: 2, ..RunConfig::default() }
}

fn fixed_point() -> RunConfig {
    RunConfig { max_period: 1, random_windows: 0, ..RunConfig::default() }
}

#[test]
fn shadowed_windows_are_orbits() {
    let cfg = small();
    let ctx = cfg.context().unwrap();
    let g = desk_graph(&cfg, &ctx).unwrap();
    let chains = enumerate_chains(&g, 11, EnumerationMode::Sampled { seed: 3, count: 8 }).unwrap();
    assert!(!chains.is_empty());
    for c in &chains {
        let r = shadow_pi(&g, c, &ctx.lattice, &ShadowOptions::default()).unwrap();
        assert!(r.max_residual() <= 1.0);
        let o = &r.point;
        let m = &o.map;
        for i in -(o.backward_len() as i64)..o.forward_len() as i64 {
            let (x, y) = (o.at(i).unwrap(), o.at(i + 1).unwrap());
            assert!(m.eval(x).dist(y) <= 1e-12, "index {i}");
        }
    }
}

#[test]
fn shifted_chain_shadows_the_image() {
    let cfg = small();
    let ctx = cfg.context().unwrap();
    let g = desk_graph(&cfg, &ctx).unwrap();
    let opts = ShadowOptions { semiconjugacy: false, ..ShadowOptions::default() };
    for v in (0..g.len()).step_by(5) {
        let c = chain_through(&g, v, 4).unwrap();
        let a = shadow_pi(&g, &c, &ctx.lattice, &opts).unwrap();
        let b = shadow_pi(&g, &c.shifted(), &ctx.lattice, &opts).unwrap();
        let image = a.point.map.eval(a.point.present);
        assert!(image.dist(b.point.present) <= 1e-12, "vertex {v}");
    }
}

#[test]
fn fixed_point_chain_shadows_the_origin_with_flat_leaves() {
    let cfg = fixed_point();
    let ctx = cfg.context().unwrap();
    let g = desk_graph(&cfg, &ctx).unwrap();
    assert_eq!(g.edges, vec![(0, 0)]);
    let r = shadow_pi(&g, &Chain { vertices: vec![0; 9], periodic: true }, &ctx.lattice, &ShadowOptions::default())
        .unwrap();
    assert_eq!(r.point.present.to_array(), [0.0, 0.0]);
    assert!(r.semiconjugacy_defect.unwrap() < 1e-10);
    assert!(r.stable.values.iter().chain(&r.unstable.values).all(|v| v.abs() < 1e-10));
}

fn self_edge() -> EdgeTransform {
    let cfg = fixed_point();
    let ctx = cfg.context().unwrap();
    let g = desk_graph(&cfg, &ctx).unwrap();
    EdgeTransform::new(&g.vertices[0], &g.vertices[0], &ctx.lattice).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_pairs_contract_at_the_stated_rates(seed in any::<u64>()) {
        let e = self_edge();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = TransformOptions::default();
        let grid = opts.grid;
        let a = AdmissibleManifold::random(Kind::Stable, e.dst_ps, e.dst_eta(), e.beta, grid, &mut rng);
        let b = AdmissibleManifold::random(Kind::Stable, e.dst_ps, e.dst_eta(), e.beta, grid, &mut rng);
        let (fa, fb) = (graph_transform_s(&e, &a, &opts).unwrap(), graph_transform_s(&e, &b, &opts).unwrap());
        prop_assert!(fa.check().admissible());
        prop_assert!(fa.distance_c0(&fb).unwrap() <= e.stable_rate(0.05) * a.distance_c0(&b).unwrap());
        let a = AdmissibleManifold::random(Kind::Unstable, e.src_pu, e.src_eta(), e.beta, grid, &mut rng);
        let b = AdmissibleManifold::random(Kind::Unstable, e.src_pu, e.src_eta(), e.beta, grid, &mut rng);
        let (fa, fb) = (graph_transform_u(&e, &a, &opts).unwrap(), graph_transform_u(&e, &b, &opts).unwrap());
        prop_assert!(fa.distance_c0(&fb).unwrap() <= e.unstable_rate(0.05) * a.distance_c0(&b).unwrap());
    }

    #[test]
    fn stable_limit_ignores_the_seed(seed in any::<u64>()) {
        let edges = vec![self_edge(); 12];
        let flat = limit_manifold_s(&edges, &LimitOptions::default()).unwrap();
        let rand = limit_manifold_s(&edges, &LimitOptions { seed: Seed::Random(seed), ..LimitOptions::default() }).unwrap();
        let d = flat.manifold.distance_c0(&rand.manifold).unwrap() / flat.manifold.radius;
        prop_assert!(d <= 2e-8);
    }
}

#[test]
fn config_file_round_trips() {
    let dir = std::env::temp_dir().join(format!("pesin-config-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = RunConfig { seed: 17, eps: 0.02, suites: vec!["ladder".into()], ..RunConfig::default() };
    let toml_path = dir.join("run.toml");
    let json_path = dir.join("run.json");
    std::fs::write(&toml_path, cfg.to_toml()).unwrap();
    std::fs::write(&json_path, cfg.to_json()).unwrap();
    assert_eq!(RunConfig::load(&toml_path).unwrap(), cfg);
    assert_eq!(RunConfig::load(&json_path).unwrap(), cfg);
    std::fs::remove_dir_all(&dir).unwrap();
}
