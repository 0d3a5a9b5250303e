use randset::sim::{default_specs, rasterize, realise, simulate, Disc, DiscConfiguration, DiscRadius, GermProcess, ModelSpec};

fn spec(process: GermProcess) -> ModelSpec {
    ModelSpec { name: None, window: (128, 128), disc_radius: DiscRadius::Fixed(4.0), process }
}

#[test]
fn same_seed_same_raster() {
    for s in default_specs() {
        assert_eq!(realise(&s, 42).unwrap(), realise(&s, 42).unwrap());
        assert_ne!(realise(&s, 42).unwrap(), realise(&s, 43).unwrap());
    }
}

#[test]
fn hard_core_keeps_minimum_distance() {
    let s = spec(GermProcess::HardCoreProxy { proposal_intensity: 0.01, hard_core_distance: 9.0 });
    for seed in 0..10 {
        let c = simulate(&s, seed).unwrap();
        assert!(c.len() > 20);
        for (i, a) in c.discs.iter().enumerate() {
            for b in &c.discs[i + 1..] {
                assert!((a.x - b.x).hypot(a.y - b.y) >= 9.0);
            }
        }
    }
}

#[test]
fn germs_lie_in_the_enlarged_window() {
    let processes = [
        GermProcess::Boolean { intensity: 0.01 },
        GermProcess::ClusterProxy { parent_intensity: 0.002, mean_offspring: 5.0, cluster_radius: 10.0 },
        GermProcess::HardCoreProxy { proposal_intensity: 0.01, hard_core_distance: 5.0 },
    ];
    for p in processes {
        let c = simulate(&spec(p), 7).unwrap();
        assert!(!c.is_empty());
        assert!(c.discs.iter().all(|d| (-4.0..132.0).contains(&d.x) && (-4.0..132.0).contains(&d.y)));
        // something sits in the margin, so the enlargement is used
        assert!(c.discs.iter().any(|d| d.x < 0.0 || d.y < 0.0 || d.x >= 128.0 || d.y >= 128.0));
    }
}

#[test]
fn cluster_proxy_is_more_clumped_than_boolean() {
    // Mean nearest-neighbour distance at equal expected germ count.
    let nn = |c: &DiscConfiguration| {
        let d: f64 = c
            .discs
            .iter()
            .map(|a| {
                c.discs
                    .iter()
                    .filter(|b| !std::ptr::eq(*b, a))
                    .map(|b| (a.x - b.x).hypot(a.y - b.y))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        d / c.len() as f64
    };
    let boolean = spec(GermProcess::Boolean { intensity: 0.004 });
    let cluster = spec(GermProcess::ClusterProxy { parent_intensity: 0.001, mean_offspring: 4.0, cluster_radius: 6.0 });
    let (mut b, mut c) = (0.0, 0.0);
    for seed in 0..10 {
        b += nn(&simulate(&boolean, seed).unwrap());
        c += nn(&simulate(&cluster, seed).unwrap());
    }
    assert!(c < 0.6 * b, "{c} vs {b}");
}

#[test]
fn rasterize_uses_pixel_centres() {
    let c = DiscConfiguration { discs: vec![Disc { x: 5.5, y: 5.5, radius: 1.0 }] };
    let r = rasterize(&c, 11, 11).unwrap();
    assert_eq!(r.foreground_count(), 5);
    for (x, y) in [(5, 5), (4, 5), (6, 5), (5, 4), (5, 6)] {
        assert!(r.get(x, y));
    }
    // disc partly outside the window is clipped
    let c = DiscConfiguration { discs: vec![Disc { x: -0.5, y: 0.5, radius: 1.0 }] };
    assert_eq!(rasterize(&c, 4, 4).unwrap().foreground_count(), 1);
}

#[test]
fn bad_specs_are_rejected() {
    let mut s = spec(GermProcess::Boolean { intensity: 0.01 });
    s.window = (16, 128);
    assert!(realise(&s, 0).is_err());
    let s = spec(GermProcess::Boolean { intensity: -1.0 });
    assert!(realise(&s, 0).is_err());
    let mut s = spec(GermProcess::Boolean { intensity: 0.01 });
    s.disc_radius = DiscRadius::Uniform { min: 3.0, max: 2.0 };
    assert!(realise(&s, 0).is_err());
    assert!(ModelSpec::from_json(r#"{"window":[64,64],"disc_radius":3,"kind":"nope"}"#).is_err());
}

#[test]
fn spec_json_round_trip() {
    let text = r#"{"window":[64,64],"disc_radius":{"min":2,"max":5},"kind":"cluster_proxy",
        "parent_intensity":0.001,"mean_offspring":3,"cluster_radius":7}"#;
    let s = ModelSpec::from_json(text).unwrap();
    assert_eq!(s.disc_radius, DiscRadius::Uniform { min: 2.0, max: 5.0 });
    assert_eq!(ModelSpec::from_json(&serde_json::to_string(&s).unwrap()).unwrap(), s);
}

#[test]
fn shipped_classes_differ_in_pa_ratio() {
    use randset::features::extract_features;
    let mean_pa = |s: &ModelSpec| {
        let (mut sum, mut n) = (0.0, 0);
        for seed in 0..8 {
            let f = extract_features(&realise(s, seed).unwrap(), 5, "x", None).unwrap();
            sum += f.components.iter().map(|c| c.pa_ratio).sum::<f64>();
            n += f.len();
        }
        sum / n as f64
    };
    let specs = default_specs();
    let (boolean, hardcore) = (mean_pa(&specs[0]), mean_pa(&specs[2]));
    assert!(hardcore > boolean, "{hardcore} vs {boolean}");
}
