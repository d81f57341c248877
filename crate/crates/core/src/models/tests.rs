use super::*;
use crate::data::Split;
use crate::heads::{angular_logits, angular_loss};
use crate::manifold::DEFAULT_XI;

fn identity_shape(
    arch: ArchKind,
    components: Vec<GeometryTag>,
    dim: usize,
    classes: usize,
) -> ModelShape {
    ModelShape {
        arch,
        components,
        extractor_dims: ExtractorDims::Identity { dim },
        has_euclidean: matches!(arch, ArchKind::Baseline | ArchKind::Git),
        classes,
        xi: DEFAULT_XI,
    }
}

fn uniform_euclidean(classes: usize, dim: usize) -> EuclideanHead<Real> {
    EuclideanHead::new(Mat::zeros(classes, dim), vec![0.0; classes]).unwrap()
}

fn uniform_angular(classes: usize, dim: usize, kappa: Real) -> CurvedBranch {
    let mut row = vec![0.0; dim];
    row[0] = 1.0;
    let rows = vec![row; classes];
    let head = AngularHead::from_unnormalized(&rows, Curvature::spherical(kappa).unwrap()).unwrap();
    CurvedBranch {
        tag: GeometryTag::Spherical { kappa },
        head: CurvedHead::Angular(head),
    }
}

fn uniform_mlr(classes: usize, dim: usize, kappa: Real) -> CurvedBranch {
    let curvature = Curvature::hyperbolic(kappa).unwrap();
    let offsets = (0..classes)
        .map(|_| BallPoint::origin(dim, curvature, DEFAULT_XI).unwrap())
        .collect();
    let mut w = vec![0.0; dim];
    w[0] = 0.5;
    let head = HyperbolicMlrHead::new(offsets, vec![w; classes]).unwrap();
    CurvedBranch {
        tag: GeometryTag::Hyperbolic { kappa },
        head: CurvedHead::Mlr(head),
    }
}

fn two_gaussians(seed: u64, per_class: usize, dim: usize) -> Dataset {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2usize {
        let center = if class == 0 { 2.0 } else { -2.0 };
        for _ in 0..per_class {
            let row: Vec<Real> = (0..dim)
                .map(|_| center + 0.4 * rng.sample::<Real, _>(rand_distr::StandardNormal))
                .collect();
            features.push(row);
            labels.push(Label::Class(class));
        }
    }
    Dataset {
        ids: (0..features.len()).map(|i| i.to_string()).collect(),
        features,
        labels,
        split: Split::Train,
        seed,
        provenance: "two gaussians".into(),
    }
}

#[test]
fn forward_identity_pipeline_hyperbolic() {
    let shape = identity_shape(
        ArchKind::Gio,
        vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        2,
        3,
    );
    let model = init_model(&shape, 0).unwrap();
    let out = forward(&model, &[0.3, -0.4]).unwrap();
    match &out.branches[0].embedding {
        GeoPoint::Ball(p) => assert_eq!(p.coords(), &[0.3, -0.4]),
        other => panic!("expected ball point, got {other:?}"),
    }
    assert_eq!(out.embedding, vec![0.3, -0.4]);
}

#[test]
fn forward_identity_pipeline_spherical() {
    let shape = identity_shape(
        ArchKind::Gio,
        vec![GeometryTag::Spherical { kappa: 1.0 }],
        2,
        2,
    );
    let model = init_model(&shape, 0).unwrap();
    let out = forward(&model, &[3.0, 4.0]).unwrap();
    match &out.branches[0].embedding {
        GeoPoint::Sphere(p) => {
            assert!((p.coords()[0] - 0.6).abs() < 1e-12);
            assert!((p.coords()[1] - 0.8).abs() < 1e-12);
        }
        other => panic!("expected sphere point, got {other:?}"),
    }
}

#[test]
fn forward_git_produces_both_embeddings() {
    let shape = identity_shape(
        ArchKind::Git,
        vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        2,
        2,
    );
    let model = init_model(&shape, 1).unwrap();
    let out = forward(&model, &[0.25, 0.1]).unwrap();
    assert_eq!(out.embedding, vec![0.25, 0.1]);
    assert!(out.euclidean.is_some());
    match &out.branches[0].embedding {
        GeoPoint::Ball(p) => assert_eq!(p.coords(), &[0.25, 0.1]),
        other => panic!("expected ball point, got {other:?}"),
    }
    // the product of declared components carries both embeddings
    let pp = out.product_point().unwrap();
    assert_eq!(pp.components().len(), 2);
}

#[test]
fn forward_rejects_wrong_input_dim() {
    let shape = identity_shape(ArchKind::Baseline, vec![], 3, 2);
    let model = init_model(&shape, 0).unwrap();
    assert!(matches!(
        forward(&model, &[1.0, 2.0]),
        Err(Error::DimMismatch { .. })
    ));
}

#[test]
fn git_uniform_confidences_loss_is_two_ln_c() {
    let (classes, dim) = (4usize, 3usize);
    let model = Model::from_parts(
        ArchKind::Git,
        vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        Extractor::Identity { dim },
        Some(uniform_euclidean(classes, dim)),
        vec![uniform_mlr(classes, dim, -1.0)],
        DEFAULT_XI,
        classes,
    )
    .unwrap();
    let loss = training_loss(&model, &[vec![0.2, 0.1, -0.3]], &[2]).unwrap();
    assert!((loss - 2.0 * 4.0_f64.ln()).abs() < 1e-9);
}

#[test]
fn mit_uniform_confidences_loss_is_three_ln_c() {
    let (classes, dim) = (2usize, 3usize);
    let model = Model::from_parts(
        ArchKind::Git,
        vec![
            GeometryTag::Spherical { kappa: 1.0 },
            GeometryTag::Hyperbolic { kappa: -1.0 },
        ],
        Extractor::Identity { dim },
        Some(uniform_euclidean(classes, dim)),
        vec![
            uniform_angular(classes, dim, 1.0),
            uniform_mlr(classes, dim, -1.0),
        ],
        DEFAULT_XI,
        classes,
    )
    .unwrap();
    let loss = training_loss(&model, &[vec![0.2, 0.1, -0.3]], &[1]).unwrap();
    assert!((loss - 3.0 * 2.0_f64.ln()).abs() < 1e-9);
}

#[test]
fn gio_spherical_loss_equals_angular_loss() {
    let shape = identity_shape(
        ArchKind::Gio,
        vec![GeometryTag::Spherical { kappa: 1.0 }],
        3,
        4,
    );
    let model = init_model(&shape, 5).unwrap();
    let batch = vec![vec![1.0, -0.5, 0.25], vec![0.3, 2.0, -1.0]];
    let labels = vec![1usize, 3usize];

    let via_model = training_loss(&model, &batch, &labels).unwrap();

    let CurvedHead::Angular(head) = &model.branches[0].head else {
        panic!()
    };
    let logit_rows: Vec<Vec<Real>> = batch
        .iter()
        .map(|x| {
            let p = sphere_project(x, Curvature::spherical(1.0).unwrap()).unwrap();
            angular_logits(&p, head).unwrap()
        })
        .collect();
    let via_heads = angular_loss(&logit_rows, &labels).unwrap();
    assert!((via_model - via_heads).abs() < 1e-12);
}

#[test]
fn gio_mixed_with_euclidean_component_sums_three_losses() {
    let (classes, dim) = (3usize, 2usize);
    let model = Model::from_parts(
        ArchKind::Gio,
        vec![
            GeometryTag::Euclidean,
            GeometryTag::Spherical { kappa: 1.0 },
            GeometryTag::Hyperbolic { kappa: -1.0 },
        ],
        Extractor::Identity { dim },
        Some(uniform_euclidean(classes, dim)),
        vec![
            uniform_angular(classes, dim, 1.0),
            uniform_mlr(classes, dim, -1.0),
        ],
        DEFAULT_XI,
        classes,
    )
    .unwrap();
    let loss = training_loss(&model, &[vec![0.4, -0.1]], &[0]).unwrap();
    assert!((loss - 3.0 * 3.0_f64.ln()).abs() < 1e-9);
}

#[test]
fn validate_rejects_inconsistent_wiring() {
    // dual-branch without a Euclidean head
    let r = Model::from_parts(
        ArchKind::Git,
        vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        Extractor::Identity { dim: 2 },
        None,
        vec![uniform_mlr(2, 2, -1.0)],
        DEFAULT_XI,
        2,
    );
    assert!(r.is_err());
    // single-branch with an undeclared Euclidean classifier
    let r = Model::from_parts(
        ArchKind::Gio,
        vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        Extractor::Identity { dim: 2 },
        Some(uniform_euclidean(2, 2)),
        vec![uniform_mlr(2, 2, -1.0)],
        DEFAULT_XI,
        2,
    );
    assert!(r.is_err());
}

#[test]
fn zero_lr_training_preserves_parameters_exactly() {
    let shape = ModelShape {
        arch: ArchKind::Git,
        components: vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        extractor_dims: ExtractorDims::Mlp {
            dims: vec![3, 8, 8, 4],
        },
        has_euclidean: true,
        classes: 2,
        xi: DEFAULT_XI,
    };
    let model = init_model(&shape, 3).unwrap();
    let before = model.to_param_set().flat_values();
    let data = two_gaussians(0, 20, 3);
    let config = TrainConfig {
        epochs: 3,
        lr: 0.0,
        batch_size: 8,
        seed: 3,
    };
    let (model, report) = train(model, &data, &config).unwrap();
    assert_eq!(model.to_param_set().flat_values(), before);
    // constant loss across epochs, up to batch summation order
    let (a, b) = (report.epoch_losses[0], report.epoch_losses[2]);
    assert!((a - b).abs() <= 1e-12 * a.abs());
}

#[test]
fn training_is_bit_deterministic() {
    let shape = ModelShape {
        arch: ArchKind::Gio,
        components: vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
        extractor_dims: ExtractorDims::Mlp {
            dims: vec![3, 8, 8, 4],
        },
        has_euclidean: false,
        classes: 2,
        xi: DEFAULT_XI,
    };
    let data = two_gaussians(1, 15, 3);
    let config = TrainConfig {
        epochs: 4,
        lr: 0.05,
        batch_size: 8,
        seed: 9,
    };
    let run = || {
        let model = init_model(&shape, 9).unwrap();
        let (model, report) = train(model, &data, &config).unwrap();
        (model.to_param_set().flat_values(), report.epoch_losses)
    };
    let (params_a, losses_a) = run();
    let (params_b, losses_b) = run();
    assert_eq!(params_a, params_b);
    assert_eq!(losses_a, losses_b);
}

#[test]
fn epoch_zero_uniform_loss_is_branch_count_times_ln_c() {
    let (classes, dim) = (4usize, 3usize);
    let data = {
        let mut ds = two_gaussians(2, 10, dim);
        // relabel into 4 classes so C = 4
        for (i, l) in ds.labels.iter_mut().enumerate() {
            *l = Label::Class(i % classes);
        }
        ds
    };
    let cases: Vec<(Model, usize)> = vec![
        (
            Model::from_parts(
                ArchKind::Baseline,
                vec![],
                Extractor::Identity { dim },
                Some(uniform_euclidean(classes, dim)),
                vec![],
                DEFAULT_XI,
                classes,
            )
            .unwrap(),
            1,
        ),
        (
            Model::from_parts(
                ArchKind::Git,
                vec![
                    GeometryTag::Spherical { kappa: 1.0 },
                    GeometryTag::Hyperbolic { kappa: -1.0 },
                ],
                Extractor::Identity { dim },
                Some(uniform_euclidean(classes, dim)),
                vec![
                    uniform_angular(classes, dim, 1.0),
                    uniform_mlr(classes, dim, -1.0),
                ],
                DEFAULT_XI,
                classes,
            )
            .unwrap(),
            3,
        ),
    ];
    for (model, branches) in cases {
        let config = TrainConfig {
            epochs: 1,
            lr: 0.0,
            batch_size: 16,
            seed: 0,
        };
        let (_, report) = train(model, &data, &config).unwrap();
        let want = branches as Real * (classes as Real).ln();
        assert!(
            (report.epoch_losses[0] - want).abs() < 1e-6,
            "{} vs {want}",
            report.epoch_losses[0]
        );
    }
}

#[test]
fn converges_on_separable_data() {
    let data = two_gaussians(0, 40, 4);
    for components in [
        vec![GeometryTag::Spherical { kappa: 1.0 }],
        vec![GeometryTag::Hyperbolic { kappa: -1.0 }],
    ] {
        let shape = ModelShape {
            arch: ArchKind::Gio,
            components,
            extractor_dims: ExtractorDims::Mlp {
                dims: vec![4, 16, 16, 4],
            },
            has_euclidean: false,
            classes: 2,
            xi: DEFAULT_XI,
        };
        let model = init_model(&shape, 0).unwrap();
        let config = TrainConfig {
            epochs: 20,
            lr: 0.1,
            batch_size: 16,
            seed: 0,
        };
        let (_, report) = train(model, &data, &config).unwrap();
        assert!(
            report.final_train_accuracy >= 0.95,
            "accuracy {}",
            report.final_train_accuracy
        );
    }
}

#[test]
fn forward_embeddings_respect_manifold_invariants() {
    let shape = ModelShape {
        arch: ArchKind::Git,
        components: vec![
            GeometryTag::Spherical { kappa: 2.0 },
            GeometryTag::Hyperbolic { kappa: -1.0 },
        ],
        extractor_dims: ExtractorDims::Mlp {
            dims: vec![4, 8, 8, 4],
        },
        has_euclidean: true,
        classes: 2,
        xi: DEFAULT_XI,
    };
    let model = init_model(&shape, 1).unwrap();
    let data = two_gaussians(4, 25, 4);
    for row in &data.features {
        let out = forward(&model, row).unwrap();
        for b in &out.branches {
            match &b.embedding {
                GeoPoint::Sphere(p) => {
                    let n2: Real = p.coords().iter().map(|v| v * v).sum();
                    let want = 1.0 / 2.0;
                    assert!(((n2 - want) / want).abs() < 1e-9);
                }
                GeoPoint::Ball(p) => assert!(p.norm() <= 1.0 + 1e-12),
                GeoPoint::Euclidean(_) => {}
            }
        }
    }
}

#[test]
fn hyperbolic_logits_stay_regular_as_curvature_vanishes() {
    // fixed small inputs, |κ| halving below 1e-6: logits must stabilize
    let dim = 3;
    let classes = 2;
    let x = vec![0.4, -0.2, 0.1];
    let offsets_raw = [vec![0.1, 0.0, -0.2], vec![-0.05, 0.2, 0.0]];
    let normals = vec![vec![0.3, -0.7, 0.2], vec![0.6, 0.1, -0.4]];
    let mut kappa = -1e-6;
    let logits_at = |kappa: Real| {
        let curvature = Curvature::hyperbolic(kappa).unwrap();
        let offsets = offsets_raw
            .iter()
            .map(|r| BallPoint::new(r.clone(), curvature, DEFAULT_XI).unwrap())
            .collect();
        let head = HyperbolicMlrHead::new(offsets, normals.clone()).unwrap();
        let p = ball_clip(&x, curvature, DEFAULT_XI).unwrap();
        crate::heads::hyperbolic_mlr_logits(&p, &head).unwrap()
    };
    let mut prev = logits_at(kappa);
    for _ in 0..6 {
        kappa /= 2.0;
        let next = logits_at(kappa);
        for j in 0..classes {
            assert!(
                (next[j] - prev[j]).abs() < 1e-3,
                "kappa {kappa}: {} vs {}",
                next[j],
                prev[j]
            );
            assert!(next[j].is_finite());
        }
        prev = next;
    }
    let _ = dim;
}

#[test]
fn param_round_trip_through_flat_vector() {
    let shape = ModelShape {
        arch: ArchKind::Git,
        components: vec![
            GeometryTag::Spherical { kappa: 1.0 },
            GeometryTag::Hyperbolic { kappa: -0.5 },
        ],
        extractor_dims: ExtractorDims::Mlp {
            dims: vec![3, 6, 6, 4],
        },
        has_euclidean: true,
        classes: 3,
        xi: DEFAULT_XI,
    };
    let model = init_model(&shape, 7).unwrap();
    let flat = model.to_param_set().flat_values();
    let mut clone = model.clone();
    clone.set_from_flat(&flat).unwrap();
    assert_eq!(clone.to_param_set().flat_values(), flat);
}
