//! Model assembly and training.
//!
//! Three families share one feature extractor:
//!
//! * baseline — extractor plus a Euclidean linear classifier;
//! * single-space — the classifier operates in one curved space reached
//!   through a geometric transformation of the extractor output;
//! * dual-branch — a Euclidean classifier and one or more curved
//!   classifiers side by side, trained jointly.
//!
//! The training loss is evaluated through the same generic kernels as
//! inference: once with plain floats for reporting, once with tape
//! variables for gradients.

pub mod io;

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{sgd_step, Constraint, ParamSet, ScalarLoss, Tape};
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::heads::{
    angular_logits_k, euclidean_logits_k, mlr_logits_k, softmax, AngularHead, ConfidenceVec,
    EuclideanHead, HyperbolicMlrHead,
};
use crate::linalg::Mat;
use crate::manifold::{
    ball_clip, ball_clip_k, sphere_project, sphere_project_k, BallPoint, Curvature, GeoPoint,
    ProductPoint, SpherePoint,
};
use crate::scalar::{cross_entropy_from_logits, relu, Scalar};
use crate::Real;

/// Model family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    Baseline,
    /// Single-branch geometric classifier (replaces the Euclidean one).
    Gio,
    /// Dual-branch: Euclidean plus geometric classifiers.
    Git,
}

impl ArchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchKind::Baseline => "baseline",
            ArchKind::Gio => "gio",
            ArchKind::Git => "git",
        }
    }
}

/// Geometry of one embedding component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeometryTag {
    Euclidean,
    Spherical { kappa: Real },
    Hyperbolic { kappa: Real },
}

impl GeometryTag {
    pub fn is_curved(&self) -> bool {
        !matches!(self, GeometryTag::Euclidean)
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeometryTag::Euclidean => "euclidean",
            GeometryTag::Spherical { .. } => "spherical",
            GeometryTag::Hyperbolic { .. } => "hyperbolic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GeometryTag::Euclidean => Ok(()),
            GeometryTag::Spherical { kappa } => Curvature::spherical(kappa).map(|_| ()),
            GeometryTag::Hyperbolic { kappa } => Curvature::hyperbolic(kappa).map(|_| ()),
        }
    }
}

/// Feature extractor: identity for precomputed embeddings, otherwise a
/// rectifier network with a linear output layer.
///
/// The rectifier network standardizes its input per coordinate with
/// statistics fitted on the training split; the identity extractor passes
/// features through untouched.
#[derive(Clone, Debug)]
pub enum Extractor {
    Identity {
        dim: usize,
    },
    Mlp {
        dims: Vec<usize>,
        weights: Vec<Mat<Real>>,
        biases: Vec<Vec<Real>>,
        /// Per-coordinate input shift.
        mean: Vec<Real>,
        /// Per-coordinate input scale (reciprocal standard deviation).
        inv_std: Vec<Real>,
    },
}

impl Extractor {
    pub fn input_dim(&self) -> usize {
        match self {
            Extractor::Identity { dim } => *dim,
            Extractor::Mlp { dims, .. } => dims[0],
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Extractor::Identity { dim } => *dim,
            Extractor::Mlp { dims, .. } => *dims.last().unwrap(),
        }
    }

    /// The standardized input seen by the first linear layer.
    pub fn standardize(&self, x: &[Real]) -> Vec<Real> {
        match self {
            Extractor::Identity { .. } => x.to_vec(),
            Extractor::Mlp { mean, inv_std, .. } => x
                .iter()
                .zip(mean)
                .zip(inv_std)
                .map(|((v, m), s)| (v - m) * s)
                .collect(),
        }
    }

    pub fn forward(&self, x: &[Real]) -> Vec<Real> {
        match self {
            Extractor::Identity { .. } => x.to_vec(),
            Extractor::Mlp {
                dims,
                weights,
                biases,
                ..
            } => {
                let mut h = self.standardize(x);
                let last = dims.len() - 2;
                for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
                    let mut out: Vec<Real> = w
                        .matvec(&h)
                        .iter()
                        .zip(b)
                        .map(|(v, bias)| v + bias)
                        .collect();
                    if l < last {
                        for v in out.iter_mut() {
                            *v = relu(*v);
                        }
                    }
                    h = out;
                }
                h
            }
        }
    }
}

/// One curved classifier branch.
#[derive(Clone, Debug)]
pub struct CurvedBranch {
    pub tag: GeometryTag,
    pub head: CurvedHead,
}

#[derive(Clone, Debug)]
pub enum CurvedHead {
    Angular(AngularHead<Real>),
    Mlr(HyperbolicMlrHead<Real>),
}

/// A trained or trainable network.
#[derive(Clone, Debug)]
pub struct Model {
    pub arch: ArchKind,
    /// Declared components: curved spaces, plus `Euclidean` when a mixed
    /// single-branch model keeps the Euclidean classifier as a component.
    pub components: Vec<GeometryTag>,
    pub extractor: Extractor,
    pub euclidean: Option<EuclideanHead<Real>>,
    pub branches: Vec<CurvedBranch>,
    pub xi: Real,
    pub classes: usize,
}

impl Model {
    /// Validates the architecture/branch wiring.
    pub fn from_parts(
        arch: ArchKind,
        components: Vec<GeometryTag>,
        extractor: Extractor,
        euclidean: Option<EuclideanHead<Real>>,
        branches: Vec<CurvedBranch>,
        xi: Real,
        classes: usize,
    ) -> Result<Model> {
        let model = Model {
            arch,
            components,
            extractor,
            euclidean,
            branches,
            xi,
            classes,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for tag in &self.components {
            tag.validate()?;
        }
        let n_curved = self.components.iter().filter(|t| t.is_curved()).count();
        let declares_euclid = self.components.iter().any(|t| !t.is_curved());
        match self.arch {
            ArchKind::Baseline => {
                if self.euclidean.is_none() || !self.components.is_empty() {
                    return Err(Error::BadSpec(
                        "baseline has exactly the Euclidean classifier".into(),
                    ));
                }
            }
            ArchKind::Gio => {
                if self.components.is_empty() {
                    return Err(Error::EmptyComponents);
                }
                if declares_euclid != self.euclidean.is_some() {
                    return Err(Error::BadSpec(
                        "single-branch models carry a Euclidean classifier exactly when \
                         the Euclidean space is a declared component"
                            .into(),
                    ));
                }
            }
            ArchKind::Git => {
                if self.euclidean.is_none() {
                    return Err(Error::BadSpec(
                        "dual-branch models need the Euclidean classifier".into(),
                    ));
                }
                if n_curved == 0 {
                    return Err(Error::EmptyComponents);
                }
                if declares_euclid {
                    return Err(Error::BadSpec(
                        "the Euclidean branch of a dual-branch model is implicit".into(),
                    ));
                }
            }
        }
        if self.branches.len() != n_curved {
            return Err(Error::BadSpec(format!(
                "{} curved components but {} branch heads",
                n_curved,
                self.branches.len()
            )));
        }
        let n = self.extractor.output_dim();
        if let Some(h) = &self.euclidean {
            if h.dim() != n || h.classes() != self.classes {
                return Err(Error::DimMismatch {
                    left: h.dim(),
                    right: n,
                });
            }
        }
        for b in &self.branches {
            let (dim, classes) = match &b.head {
                CurvedHead::Angular(h) => (h.dim(), h.classes()),
                CurvedHead::Mlr(h) => (h.dim(), h.classes()),
            };
            if dim != n {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: n,
                });
            }
            if classes != self.classes {
                return Err(Error::BadLabel {
                    label: classes,
                    classes: self.classes,
                });
            }
        }
        Ok(())
    }

    /// Number of trained classifier branches (loss terms).
    pub fn n_loss_branches(&self) -> usize {
        usize::from(self.euclidean.is_some()) + self.branches.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            arch: self.arch,
            components: self.components.clone(),
            extractor_dims: match &self.extractor {
                Extractor::Identity { dim } => ExtractorDims::Identity { dim: *dim },
                Extractor::Mlp { dims, .. } => ExtractorDims::Mlp { dims: dims.clone() },
            },
            has_euclidean: self.euclidean.is_some(),
            classes: self.classes,
            xi: self.xi,
        }
    }
}

// ---------------------------------------------------------------------------
// Seeded initialization
// ---------------------------------------------------------------------------

/// Structural description of a model, sufficient to lay out parameters.
#[derive(Clone, Debug)]
pub struct ModelShape {
    pub arch: ArchKind,
    pub components: Vec<GeometryTag>,
    pub extractor_dims: ExtractorDims,
    pub has_euclidean: bool,
    pub classes: usize,
    pub xi: Real,
}

#[derive(Clone, Debug)]
pub enum ExtractorDims {
    Identity { dim: usize },
    Mlp { dims: Vec<usize> },
}

impl ModelShape {
    pub fn embed_dim(&self) -> usize {
        match &self.extractor_dims {
            ExtractorDims::Identity { dim } => *dim,
            ExtractorDims::Mlp { dims } => *dims.last().unwrap(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.extractor_dims {
            ExtractorDims::Identity { dim } => *dim,
            ExtractorDims::Mlp { dims } => dims[0],
        }
    }

    /// Parameter tensors in flat order: extractor layers, Euclidean head,
    /// then each curved branch.
    pub fn tensor_decls(&self) -> Vec<(String, Vec<usize>, Constraint<Real>)> {
        let mut decls = Vec::new();
        if let ExtractorDims::Mlp { dims } = &self.extractor_dims {
            for l in 0..dims.len() - 1 {
                decls.push((
                    format!("extractor.w{l}"),
                    vec![dims[l + 1], dims[l]],
                    Constraint::Free,
                ));
                decls.push((
                    format!("extractor.b{l}"),
                    vec![dims[l + 1]],
                    Constraint::Free,
                ));
            }
        }
        let n = self.embed_dim();
        let c = self.classes;
        if self.has_euclidean {
            decls.push(("euclidean.weight".into(), vec![c, n], Constraint::Free));
            decls.push(("euclidean.bias".into(), vec![c], Constraint::Free));
        }
        for (i, tag) in self.components.iter().filter(|t| t.is_curved()).enumerate() {
            match *tag {
                GeometryTag::Spherical { kappa } => {
                    decls.push((
                        format!("branch{i}.prototypes"),
                        vec![c, n],
                        Constraint::SphereRows { kappa },
                    ));
                }
                GeometryTag::Hyperbolic { kappa } => {
                    decls.push((
                        format!("branch{i}.offsets"),
                        vec![c, n],
                        Constraint::BallRows { kappa, xi: self.xi },
                    ));
                    decls.push((format!("branch{i}.normals"), vec![c, n], Constraint::Free));
                }
                GeometryTag::Euclidean => unreachable!(),
            }
        }
        decls
    }
}

/// Builds a model with seeded initialization.
///
/// Extractor weights and the Euclidean/normal rows draw from a zero-mean
/// uniform with half-width `1/√fan_in`; hyperbolic offsets start at the
/// origin; angular prototypes draw from a Gaussian and are projected onto
/// the sphere. All draws come from one ChaCha8 stream in declaration
/// order, so `(shape, seed)` pins the initial parameters.
pub fn init_model(shape: &ModelShape, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.embed_dim();
    let c = shape.classes;

    let extractor = match &shape.extractor_dims {
        ExtractorDims::Identity { dim } => Extractor::Identity { dim: *dim },
        ExtractorDims::Mlp { dims } => {
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 0..dims.len() - 1 {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                // the output layer starts near zero so embeddings begin
                // close to the ball origin, clear of the conformal-factor
                // blow-up at the clip shell
                let scale = if l == dims.len() - 2 { 0.01 } else { 1.0 };
                let half = scale / (fan_in as Real).sqrt();
                let data: Vec<Real> = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-half..half))
                    .collect();
                weights.push(Mat::new(fan_out, fan_in, data));
                biases.push(vec![0.0; fan_out]);
            }
            Extractor::Mlp {
                dims: dims.clone(),
                weights,
                biases,
                mean: vec![0.0; dims[0]],
                inv_std: vec![1.0; dims[0]],
            }
        }
    };

    let half = 1.0 / (n as Real).sqrt();
    let euclidean = if shape.has_euclidean {
        let data: Vec<Real> = (0..c * n).map(|_| rng.random_range(-half..half)).collect();
        Some(EuclideanHead::new(Mat::new(c, n, data), vec![0.0; c])?)
    } else {
        None
    };

    let mut branches = Vec::new();
    for tag in shape.components.iter().filter(|t| t.is_curved()) {
        match *tag {
            GeometryTag::Spherical { kappa } => {
                let curvature = Curvature::spherical(kappa)?;
                let mut rows = Vec::with_capacity(c);
                while rows.len() < c {
                    let row: Vec<Real> = (0..n)
                        .map(|_| rng.sample(rand_distr::StandardNormal))
                        .collect();
                    if row.iter().map(|v| v * v).sum::<Real>().sqrt() > 1e-6 {
                        rows.push(row);
                    }
                }
                let head = AngularHead::from_unnormalized(&rows, curvature)?;
                branches.push(CurvedBranch {
                    tag: *tag,
                    head: CurvedHead::Angular(head),
                });
            }
            GeometryTag::Hyperbolic { kappa } => {
                let curvature = Curvature::hyperbolic(kappa)?;
                let offsets = (0..c)
                    .map(|_| BallPoint::origin(n, curvature, shape.xi))
                    .collect::<Result<Vec<_>>>()?;
                let mut normals = Vec::with_capacity(c);
                while normals.len() < c {
                    let row: Vec<Real> = (0..n).map(|_| rng.random_range(-half..half)).collect();
                    if row.iter().map(|v| v * v).sum::<Real>().sqrt() > 1e-6 {
                        normals.push(row);
                    }
                }
                let head = HyperbolicMlrHead::new(offsets, normals)?;
                branches.push(CurvedBranch {
                    tag: *tag,
                    head: CurvedHead::Mlr(head),
                });
            }
            GeometryTag::Euclidean => {}
        }
    }

    Model::from_parts(
        shape.arch,
        shape.components.clone(),
        extractor,
        euclidean,
        branches,
        shape.xi,
        shape.classes,
    )
}

// ---------------------------------------------------------------------------
// Parameter flattening
// ---------------------------------------------------------------------------

impl Model {
    /// Copies parameters into a named [`ParamSet`] (declaration order).
    pub fn to_param_set(&self) -> ParamSet<Real> {
        let shape = self.shape();
        let mut params = ParamSet::new();
        let mut values: Vec<Vec<Real>> = Vec::new();
        if let Extractor::Mlp {
            weights, biases, ..
        } = &self.extractor
        {
            for (w, b) in weights.iter().zip(biases) {
                values.push(w.data().to_vec());
                values.push(b.clone());
            }
        }
        // standardization statistics are data constants, not parameters

        if let Some(h) = &self.euclidean {
            values.push(h.weight.data().to_vec());
            values.push(h.bias.clone());
        }
        for b in &self.branches {
            match &b.head {
                CurvedHead::Angular(h) => values.push(h.flat()),
                CurvedHead::Mlr(h) => {
                    values.push(h.offsets_flat());
                    values.push(h.normals_flat());
                }
            }
        }
        for ((name, dims, constraint), data) in shape.tensor_decls().into_iter().zip(values) {
            params.add(name, dims, data, constraint);
        }
        params
    }

    /// Rebuilds typed heads from a flat parameter vector (declaration order).
    pub fn set_from_flat(&mut self, flat: &[Real]) -> Result<()> {
        let shape = self.shape();
        let mut off = 0usize;
        let mut take = |len: usize| {
            let s = &flat[off..off + len];
            off += len;
            s.to_vec()
        };
        if let Extractor::Mlp {
            dims,
            weights,
            biases,
            ..
        } = &mut self.extractor
        {
            for l in 0..dims.len() - 1 {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                weights[l] = Mat::new(fan_out, fan_in, take(fan_in * fan_out));
                biases[l] = take(fan_out);
            }
        }
        let n = shape.embed_dim();
        let c = shape.classes;
        if self.euclidean.is_some() {
            let w = Mat::new(c, n, take(c * n));
            let b = take(c);
            self.euclidean = Some(EuclideanHead::new(w, b)?);
        }
        for branch in &mut self.branches {
            match branch.tag {
                GeometryTag::Spherical { kappa } => {
                    let curvature = Curvature::spherical(kappa)?;
                    let flat_rows = take(c * n);
                    let prototypes = flat_rows
                        .chunks(n)
                        .map(|r| SpherePoint::new(r.to_vec(), curvature))
                        .collect::<Result<Vec<_>>>()?;
                    branch.head = CurvedHead::Angular(AngularHead::new(prototypes)?);
                }
                GeometryTag::Hyperbolic { kappa } => {
                    let curvature = Curvature::hyperbolic(kappa)?;
                    let offs = take(c * n);
                    let norms = take(c * n);
                    let offsets = offs
                        .chunks(n)
                        .map(|r| BallPoint::new(r.to_vec(), curvature, self.xi))
                        .collect::<Result<Vec<_>>>()?;
                    let normals: Vec<Vec<Real>> = norms.chunks(n).map(<[Real]>::to_vec).collect();
                    branch.head = CurvedHead::Mlr(HyperbolicMlrHead::new(offsets, normals)?);
                }
                GeometryTag::Euclidean => unreachable!(),
            }
        }
        debug_assert_eq!(off, flat.len());
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Forward pass (typed, inference)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct BranchOutput {
    pub tag: GeometryTag,
    pub embedding: GeoPoint<Real>,
    pub logits: Vec<Real>,
    pub confidence: ConfidenceVec<Real>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Extractor output `e_E`.
    pub embedding: Vec<Real>,
    /// Euclidean classifier logits and confidence, when that branch exists.
    pub euclidean: Option<(Vec<Real>, ConfidenceVec<Real>)>,
    pub branches: Vec<BranchOutput>,
}

impl ForwardOutput {
    /// The embeddings of all declared components as a product-space point.
    pub fn product_point(&self) -> Result<ProductPoint<Real>> {
        let mut comps: Vec<GeoPoint<Real>> = Vec::new();
        if self.euclidean.is_some() {
            comps.push(GeoPoint::Euclidean(self.embedding.clone()));
        }
        comps.extend(self.branches.iter().map(|b| b.embedding.clone()));
        ProductPoint::new(comps)
    }
}

/// Runs the extractor and every classifier branch on one input.
pub fn forward(model: &Model, input: &[Real]) -> Result<ForwardOutput> {
    if input.len() != model.feature_dim() {
        return Err(Error::DimMismatch {
            left: input.len(),
            right: model.feature_dim(),
        });
    }
    let e_e = model.extractor.forward(input);
    let euclidean = match &model.euclidean {
        Some(h) => {
            let logits = crate::heads::euclidean_logits(&e_e, h)?;
            let conf = softmax(&logits);
            Some((logits, conf))
        }
        None => None,
    };
    let mut branches = Vec::with_capacity(model.branches.len());
    for b in &model.branches {
        let (embedding, logits) = match (&b.tag, &b.head) {
            (GeometryTag::Spherical { kappa }, CurvedHead::Angular(h)) => {
                let p = sphere_project(&e_e, Curvature::spherical(*kappa)?)?;
                let logits = crate::heads::angular_logits(&p, h)?;
                (GeoPoint::Sphere(p), logits)
            }
            (GeometryTag::Hyperbolic { kappa }, CurvedHead::Mlr(h)) => {
                let p = ball_clip(&e_e, Curvature::hyperbolic(*kappa)?, model.xi)?;
                let logits = crate::heads::hyperbolic_mlr_logits(&p, h)?;
                (GeoPoint::Ball(p), logits)
            }
            _ => return Err(Error::BadSpec("branch tag/head mismatch".into())),
        };
        let confidence = softmax(&logits);
        branches.push(BranchOutput {
            tag: b.tag,
            embedding,
            logits,
            confidence,
        });
    }
    Ok(ForwardOutput {
        embedding: e_e,
        euclidean,
        branches,
    })
}

/// Class prediction: argmax of the mean confidence across branches.
pub fn predict(model: &Model, input: &[Real]) -> Result<usize> {
    let out = forward(model, input)?;
    let mut mean = vec![0.0; model.classes];
    let mut count = 0usize;
    if let Some((_, conf)) = &out.euclidean {
        for (m, p) in mean.iter_mut().zip(conf.probs()) {
            *m += p;
        }
        count += 1;
    }
    for b in &out.branches {
        for (m, p) in mean.iter_mut().zip(b.confidence.probs()) {
            *m += p;
        }
        count += 1;
    }
    debug_assert!(count > 0);
    Ok(crate::scalar::argmax(&mean))
}

/// Fraction of correctly predicted ID samples.
pub fn accuracy(model: &Model, ds: &Dataset) -> Result<Real> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset {
            context: "accuracy",
        });
    }
    let mut correct = 0usize;
    for (row, label) in ds.features.iter().zip(&ds.labels) {
        let Label::Class(want) = label else {
            return Err(Error::BadSpec("accuracy over anomalous samples".into()));
        };
        if predict(model, row)? == *want {
            correct += 1;
        }
    }
    Ok(correct as Real / ds.len() as Real)
}

// ---------------------------------------------------------------------------
// Training loss (generic over the scalar type)
// ---------------------------------------------------------------------------

/// Walks a flat parameter slice in declaration order.
struct Cursor<'a, S> {
    theta: &'a [S],
    off: usize,
}

impl<'a, S> Cursor<'a, S> {
    fn take(&mut self, len: usize) -> &'a [S] {
        let s = &self.theta[self.off..self.off + len];
        self.off += len;
        s
    }
}

/// Mean multi-task loss of one batch as a function of the flat parameters.
///
/// `features` rows must already be standardized (see
/// [`Extractor::standardize`]); the loss treats them as constants.
pub struct BatchLoss<'a> {
    pub shape: &'a ModelShape,
    pub features: &'a [Vec<Real>],
    pub labels: &'a [usize],
}

impl BatchLoss<'_> {
    /// Per-branch mean losses, in branch order (Euclidean first when present).
    pub fn eval_branches<S: Scalar<F = Real>>(&self, theta: &[S]) -> Vec<(String, S)> {
        assert!(!self.features.is_empty());
        assert_eq!(self.features.len(), self.labels.len());
        let shape = self.shape;
        let n = shape.embed_dim();
        let c = shape.classes;

        type Layer<'t, S> = (&'t [S], &'t [S], usize, usize);
        let mut cur = Cursor { theta, off: 0 };
        let mlp_params: Option<Vec<Layer<'_, S>>> = match &shape.extractor_dims {
            ExtractorDims::Identity { .. } => None,
            ExtractorDims::Mlp { dims } => Some(
                (0..dims.len() - 1)
                    .map(|l| {
                        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                        let w = cur.take(fan_in * fan_out);
                        let b = cur.take(fan_out);
                        (w, b, fan_in, fan_out)
                    })
                    .collect(),
            ),
        };
        let euclid_params = shape.has_euclidean.then(|| {
            let w = cur.take(c * n);
            let b = cur.take(c);
            (w, b)
        });
        let branch_params: Vec<(GeometryTag, Vec<&[S]>)> = shape
            .components
            .iter()
            .filter(|t| t.is_curved())
            .map(|tag| match tag {
                GeometryTag::Spherical { .. } => (*tag, vec![cur.take(c * n)]),
                GeometryTag::Hyperbolic { .. } => (*tag, vec![cur.take(c * n), cur.take(c * n)]),
                GeometryTag::Euclidean => unreachable!(),
            })
            .collect();

        let anchor = &theta[0];
        let mut branch_totals: Vec<(String, Option<S>)> = Vec::new();
        if euclid_params.is_some() {
            branch_totals.push(("euclidean".into(), None));
        }
        let mut seen = std::collections::BTreeMap::<&str, usize>::new();
        for (tag, _) in &branch_params {
            let count = seen.entry(tag.name()).or_insert(0);
            *count += 1;
            let name = if *count == 1 {
                tag.name().to_string()
            } else {
                format!("{}_{}", tag.name(), count)
            };
            branch_totals.push((name, None));
        }

        for (row, &label) in self.features.iter().zip(self.labels) {
            let x: Vec<S> = row.iter().map(|&v| anchor.lit(v)).collect();
            let e = match &mlp_params {
                None => x,
                Some(layers) => {
                    let mut h = x;
                    let last = layers.len() - 1;
                    for (l, (w, b, fan_in, fan_out)) in layers.iter().enumerate() {
                        let mut out = Vec::with_capacity(*fan_out);
                        for j in 0..*fan_out {
                            let row_w = &w[j * fan_in..(j + 1) * fan_in];
                            let v = S::dot(row_w, &h) + b[j].clone();
                            out.push(if l < last { relu(v) } else { v });
                        }
                        h = out;
                    }
                    h
                }
            };

            let mut slot = 0usize;
            if let Some((w, b)) = &euclid_params {
                let logits = euclidean_logits_k(&e, w, b, c, n);
                accumulate(
                    &mut branch_totals[slot].1,
                    cross_entropy_from_logits(&logits, label),
                );
                slot += 1;
            }
            for (tag, tensors) in &branch_params {
                let logits = match tag {
                    GeometryTag::Spherical { kappa } => {
                        let e_s = sphere_project_k(&e, *kappa);
                        angular_logits_k(&e_s, tensors[0], c, n)
                    }
                    GeometryTag::Hyperbolic { kappa } => {
                        let e_h = ball_clip_k(&e, kappa.abs(), shape.xi);
                        mlr_logits_k(&e_h, tensors[0], tensors[1], c, n, *kappa).0
                    }
                    GeometryTag::Euclidean => unreachable!(),
                };
                accumulate(
                    &mut branch_totals[slot].1,
                    cross_entropy_from_logits(&logits, label),
                );
                slot += 1;
            }
        }

        let inv_b = anchor.lit(1.0 / self.features.len() as Real);
        branch_totals
            .into_iter()
            .map(|(name, total)| (name, total.expect("batch non-empty") * inv_b.clone()))
            .collect()
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<S>, term: S) {
    *slot = Some(match slot.take() {
        None => term,
        Some(acc) => acc + term,
    });
}

impl ScalarLoss<Real> for BatchLoss<'_> {
    fn eval<S: Scalar<F = Real>>(&self, theta: &[S]) -> S {
        let branches = self.eval_branches(theta);
        let mut total: Option<S> = None;
        for (_, loss) in branches {
            accumulate(&mut total, loss);
        }
        total.expect("at least one branch")
    }
}

/// The model's multi-task loss on a batch, on the plain-float path.
pub fn training_loss(model: &Model, batch: &[Vec<Real>], labels: &[usize]) -> Result<Real> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset {
            context: "loss batch",
        });
    }
    for &label in labels {
        if label >= model.classes {
            return Err(Error::BadLabel {
                label,
                classes: model.classes,
            });
        }
    }
    let shape = model.shape();
    let standardized: Vec<Vec<Real>> = batch
        .iter()
        .map(|row| model.extractor.standardize(row))
        .collect();
    let loss = BatchLoss {
        shape: &shape,
        features: &standardized,
        labels,
    };
    let theta = model.to_param_set().flat_values();
    Ok(loss.eval::<Real>(&theta))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: Real,
    pub batch_size: usize,
    pub seed: u64,
}

/// Global gradient-norm ceiling. The conformal factor amplifies head
/// gradients by up to `1/(2ξ)` for samples pinned at the clip shell;
/// bounding the step keeps plain SGD stable there.
pub const MAX_GRAD_NORM: Real = 10.0;

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub seed: u64,
    pub epoch_losses: Vec<Real>,
    /// Per-branch per-epoch mean losses, branch order as in the loss.
    pub branch_losses: Vec<(String, Vec<Real>)>,
    pub final_train_accuracy: Real,
    pub wall_clock_secs: f64,
}

/// Distinct stream for epoch shuffling, derived from the run seed.
fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15)
}

/// Trains `model` in place with plain SGD over seeded shuffled batches.
///
/// Deterministic for a fixed `(model, data, config)`: initialization is
/// the caller's (see [`init_model`]), the shuffle order derives from the
/// config seed, and batch order is sequential with the last partial batch
/// kept.
pub fn train(
    mut model: Model,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let started = Instant::now();
    data.assert_train_purity()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset {
            context: "training data",
        });
    }
    if data.dim() != model.feature_dim() {
        return Err(Error::ModelDataDimMismatch {
            model: model.feature_dim(),
            data: data.dim(),
        });
    }
    let labels: Vec<usize> = data
        .labels
        .iter()
        .map(|l| match l {
            Label::Class(c) => Ok(*c),
            Label::Ood => Err(Error::BadSpec("anomalous sample in training batch".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    if data.n_classes() < 2 {
        return Err(Error::BadSpec("training needs at least two classes".into()));
    }
    if labels.iter().any(|&l| l >= model.classes) {
        return Err(Error::BadLabel {
            label: *labels.iter().max().unwrap(),
            classes: model.classes,
        });
    }
    if config.batch_size == 0 {
        return Err(Error::BadSpec("batch_size must be positive".into()));
    }

    // the rectifier extractor standardizes inputs by train statistics
    if let Extractor::Mlp { mean, inv_std, .. } = &mut model.extractor {
        let d = data.dim();
        let count = data.len() as Real;
        let mut mu = vec![0.0; d];
        for row in &data.features {
            for (a, v) in mu.iter_mut().zip(row) {
                *a += v;
            }
        }
        for a in mu.iter_mut() {
            *a /= count;
        }
        let mut var = vec![0.0; d];
        for row in &data.features {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mu) {
                *s += (v - m) * (v - m);
            }
        }
        *inv_std = var
            .iter()
            .map(|s| 1.0 / (s / count).sqrt().max(1e-8))
            .collect();
        *mean = mu;
    }
    let standardized: Vec<Vec<Real>> = data
        .features
        .iter()
        .map(|row| model.extractor.standardize(row))
        .collect();

    let shape = model.shape();
    let mut params = model.to_param_set();
    let mut rng = shuffle_rng(config.seed);
    let n = data.len();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut branch_losses: Vec<(String, Vec<Real>)> = Vec::new();

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let mut epoch_total = 0.0;
        let mut epoch_branch_totals: Vec<(String, Real)> = Vec::new();
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let feats: Vec<Vec<Real>> = chunk.iter().map(|&i| standardized[i].clone()).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let loss_fn = BatchLoss {
                shape: &shape,
                features: &feats,
                labels: &batch_labels,
            };

            let tape = Tape::new();
            let vars = params.push_vars(&tape);
            let per_branch = loss_fn.eval_branches(&vars);
            let mut total: Option<crate::autodiff::Var<Real>> = None;
            if epoch_branch_totals.is_empty() {
                epoch_branch_totals = per_branch
                    .iter()
                    .map(|(name, _)| (name.clone(), 0.0))
                    .collect();
            }
            for ((_, var), slot) in per_branch.iter().zip(&mut epoch_branch_totals) {
                slot.1 += var.val() * chunk.len() as Real;
            }
            for (_, var) in per_branch {
                accumulate(&mut total, var);
            }
            let total = total.expect("branches non-empty");
            let loss_value = total.value();
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    value: loss_value,
                });
            }
            epoch_total += loss_value * chunk.len() as Real;

            let grads = total.backward();
            params.accumulate_grads(&vars, &grads);
            params.clip_grad_norm(MAX_GRAD_NORM);
            sgd_step(&mut params, config.lr)?;
        }

        epoch_losses.push(epoch_total / n as Real);
        if branch_losses.is_empty() {
            branch_losses = epoch_branch_totals
                .iter()
                .map(|(name, _)| (name.clone(), Vec::with_capacity(config.epochs)))
                .collect();
        }
        for ((_, total), (_, series)) in epoch_branch_totals.iter().zip(&mut branch_losses) {
            series.push(*total / n as Real);
        }
    }

    model.set_from_flat(&params.flat_values())?;
    let final_train_accuracy = accuracy(&model, data)?;
    let report = TrainReport {
        seed: config.seed,
        epoch_losses,
        branch_losses,
        final_train_accuracy,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests;
