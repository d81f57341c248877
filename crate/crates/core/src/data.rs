//! Synthetic hierarchical datasets and the embedding file format.
//!
//! The generator draws super-class centers, sub-class centers around them
//! and leaf samples around those, then holds out whole leaves as the
//! anomalous test split. Everything is driven by one ChaCha8 stream so a
//! `(spec, seed)` pair pins the dataset bytes exactly.
//!
//! Embedding files are plain CSV:
//!
//! ```text
//! # curvednet-embeddings v1 dim=<d>
//! id,split,label,f0,...,f{d-1}
//! 0,train,3,0.25,-1.5,...
//! 812,test_ood,ood,...
//! ```
//!
//! with `split ∈ {train, test_id, test_ood}`, integer labels for normal
//! rows and the literal `ood` for anomalous rows; UTF-8, LF line endings
//! and `.` decimal points.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::Real;

/// Ground-truth tag of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Class(usize),
    Ood,
}

/// Which split a dataset belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    TestId,
    TestOod,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestId => "test_id",
            Split::TestOod => "test_ood",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test_id" => Some(Split::TestId),
            "test_ood" => Some(Split::TestOod),
            _ => None,
        }
    }
}

/// Feature rows with labels for one split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub features: Vec<Vec<Real>>,
    pub labels: Vec<Label>,
    pub split: Split,
    pub seed: u64,
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Number of classes implied by the largest ID label.
    pub fn n_classes(&self) -> usize {
        self.labels
            .iter()
            .filter_map(|l| match l {
                Label::Class(c) => Some(c + 1),
                Label::Ood => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Train purity: no anomalous sample may reach the training loop.
    pub fn assert_train_purity(&self) -> Result<()> {
        if self.split == Split::Train && self.labels.contains(&Label::Ood) {
            return Err(Error::BadSpec(
                "train split contains an anomalous sample".into(),
            ));
        }
        Ok(())
    }

    fn validate_finite(&self) -> Result<()> {
        for row in &self.features {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::BadSpec("non-finite feature value".into()));
            }
        }
        Ok(())
    }
}

/// The three splits produced by generation or loading.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train: Dataset,
    pub test_id: Dataset,
    pub test_ood: Dataset,
}

impl SplitData {
    pub fn total(&self) -> usize {
        self.train.len() + self.test_id.len() + self.test_ood.len()
    }
}

/// Parameters of the hierarchical Gaussian generator.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchySpec {
    pub n_super: usize,
    pub n_sub_per_super: usize,
    pub dim: usize,
    pub super_spread: Real,
    pub sub_spread: Real,
    pub noise_std: Real,
    pub samples_per_leaf: usize,
    pub ood_leaves: usize,
    pub train_fraction: Real,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        HierarchySpec {
            n_super: 4,
            n_sub_per_super: 3,
            dim: 16,
            super_spread: 10.0,
            sub_spread: 2.0,
            noise_std: 0.5,
            samples_per_leaf: 200,
            ood_leaves: 2,
            train_fraction: 0.8,
        }
    }
}

impl HierarchySpec {
    pub fn n_leaves(&self) -> usize {
        self.n_super * self.n_sub_per_super
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::BadSpec(msg));
        if self.n_leaves() < 2 {
            return fail(format!("need at least 2 leaves, got {}", self.n_leaves()));
        }
        if self.ood_leaves < 1 {
            return fail("need at least one held-out leaf".into());
        }
        if self.ood_leaves >= self.n_leaves() {
            return fail(format!(
                "{} held-out leaves leave no normal classes out of {}",
                self.ood_leaves,
                self.n_leaves()
            ));
        }
        if self.dim == 0 || self.samples_per_leaf == 0 {
            return fail("dimension and samples per leaf must be positive".into());
        }
        if !(self.super_spread > 0.0 && self.sub_spread > 0.0) {
            return fail("spreads must be positive".into());
        }
        if self.noise_std < 0.0 {
            return fail("noise_std must be non-negative".into());
        }
        if self.noise_std >= self.sub_spread {
            return fail(format!(
                "noise_std {} must stay below sub_spread {} to keep leaves resolvable",
                self.noise_std, self.sub_spread
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        Ok(())
    }
}

/// Centers used by the generator, exposed for statistical checks.
#[derive(Clone, Debug)]
pub struct GeneratedCenters {
    /// Per ID class (re-indexed), the generating sub-center.
    pub id_leaf_centers: Vec<Vec<Real>>,
}

/// Draws the hierarchical mixture and splits it into train/test_id/test_ood.
pub fn gen_hierarchical(spec: &HierarchySpec, seed: u64) -> Result<SplitData> {
    gen_hierarchical_with_centers(spec, seed).map(|(d, _)| d)
}

/// As [`gen_hierarchical`], additionally returning the generating centers.
pub fn gen_hierarchical_with_centers(
    spec: &HierarchySpec,
    seed: u64,
) -> Result<(SplitData, GeneratedCenters)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal_vec = |rng: &mut ChaCha8Rng, scale: Real, around: Option<&[Real]>| -> Vec<Real> {
        (0..spec.dim)
            .map(|i| {
                let z: Real = rng.sample(StandardNormal);
                z * scale + around.map_or(0.0, |c| c[i])
            })
            .collect()
    };

    let super_centers: Vec<Vec<Real>> = (0..spec.n_super)
        .map(|_| normal_vec(&mut rng, spec.super_spread, None))
        .collect();
    let leaf_centers: Vec<Vec<Real>> = super_centers
        .iter()
        .flat_map(|sc| {
            (0..spec.n_sub_per_super)
                .map(|_| normal_vec(&mut rng, spec.sub_spread, Some(sc)))
                .collect::<Vec<_>>()
        })
        .collect();

    // held-out leaves, sampled without replacement
    let ood_set: Vec<usize> =
        rand::seq::index::sample(&mut rng, spec.n_leaves(), spec.ood_leaves).into_vec();
    let is_ood = |leaf: usize| ood_set.contains(&leaf);

    let mut id_features: Vec<Vec<Real>> = Vec::new();
    let mut id_labels: Vec<Label> = Vec::new();
    let mut ood_features: Vec<Vec<Real>> = Vec::new();
    let mut id_leaf_centers: Vec<Vec<Real>> = Vec::new();
    let mut next_class = 0usize;
    for (leaf, center) in leaf_centers.iter().enumerate() {
        let samples: Vec<Vec<Real>> = (0..spec.samples_per_leaf)
            .map(|_| normal_vec(&mut rng, spec.noise_std, Some(center)))
            .collect();
        if is_ood(leaf) {
            ood_features.extend(samples);
        } else {
            id_labels.extend(std::iter::repeat_n(Label::Class(next_class), samples.len()));
            id_features.extend(samples);
            id_leaf_centers.push(center.clone());
            next_class += 1;
        }
    }

    let provenance = format!(
        "synthetic hierarchical mixture: {}x{} leaves, dim {}, seed {}",
        spec.n_super, spec.n_sub_per_super, spec.dim, seed
    );
    let id_pool = Dataset {
        ids: Vec::new(),
        features: id_features,
        labels: id_labels,
        split: Split::Train,
        seed,
        provenance: provenance.clone(),
    };
    let (mut train, mut test_id) = split_train_test(&id_pool, spec.train_fraction, seed)?;
    train.split = Split::Train;
    test_id.split = Split::TestId;

    let test_ood = Dataset {
        ids: Vec::new(),
        features: ood_features,
        labels: std::iter::repeat_n(Label::Ood, spec.ood_leaves * spec.samples_per_leaf).collect(),
        split: Split::TestOod,
        seed,
        provenance,
    };

    let mut data = SplitData {
        train,
        test_id,
        test_ood,
    };
    assign_sequential_ids(&mut data);
    data.train.assert_train_purity()?;
    Ok((data, GeneratedCenters { id_leaf_centers }))
}

fn assign_sequential_ids(data: &mut SplitData) {
    let mut next = 0usize;
    for ds in [&mut data.train, &mut data.test_id, &mut data.test_ood] {
        ds.ids = (next..next + ds.len()).map(|i| i.to_string()).collect();
        next += ds.len();
    }
}

/// Per-class stratified split of an ID pool into train and test halves.
pub fn split_train_test(ds: &Dataset, fraction: Real, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::BadSpec(format!(
            "fraction {fraction} outside (0, 1)"
        )));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset {
            context: "split input",
        });
    }
    let n_classes = ds.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, label) in ds.labels.iter().enumerate() {
        match label {
            Label::Class(c) => by_class[*c].push(i),
            Label::Ood => return Err(Error::BadSpec("cannot stratify anomalous samples".into())),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_rows: Vec<usize> = Vec::new();
    let mut test_rows: Vec<usize> = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall {
                class,
                count: rows.len(),
            });
        }
        use rand::seq::SliceRandom;
        rows.shuffle(&mut rng);
        let n_train = ((fraction * rows.len() as Real).round() as usize).clamp(1, rows.len() - 1);
        train_rows.extend(&rows[..n_train]);
        test_rows.extend(&rows[n_train..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    let pick = |rows: &[usize], split: Split| Dataset {
        ids: rows
            .iter()
            .map(|&i| ds.ids.get(i).cloned().unwrap_or_else(|| i.to_string()))
            .collect(),
        features: rows.iter().map(|&i| ds.features[i].clone()).collect(),
        labels: rows.iter().map(|&i| ds.labels[i]).collect(),
        split,
        seed,
        provenance: ds.provenance.clone(),
    };
    Ok((
        pick(&train_rows, Split::Train),
        pick(&test_rows, Split::TestId),
    ))
}

// ---------------------------------------------------------------------------
// Embedding CSV format
// ---------------------------------------------------------------------------

/// Renders one dataset in the embedding CSV format.
pub fn format_embeddings(ds: &Dataset) -> String {
    let dim = ds.dim();
    let mut out = String::new();
    writeln!(out, "# curvednet-embeddings v1 dim={dim}").unwrap();
    write!(out, "id,split,label").unwrap();
    for i in 0..dim {
        write!(out, ",f{i}").unwrap();
    }
    out.push('\n');
    for i in 0..ds.len() {
        write!(out, "{},{}", ds.ids[i], ds.split.as_str()).unwrap();
        match ds.labels[i] {
            Label::Class(c) => write!(out, ",{c}").unwrap(),
            Label::Ood => out.push_str(",ood"),
        }
        for v in &ds.features[i] {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_embeddings(path: &Path, ds: &Dataset) -> Result<()> {
    std::fs::write(path, format_embeddings(ds))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses an embedding CSV, grouping rows by their split tag.
pub fn load_embeddings(path: &Path) -> Result<SplitData> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_embeddings(&text, &path.display().to_string())
}

pub fn parse_embeddings(text: &str, path: &str) -> Result<SplitData> {
    let perr = |line: usize, message: String| Error::ParseError {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let dim: usize = magic
        .strip_prefix("# curvednet-embeddings v1 dim=")
        .ok_or_else(|| perr(1, format!("bad magic line `{magic}`")))?
        .trim()
        .parse()
        .map_err(|_| perr(1, "bad dimension in magic line".into()))?;

    let (_, header) = lines
        .next()
        .ok_or_else(|| perr(2, "missing header".into()))?;
    let mut want_header = String::from("id,split,label");
    for i in 0..dim {
        want_header.push_str(&format!(",f{i}"));
    }
    if header != want_header {
        return Err(perr(2, format!("bad header, expected `{want_header}`")));
    }

    type Bucket = (Split, Vec<String>, Vec<Vec<Real>>, Vec<Label>);
    let mut buckets: Vec<Bucket> = vec![
        (Split::Train, Vec::new(), Vec::new(), Vec::new()),
        (Split::TestId, Vec::new(), Vec::new(), Vec::new()),
        (Split::TestOod, Vec::new(), Vec::new(), Vec::new()),
    ];

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::DimInconsistent {
                path: path.to_string(),
                line: lineno,
                expected: dim,
                found: fields.len().saturating_sub(3),
            });
        }
        let id = fields[0].to_string();
        let split = Split::parse(fields[1]).ok_or_else(|| Error::UnknownSplitTag {
            path: path.to_string(),
            line: lineno,
            tag: fields[1].to_string(),
        })?;
        let label = if fields[2] == "ood" {
            match split {
                Split::Train => return Err(perr(lineno, "anomalous row in train split".into())),
                Split::TestId => return Err(perr(lineno, "anomalous row in test_id split".into())),
                Split::TestOod => Label::Ood,
            }
        } else {
            let c: usize = fields[2]
                .parse()
                .map_err(|_| perr(lineno, format!("bad label `{}`", fields[2])))?;
            if split == Split::TestOod {
                return Err(perr(
                    lineno,
                    "test_ood rows must carry the `ood` label".into(),
                ));
            }
            Label::Class(c)
        };
        let mut row = Vec::with_capacity(dim);
        for f in &fields[3..] {
            let v: Real = f
                .parse()
                .map_err(|_| perr(lineno, format!("bad feature value `{f}`")))?;
            row.push(v);
        }
        let bucket = buckets.iter_mut().find(|(s, ..)| *s == split).unwrap();
        bucket.1.push(id);
        bucket.2.push(row);
        bucket.3.push(label);
    }

    let mk = |(split, ids, features, labels): Bucket| Dataset {
        ids,
        features,
        labels,
        split,
        seed: 0,
        provenance: format!("loaded from {path}"),
    };
    let mut it = buckets.into_iter();
    let data = SplitData {
        train: mk(it.next().unwrap()),
        test_id: mk(it.next().unwrap()),
        test_ood: mk(it.next().unwrap()),
    };
    for ds in [&data.train, &data.test_id, &data.test_ood] {
        ds.validate_finite()?;
    }
    data.train.assert_train_purity()?;
    Ok(data)
}

/// Loads the canonical three files from a directory written by `gen-data`.
pub fn load_dir(dir: &Path) -> Result<SplitData> {
    let mut merged: Option<SplitData> = None;
    for name in ["train.csv", "test_id.csv", "test_ood.csv"] {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        let part = load_embeddings(&path)?;
        merged = Some(match merged {
            None => part,
            Some(mut acc) => {
                for (dst, src) in [
                    (&mut acc.train, part.train),
                    (&mut acc.test_id, part.test_id),
                    (&mut acc.test_ood, part.test_ood),
                ] {
                    dst.ids.extend(src.ids);
                    dst.features.extend(src.features);
                    dst.labels.extend(src.labels);
                }
                acc
            }
        });
    }
    merged.ok_or(Error::EmptyDataset {
        context: "no embedding files in data directory",
    })
}
