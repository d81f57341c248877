//! Model serialization: a self-describing versioned text format.
//!
//! Layout:
//!
//! ```text
//! CURVEDNET-MODEL-v1
//! [config]
//! <the run configuration, verbatim key = value lines>
//! [model]
//! arch = gio
//! components = hyperbolic:-1
//! classes = 10
//! feature_dim = 16
//! embed_dim = 8
//! xi = 0.00001
//! extractor = mlp:16,64,64,8
//! [tensors]
//! tensor extractor.w0 64 16
//! <one row of whitespace-separated values per line>
//! ...
//! end
//! ```
//!
//! Values use shortest round-trip float formatting, so a save/load cycle
//! reproduces parameters bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{
    init_model, ArchKind, Extractor, ExtractorDims, GeometryTag, Model, ModelShape,
};
use crate::Real;

pub const MODEL_MAGIC: &str = "CURVEDNET-MODEL-v1";

fn tag_to_string(tag: &GeometryTag) -> String {
    match tag {
        GeometryTag::Euclidean => "euclidean".into(),
        GeometryTag::Spherical { kappa } => format!("spherical:{kappa}"),
        GeometryTag::Hyperbolic { kappa } => format!("hyperbolic:{kappa}"),
    }
}

fn tag_from_string(s: &str) -> Result<GeometryTag> {
    let bad = || Error::Config(format!("bad geometry component `{s}`"));
    if s == "euclidean" {
        return Ok(GeometryTag::Euclidean);
    }
    let (name, kappa) = s.split_once(':').ok_or_else(bad)?;
    let kappa: Real = kappa.parse().map_err(|_| bad())?;
    match name {
        "spherical" => Ok(GeometryTag::Spherical { kappa }),
        "hyperbolic" => Ok(GeometryTag::Hyperbolic { kappa }),
        _ => Err(bad()),
    }
}

/// Renders a model (and the configuration that produced it) to text.
pub fn format_model(model: &Model, config_text: &str) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "[config]").unwrap();
    for line in config_text.lines() {
        writeln!(out, "{line}").unwrap();
    }
    writeln!(out, "[model]").unwrap();
    writeln!(out, "arch = {}", model.arch.as_str()).unwrap();
    let comps: Vec<String> = model.components.iter().map(tag_to_string).collect();
    writeln!(out, "components = {}", comps.join(",")).unwrap();
    writeln!(out, "classes = {}", model.classes).unwrap();
    writeln!(out, "feature_dim = {}", model.feature_dim()).unwrap();
    writeln!(out, "embed_dim = {}", model.embed_dim()).unwrap();
    writeln!(out, "xi = {}", model.xi).unwrap();
    match &model.extractor {
        Extractor::Identity { dim } => writeln!(out, "extractor = identity:{dim}").unwrap(),
        Extractor::Mlp {
            dims,
            mean,
            inv_std,
            ..
        } => {
            let dims: Vec<String> = dims.iter().map(ToString::to_string).collect();
            writeln!(out, "extractor = mlp:{}", dims.join(",")).unwrap();
            let render = |xs: &[Real]| {
                xs.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            writeln!(out, "norm_mean = {}", render(mean)).unwrap();
            writeln!(out, "norm_inv_std = {}", render(inv_std)).unwrap();
        }
    }
    writeln!(out, "[tensors]").unwrap();
    let params = model.to_param_set();
    for t in params.tensors() {
        let dims: Vec<String> = t.shape.iter().map(ToString::to_string).collect();
        writeln!(out, "tensor {} {}", t.name, dims.join(" ")).unwrap();
        let cols = *t.shape.last().unwrap();
        for row in t.data.chunks(cols) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    out
}

pub fn save_model(path: &Path, model: &Model, config_text: &str) -> Result<()> {
    std::fs::write(path, format_model(model, config_text))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses a model file, returning the model and the embedded config text.
pub fn load_model(path: &Path) -> Result<(Model, String)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_model(&text, &path.display().to_string())
}

pub fn parse_model(text: &str, path: &str) -> Result<(Model, String)> {
    let perr = |line: usize, message: String| Error::ParseError {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l == MODEL_MAGIC => {}
        Some((_, l)) => return Err(perr(1, format!("bad magic `{l}`"))),
        None => return Err(perr(1, "empty file".into())),
    }
    match lines.next() {
        Some((_, "[config]")) => {}
        _ => return Err(perr(2, "expected [config] section".into())),
    }
    let mut config_text = String::new();
    loop {
        match lines.peek() {
            Some((_, l)) if *l == "[model]" => {
                lines.next();
                break;
            }
            Some((_, l)) => {
                config_text.push_str(l);
                config_text.push('\n');
                lines.next();
            }
            None => return Err(perr(0, "missing [model] section".into())),
        }
    }

    let mut fields = std::collections::BTreeMap::new();
    loop {
        match lines.next() {
            Some((_, "[tensors]")) => break,
            Some((lineno, l)) => {
                let (k, v) = l
                    .split_once('=')
                    .ok_or_else(|| perr(lineno + 1, format!("expected key = value, got `{l}`")))?;
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => return Err(perr(0, "missing [tensors] section".into())),
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .cloned()
            .ok_or_else(|| Error::Config(format!("model file missing `{k}`")))
    };
    let arch = match get("arch")?.as_str() {
        "baseline" => ArchKind::Baseline,
        "gio" => ArchKind::Gio,
        "git" => ArchKind::Git,
        other => return Err(Error::Config(format!("unknown arch `{other}`"))),
    };
    let comps_raw = get("components")?;
    let components: Vec<GeometryTag> = if comps_raw.is_empty() {
        Vec::new()
    } else {
        comps_raw
            .split(',')
            .map(tag_from_string)
            .collect::<Result<Vec<_>>>()?
    };
    let classes: usize = get("classes")?
        .parse()
        .map_err(|_| Error::Config("bad classes".into()))?;
    let xi: Real = get("xi")?
        .parse()
        .map_err(|_| Error::Config("bad xi".into()))?;
    let extractor_raw = get("extractor")?;
    let extractor_dims = if let Some(d) = extractor_raw.strip_prefix("identity:") {
        ExtractorDims::Identity {
            dim: d
                .parse()
                .map_err(|_| Error::Config("bad extractor dim".into()))?,
        }
    } else if let Some(list) = extractor_raw.strip_prefix("mlp:") {
        let dims: Vec<usize> = list
            .split(',')
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config("bad extractor dims".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        if dims.len() < 2 {
            return Err(Error::Config("extractor needs at least two dims".into()));
        }
        ExtractorDims::Mlp { dims }
    } else {
        return Err(Error::Config(format!(
            "unknown extractor `{extractor_raw}`"
        )));
    };
    let has_euclidean = match arch {
        ArchKind::Baseline | ArchKind::Git => true,
        ArchKind::Gio => components.iter().any(|t| !t.is_curved()),
    };
    let shape = ModelShape {
        arch,
        components,
        extractor_dims,
        has_euclidean,
        classes,
        xi,
    };

    // skeleton with the right layout; parameters overwritten below
    let mut model = init_model(&shape, 0)?;
    if let Extractor::Mlp {
        mean,
        inv_std,
        dims,
        ..
    } = &mut model.extractor
    {
        let parse_vec = |key: &str| -> Result<Vec<Real>> {
            let raw = fields
                .get(key)
                .ok_or_else(|| Error::Config(format!("model file missing `{key}`")))?;
            raw.split_whitespace()
                .map(|v| {
                    v.parse::<Real>()
                        .map_err(|_| Error::Config(format!("bad value in `{key}`")))
                })
                .collect()
        };
        let mu = parse_vec("norm_mean")?;
        let inv = parse_vec("norm_inv_std")?;
        if mu.len() != dims[0] || inv.len() != dims[0] {
            return Err(Error::Config("standardization length mismatch".into()));
        }
        *mean = mu;
        *inv_std = inv;
    }
    let decls = shape.tensor_decls();
    let mut flat: Vec<Real> = Vec::new();
    let mut decl_iter = decls.iter();
    loop {
        let Some((lineno, line)) = lines.next() else {
            return Err(perr(0, "unterminated tensor section".into()));
        };
        if line == "end" {
            break;
        }
        let rest = line
            .strip_prefix("tensor ")
            .ok_or_else(|| perr(lineno + 1, format!("expected tensor header, got `{line}`")))?;
        let mut parts = rest.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| perr(lineno + 1, "missing tensor name".into()))?;
        let dims: Vec<usize> = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| perr(lineno + 1, "bad tensor shape".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (want_name, want_dims, _) = decl_iter
            .next()
            .ok_or_else(|| perr(lineno + 1, format!("unexpected tensor `{name}`")))?;
        if name != want_name || &dims != want_dims {
            return Err(perr(
                lineno + 1,
                format!("expected tensor `{want_name}` {want_dims:?}, got `{name}` {dims:?}"),
            ));
        }
        let cols = *dims.last().unwrap();
        let rows: usize = dims.iter().product::<usize>() / cols;
        for _ in 0..rows {
            let Some((vlineno, vline)) = lines.next() else {
                return Err(perr(0, format!("tensor `{name}` truncated")));
            };
            let values: Vec<Real> = vline
                .split_whitespace()
                .map(|v| {
                    v.parse::<Real>()
                        .map_err(|_| perr(vlineno + 1, format!("bad value `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != cols {
                return Err(perr(
                    vlineno + 1,
                    format!(
                        "tensor `{name}` row has {} values, want {cols}",
                        values.len()
                    ),
                ));
            }
            flat.extend(values);
        }
    }
    if decl_iter.next().is_some() {
        return Err(Error::Config("model file is missing tensors".into()));
    }
    model.set_from_flat(&flat)?;
    Ok((model, config_text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::DEFAULT_XI;
    use crate::models::init_model;

    fn sample_model() -> Model {
        let shape = ModelShape {
            arch: ArchKind::Git,
            components: vec![
                GeometryTag::Spherical { kappa: 1.0 },
                GeometryTag::Hyperbolic { kappa: -0.01 },
            ],
            extractor_dims: ExtractorDims::Mlp {
                dims: vec![4, 6, 6, 3],
            },
            has_euclidean: true,
            classes: 3,
            xi: DEFAULT_XI,
        };
        init_model(&shape, 21).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let config = "architecture = mit\nseed = 21\n";
        let text = format_model(&model, config);
        assert!(text.starts_with(MODEL_MAGIC));
        let (loaded, config_back) = parse_model(&text, "mem").unwrap();
        assert_eq!(config_back, config);
        assert_eq!(
            loaded.to_param_set().flat_values(),
            model.to_param_set().flat_values()
        );
        assert_eq!(loaded.classes, model.classes);
        // render again: byte-identical
        assert_eq!(format_model(&loaded, &config_back), text);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            parse_model("NOT-A-MODEL\n", "mem"),
            Err(Error::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_tensor_mismatch() {
        let model = sample_model();
        let text = format_model(&model, "");
        let broken = text.replace("tensor extractor.w0 6 4", "tensor extractor.w0 4 6");
        assert!(parse_model(&broken, "mem").is_err());
    }
}
