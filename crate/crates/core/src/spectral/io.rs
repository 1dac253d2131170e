//! Versioned JSON export/import of a basis.

use std::str::FromStr;

use serde_json::{json, Map, Number, Value};

use super::{Expansion, QuadratureGrid, SpectralBasis};
use crate::domain::Domain;
use crate::error::{Error, Result};

pub const BASIS_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "dirichlet-w2/basis";

/// A float rendered with 17 significant digits.
pub(crate) fn num17(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&format!("{x:.16e}")).expect("finite float"))
}

pub(crate) fn array17(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num17(x)).collect())
}

fn floats(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config(format!("basis document lacks array `{key}`")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::Config(format!("non-numeric entry in `{key}`")))
        })
        .collect()
}

/// Serializes the basis: domain descriptor, eigenvalues, grid, weights and
/// the row-major eigenfunction matrix, plus what is needed for off-grid
/// evaluation.
pub fn export_basis(basis: &SpectralBasis) -> Value {
    let grid = basis.grid();
    let expansion = match &basis.expansion {
        Expansion::Trig => json!({ "kind": "trig" }),
        Expansion::Tensor { index } => json!({
            "kind": "tensor",
            "index": index.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
        }),
        Expansion::Legendre { order, coeffs } => json!({
            "kind": "legendre",
            "order": order,
            "coefficients": array17(coeffs),
        }),
    };
    let mut doc = Map::new();
    doc.insert("format".into(), json!(FORMAT_TAG));
    doc.insert("version".into(), json!(BASIS_FORMAT_VERSION));
    doc.insert(
        "domain".into(),
        serde_json::to_value(basis.domain()).expect("domain serializes"),
    );
    doc.insert("mode_count".into(), json!(basis.mode_count()));
    doc.insert("normalizer".into(), num17(basis.normalizer()));
    doc.insert("eigenvalues".into(), array17(basis.eigenvalues()));
    doc.insert(
        "grid".into(),
        json!({
            "dim": grid.dim(),
            "nodes": array17(grid.points()),
            "weights": array17(grid.weights()),
            "reference_density": array17(grid.reference_density()),
        }),
    );
    doc.insert(
        "eigenfunctions".into(),
        json!({
            "rows": basis.mode_count(),
            "cols": grid.len(),
            "data": array17(basis.eigenfunction_matrix()),
        }),
    );
    doc.insert("expansion".into(), expansion);
    Value::Object(doc)
}

/// Rebuilds a basis from [`export_basis`] output, revalidating it.
pub fn import_basis(doc: &Value) -> Result<SpectralBasis> {
    if doc.get("format").and_then(Value::as_str) != Some(FORMAT_TAG) {
        return Err(Error::Config("not a basis document".into()));
    }
    let version = doc.get("version").and_then(Value::as_u64);
    if version != Some(BASIS_FORMAT_VERSION as u64) {
        return Err(Error::Config(format!(
            "unsupported basis version {version:?}"
        )));
    }
    let domain: Domain = serde_json::from_value(
        doc.get("domain")
            .cloned()
            .ok_or_else(|| Error::Config("missing domain".into()))?,
    )?;
    domain.validate()?;
    let eigenvalues = floats(doc, "eigenvalues")?;
    let normalizer = doc
        .get("normalizer")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Config("missing normalizer".into()))?;
    let g = doc
        .get("grid")
        .ok_or_else(|| Error::Config("missing grid".into()))?;
    let dim = g.get("dim").and_then(Value::as_u64).unwrap_or(0) as usize;
    if dim != domain.dim() {
        return Err(Error::Config("grid dimension does not match domain".into()));
    }
    let grid = QuadratureGrid::new(
        dim,
        floats(g, "nodes")?,
        floats(g, "weights")?,
        floats(g, "reference_density")?,
    );
    if grid.points().len() != dim * grid.len() || grid.reference_density().len() != grid.len() {
        return Err(Error::Config("inconsistent grid arrays".into()));
    }
    let ef = doc
        .get("eigenfunctions")
        .ok_or_else(|| Error::Config("missing eigenfunctions".into()))?;
    let values = floats(ef, "data")?;
    let e = doc
        .get("expansion")
        .ok_or_else(|| Error::Config("missing expansion".into()))?;
    let expansion = match e.get("kind").and_then(Value::as_str) {
        Some("trig") => Expansion::Trig,
        Some("tensor") => {
            let index = e
                .get("index")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Config("tensor expansion lacks index".into()))?
                .iter()
                .map(|p| {
                    let i = p.get(0).and_then(Value::as_u64);
                    let j = p.get(1).and_then(Value::as_u64);
                    match (i, j) {
                        (Some(i), Some(j)) => Ok((i as usize, j as usize)),
                        _ => Err(Error::Config("bad tensor index".into())),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Expansion::Tensor { index }
        }
        Some("legendre") => Expansion::Legendre {
            order: e
                .get("order")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Config("legendre expansion lacks order".into()))?
                as usize,
            coeffs: floats(e, "coefficients")?,
        },
        other => return Err(Error::Config(format!("unknown expansion {other:?}"))),
    };
    if let Expansion::Legendre { order, coeffs } = &expansion {
        if coeffs.len() != order * eigenvalues.len() {
            return Err(Error::Config(
                "coefficient matrix has the wrong size".into(),
            ));
        }
    }
    if let Expansion::Tensor { index } = &expansion {
        if index.len() != eigenvalues.len() {
            return Err(Error::Config("tensor index has the wrong size".into()));
        }
    }
    SpectralBasis::assemble(
        domain,
        eigenvalues,
        grid,
        normalizer,
        expansion,
        Some(values),
    )
}
