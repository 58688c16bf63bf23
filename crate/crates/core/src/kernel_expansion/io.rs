//! JSON interchange for eigensystems and bases, and CSV point loading.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::basis::{Basis, BasisKind};
use super::eigen::{EigenFamily, EigenSystem};
use super::kernel::KernelSpec;

/// Serialized form shared by eigensystems and bases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionDoc {
    pub family: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub anchors: Vec<Vec<f64>>,
    #[serde(default)]
    pub k_bound: Option<f64>,
}

fn param<T: for<'de> Deserialize<'de>>(params: &Value, key: &str) -> Result<T> {
    let v = params
        .get(key)
        .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{key}`")))?;
    Ok(serde_json::from_value(v.clone())?)
}

impl EigenSystem {
    pub fn to_doc(&self) -> ExpansionDoc {
        let (family, params) = match self.family() {
            EigenFamily::Spline => ("spline", json!({})),
            EigenFamily::Exponential { rate } => ("exponential", json!({ "rate": rate })),
            EigenFamily::Custom => ("custom", json!({})),
            EigenFamily::Numerical { kernel } => ("numerical", json!({ "kernel": kernel })),
            EigenFamily::Tensor => {
                let factors: Vec<ExpansionDoc> = self
                    .tensor_factors()
                    .unwrap_or_default()
                    .iter()
                    .map(|f| f.to_doc())
                    .collect();
                ("tensor", json!({ "factors": factors }))
            }
        };
        ExpansionDoc {
            family: family.into(),
            params,
            lambdas: self.lambdas().to_vec(),
            anchors: self.anchors().map(<[_]>::to_vec).unwrap_or_default(),
            k_bound: Some(self.k_bound()),
        }
    }

    /// Rebuild an eigensystem. Numerical systems are recomputed from their
    /// anchors, so the stored eigenvalues act only as a length hint.
    pub fn from_doc(doc: &ExpansionDoc) -> Result<Self> {
        let e_max = doc.lambdas.len();
        let mut sys = match doc.family.as_str() {
            "spline" => Self::spline(e_max)?,
            "exponential" => Self::exponential(e_max, param(&doc.params, "rate")?)?,
            "custom" => Self::from_spectrum(doc.lambdas.clone())?,
            "numerical" => {
                let kernel: KernelSpec = param(&doc.params, "kernel")?;
                Self::from_anchor_points(&kernel, doc.anchors.clone(), e_max)?
            }
            "tensor" => {
                let factors: Vec<ExpansionDoc> = param(&doc.params, "factors")?;
                let factors = factors
                    .iter()
                    .map(Self::from_doc)
                    .collect::<Result<Vec<_>>>()?;
                Self::tensor(factors, e_max)?
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown eigensystem family `{other}`"
                )))
            }
        };
        if let Some(k) = doc.k_bound {
            sys.set_k_bound(sys.k_bound().max(k));
        }
        Ok(sys)
    }
}

impl Basis {
    pub fn to_doc(&self) -> ExpansionDoc {
        let kind = self.kind();
        let e = self.dim();
        let (params, lambdas, anchors, k_bound) = match kind {
            BasisKind::KlEigen => {
                let sys = self.eigensystem().expect("eigen basis");
                (
                    json!({ "E": e, "eigensystem": sys.to_doc() }),
                    self.lambdas().unwrap().to_vec(),
                    Vec::new(),
                    Some(sys.k_bound()),
                )
            }
            BasisKind::KernelSections | BasisKind::Nystrom => (
                json!({ "E": e, "kernel": self.kernel() }),
                if kind == BasisKind::Nystrom {
                    self.precision().diagonal().iter().copied().collect()
                } else {
                    Vec::new()
                },
                self.anchors().unwrap().to_vec(),
                None,
            ),
        };
        ExpansionDoc {
            family: kind.as_str().into(),
            params,
            lambdas,
            anchors,
            k_bound,
        }
    }

    pub fn from_doc(doc: &ExpansionDoc) -> Result<Self> {
        match doc.family.as_str() {
            "kl_eigen" => {
                let sys: ExpansionDoc = param(&doc.params, "eigensystem")?;
                Basis::kl_eigen(EigenSystem::from_doc(&sys)?, param(&doc.params, "E")?)
            }
            "kernel_sections" => {
                Basis::kernel_sections(&param(&doc.params, "kernel")?, doc.anchors.clone())
            }
            "nystrom" => Basis::nystrom(
                &param(&doc.params, "kernel")?,
                doc.anchors.clone(),
                param(&doc.params, "E")?,
            ),
            other => Err(Error::InvalidInput(format!(
                "unknown basis family `{other}`"
            ))),
        }
    }
}

pub fn read_doc(path: &Path) -> Result<ExpansionDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_doc(path: &Path, doc: &ExpansionDoc) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read points from CSV, one per row. A first row that does not parse as
/// numbers is treated as a header.
pub fn read_points<R: std::io::Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(p) => points.push(p),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    row: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    let d = points.first().map_or(0, Vec::len);
    if points
        .iter()
        .any(|p| p.len() != d || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidInput(
            "points must be finite with a common dimension".into(),
        ));
    }
    Ok(points)
}

pub fn load_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_points(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigensystem_roundtrip() {
        for sys in [
            EigenSystem::spline(7).unwrap(),
            EigenSystem::exponential(4, 0.3).unwrap(),
            EigenSystem::from_spectrum(vec![2.0, 1.0]).unwrap(),
            EigenSystem::from_anchor_points(
                &KernelSpec::gaussian(0.2).unwrap(),
                (0..8).map(|i| vec![i as f64 / 8.0]).collect(),
                3,
            )
            .unwrap(),
        ] {
            let doc = sys.to_doc();
            let text = serde_json::to_string(&doc).unwrap();
            let back = EigenSystem::from_doc(&serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back.lambdas(), sys.lambdas());
            assert_eq!(back.k_bound(), sys.k_bound());
            assert_eq!(back.phi(1, &[0.37]), sys.phi(1, &[0.37]));
        }
    }

    #[test]
    fn basis_roundtrip() {
        let k = KernelSpec::gaussian(0.5).unwrap();
        let anchors: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        for b in [
            Basis::kl_eigen(EigenSystem::spline(6).unwrap(), 4).unwrap(),
            Basis::kernel_sections(&k, anchors.clone()).unwrap(),
            Basis::nystrom(&k, anchors, 3).unwrap(),
        ] {
            let back = Basis::from_doc(&b.to_doc()).unwrap();
            assert_eq!(back.id(), b.id());
            assert_eq!(back.precision(), b.precision());
            assert_eq!(back.eval(&[0.3]), b.eval(&[0.3]));
        }
    }

    #[test]
    fn csv_points_with_and_without_header() {
        let a = read_points("x1,x2\n0.1,0.2\n0.3,0.4\n".as_bytes()).unwrap();
        assert_eq!(a, vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
        let b = read_points("0.5\n0.6\n".as_bytes()).unwrap();
        assert_eq!(b.len(), 2);
        assert!(matches!(
            read_points("1\nfoo\n".as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
    }
}
