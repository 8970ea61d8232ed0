//! Versioned JSON model files. Reals are stored as 17-significant-digit
//! decimal strings so a reload reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Machine, MlError, RbfKernel, Scaler, SvModel, TargetScale, Task};
use crate::imgio::fmt_real;

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct KernelFile {
    #[serde(rename = "type")]
    kind: String,
    gamma: String,
}

#[derive(Serialize, Deserialize)]
struct RangeFile {
    min: Vec<String>,
    max: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TargetFile {
    min: String,
    max: String,
}

#[derive(Serialize, Deserialize)]
struct MachineFile {
    pos: usize,
    neg: usize,
    svs: Vec<Vec<String>>,
    coefs: Vec<String>,
    bias: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    task: String,
    kernel: KernelFile,
    c: String,
    epsilon: String,
    scaler: RangeFile,
    svs: Vec<Vec<String>>,
    coefs: Vec<String>,
    bias: String,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<TargetFile>,
    /// Class pairs after the first, for models with more than two labels.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    machines: Vec<MachineFile>,
}

fn reals(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| fmt_real(x)).collect()
}

fn rows(v: &[Vec<f64>]) -> Vec<Vec<String>> {
    v.iter().map(|r| reals(r)).collect()
}

fn parse_real(s: &str) -> Result<f64, MlError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| MlError::CorruptModel(format!("bad real {s:?}")))
}

fn parse_reals(v: &[String]) -> Result<Vec<f64>, MlError> {
    v.iter().map(|s| parse_real(s)).collect()
}

fn parse_rows(v: &[Vec<String>]) -> Result<Vec<Vec<f64>>, MlError> {
    v.iter().map(|r| parse_reals(r)).collect()
}

pub fn model_to_json(model: &SvModel) -> String {
    let first = &model.machines[0];
    let file = ModelFile {
        version: MODEL_VERSION,
        task: match model.task {
            Task::Regression => "regression".into(),
            Task::Classification => "classification".into(),
        },
        kernel: KernelFile {
            kind: "rbf".into(),
            gamma: fmt_real(model.kernel.gamma),
        },
        c: fmt_real(model.c),
        epsilon: fmt_real(model.epsilon),
        scaler: RangeFile {
            min: reals(&model.scaler.min),
            max: reals(&model.scaler.max),
        },
        svs: rows(&first.support_vectors),
        coefs: reals(&first.dual_coefs),
        bias: fmt_real(first.bias),
        labels: model.labels.clone(),
        target: model.target.map(|t| TargetFile {
            min: fmt_real(t.min),
            max: fmt_real(t.max),
        }),
        machines: model.machines[1..]
            .iter()
            .map(|m| MachineFile {
                pos: m.pos,
                neg: m.neg,
                svs: rows(&m.support_vectors),
                coefs: reals(&m.dual_coefs),
                bias: fmt_real(m.bias),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

fn build_machine(
    pos: usize,
    neg: usize,
    svs: &[Vec<String>],
    coefs: &[String],
    bias: &str,
    dim: usize,
) -> Result<Machine, MlError> {
    let support_vectors = parse_rows(svs)?;
    let dual_coefs = parse_reals(coefs)?;
    if support_vectors.len() != dual_coefs.len() {
        return Err(MlError::CorruptModel(format!(
            "{} support vectors but {} coefficients",
            support_vectors.len(),
            dual_coefs.len()
        )));
    }
    if support_vectors.iter().any(|sv| sv.len() != dim) {
        return Err(MlError::CorruptModel("support vector dimension mismatch".into()));
    }
    Ok(Machine {
        pos,
        neg,
        support_vectors,
        dual_coefs,
        bias: parse_real(bias)?,
    })
}

pub fn model_from_json(text: &str) -> Result<SvModel, MlError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| MlError::CorruptModel(e.to_string()))?;
    match value.get("version") {
        Some(v) if v.as_u64() == Some(u64::from(MODEL_VERSION)) => {}
        Some(v) => {
            return Err(MlError::SchemaVersionMismatch {
                found: v.to_string(),
                expected: MODEL_VERSION,
            })
        }
        None => return Err(MlError::CorruptModel("missing version".into())),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| MlError::CorruptModel(e.to_string()))?;

    let task = match file.task.as_str() {
        "regression" => Task::Regression,
        "classification" => Task::Classification,
        other => return Err(MlError::CorruptModel(format!("unknown task {other:?}"))),
    };
    if file.kernel.kind != "rbf" {
        return Err(MlError::CorruptModel(format!(
            "unknown kernel {:?}",
            file.kernel.kind
        )));
    }
    let scaler = Scaler {
        min: parse_reals(&file.scaler.min)?,
        max: parse_reals(&file.scaler.max)?,
    };
    if scaler.min.len() != scaler.max.len() || scaler.min.is_empty() {
        return Err(MlError::CorruptModel("scaler bounds mismatch".into()));
    }
    let dim = scaler.dim();
    let target = file
        .target
        .as_ref()
        .map(|t| -> Result<TargetScale, MlError> {
            Ok(TargetScale {
                min: parse_real(&t.min)?,
                max: parse_real(&t.max)?,
            })
        })
        .transpose()?;

    let mut machines = vec![build_machine(
        0,
        usize::from(task == Task::Classification),
        &file.svs,
        &file.coefs,
        &file.bias,
        dim,
    )?];
    for m in &file.machines {
        machines.push(build_machine(m.pos, m.neg, &m.svs, &m.coefs, &m.bias, dim)?);
    }

    match task {
        Task::Regression => {
            if target.is_none() || machines.len() != 1 {
                return Err(MlError::CorruptModel("malformed regression model".into()));
            }
        }
        Task::Classification => {
            let k = file.labels.len();
            if k < 2
                || machines.len() != k * (k - 1) / 2
                || machines.iter().any(|m| m.pos >= k || m.neg >= k || m.pos >= m.neg)
            {
                return Err(MlError::CorruptModel("malformed classifier".into()));
            }
        }
    }

    Ok(SvModel {
        task,
        kernel: RbfKernel {
            gamma: parse_real(&file.kernel.gamma)?,
        },
        c: parse_real(&file.c)?,
        epsilon: parse_real(&file.epsilon)?,
        scaler,
        target,
        labels: file.labels,
        machines,
        converged: true,
    })
}

pub fn save_model(model: &SvModel, path: impl AsRef<Path>) -> Result<(), MlError> {
    fs::write(path, model_to_json(model)).map_err(|e| MlError::Io(e.to_string()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SvModel, MlError> {
    let text = fs::read_to_string(path).map_err(|e| MlError::Io(e.to_string()))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{train_svc, train_svr, SvcHyper, SvrHyper};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_regressor() -> SvModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<[f64; 3]> = (0..30).map(|_| [rng.random(), rng.random(), rng.random::<f64>() * 8.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + 8.0 * r[0] * r[1] - r[2] / 8.0).collect();
        train_svr(&x, &y, SvrHyper { c: 10.0, gamma: 1.0 / 3.0, epsilon: 0.01 }).unwrap()
    }

    #[test]
    fn round_trip_predicts_identically() {
        let model = toy_regressor();
        let back = model_from_json(&model_to_json(&model)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let probe = [rng.random::<f64>() * 1.2, rng.random::<f64>(), rng.random::<f64>() * 8.0];
            let (a, b) = (model.predict_score(&probe).unwrap(), back.predict_score(&probe).unwrap());
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn multiclass_round_trip() {
        let x = [[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [0.9, 0.1], [0.5, 1.0], [0.4, 0.9]];
        let labels = ["l", "l", "r", "r", "t", "t"];
        let model = train_svc(&x, &labels, SvcHyper { c: 10.0, gamma: 2.0 }).unwrap();
        let back = model_from_json(&model_to_json(&model)).unwrap();
        assert_eq!(back.machines, model.machines);
        assert_eq!(back.labels, model.labels);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = model_to_json(&toy_regressor()).replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            model_from_json(&text),
            Err(MlError::SchemaVersionMismatch { .. })
        ));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let text = model_to_json(&toy_regressor());
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_json(cut), Err(MlError::CorruptModel(_))));
    }

    #[test]
    fn reals_are_decimal_strings() {
        let text = model_to_json(&toy_regressor());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let c = v["c"].as_str().unwrap();
        assert_eq!(c, "1.0000000000000000e1");
        assert_eq!(v["kernel"]["type"], "rbf");
    }
}
