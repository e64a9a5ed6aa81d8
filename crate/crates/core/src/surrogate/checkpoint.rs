use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SurrogateModel, TrainMeta};
use crate::error::{Error, Result};

/// On-disk form of a trained surrogate. Floats are written in shortest
/// round-trip form, so loading restores every parameter bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub activation: String,
    pub alpha: f64,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    pub b2: f64,
    pub train_meta: TrainMeta,
}

impl From<&SurrogateModel> for Checkpoint {
    fn from(model: &SurrogateModel) -> Self {
        Checkpoint {
            input_dim: model.input_dim(),
            hidden_dim: model.hidden_dim(),
            activation: "celu".into(),
            alpha: model.alpha(),
            w1: model.w1_rows(),
            b1: model.b1().to_vec(),
            w2: vec![model.w2().to_vec()],
            b2: model.b2(),
            train_meta: model.meta().clone(),
        }
    }
}

impl TryFrom<Checkpoint> for SurrogateModel {
    type Error = Error;

    fn try_from(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.activation != "celu" {
            return Err(Error::InvalidConfig(format!(
                "unsupported activation {:?}",
                ckpt.activation
            )));
        }
        if ckpt.hidden_dim != 2 * ckpt.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "hidden_dim {} must be twice input_dim {}",
                ckpt.hidden_dim, ckpt.input_dim
            )));
        }
        if ckpt.w1.len() != ckpt.hidden_dim || ckpt.w1.iter().any(|r| r.len() != ckpt.input_dim) {
            return Err(Error::DimensionMismatch(format!(
                "W1 must be {}x{}",
                ckpt.hidden_dim, ckpt.input_dim
            )));
        }
        let [w2]: [Vec<f64>; 1] = ckpt
            .w2
            .try_into()
            .map_err(|_| Error::DimensionMismatch("W2 must have exactly one row".into()))?;
        let mut model = SurrogateModel::from_parts(&ckpt.w1, ckpt.b1, w2, ckpt.b2, ckpt.alpha)?;
        model.set_meta(ckpt.train_meta);
        Ok(model)
    }
}

impl SurrogateModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&Checkpoint::from(self)).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        ckpt.try_into()
    }
}

pub fn save_checkpoint(model: &SurrogateModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SurrogateModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SurrogateModel::from_json(&text).map_err(|e| e.with_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = seeded(8);
        let model = SurrogateModel::init_xavier(9, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surrogate.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        for _ in 0..100 {
            let mask = Mask::from_u64(9, rng.gen_range(0..512));
            assert_eq!(
                back.forward(&mask).unwrap().to_bits(),
                model.forward(&mask).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let json = SurrogateModel::zeros(3).to_json();
        let cut = &json[..json.len() / 2];
        assert!(matches!(SurrogateModel::from_json(cut), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_hidden_width_is_rejected() {
        let mut ckpt = Checkpoint::from(&SurrogateModel::zeros(3));
        ckpt.hidden_dim = 5;
        let text = serde_json::to_string(&ckpt).unwrap();
        assert!(matches!(SurrogateModel::from_json(&text), Err(Error::DimensionMismatch(_))));

        let mut ckpt = Checkpoint::from(&SurrogateModel::zeros(3));
        ckpt.w1.pop();
        let text = serde_json::to_string(&ckpt).unwrap();
        assert!(matches!(SurrogateModel::from_json(&text), Err(Error::DimensionMismatch(_))));
    }
}
