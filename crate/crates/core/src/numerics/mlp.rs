use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::{log_softmax, softmax, xavier_uniform, NumericsError, Tensor};

/// Feed-forward classifier with rectifier hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
    /// `[W_0, b_0, W_1, b_1, ...]`, each `W_i` stored `fan_in × fan_out`.
    params: Vec<Tensor>,
}

impl MlpClassifier {
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        seed: u64,
    ) -> Result<Self, NumericsError> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.iter().any(|&h| h == 0) {
            return Err(NumericsError::Shape(format!(
                "mlp dims must be positive: {input_dim} {hidden_dims:?} {output_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden_dims);
        dims.push(output_dim);
        let mut params = Vec::with_capacity(2 * (dims.len() - 1));
        for w in dims.windows(2) {
            params.push(xavier_uniform(&mut rng, w[0], w[1]));
            params.push(Tensor::zeros(&[w[1]]));
        }
        Ok(Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Records the forward pass for a `batch × input_dim` input and returns logits.
    pub fn forward(&self, tape: &mut Tape<'_>, input: Var) -> Var {
        let layers = self.params.len() / 2;
        let mut h = input;
        for l in 0..layers {
            let w = tape.param(2 * l);
            let b = tape.param(2 * l + 1);
            h = tape.matmul(h, w);
            h = tape.add_row(h, b);
            if l + 1 < layers {
                h = tape.relu(h);
            }
        }
        h
    }

    /// Natural-log class probabilities for each input row.
    pub fn predict_log_proba(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>, NumericsError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let x = stack_rows(inputs, self.input_dim)?;
        let mut tape = Tape::new(&self.params);
        let xv = tape.constant(x);
        let logits = self.forward(&mut tape, xv);
        let l = tape.value(logits);
        Ok((0..l.rows()).map(|r| log_softmax(l.row(r))).collect())
    }

    /// Class probabilities for each input row.
    pub fn predict_proba(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>, NumericsError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let x = stack_rows(inputs, self.input_dim)?;
        let mut tape = Tape::new(&self.params);
        let xv = tape.constant(x);
        let logits = self.forward(&mut tape, xv);
        let l = tape.value(logits);
        Ok((0..l.rows()).map(|r| softmax(l.row(r))).collect())
    }
}

/// Packs equal-length rows into a matrix.
pub fn stack_rows(rows: &[&[f64]], width: usize) -> Result<Tensor, NumericsError> {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(NumericsError::Shape(format!(
                "row of width {} where {width} expected",
                r.len()
            )));
        }
        data.extend_from_slice(r);
    }
    Tensor::matrix(rows.len(), width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_shape_and_determinism() {
        let a = MlpClassifier::new(8, &[100, 100], 3, 11).unwrap();
        let b = MlpClassifier::new(8, &[100, 100], 3, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params().len(), 6);
        assert_eq!(a.params()[2].shape(), &[100, 100]);
        let x = [0.1; 8];
        let p = a.predict_proba(&[&x, &x]).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_width() {
        let a = MlpClassifier::new(4, &[5], 3, 0).unwrap();
        assert!(a.predict_proba(&[&[0.0; 3]]).is_err());
    }
}
