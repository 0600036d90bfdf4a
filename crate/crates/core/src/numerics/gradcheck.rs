use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::{NumericsError, Tensor};

/// Gradients below this magnitude are compared absolutely rather than relatively.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Outcome of comparing reverse-mode gradients against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates_checked: usize,
}

/// Which parameter coordinates to compare.
#[derive(Debug, Clone, Copy)]
pub enum Coordinates {
    All,
    /// `count` coordinates drawn uniformly without replacement.
    Sample {
        count: usize,
        seed: u64,
    },
}

/// Compares the reverse-mode gradient of the scalar built by `f` against
/// central finite differences with step `epsilon`.
///
/// `f` receives a fresh tape over `params` and must reference them through
/// [`Tape::param`]. Parameters are restored before returning.
pub fn grad_check<F>(
    f: F,
    params: &mut [Tensor],
    epsilon: f64,
    coords: Coordinates,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, NumericsError>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(NumericsError::Shape(format!(
            "grad_check epsilon must be in (0, 1e-2], got {epsilon}"
        )));
    }
    let evaluate = |params: &[Tensor]| -> Result<f64, NumericsError> {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        let v = tape.value(out).data()[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NumericsError::NonFinite(format!(
                "objective evaluated to {v}"
            )))
        }
    };

    let analytic: Vec<Tensor> = {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(NumericsError::NonFinite(format!(
                "objective evaluated to {v}"
            )));
        }
        let mut g: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        tape.backward_into(out, &mut g);
        g
    };

    let flat: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<(usize, usize)> = match coords {
        Coordinates::All => flat,
        Coordinates::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = count.min(flat.len());
            sample(&mut rng, flat.len(), count)
                .into_iter()
                .map(|k| flat[k])
                .collect()
        }
    };

    let mut max_rel_error: f64 = 0.0;
    for &(i, j) in &chosen {
        let original = params[i].data()[j];
        params[i].data_mut()[j] = original + epsilon;
        let plus = evaluate(params);
        params[i].data_mut()[j] = original - epsilon;
        let minus = evaluate(params);
        params[i].data_mut()[j] = original;
        let numeric = (plus? - minus?) / (2.0 * epsilon);
        let a = analytic[i].data()[j];
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        max_rel_error = max_rel_error.max((a - numeric).abs() / denom);
    }
    Ok(GradCheckReport {
        max_rel_error,
        coordinates_checked: chosen.len(),
    })
}
