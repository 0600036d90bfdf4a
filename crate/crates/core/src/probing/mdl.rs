use std::f64::consts::LN_2;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProbeDataset, ProbeError, ProbeInstance};
use crate::numerics::{
    adam_step, stack_rows, weighted_cross_entropy_var, AdamState, ClassWeights, MlpClassifier,
    Tape, NUM_CLASSES,
};
use crate::par::{self, Exec};

/// Prefix fractions `(numerator, denominator)` of the segment boundaries.
pub const SCHEDULE_FRACTIONS: [(usize, usize); 11] = [
    (1, 1000),
    (2, 1000),
    (4, 1000),
    (8, 1000),
    (16, 1000),
    (32, 1000),
    (1, 16),
    (1, 8),
    (1, 4),
    (1, 2),
    (1, 1),
];

/// Boundaries `t_0 < t_1 < … < t_S = n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdlSchedule {
    boundaries: Vec<usize>,
    classes: usize,
}

impl MdlSchedule {
    pub fn new(boundaries: Vec<usize>, classes: usize) -> Result<Self, ProbeError> {
        if classes < 2 {
            return Err(ProbeError::Schedule("need at least two classes".into()));
        }
        if boundaries.len() < 2 {
            return Err(ProbeError::Schedule("need at least two boundaries".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProbeError::Schedule(format!(
                "boundaries not increasing: {boundaries:?}"
            )));
        }
        if boundaries[0] < 2 * classes {
            return Err(ProbeError::Schedule(format!(
                "first block {} is smaller than 2K = {}",
                boundaries[0],
                2 * classes
            )));
        }
        Ok(Self {
            boundaries,
            classes,
        })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n(&self) -> usize {
        *self.boundaries.last().expect("non-empty")
    }

    pub fn first_block(&self) -> usize {
        self.boundaries[0]
    }

    pub fn segments(&self) -> usize {
        self.boundaries.len() - 1
    }
}

/// Boundaries at `max(2K, ceil(f·n))` for every schedule fraction, deduplicated.
pub fn make_schedule(n: usize, classes: usize) -> Result<MdlSchedule, ProbeError> {
    make_schedule_with(n, classes, &SCHEDULE_FRACTIONS)
}

/// [`make_schedule`] with custom increasing fractions; `n` is always the
/// last boundary.
pub fn make_schedule_with(
    n: usize,
    classes: usize,
    fractions: &[(usize, usize)],
) -> Result<MdlSchedule, ProbeError> {
    if fractions
        .iter()
        .any(|&(num, den)| den == 0 || num == 0 || num > den)
    {
        return Err(ProbeError::Schedule(format!(
            "fractions must lie in (0, 1]: {fractions:?}"
        )));
    }
    if classes < 2 {
        return Err(ProbeError::Schedule("need at least two classes".into()));
    }
    if n < 20 * classes {
        return Err(ProbeError::Schedule(format!(
            "{n} instances are fewer than 20K = {}",
            20 * classes
        )));
    }
    let mut b: Vec<usize> = fractions
        .iter()
        .map(|&(num, den)| (2 * classes).max((num * n).div_ceil(den)))
        .collect();
    b.push(n);
    b.dedup();
    MdlSchedule::new(b, classes)
}

/// Moves every boundary forward to the next point where the instance id
/// changes, so no group of copies straddles a boundary.
pub fn align_schedule(
    schedule: &MdlSchedule,
    dataset: &ProbeDataset,
) -> Result<MdlSchedule, ProbeError> {
    let inst = &dataset.instances;
    if schedule.n() != inst.len() {
        return Err(ProbeError::Schedule(format!(
            "schedule covers {} instances, dataset has {}",
            schedule.n(),
            inst.len()
        )));
    }
    let mut out: Vec<usize> = schedule
        .boundaries
        .iter()
        .map(|&t| {
            let mut t = t;
            while t < inst.len() && inst[t - 1].id == inst[t].id {
                t += 1;
            }
            t
        })
        .collect();
    out.dedup();
    MdlSchedule::new(out, schedule.classes)
}

/// True when some evaluation block shares an instance id with its
/// training prefix.
pub fn has_leakage(dataset: &ProbeDataset, schedule: &MdlSchedule) -> bool {
    let inst = &dataset.instances;
    let b = &schedule.boundaries;
    b.windows(2).any(|w| {
        let seen: std::collections::HashSet<usize> = inst[..w[0]].iter().map(|i| i.id).collect();
        inst[w[0]..w[1]].iter().any(|i| seen.contains(&i.id))
    })
}

/// Maps vectors to natural-log class probabilities.
pub trait Predictor {
    fn log_proba(&self, vectors: &[&[f64]]) -> Result<Vec<[f64; NUM_CLASSES]>, ProbeError>;
}

/// Fits a fresh predictor on a training prefix.
pub trait ProbeTrainer: Sync {
    fn fit(
        &self,
        train: &[&ProbeInstance],
        segment: usize,
    ) -> Result<Box<dyn Predictor>, ProbeError>;
}

/// Ignores its training data and always predicts `1/K` per class.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformProbe;

impl Predictor for UniformProbe {
    fn log_proba(&self, vectors: &[&[f64]]) -> Result<Vec<[f64; NUM_CLASSES]>, ProbeError> {
        let lp = -(NUM_CLASSES as f64).ln();
        Ok(vec![[lp; NUM_CLASSES]; vectors.len()])
    }
}

impl ProbeTrainer for UniformProbe {
    fn fit(&self, _: &[&ProbeInstance], _: usize) -> Result<Box<dyn Predictor>, ProbeError> {
        Ok(Box::new(UniformProbe))
    }
}

/// Always predicts the same distribution.
#[derive(Debug, Clone, Copy)]
pub struct FixedProbe(pub [f64; NUM_CLASSES]);

impl Predictor for FixedProbe {
    fn log_proba(&self, vectors: &[&[f64]]) -> Result<Vec<[f64; NUM_CLASSES]>, ProbeError> {
        Ok(vec![self.0.map(f64::ln); vectors.len()])
    }
}

impl ProbeTrainer for FixedProbe {
    fn fit(&self, _: &[&ProbeInstance], _: usize) -> Result<Box<dyn Predictor>, ProbeError> {
        Ok(Box::new(*self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of the training prefix held out for early stopping.
    pub tail_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            max_epochs: 50,
            batch_size: 16,
            learning_rate: 1e-3,
            tail_fraction: 0.1,
            patience: 5,
            seed: 0,
        }
    }
}

/// Trains an [`MlpClassifier`] with inverse-frequency class weights.
#[derive(Debug, Clone, Default)]
pub struct MlpTrainer {
    pub config: ProbeConfig,
}

impl Predictor for MlpClassifier {
    fn log_proba(&self, vectors: &[&[f64]]) -> Result<Vec<[f64; NUM_CLASSES]>, ProbeError> {
        Ok(self
            .predict_log_proba(vectors)?
            .into_iter()
            .map(|r| [r[0], r[1], r[2]])
            .collect())
    }
}

fn mean_loss(
    mlp: &MlpClassifier,
    data: &[&ProbeInstance],
    weights: &ClassWeights,
) -> Result<f64, ProbeError> {
    let rows: Vec<&[f64]> = data.iter().map(|i| i.vector.as_slice()).collect();
    let lp = mlp.predict_log_proba(&rows)?;
    let total: f64 = lp
        .iter()
        .zip(data)
        .map(|(p, i)| {
            let c = i.label.class_index();
            -weights.get(c) * p[c]
        })
        .sum();
    Ok(total / data.len() as f64)
}

impl ProbeTrainer for MlpTrainer {
    fn fit(
        &self,
        train: &[&ProbeInstance],
        segment: usize,
    ) -> Result<Box<dyn Predictor>, ProbeError> {
        let cfg = &self.config;
        let Some(first) = train.first() else {
            return Err(ProbeError::Precondition("empty training prefix".into()));
        };
        let dim = first.vector.len();
        // Hold out whole groups at the end of the prefix.
        let mut split = train.len() - (cfg.tail_fraction * train.len() as f64).floor() as usize;
        while split < train.len() && split > 0 && train[split - 1].id == train[split].id {
            split += 1;
        }
        let (fit, tail) = if split == 0 || split >= train.len() {
            (train, &train[..0])
        } else {
            train.split_at(split)
        };
        let mut counts = [0; NUM_CLASSES];
        for i in fit {
            counts[i.label.class_index()] += 1;
        }
        let weights = ClassWeights::inverse_frequency(counts);
        let seed = cfg
            .seed
            .wrapping_mul(1_000_003)
            .wrapping_add(segment as u64);
        let mut mlp = MlpClassifier::new(dim, &cfg.hidden, NUM_CLASSES, seed)?;
        let mut adam = AdamState::new(mlp.params());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..fit.len()).collect();
        let mut best = mlp.clone();
        let mut best_loss = f64::INFINITY;
        let mut stale = 0;
        for _ in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            for idx in order.chunks(cfg.batch_size.max(1)) {
                let rows: Vec<&[f64]> = idx.iter().map(|&i| fit[i].vector.as_slice()).collect();
                let labels: Vec<usize> = idx.iter().map(|&i| fit[i].label.class_index()).collect();
                let x = stack_rows(&rows, dim)?;
                let grads = {
                    let mut tape = Tape::new(mlp.params());
                    let xv = tape.constant(x);
                    let logits = mlp.forward(&mut tape, xv);
                    let loss = weighted_cross_entropy_var(&mut tape, logits, &labels, &weights)?;
                    let loss = tape.scale(loss, 1.0 / idx.len() as f64);
                    if !tape.value(loss).is_finite() {
                        return Err(ProbeError::Divergence { segment });
                    }
                    let g = tape.backward(loss);
                    (0..mlp.params().len())
                        .map(|p| g.param(p).cloned().expect("every layer is used"))
                        .collect::<Vec<_>>()
                };
                adam_step(mlp.params_mut(), &grads, &mut adam, cfg.learning_rate)?;
            }
            if tail.is_empty() {
                continue;
            }
            let l = mean_loss(&mlp, tail, &weights)?;
            if !l.is_finite() {
                return Err(ProbeError::Divergence { segment });
            }
            if l < best_loss {
                best_loss = l;
                best = mlp.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        Ok(Box::new(if tail.is_empty() { mlp } else { best }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineCodingResult {
    pub schedule: Vec<usize>,
    /// Codelength of each evaluation block, in bits.
    pub segment_bits: Vec<f64>,
    /// Total description length `L` in bits.
    pub total_bits: f64,
    /// `n·log2(K) / L`.
    pub compression: f64,
    pub n: usize,
    pub classes: usize,
}

/// Online-coding description length of the dataset's labels. The first
/// block is sent at the uniform rate; each later block is coded by a probe
/// trained on everything before it.
pub fn online_code(
    dataset: &ProbeDataset,
    schedule: &MdlSchedule,
    trainer: &dyn ProbeTrainer,
) -> Result<OnlineCodingResult, ProbeError> {
    online_code_with(dataset, schedule, trainer, Exec::Parallel)
}

/// [`online_code`] with explicit dispatch of the independent segment fits.
pub fn online_code_with(
    dataset: &ProbeDataset,
    schedule: &MdlSchedule,
    trainer: &dyn ProbeTrainer,
    exec: Exec,
) -> Result<OnlineCodingResult, ProbeError> {
    let n = dataset.len();
    if schedule.n() != n {
        return Err(ProbeError::Schedule(format!(
            "schedule covers {} instances, dataset has {n}",
            schedule.n()
        )));
    }
    if has_leakage(dataset, schedule) {
        return Err(ProbeError::Precondition(
            "an evaluation block repeats an instance from its training prefix".into(),
        ));
    }
    let k = schedule.classes;
    let all: Vec<&ProbeInstance> = dataset.instances.iter().collect();
    let segments: Vec<(usize, &[usize])> = schedule.boundaries.windows(2).enumerate().collect();
    let segment_bits = par::try_map(exec, &segments, |&(s, w)| {
        let predictor = trainer.fit(&all[..w[0]], s)?;
        let block = &all[w[0]..w[1]];
        let rows: Vec<&[f64]> = block.iter().map(|i| i.vector.as_slice()).collect();
        let lp = predictor.log_proba(&rows)?;
        let bits: f64 = lp
            .iter()
            .zip(block)
            .map(|(p, i)| -p[i.label.class_index()] / LN_2)
            .sum();
        if bits.is_finite() {
            Ok(bits)
        } else {
            Err(ProbeError::Divergence { segment: s })
        }
    })?;
    let uniform = (k as f64).log2();
    let total_bits = schedule.first_block() as f64 * uniform + segment_bits.iter().sum::<f64>();
    Ok(OnlineCodingResult {
        schedule: schedule.boundaries.clone(),
        segment_bits,
        total_bits,
        compression: n as f64 * uniform / total_bits,
        n,
        classes: k,
    })
}
