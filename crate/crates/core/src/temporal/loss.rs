//! Closed-form contrastive logits and loss in f64. The training loop uses the
//! same formulas on tensors; these are the reference implementation.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TAU_MIN: f64 = -5.0;
pub const TAU_MAX: f64 = 5.0;

/// Learnable log-temperature; logits are scaled by `exp(tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParam {
    pub tau: f64,
}

impl Default for TemperatureParam {
    fn default() -> Self {
        Self { tau: 0.0 }
    }
}

impl TemperatureParam {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::NonFinite("temperature"));
        }
        Ok(Self { tau })
    }

    pub fn scale(&self) -> f64 {
        self.tau.exp()
    }

    pub fn clamped(self) -> Self {
        Self {
            tau: self.tau.clamp(TAU_MIN, TAU_MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Cross-entropy along axis 0 only (softmax over audio rows per IMU column).
    #[default]
    PaperAxis0,
    /// Mean of the axis-0 and axis-1 losses.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveMode {
    #[default]
    SelfOnly,
    SameScenario,
}

#[derive(Debug, Clone, Default)]
pub struct BatchMeta {
    pub len: usize,
    pub scenarios: Option<Vec<String>>,
}

/// `logits[i][j] = <audio_i, imu_j> · exp(tau)`.
pub fn contrastive_logits(audio: &Array2<f64>, imu: &Array2<f64>, tau: TemperatureParam) -> Result<Array2<f64>> {
    if audio.ncols() != imu.ncols() {
        return Err(Error::Shape(format!(
            "embedding widths differ: {} vs {}",
            audio.ncols(),
            imu.ncols()
        )));
    }
    if audio.nrows() != imu.nrows() {
        return Err(Error::Shape(format!(
            "batch sizes differ: {} vs {}",
            audio.nrows(),
            imu.nrows()
        )));
    }
    Ok(audio.dot(&imu.t()) * tau.scale())
}

/// Positive-pair mask: identity, or same-scenario blocks.
pub fn positive_pair_labels(meta: &BatchMeta, mode: PositiveMode) -> Result<Array2<f64>> {
    match mode {
        PositiveMode::SelfOnly => Ok(Array2::eye(meta.len)),
        PositiveMode::SameScenario => {
            let s = meta
                .scenarios
                .as_ref()
                .ok_or_else(|| Error::invalid("same_scenario mode needs scenario ids"))?;
            if s.len() != meta.len {
                return Err(Error::Shape(format!("{} scenario ids for batch of {}", s.len(), meta.len)));
            }
            Ok(Array2::from_shape_fn((meta.len, meta.len), |(i, j)| f64::from(u8::from(s[i] == s[j]))))
        }
    }
}

/// Loss with the diagonal as the only positive.
pub fn contrastive_loss(logits: &Array2<f64>, mode: LossMode) -> Result<f64> {
    check_square(logits)?;
    contrastive_loss_with_targets(logits, &Array2::eye(logits.nrows()), mode)
}

/// Multi-positive loss: targets are uniform over the positives of each
/// column (axis 0) or row (axis 1).
pub fn contrastive_loss_with_targets(logits: &Array2<f64>, mask: &Array2<f64>, mode: LossMode) -> Result<f64> {
    check_square(logits)?;
    check_mask(logits, mask)?;
    let axis0 = axis_loss(&logits.t().to_owned(), &mask.t().to_owned())?;
    Ok(match mode {
        LossMode::PaperAxis0 => axis0,
        LossMode::Symmetric => 0.5 * (axis0 + axis_loss(logits, mask)?),
    })
}

/// Analytic gradient of [`contrastive_loss_with_targets`] w.r.t. the logits.
pub fn contrastive_loss_grad(logits: &Array2<f64>, mask: &Array2<f64>, mode: LossMode) -> Result<Array2<f64>> {
    check_square(logits)?;
    check_mask(logits, mask)?;
    // d/dL of mean_j CE(softmax_i L[:, j], q[:, j]) = (p - q) / B.
    let g0 = axis_grad(&logits.t().to_owned(), &mask.t().to_owned())?.t().to_owned();
    Ok(match mode {
        LossMode::PaperAxis0 => g0,
        LossMode::Symmetric => (g0 + axis_grad(logits, mask)?) * 0.5,
    })
}

fn check_square(logits: &Array2<f64>) -> Result<()> {
    if logits.nrows() != logits.ncols() {
        return Err(Error::Shape(format!(
            "logits must be square, got {}x{}",
            logits.nrows(),
            logits.ncols()
        )));
    }
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    Ok(())
}

fn check_mask(logits: &Array2<f64>, mask: &Array2<f64>) -> Result<()> {
    if logits.dim() != mask.dim() {
        return Err(Error::Shape("mask shape differs from logits".into()));
    }
    Ok(())
}

/// Row-wise softmax cross-entropy, targets normalised per row.
fn axis_loss(rows: &Array2<f64>, mask: &Array2<f64>) -> Result<f64> {
    let mut total = 0.0;
    for (r, m) in rows.axis_iter(Axis(0)).zip(mask.axis_iter(Axis(0))) {
        let mass: f64 = m.sum();
        if mass <= 0.0 {
            return Err(Error::Degenerate("row without a positive".into()));
        }
        let max = r.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += r.iter().zip(m).map(|(v, q)| q / mass * (lse - v)).sum::<f64>();
    }
    Ok(total / rows.nrows() as f64)
}

fn axis_grad(rows: &Array2<f64>, mask: &Array2<f64>) -> Result<Array2<f64>> {
    let n = rows.nrows() as f64;
    let mut out = Array2::zeros(rows.dim());
    for (i, (r, m)) in rows.axis_iter(Axis(0)).zip(mask.axis_iter(Axis(0))).enumerate() {
        let mass: f64 = m.sum();
        if mass <= 0.0 {
            return Err(Error::Degenerate("row without a positive".into()));
        }
        let max = r.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = r.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for j in 0..exps.len() {
            out[[i, j]] = (exps[j] / z - m[j] / mass) / n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logits_examples() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(contrastive_logits(&e, &e, TemperatureParam::default()).unwrap(), e);
        let l = contrastive_logits(&e, &e, TemperatureParam::new(2f64.ln()).unwrap()).unwrap();
        assert!((l[[0, 0]] - 2.0).abs() < 1e-12 && l[[0, 1]] == 0.0);
        assert!(contrastive_logits(&e, &array![[1.0, 0.0, 0.0]], TemperatureParam::default()).is_err());
    }

    #[test]
    fn unit_rows_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut unit = || {
                let mut m = Array2::<f64>::from_shape_fn((5, 8), |_| rng.random_range(-1.0..1.0));
                for mut r in m.rows_mut() {
                    let n: f64 = r.dot(&r).sqrt();
                    r /= n;
                }
                m
            };
            let (a, b) = (unit(), unit());
            let l = contrastive_logits(&a, &b, TemperatureParam::default()).unwrap();
            assert!(l.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn closed_form_values() {
        let l = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = contrastive_loss(&l, LossMode::PaperAxis0).unwrap();
        assert!((loss - 0.31326).abs() < 1e-5);
        assert!((loss + (1f64.exp() / (1f64.exp() + 1.0)).ln()).abs() < 1e-12);
        let u = Array2::from_elem((4, 4), 0.7);
        assert!((contrastive_loss(&u, LossMode::PaperAxis0).unwrap() - 4f64.ln()).abs() < 1e-9);
        assert!((contrastive_loss(&u, LossMode::Symmetric).unwrap() - 4f64.ln()).abs() < 1e-9);
        let big = Array2::<f64>::eye(3) * 60.0;
        assert!(contrastive_loss(&big, LossMode::PaperAxis0).unwrap() < 1e-20);
        assert!(contrastive_loss(&array![[1.0, 2.0]], LossMode::PaperAxis0).is_err());
    }

    #[test]
    fn axis0_differs_from_axis1_on_asymmetric_logits() {
        let l = array![[2.0, 0.0], [1.5, 1.0]];
        let a0 = contrastive_loss(&l, LossMode::PaperAxis0).unwrap();
        let sym = contrastive_loss(&l, LossMode::Symmetric).unwrap();
        assert!((a0 - sym).abs() > 1e-3);
    }

    #[test]
    fn masks() {
        let meta = BatchMeta {
            len: 3,
            scenarios: Some(vec!["a".into(), "a".into(), "b".into()]),
        };
        assert_eq!(positive_pair_labels(&meta, PositiveMode::SelfOnly).unwrap(), Array2::<f64>::eye(3));
        assert_eq!(
            positive_pair_labels(&meta, PositiveMode::SameScenario).unwrap(),
            array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );
        let distinct = BatchMeta {
            len: 3,
            scenarios: Some(vec!["a".into(), "b".into(), "c".into()]),
        };
        assert_eq!(positive_pair_labels(&distinct, PositiveMode::SameScenario).unwrap(), Array2::<f64>::eye(3));
        let missing = BatchMeta { len: 3, scenarios: None };
        assert!(positive_pair_labels(&missing, PositiveMode::SameScenario).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mode in [LossMode::PaperAxis0, LossMode::Symmetric] {
            for _ in 0..20 {
                let l = Array2::from_shape_fn((4, 4), |_| rng.random_range(-3.0..3.0));
                let mask = Array2::<f64>::eye(4);
                let g = contrastive_loss_grad(&l, &mask, mode).unwrap();
                for i in 0..4 {
                    for j in 0..4 {
                        let h = 1e-4;
                        let mut p = l.clone();
                        p[[i, j]] += h;
                        let mut m = l.clone();
                        m[[i, j]] -= h;
                        let fd = (contrastive_loss_with_targets(&p, &mask, mode).unwrap()
                            - contrastive_loss_with_targets(&m, &mask, mode).unwrap())
                            / (2.0 * h);
                        let rel = (fd - g[[i, j]]).abs() / g[[i, j]].abs().max(fd.abs()).max(1e-8);
                        assert!(rel <= 1e-4, "rel err {rel} at ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Array2::from_shape_fn((5, 5), |_| rng.random_range(-2.0..2.0));
        let perm = [3, 0, 4, 1, 2];
        let p = Array2::from_shape_fn((5, 5), |(i, j)| l[[perm[i], perm[j]]]);
        for mode in [LossMode::PaperAxis0, LossMode::Symmetric] {
            let a = contrastive_loss(&l, mode).unwrap();
            let b = contrastive_loss(&p, mode).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_decreases_with_tau_on_aligned_batches() {
        let e = Array2::<f64>::eye(4);
        let losses: Vec<f64> = [-1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&t| {
                let l = contrastive_logits(&e, &e, TemperatureParam::new(t).unwrap()).unwrap();
                contrastive_loss(&l, LossMode::PaperAxis0).unwrap()
            })
            .collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn tau_clamp() {
        assert_eq!(TemperatureParam { tau: 9.0 }.clamped().tau, TAU_MAX);
        assert_eq!(TemperatureParam { tau: -9.0 }.clamped().tau, TAU_MIN);
    }
}
