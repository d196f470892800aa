//! Binary logistic regression trained by full-batch gradient descent.
//!
//! Objective: mean cross-entropy + `lambda / 2 * ||w||^2`, bias
//! unregularised. `VaxSkeptic` is the positive class.

use std::io::{self, BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::StanceLabel;
use crate::util::{self, sigmoid, softplus};

/// Rows stored sparsely; text blocks are mostly zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    dim: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl Design {
    pub fn from_dense<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let rows = rows
            .iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "row width {} differs from {dim}",
                        r.len()
                    )));
                }
                Ok(r.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(i, &x)| (i as u32, x))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Design { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn score(&self, i: usize, w: &[f64], b: f64) -> f64 {
        self.rows[i].iter().map(|&(j, x)| w[j as usize] * x).sum::<f64>() + b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `[-0.5, 0.5)`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub init: Init,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lambda: 1e-4,
            epochs: 1000,
            lr: 0.1,
            init: Init::Zeros,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub final_loss: f64,
}

/// Objective value and its gradient `(dL/dw, dL/db)`.
pub fn loss_and_gradient(
    x: &Design,
    y: &[StanceLabel],
    w: &[f64],
    b: f64,
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    for (i, label) in y.iter().enumerate() {
        let z = x.score(i, w, b);
        let yi = if label.is_positive() { 1.0 } else { 0.0 };
        loss += if label.is_positive() { softplus(-z) } else { softplus(z) };
        let r = sigmoid(z) - yi;
        for &(j, v) in &x.rows[i] {
            gw[j as usize] += r * v;
        }
        gb += r;
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
    }
    (loss / n + 0.5 * lambda * reg, gw, gb / n)
}

/// Loss after each epoch, or an error. Used by [`train`].
pub fn train_traced(x: &Design, y: &[StanceLabel], params: TrainParams) -> Result<(LogRegModel, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::InvalidInput(
            "logistic regression needs examples of both classes".into(),
        ));
    }
    if !(params.lr > 0.0) || !(params.lambda >= 0.0) {
        return Err(Error::InvalidInput("lr must be positive and lambda non-negative".into()));
    }
    let (mut w, mut b, seed) = match params.init {
        Init::Zeros => (vec![0.0; x.dim()], 0.0, 0),
        Init::Random { seed } => {
            let mut rng = util::rng(seed);
            let w = (0..x.dim()).map(|_| rng.gen::<f64>() - 0.5).collect();
            (w, rng.gen::<f64>() - 0.5, seed)
        }
    };
    let mut trace = Vec::with_capacity(params.epochs);
    let mut loss = loss_and_gradient(x, y, &w, b, params.lambda).0;
    for epoch in 0..params.epochs {
        let (l, gw, gb) = loss_and_gradient(x, y, &w, b, params.lambda);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= params.lr * g;
        }
        b -= params.lr * gb;
        if !l.is_finite() || !b.is_finite() {
            return Err(Error::Training(format!(
                "logistic loss diverged at epoch {epoch}; try a smaller learning rate"
            )));
        }
        loss = l;
        trace.push(l);
    }
    if params.epochs > 0 {
        loss = loss_and_gradient(x, y, &w, b, params.lambda).0;
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(
                "logistic loss diverged; try a smaller learning rate".into(),
            ));
        }
    }
    let model = LogRegModel {
        weights: w,
        bias: b,
        lambda: params.lambda,
        epochs: params.epochs,
        lr: params.lr,
        seed,
        final_loss: loss,
    };
    Ok((model, trace))
}

pub fn train(x: &Design, y: &[StanceLabel], params: TrainParams) -> Result<LogRegModel> {
    train_traced(x, y, params).map(|(m, _)| m)
}

impl LogRegModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `σ(w·x + b)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "feature width {} does not match model width {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(sigmoid(util::dot(&self.weights, x) + self.bias))
    }

    pub fn predict_design(&self, x: &Design) -> Result<Vec<f64>> {
        if x.dim() != self.weights.len() && !x.is_empty() {
            return Err(Error::InvalidInput(format!(
                "feature width {} does not match model width {}",
                x.dim(),
                self.weights.len()
            )));
        }
        Ok((0..x.len()).map(|i| sigmoid(x.score(i, &self.weights, self.bias))).collect())
    }

    pub fn classify(&self, x: &[f64], threshold: f64) -> Result<StanceLabel> {
        Ok(classify_proba(self.predict_proba(x)?, threshold))
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "logreg")?;
        writeln!(w, "m {}", self.weights.len())?;
        writeln!(w, "lambda {}", self.lambda)?;
        writeln!(w, "epochs {}", self.epochs)?;
        writeln!(w, "lr {}", self.lr)?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "final_loss {}", self.final_loss)?;
        writeln!(w, "bias {}", self.bias)?;
        writeln!(w, "weights")?;
        for x in &self.weights {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<(Self, Option<String>)> {
        let bad = |m: String| Error::format("model", m);
        let mut lines = Vec::new();
        let mut hash = None;
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if t.starts_with('#') {
                if let Some(h) = util::trailer_hash(t) {
                    hash = Some(h.to_string());
                }
                continue;
            }
            lines.push(t.to_string());
        }
        let mut it = lines.iter();
        if it.next().map(String::as_str) != Some("logreg") {
            return Err(bad("missing logreg header".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let l = it.next().ok_or_else(|| bad(format!("missing {key}")))?;
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {key}, found {l:?}")))
        };
        let num = |s: String, key: &str| s.parse::<f64>().map_err(|_| bad(format!("bad {key}")));
        let m: usize = field("m")?.parse().map_err(|_| bad("bad m".into()))?;
        let lambda = num(field("lambda")?, "lambda")?;
        let epochs: usize = field("epochs")?.parse().map_err(|_| bad("bad epochs".into()))?;
        let lr = num(field("lr")?, "lr")?;
        let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
        let final_loss = num(field("final_loss")?, "final_loss")?;
        let bias = num(field("bias")?, "bias")?;
        if it.next().map(String::as_str) != Some("weights") {
            return Err(bad("missing weights section".into()));
        }
        let weights: Vec<f64> = it
            .map(|l| l.parse::<f64>().map_err(|_| bad(format!("bad weight {l:?}"))))
            .collect::<Result<_>>()?;
        if weights.len() != m {
            return Err(bad(format!("expected {m} weights, found {}", weights.len())));
        }
        Ok((
            LogRegModel {
                weights,
                bias,
                lambda,
                epochs,
                lr,
                seed,
                final_loss,
            },
            hash,
        ))
    }
}

/// `VaxSkeptic` iff `p >= threshold`.
pub fn classify_proba(p: f64, threshold: f64) -> StanceLabel {
    StanceLabel::from_positive(p >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use StanceLabel::*;

    fn design(rows: &[&[f64]]) -> Design {
        Design::from_dense(rows).unwrap()
    }

    #[test]
    fn separable_1d_converges() {
        let x = design(&[&[-1.0], &[1.0]]);
        let y = [ProVax, VaxSkeptic];
        let params = TrainParams { lambda: 0.0, epochs: 500, lr: 0.5, init: Init::Zeros };
        let m = train(&x, &y, params).unwrap();
        assert!(m.weights[0] > 0.0);
        assert!(m.final_loss < 0.1, "loss {}", m.final_loss);
    }

    #[test]
    fn huge_lambda_shrinks_to_base_rate() {
        let x = design(&[&[-1.0], &[1.0], &[2.0], &[0.5]]);
        let y = [ProVax, VaxSkeptic, ProVax, ProVax];
        let params = TrainParams { lambda: 1e6, epochs: 2000, lr: 1e-6, init: Init::Zeros };
        let m = train(&x, &y, params).unwrap();
        assert!(m.weights[0].abs() < 1e-6);
        // bias is unregularised and drifts toward the log-odds of the base rate
        let p = m.predict_proba(&[0.0]).unwrap();
        assert!(p < 0.5);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogRegModel { weights: vec![0.0; 3], bias: 0.0, lambda: 0.0, epochs: 0, lr: 0.1, seed: 0, final_loss: 0.0 };
        assert_eq!(m.predict_proba(&[5.0, -2.0, 1e9]).unwrap(), 0.5);
        assert!(m.predict_proba(&[1.0]).is_err());
    }

    #[test]
    fn probabilities_are_stable() {
        let m = LogRegModel { weights: vec![1.0], bias: 0.0, lambda: 0.0, epochs: 0, lr: 0.1, seed: 0, final_loss: 0.0 };
        assert!((m.predict_proba(&[1e3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(m.predict_proba(&[-1e3]).unwrap().is_finite());
        assert!((m.predict_proba(&[3f64.ln()]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn classify_threshold_rules() {
        assert_eq!(classify_proba(0.5, 0.5), VaxSkeptic);
        assert_eq!(classify_proba(0.49, 0.5), ProVax);
        assert_eq!(classify_proba(0.0, 0.0), VaxSkeptic);
    }

    #[test]
    fn single_class_rejected() {
        let x = design(&[&[1.0], &[2.0]]);
        assert!(matches!(train(&x, &[ProVax, ProVax], TrainParams::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let x = design(&[&[1e200], &[-1e200]]);
        let params = TrainParams { lambda: 1.0, epochs: 50, lr: 1e10, init: Init::Zeros };
        assert!(matches!(train(&x, &[ProVax, VaxSkeptic], params), Err(Error::Training(_))));
    }

    #[test]
    fn loss_decreases_at_small_lr() {
        let mut rng = util::rng(3);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<StanceLabel> = rows.iter().map(|r| StanceLabel::from_positive(r[0] + 0.3 * r[1] > 0.1)).collect();
        let x = Design::from_dense(&rows).unwrap();
        let (_, trace) = train_traced(&x, &y, TrainParams { lambda: 1e-3, epochs: 300, lr: 0.01, init: Init::Zeros }).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = LogRegModel { weights: vec![0.1, -3.5, 1.0 / 7.0], bias: -0.25, lambda: 1e-4, epochs: 1000, lr: 0.1, seed: 0, final_loss: 0.3123 };
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        util::write_trailer(&mut buf, Some("abcd")).unwrap();
        let (back, hash) = LogRegModel::read_text(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(hash.as_deref(), Some("abcd"));
    }
}
