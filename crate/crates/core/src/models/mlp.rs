//! One-hidden-layer perceptron trained by full-batch BFGS.
//!
//! Inputs are the one-hot expansion, standardised with training statistics.
//! Standardisation is folded into the first layer at evaluation time so rows
//! stay sparse: a row touches one dimension per source feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bfgs::{minimize, BfgsOptions, BfgsReport};
use super::sigmoid;
use crate::error::{Error, Result};
use crate::preprocess::{EncounterVector, FeatureSchema, FeatureValue, OneHotEncoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    /// L2 penalty on connection weights; biases are not penalised.
    pub l2: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Initial parameters are drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 2,
            l2: 1e-3,
            max_iterations: 200,
            tolerance: 1e-6,
            init_range: 0.5,
        }
    }
}

/// Rows per parallel chunk; fixed so gradient sums do not depend on the
/// thread count.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: MlpParams,
    pub encoder: OneHotEncoder,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `hidden x dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub optimizer: Option<BfgsReport>,
}

/// Active input dimensions and raw values, one entry per source feature.
struct SparseRows {
    per_row: usize,
    dims: Vec<u32>,
    vals: Vec<f64>,
    labels: Vec<f64>,
}

fn sparse_entry(enc: &OneHotEncoder, f: usize, v: FeatureValue) -> (u32, f64) {
    match v {
        FeatureValue::Nominal(c) => ((enc.span(f).start + c as usize) as u32, 1.0),
        FeatureValue::Numeric(x) => (enc.span(f).start as u32, x),
    }
}

impl SparseRows {
    fn new(enc: &OneHotEncoder, rows: &[EncounterVector]) -> Self {
        let per_row = rows.first().map_or(0, |r| r.values.len());
        let mut dims = Vec::with_capacity(rows.len() * per_row);
        let mut vals = Vec::with_capacity(rows.len() * per_row);
        for r in rows {
            for (f, v) in r.values.iter().enumerate() {
                let (d, x) = sparse_entry(enc, f, *v);
                dims.push(d);
                vals.push(x);
            }
        }
        Self {
            per_row,
            dims,
            vals,
            labels: rows.iter().map(|r| r.label as u8 as f64).collect(),
        }
    }
}

/// Parameter vector layout: w1 (h*d), b1 (h), w2 (h), b2.
struct Layout {
    h: usize,
    d: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.h * self.d + 2 * self.h + 1
    }
    fn b1(&self) -> usize {
        self.h * self.d
    }
    fn w2(&self) -> usize {
        self.b1() + self.h
    }
    fn b2(&self) -> usize {
        self.w2() + self.h
    }
}

/// Penalised mean squared error of a one-hidden-layer network over
/// standardised inputs, with its analytic gradient.
///
/// Parameters are laid out as the hidden weights (`hidden x dim`,
/// row-major), hidden biases, output weights and the output bias.
pub struct MlpObjective {
    rows: SparseRows,
    layout: Layout,
    encoder: OneHotEncoder,
    mean: Vec<f64>,
    scale: Vec<f64>,
    l2: f64,
}

impl MlpObjective {
    pub fn new(schema: &FeatureSchema, rows: &[EncounterVector], hidden: usize, l2: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("MLP needs training rows".into()));
        }
        if hidden == 0 {
            return Err(Error::InvalidArgument("MLP needs at least one hidden unit".into()));
        }
        let encoder = OneHotEncoder::new(schema);
        let (mean, scale) = standardisation(&encoder, rows);
        Ok(Self {
            rows: SparseRows::new(&encoder, rows),
            layout: Layout {
                h: hidden,
                d: encoder.dim(),
            },
            encoder,
            mean,
            scale,
            l2,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    /// Objective value at `theta`; the gradient is written to `grad`.
    pub fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let Layout { h, d } = self.layout;
        let (b1o, w2o, b2o) = (self.layout.b1(), self.layout.w2(), self.layout.b2());
        // Fold standardisation: w1 . (x - m)/s = (w1/s) . x - sum(w1 m / s).
        let mut eff = vec![0.0; h * d];
        let mut eff_b = theta[b1o..w2o].to_vec();
        for k in 0..h {
            for j in 0..d {
                let w = theta[k * d + j] / self.scale[j];
                eff[k * d + j] = w;
                eff_b[k] -= w * self.mean[j];
            }
        }
        let w2 = &theta[w2o..b2o];
        let b2 = theta[b2o];
        let n = self.rows.labels.len();
        let per = self.rows.per_row;

        // Per chunk: loss, dL/d(raw w1) accumulated sparsely, sum of hidden
        // deltas, dL/db... all in raw-input space.
        let partials: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>, f64)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut loss = 0.0;
                let mut gw1 = vec![0.0; h * d];
                let mut gb1 = vec![0.0; h];
                let mut gw2 = vec![0.0; h];
                let mut gb2 = 0.0;
                let mut hid = vec![0.0; h];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let dims = &self.rows.dims[i * per..(i + 1) * per];
                    let vals = &self.rows.vals[i * per..(i + 1) * per];
                    let mut z2 = b2;
                    for k in 0..h {
                        let mut z = eff_b[k];
                        for (&j, &x) in dims.iter().zip(vals) {
                            z += eff[k * d + j as usize] * x;
                        }
                        hid[k] = sigmoid(z);
                        z2 += w2[k] * hid[k];
                    }
                    let o = sigmoid(z2);
                    let e = o - self.rows.labels[i];
                    loss += e * e;
                    let delta_o = 2.0 * e * o * (1.0 - o);
                    gb2 += delta_o;
                    for k in 0..h {
                        gw2[k] += delta_o * hid[k];
                        let delta_h = delta_o * w2[k] * hid[k] * (1.0 - hid[k]);
                        gb1[k] += delta_h;
                        for (&j, &x) in dims.iter().zip(vals) {
                            gw1[k * d + j as usize] += delta_h * x;
                        }
                    }
                }
                (loss, gw1, gb1, gw2, gb2)
            })
            .collect();

        let mut loss = 0.0;
        grad.fill(0.0);
        let mut sum_gw1 = vec![0.0; h * d];
        for (l, gw1, gb1, gw2, gb2) in partials {
            loss += l;
            sum_gw1.iter_mut().zip(&gw1).for_each(|(a, b)| *a += b);
            grad[b1o..w2o].iter_mut().zip(&gb1).for_each(|(a, b)| *a += b);
            grad[w2o..b2o].iter_mut().zip(&gw2).for_each(|(a, b)| *a += b);
            grad[b2o] += gb2;
        }
        let inv_n = 1.0 / n as f64;
        // d/dw1_kj = sum_i delta_h (x_ij - m_j)/s_j
        for k in 0..h {
            let sk = grad[b1o + k];
            for j in 0..d {
                grad[k * d + j] = (sum_gw1[k * d + j] - self.mean[j] * sk) / self.scale[j];
            }
        }
        grad.iter_mut().for_each(|g| *g *= inv_n);
        let mut penalty = 0.0;
        for i in (0..b1o).chain(w2o..b2o) {
            penalty += theta[i] * theta[i];
            grad[i] += 2.0 * self.l2 * theta[i];
        }
        loss * inv_n + self.l2 * penalty
    }
}

impl Mlp {
    pub fn train(
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        params: &MlpParams,
        seed: u64,
    ) -> Result<Self> {
        let objective = MlpObjective::new(schema, rows, params.hidden, params.l2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta: Vec<f64> = (0..objective.n_params())
            .map(|_| rng.random_range(-params.init_range..=params.init_range))
            .collect();
        let opts = BfgsOptions {
            max_iterations: params.max_iterations,
            tolerance: params.tolerance,
            ..Default::default()
        };
        let report = minimize(|t, g| objective.value_and_gradient(t, g), &mut theta, &opts)?;
        log::debug!(
            "mlp: {} iterations, {:?}, final objective {:?}",
            report.iterations,
            report.termination,
            report.history.last()
        );
        let MlpObjective {
            encoder,
            mean,
            scale,
            ..
        } = objective;
        let mut m = Self::from_parameters(params.clone(), encoder, mean, scale, &theta);
        m.optimizer = Some(report);
        Ok(m)
    }

    fn from_parameters(
        params: MlpParams,
        encoder: OneHotEncoder,
        mean: Vec<f64>,
        scale: Vec<f64>,
        theta: &[f64],
    ) -> Self {
        let layout = Layout {
            h: params.hidden,
            d: encoder.dim(),
        };
        Self {
            w1: theta[..layout.b1()].to_vec(),
            b1: theta[layout.b1()..layout.w2()].to_vec(),
            w2: theta[layout.w2()..layout.b2()].to_vec(),
            b2: theta[layout.b2()],
            params,
            encoder,
            mean,
            scale,
            optimizer: None,
        }
    }

    pub fn score(&self, x: &EncounterVector) -> f64 {
        let d = self.encoder.dim();
        let mut z2 = self.b2;
        for (k, w2k) in self.w2.iter().enumerate() {
            let mut z = self.b1[k];
            for (f, v) in x.values.iter().enumerate() {
                // dense over the feature's span: indicators that are off
                // still contribute through the standardisation offset
                let span = self.encoder.span(f);
                let (on, raw) = sparse_entry(&self.encoder, f, *v);
                for j in span {
                    let xj = if j == on as usize { raw } else { 0.0 };
                    z += self.w1[k * d + j] * (xj - self.mean[j]) / self.scale[j];
                }
            }
            z2 += w2k * sigmoid(z);
        }
        sigmoid(z2)
    }
}

/// Per-dimension mean and standard deviation; constant dimensions get scale 1.
fn standardisation(enc: &OneHotEncoder, rows: &[EncounterVector]) -> (Vec<f64>, Vec<f64>) {
    let d = enc.dim();
    let n = rows.len() as f64;
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for r in rows {
        for (f, v) in r.values.iter().enumerate() {
            let (j, x) = sparse_entry(enc, f, *v);
            sum[j as usize] += x;
            sq[j as usize] += x * x;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let scale = mean
        .iter()
        .zip(&sq)
        .map(|(m, s)| {
            let var = (s / n - m * m).max(0.0);
            if var.sqrt() < 1e-12 {
                1.0
            } else {
                var.sqrt()
            }
        })
        .collect();
    (mean, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{mixed_schema, vectors};
    use approx::assert_abs_diff_eq;

    fn fixture(n: usize, seed: u64) -> (FeatureSchema, Vec<EncounterVector>) {
        let schema = mixed_schema(&[4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<(Vec<f64>, bool)> = (0..n)
            .map(|_| {
                let c = rng.random_range(0..3u32);
                let a: f64 = rng.random_range(0.0..10.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let y = a + 3.0 * (c == 2) as u8 as f64 + rng.random_range(-1.0..1.0) > 6.0;
                (vec![c as f64, a, b], y)
            })
            .collect();
        let rows = vectors(&schema, &xs);
        (schema, rows)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (schema, rows) = fixture(300, 1);
        let obj = MlpObjective::new(&schema, &rows, 2, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta: Vec<f64> = (0..obj.n_params())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let mut g = vec![0.0; theta.len()];
        obj.value_and_gradient(&theta, &mut g);
        let mut scratch = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let eps = 1e-6;
            let mut tp = theta.clone();
            tp[i] += eps;
            let mut tm = theta.clone();
            tm[i] -= eps;
            let fd = (obj.value_and_gradient(&tp, &mut scratch) - obj.value_and_gradient(&tm, &mut scratch)) / (2.0 * eps);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn sparse_score_matches_dense_standardised_forward() {
        let (schema, rows) = fixture(100, 2);
        let m = Mlp::train(
            &schema,
            &rows,
            &MlpParams {
                max_iterations: 5,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let d = m.encoder.dim();
        for r in rows.iter().take(20) {
            let x = m.encoder.encode(r);
            let xs: Vec<f64> = (0..d).map(|j| (x[j] - m.mean[j]) / m.scale[j]).collect();
            let mut z2 = m.b2;
            for k in 0..m.params.hidden {
                let z = m.b1[k] + (0..d).map(|j| m.w1[k * d + j] * xs[j]).sum::<f64>();
                z2 += m.w2[k] * sigmoid(z);
            }
            assert_abs_diff_eq!(m.score(r), sigmoid(z2), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_weights_score_half() {
        let (schema, rows) = fixture(10, 2);
        let enc = OneHotEncoder::new(&schema);
        let (mean, scale) = standardisation(&enc, &rows);
        let theta = vec![0.0; Layout { h: 2, d: enc.dim() }.len()];
        let m = Mlp::from_parameters(MlpParams::default(), enc, mean, scale, &theta);
        assert!(rows.iter().all(|r| m.score(r) == 0.5));
    }

    #[test]
    fn training_decreases_error_monotonically_and_learns() {
        let (schema, rows) = fixture(1500, 4);
        let m = Mlp::train(
            &schema,
            &rows,
            &MlpParams {
                l2: 0.0,
                ..Default::default()
            },
            7,
        )
        .unwrap();
        let hist = &m.optimizer.as_ref().unwrap().history;
        assert!(hist.len() > 2);
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        let acc = rows
            .iter()
            .filter(|r| (m.score(r) >= 0.5) == r.label)
            .count() as f64
            / rows.len() as f64;
        assert!(acc > 0.85, "{acc}");
    }

    #[test]
    fn deterministic_for_seed() {
        let (schema, rows) = fixture(5000, 5);
        let p = MlpParams {
            max_iterations: 20,
            ..Default::default()
        };
        let a = Mlp::train(&schema, &rows, &p, 3).unwrap();
        let b = Mlp::train(&schema, &rows, &p, 3).unwrap();
        assert_eq!(a, b);
    }
}
