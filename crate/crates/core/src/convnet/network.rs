//! Forward pass, loss and manual backpropagation.

use rand::Rng;
use rayon::prelude::*;

use super::layers::{argmax, relu, softmax};
use super::{CnnModel, CnnParams, Real};
use crate::corpus::PAD;
use crate::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Cached activations of one sample.
#[derive(Debug, Clone)]
pub struct SampleTrace<F> {
    pub indices: Vec<u32>,
    /// Embedded rows up to the last non-PAD position (`n_eff x d`); later rows are zero.
    pub embedded: Vec<F>,
    /// Per filter width: pre-activation map, `(l - m + 1) x filters`, position-major.
    pub conv_maps: Vec<Vec<F>>,
    /// Per filter width and filter: position the max-pool selected.
    pub pool_index: Vec<Vec<usize>>,
    pub pooled: Vec<F>,
    /// Per pooled unit: 0 or `1/keep`. `None` when dropout is inactive.
    pub dropout_mask: Option<Vec<F>>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
}

impl<F> SampleTrace<F> {
    fn n_eff(&self, d: usize) -> usize {
        self.embedded.len() / d
    }
}

/// Activations of a training-mode batch, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub samples: Vec<SampleTrace<F>>,
}

fn forward_sample<F: Real>(model: &CnnModel<F>, indices: &[u32], mask: Option<Vec<F>>) -> Result<SampleTrace<F>> {
    let cfg = &model.config;
    let (d, nf, k) = (cfg.embed_dim, cfg.filters_per_width, cfg.num_classes);
    let l = indices.len();
    let widest = cfg.filter_widths.iter().copied().max().unwrap_or(1);
    if l < widest {
        return Err(Error::Shape(format!("sequence length {l} shorter than filter width {widest}")));
    }
    let n_eff = indices.iter().rposition(|&i| i != PAD).map_or(0, |p| p + 1);
    let embedded = model.embed_sequence(&indices[..n_eff])?;

    let mut conv_maps = Vec::with_capacity(cfg.filter_widths.len());
    let mut pool_index = Vec::with_capacity(cfg.filter_widths.len());
    let mut pooled = Vec::with_capacity(cfg.total_filters());
    for (wi, &m) in cfg.filter_widths.iter().enumerate() {
        let w = &model.params.conv_w[wi].data;
        let b = &model.params.conv_b[wi].data;
        let positions = l - m + 1;
        let mut z: Vec<F> = Vec::with_capacity(positions * nf);
        for _ in 0..positions {
            z.extend_from_slice(b);
        }
        if n_eff > 0 {
            // partial[p][f*m + r] = x_p . w_f[r]
            let cols = nf * m;
            let mut partial = vec![F::zero(); n_eff * cols];
            F::gemm(n_eff, d, cols, &embedded, d, w, 1, d, &mut partial);
            for i in 0..positions.min(n_eff) {
                let zi = &mut z[i * nf..(i + 1) * nf];
                for r in 0..m.min(n_eff - i) {
                    let row = &partial[(i + r) * cols..(i + r + 1) * cols];
                    for (f, zf) in zi.iter_mut().enumerate() {
                        *zf += row[f * m + r];
                    }
                }
            }
        }
        debug_assert_eq!(z.len(), positions * nf);

        let mut idx = vec![0usize; nf];
        let mut best: Vec<F> = z[..nf].iter().map(|&v| relu(v)).collect();
        for i in 1..positions {
            for f in 0..nf {
                let c = relu(z[i * nf + f]);
                if c > best[f] {
                    best[f] = c;
                    idx[f] = i;
                }
            }
        }
        pooled.extend_from_slice(&best);
        pool_index.push(idx);
        conv_maps.push(z);
    }

    let fc_w = &model.params.fc_w.data;
    let mut logits = model.params.fc_b.data.clone();
    for (t, &p) in pooled.iter().enumerate() {
        let h = match &mask {
            Some(mk) => p * mk[t],
            None => p,
        };
        if h != F::zero() {
            for (c, lg) in logits.iter_mut().enumerate() {
                *lg += h * fc_w[t * k + c];
            }
        }
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let probs = softmax(&logits);
    Ok(SampleTrace {
        indices: indices.to_vec(),
        embedded,
        conv_maps,
        pool_index,
        pooled,
        dropout_mask: mask,
        logits,
        probs,
    })
}

fn dropout_masks<F: Real, R: Rng>(model: &CnnModel<F>, n: usize, rng: &mut R) -> Vec<Option<Vec<F>>> {
    let rate = model.config.dropout;
    if rate == 0.0 {
        return vec![None; n];
    }
    let keep = 1.0 - rate;
    let scale = F::of(1.0 / keep);
    (0..n)
        .map(|_| {
            Some(
                (0..model.config.total_filters())
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { F::zero() })
                    .collect(),
            )
        })
        .collect()
}

fn run<F: Real>(model: &CnnModel<F>, batch: &[Vec<u32>], masks: Vec<Option<Vec<F>>>) -> Result<Vec<SampleTrace<F>>> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    batch
        .par_iter()
        .zip(masks)
        .map(|(seq, mask)| forward_sample(model, seq, mask))
        .collect()
}

/// Runs a batch through the network.
///
/// In training mode dropout masks are drawn from `rng` (sequentially, so the
/// draw order does not depend on threading) and the trace is returned.
pub fn forward<F: Real, R: Rng>(
    model: &CnnModel<F>,
    batch: &[Vec<u32>],
    train_mode: bool,
    rng: &mut R,
) -> Result<(Vec<Vec<F>>, Option<ForwardTrace<F>>)> {
    let masks = if train_mode {
        dropout_masks(model, batch.len(), rng)
    } else {
        vec![None; batch.len()]
    };
    let samples = run(model, batch, masks)?;
    let probs = samples.iter().map(|s| s.probs.clone()).collect();
    Ok((probs, train_mode.then_some(ForwardTrace { samples })))
}

/// Inference-mode class probabilities.
pub fn predict_proba<F: Real>(model: &CnnModel<F>, batch: &[Vec<u32>]) -> Result<Vec<Vec<F>>> {
    Ok(run(model, batch, vec![None; batch.len()])?
        .into_iter()
        .map(|s| s.probs)
        .collect())
}

pub fn predict_classes<F: Real>(model: &CnnModel<F>, batch: &[Vec<u32>]) -> Result<Vec<usize>> {
    Ok(predict_proba(model, batch)?.iter().map(|p| argmax(p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub cross_entropy: f64,
    pub penalty: f64,
    /// Samples whose gold probability was clamped at [`PROB_FLOOR`].
    pub clamped: usize,
}

/// `lambda * (sum of squared filter and FC weights)`.
pub fn l2_penalty<F: Real>(params: &CnnParams<F>, lambda: f64) -> f64 {
    let sq = |t: &super::Tensor<F>| t.data.iter().map(|x| x.f64() * x.f64()).sum::<f64>();
    lambda * (params.conv_w.iter().map(sq).sum::<f64>() + sq(&params.fc_w))
}

/// Mean cross-entropy plus the L2 penalty, accumulated in `f64`.
pub fn loss<F: Real>(probs: &[Vec<F>], gold: &[usize], model: &CnnModel<F>, lambda: f64) -> Result<LossValue> {
    if probs.len() != gold.len() || probs.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} labels", probs.len(), gold.len())));
    }
    let k = model.config.num_classes;
    let mut ce = 0.0;
    let mut clamped = 0;
    for (p, &g) in probs.iter().zip(gold) {
        if g >= k {
            return Err(Error::Shape(format!("label {g} outside {k} classes")));
        }
        let pg = p[g].f64();
        if pg < PROB_FLOOR {
            clamped += 1;
        }
        ce -= pg.max(PROB_FLOOR).ln();
    }
    let cross_entropy = ce / probs.len() as f64;
    let penalty = l2_penalty(&model.params, lambda);
    Ok(LossValue {
        total: cross_entropy + penalty,
        cross_entropy,
        penalty,
        clamped,
    })
}

/// Loss of the model on a batch with dropout disabled.
pub fn batch_loss<F: Real>(model: &CnnModel<F>, batch: &[Vec<u32>], gold: &[usize], lambda: f64) -> Result<LossValue> {
    loss(&predict_proba(model, batch)?, gold, model, lambda)
}

struct SampleGrad<F> {
    conv_w: Vec<Vec<F>>,
    conv_b: Vec<Vec<F>>,
    fc_w: Vec<F>,
    fc_b: Vec<F>,
    /// Gradient per embedded row, `n_eff x d`.
    rows: Vec<F>,
}

fn backward_sample<F: Real>(model: &CnnModel<F>, s: &SampleTrace<F>, gold: usize, scale: F) -> SampleGrad<F> {
    let cfg = &model.config;
    let (d, nf, k) = (cfg.embed_dim, cfg.filters_per_width, cfg.num_classes);
    let n_eff = s.n_eff(d);
    let fc_w = &model.params.fc_w.data;

    let dlogits: Vec<F> = s
        .probs
        .iter()
        .enumerate()
        .map(|(c, &p)| (if c == gold { p - F::one() } else { p }) * scale)
        .collect();

    let t_total = cfg.total_filters();
    let mut g_fc_w = vec![F::zero(); t_total * k];
    let mut dpooled = vec![F::zero(); t_total];
    for t in 0..t_total {
        let m = s.dropout_mask.as_ref().map_or(F::one(), |mk| mk[t]);
        let h = s.pooled[t] * m;
        let mut dh = F::zero();
        for c in 0..k {
            g_fc_w[t * k + c] = h * dlogits[c];
            dh += fc_w[t * k + c] * dlogits[c];
        }
        dpooled[t] = dh * m;
    }

    let mut rows = vec![F::zero(); n_eff * d];
    let mut g_conv_w = Vec::with_capacity(cfg.filter_widths.len());
    let mut g_conv_b = Vec::with_capacity(cfg.filter_widths.len());
    for (wi, &m) in cfg.filter_widths.iter().enumerate() {
        let w = &model.params.conv_w[wi].data;
        let mut gw = vec![F::zero(); nf * m * d];
        let mut gb = vec![F::zero(); nf];
        for f in 0..nf {
            let t = wi * nf + f;
            // ReLU is inactive at the pooled position unless the max is positive.
            if s.pooled[t] <= F::zero() || dpooled[t] == F::zero() {
                continue;
            }
            let g = dpooled[t];
            let p = s.pool_index[wi][f];
            gb[f] = g;
            for r in 0..m {
                let row = p + r;
                if row >= n_eff {
                    break;
                }
                let x = &s.embedded[row * d..(row + 1) * d];
                let wfr = &w[(f * m + r) * d..(f * m + r + 1) * d];
                let gwfr = &mut gw[(f * m + r) * d..(f * m + r + 1) * d];
                let dx = &mut rows[row * d..(row + 1) * d];
                for j in 0..d {
                    gwfr[j] += g * x[j];
                    dx[j] += g * wfr[j];
                }
            }
        }
        g_conv_w.push(gw);
        g_conv_b.push(gb);
    }
    SampleGrad {
        conv_w: g_conv_w,
        conv_b: g_conv_b,
        fc_w: g_fc_w,
        fc_b: dlogits,
        rows,
    }
}

fn add_into<F: Real>(dst: &mut [F], src: &[F]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// Analytic gradient of [`loss`] for the batch recorded in `trace`.
///
/// Per-sample gradients are computed in parallel and summed in batch order.
/// The PAD embedding row never receives gradient; embedding gradients are
/// zero when embeddings are static.
pub fn backward<F: Real>(trace: &ForwardTrace<F>, model: &CnnModel<F>, gold: &[usize], lambda: f64) -> Result<CnnParams<F>> {
    let n = trace.samples.len();
    if n != gold.len() || n == 0 {
        return Err(Error::Shape(format!("trace of {n} samples for {} labels", gold.len())));
    }
    let k = model.config.num_classes;
    if let Some(&g) = gold.iter().find(|&&g| g >= k) {
        return Err(Error::Shape(format!("label {g} outside {k} classes")));
    }
    if trace.samples.iter().any(|s| s.probs.len() != k || s.pooled.len() != model.config.total_filters()) {
        return Err(Error::Shape("trace does not match model".into()));
    }
    let scale = F::one() / F::of(n as f64);
    let per_sample: Vec<SampleGrad<F>> = trace
        .samples
        .par_iter()
        .zip(gold)
        .map(|(s, &g)| backward_sample(model, s, g, scale))
        .collect();

    let d = model.config.embed_dim;
    let mut grads = model.params.zeros_like();
    for (s, sg) in trace.samples.iter().zip(&per_sample) {
        for wi in 0..sg.conv_w.len() {
            add_into(&mut grads.conv_w[wi].data, &sg.conv_w[wi]);
            add_into(&mut grads.conv_b[wi].data, &sg.conv_b[wi]);
        }
        add_into(&mut grads.fc_w.data, &sg.fc_w);
        add_into(&mut grads.fc_b.data, &sg.fc_b);
        if model.config.trainable_embeddings {
            for (p, &idx) in s.indices.iter().take(sg.rows.len() / d).enumerate() {
                if idx == PAD {
                    continue;
                }
                let i = idx as usize;
                add_into(&mut grads.embedding.data[i * d..(i + 1) * d], &sg.rows[p * d..(p + 1) * d]);
            }
        }
    }
    let two_lambda = F::of(2.0 * lambda);
    if lambda != 0.0 {
        for (g, w) in grads.conv_w.iter_mut().zip(&model.params.conv_w) {
            for (gi, &wi) in g.data.iter_mut().zip(&w.data) {
                *gi += two_lambda * wi;
            }
        }
        for (gi, &wi) in grads.fc_w.data.iter_mut().zip(&model.params.fc_w.data) {
            *gi += two_lambda * wi;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{conv_feature_map, max_pool, CnnConfig};
    use crate::corpus::LabelSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(dropout: f64) -> CnnModel<f64> {
        let cfg = CnnConfig {
            filter_widths: vec![2, 3],
            filters_per_width: 3,
            embed_dim: 4,
            max_len: 7,
            num_classes: 3,
            dropout,
            ..Default::default()
        };
        CnnModel::new(cfg, LabelSet::new(["a", "b", "c"]).unwrap(), 12).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn zero_fc_gives_uniform() {
        let mut m = small(0.0);
        m.params.fc_w.data.fill(0.0);
        m.params.fc_b.data.fill(0.0);
        let (p, trace) = forward(&m, &[vec![2, 3, 4, 0, 0, 0, 0]], false, &mut rng()).unwrap();
        assert!(trace.is_none());
        for v in &p[0] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let lv = loss(&p, &[0], &m, 0.0).unwrap();
        assert!((lv.total - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_four_class_loss() {
        let cfg = CnnConfig { max_len: 5, filter_widths: vec![2], filters_per_width: 2, embed_dim: 3, ..Default::default() };
        let mut m = CnnModel::<f64>::new(cfg, LabelSet::default(), 6).unwrap();
        m.params.fc_w.data.fill(0.0);
        m.params.fc_b.data.fill(0.0);
        let p = predict_proba(&m, &[vec![2, 3, 0, 0, 0]]).unwrap();
        assert_eq!(p[0].len(), 4);
        // lambda > 0 with zero FC weights but nonzero filters still only adds the filter term
        let lv = loss(&p, &[2], &m, 0.0).unwrap();
        assert!((lv.total - 4f64.ln()).abs() < 1e-12);
        m.params.conv_w.iter_mut().for_each(|w| w.data.fill(0.0));
        let lv = loss(&p, &[2], &m, 0.05).unwrap();
        assert!((lv.total - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_zero_loss() {
        let m = small(0.0);
        let lv = loss(&[vec![0.0, 1.0, 0.0]], &[1], &m, 0.0).unwrap();
        assert_eq!(lv.total, 0.0);
        let lv = loss(&[vec![1.0, 0.0, 0.0]], &[1], &m, 0.0).unwrap();
        assert_eq!(lv.clamped, 1);
        assert!((lv.total + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn batched_conv_matches_single_filter_route() {
        let m = small(0.0);
        let seq = vec![5, 2, 11, 1, 7, 0, 0];
        let (_, trace) = forward(&m, &[seq.clone()], true, &mut rng()).unwrap();
        let s = &trace.unwrap().samples[0];
        let x = m.embed_sequence(&seq).unwrap();
        let d = 4;
        for (wi, &width) in m.config.filter_widths.iter().enumerate() {
            let positions = 7 - width + 1;
            assert_eq!(s.conv_maps[wi].len(), positions * 3);
            for f in 0..3 {
                let w = &m.params.conv_w[wi].data[f * width * d..(f + 1) * width * d];
                let c = conv_feature_map(&x, w, m.params.conv_b[wi].data[f], d).unwrap();
                for i in 0..positions {
                    assert!((relu(s.conv_maps[wi][i * 3 + f]) - c[i]).abs() < 1e-12);
                }
                let (mx, at) = max_pool(&c).unwrap();
                assert!((s.pooled[wi * 3 + f] - mx).abs() < 1e-12);
                if mx > 0.0 {
                    assert_eq!(s.pool_index[wi][f], at);
                }
            }
        }
    }

    #[test]
    fn pooled_length_independent_of_input_length() {
        let m = small(0.0);
        for seq in [vec![2, 3, 4], vec![2, 3, 4, 5, 6, 7, 8], vec![0; 7], vec![9; 20]] {
            let (_, t) = forward(&m, &[seq], true, &mut rng()).unwrap();
            assert_eq!(t.unwrap().samples[0].pooled.len(), 6);
        }
        assert!(forward(&m, &[vec![2, 3]], false, &mut rng()).is_err());
        assert!(forward(&m, &[vec![2, 3, 99]], false, &mut rng()).is_err());
        assert!(forward(&m, &[], false, &mut rng()).is_err());
    }

    #[test]
    fn dropout_zeroes_filter_gradient() {
        let m = small(0.5);
        let seq = vec![vec![2, 3, 4, 5, 6, 0, 0]];
        let mut r = rng();
        let (_, trace) = forward(&m, &seq, true, &mut r).unwrap();
        let mut trace = trace.unwrap();
        let mask = trace.samples[0].dropout_mask.as_mut().unwrap();
        mask.iter_mut().for_each(|x| *x = 2.0);
        mask[1] = 0.0;
        let g = backward(&trace, &m, &[1], 0.0).unwrap();
        assert!(g.conv_w[0].data[4 * 2..4 * 2 * 2].iter().all(|&x| x == 0.0));
        assert_eq!(g.conv_b[0].data[1], 0.0);
    }

    #[test]
    fn identical_samples_match_single() {
        let m = small(0.0);
        let seq = vec![2, 5, 7, 3, 1, 0, 0];
        let (_, t1) = forward(&m, &[seq.clone()], true, &mut rng()).unwrap();
        let g1 = backward(&t1.unwrap(), &m, &[2], 0.05).unwrap();
        let batch = vec![seq.clone(), seq.clone(), seq];
        let (_, t3) = forward(&m, &batch, true, &mut rng()).unwrap();
        let g3 = backward(&t3.unwrap(), &m, &[2, 2, 2], 0.05).unwrap();
        for (a, b) in g1.tensors().iter().zip(g3.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert!(g1.embedding.data[..4].iter().all(|&x| x == 0.0), "PAD row gets no gradient");
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let m = small(0.0);
        let batch = vec![vec![2, 3, 4, 0, 0, 0, 0], vec![5, 6, 7, 8, 0, 0, 0], vec![9, 10, 11, 2, 3, 0, 0]];
        let a = batch_loss(&m, &batch, &[0, 1, 2], 0.05).unwrap().total;
        let rev: Vec<_> = batch.iter().rev().cloned().collect();
        let b = batch_loss(&m, &rev, &[2, 1, 0], 0.05).unwrap().total;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn static_embeddings_get_no_gradient() {
        let mut m = small(0.0);
        m.config.trainable_embeddings = false;
        let (_, t) = forward(&m, &[vec![2, 3, 4, 5, 0, 0, 0]], true, &mut rng()).unwrap();
        let g = backward(&t.unwrap(), &m, &[0], 0.0).unwrap();
        assert!(g.embedding.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backward_shape_errors() {
        let m = small(0.0);
        let (_, t) = forward(&m, &[vec![2, 3, 4, 5, 0, 0, 0]], true, &mut rng()).unwrap();
        let t = t.unwrap();
        assert!(backward(&t, &m, &[0, 1], 0.0).is_err());
        assert!(backward(&t, &m, &[3], 0.0).is_err());
    }
}
