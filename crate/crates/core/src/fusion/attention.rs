//! Scaled dot-product attention, multi-head concatenation, and the two
//! asymmetric cross-attention streams.

use crate::error::{Error, Result};
use crate::numerics::{BoundParams, ParamId, ParamStore, Tape, Tensor, Var};

use crate::encoders::glorot;
use rand::Rng;

/// Per-head projections as tape handles: `W^Q: D_c×d_k`, `W^K: D_c×d_k`,
/// `W^V: D_c×d_v`.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

/// All heads of one attention block plus the output projection
/// `W^O: (h·d_v)×D_c`.
#[derive(Clone, Debug)]
pub struct AttentionVars {
    pub heads: Vec<HeadVars>,
    pub wo: Var,
}

/// Output of [`multi_head`] together with each head's attention weights
/// (`n_q × n_k`, row-stochastic).
#[derive(Clone, Debug)]
pub struct MultiHeadOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

/// `softmax((Q·W^Q)(K·W^K)ᵀ / √d_k) · (V·W^V)`; returns `(head output, weights)`.
pub fn attention_head(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    head: &HeadVars,
) -> Result<(Var, Var)> {
    if tape.value(k).rows() == 0 || tape.value(v).rows() == 0 {
        return Err(Error::EmptyKeys);
    }
    if tape.value(k).rows() != tape.value(v).rows() {
        return Err(Error::ShapeMismatch {
            op: "attention_head",
            left: tape.value(k).shape().to_vec(),
            right: tape.value(v).shape().to_vec(),
        });
    }
    let d_k = tape.value(head.wk).dims2()?.1;
    let qp = tape.matmul(q, head.wq)?;
    let kp = tape.matmul(k, head.wk)?;
    let vp = tape.matmul(v, head.wv)?;
    let kt = tape.transpose(kp)?;
    let raw = tape.matmul(qp, kt)?;
    let scores = tape.scale(raw, 1.0 / (d_k as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    let out = tape.matmul(weights, vp)?;
    Ok((out, weights))
}

/// `Concat(head_1, …, head_h) · W^O`, heads joined along features in order.
pub fn multi_head(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    p: &AttentionVars,
) -> Result<MultiHeadOutput> {
    if p.heads.is_empty() {
        return Err(Error::InvalidConfig(
            "attention needs at least one head".into(),
        ));
    }
    let mut outs = Vec::with_capacity(p.heads.len());
    let mut weights = Vec::with_capacity(p.heads.len());
    for head in &p.heads {
        let (o, w) = attention_head(tape, q, k, v, head)?;
        outs.push(o);
        weights.push(w);
    }
    let concat = if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    let output = tape.matmul(concat, p.wo)?;
    Ok(MultiHeadOutput { output, weights })
}

/// Visual vector queries the audio sequence: `MultiHead(v', A', A')`, `1×D_c`.
pub fn va_attention(
    tape: &mut Tape,
    visual: Var,
    audio: Var,
    p: &AttentionVars,
) -> Result<MultiHeadOutput> {
    multi_head(tape, visual, audio, audio, p)
}

/// Every audio step queries the visual vector: `MultiHead(A', v', v')`,
/// `T_a×D_c`. With a single key each softmax row is exactly 1, so all output
/// rows equal `Concat_i(v'·W_i^V)·W^O`.
pub fn av_attention(
    tape: &mut Tape,
    audio: Var,
    visual: Var,
    p: &AttentionVars,
) -> Result<MultiHeadOutput> {
    multi_head(tape, audio, visual, visual, p)
}

/// Layout of one attention block inside a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AttentionParams {
    heads: Vec<[ParamId; 3]>,
    wo: ParamId,
}

impl AttentionParams {
    pub(crate) fn init(
        prefix: &str,
        latent: usize,
        heads: usize,
        d_k: usize,
        d_v: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let heads = (0..heads)
            .map(|i| {
                [
                    store.add(
                        format!("{prefix}.head{i}.wq"),
                        glorot(rng, &[latent, d_k], latent, d_k),
                    ),
                    store.add(
                        format!("{prefix}.head{i}.wk"),
                        glorot(rng, &[latent, d_k], latent, d_k),
                    ),
                    store.add(
                        format!("{prefix}.head{i}.wv"),
                        glorot(rng, &[latent, d_v], latent, d_v),
                    ),
                ]
            })
            .collect::<Vec<_>>();
        let concat = heads.len() * d_v;
        let wo = store.add(
            format!("{prefix}.wo"),
            glorot(rng, &[concat, latent], concat, latent),
        );
        Self { heads, wo }
    }

    pub fn vars(&self, p: &BoundParams) -> AttentionVars {
        AttentionVars {
            heads: self
                .heads
                .iter()
                .map(|&[q, k, v]| HeadVars {
                    wq: p.var(q),
                    wk: p.var(k),
                    wv: p.var(v),
                })
                .collect(),
            wo: p.var(self.wo),
        }
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    /// Ids of head `i`'s `(W^Q, W^K, W^V)`.
    pub fn head(&self, i: usize) -> [ParamId; 3] {
        self.heads[i]
    }

    pub fn output_projection(&self) -> ParamId {
        self.wo
    }
}

/// Convenience for tests and tools: evaluates [`multi_head`] on plain tensors.
pub fn multi_head_values(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: &[[Tensor; 3]],
    wo: &Tensor,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let (q, k, v) = (
        tape.constant(q.clone()),
        tape.constant(k.clone()),
        tape.constant(v.clone()),
    );
    let vars = AttentionVars {
        heads: heads
            .iter()
            .map(|[wq, wk, wv]| HeadVars {
                wq: tape.constant(wq.clone()),
                wk: tape.constant(wk.clone()),
                wv: tape.constant(wv.clone()),
            })
            .collect(),
        wo: tape.constant(wo.clone()),
    };
    let out = multi_head(&mut tape, q, k, v, &vars)?;
    let weights = out.weights.iter().map(|&w| tape.value(w).clone()).collect();
    Ok((tape.value(out.output).clone(), weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn single_head(q: &Tensor, k: &Tensor, v: &Tensor, w: &[Tensor; 3]) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let (qv, kv, vv) = (
            tape.constant(q.clone()),
            tape.constant(k.clone()),
            tape.constant(v.clone()),
        );
        let head = HeadVars {
            wq: tape.constant(w[0].clone()),
            wk: tape.constant(w[1].clone()),
            wv: tape.constant(w[2].clone()),
        };
        let (o, a) = attention_head(&mut tape, qv, kv, vv, &head).unwrap();
        (tape.value(o).clone(), tape.value(a).clone())
    }

    #[test]
    fn single_key_returns_projected_value_regardless_of_query() {
        let w = [
            t(&[&[1.0, 0.5], &[-0.3, 2.0]]),
            t(&[&[0.2, 0.1], &[0.7, -1.0]]),
            t(&[&[0.5, -0.5], &[1.5, 0.25]]),
        ];
        let k = t(&[&[0.4, -1.1]]);
        let v = t(&[&[2.0, 3.0]]);
        let expected = t(&[&[2.0 * 0.5 + 3.0 * 1.5, 2.0 * -0.5 + 3.0 * 0.25]]);
        for q in [t(&[&[9.0, -4.0]]), t(&[&[0.0, 0.0]])] {
            let (o, a) = single_head(&q, &k, &v, &w);
            assert_eq!(a.data(), &[1.0]);
            assert_eq!(o, expected);
        }
    }

    #[test]
    fn equal_scores_average_the_values() {
        let w = [
            Tensor::identity(2),
            Tensor::identity(2),
            Tensor::identity(2),
        ];
        // q · k_j is the same for every key row.
        let q = t(&[&[1.0, 0.0]]);
        let k = t(&[&[0.5, 1.0], &[0.5, -3.0], &[0.5, 7.0]]);
        let v = t(&[&[1.0, 2.0], &[3.0, -4.0], &[5.0, 8.0]]);
        let (o, _) = single_head(&q, &k, &v, &w);
        assert!((o.data()[0] - 3.0).abs() < 1e-12);
        assert!((o.data()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_key_blend_by_hand() {
        // d_k = 1: q·W^Q = 2, keys project to 0 and ln 4 → scores 0, 2 ln 4 / 1.
        let wq = t(&[&[1.0], &[1.0]]);
        let wk = t(&[&[1.0], &[0.0]]);
        let wv = t(&[&[1.0], &[0.0]]);
        let q = t(&[&[1.0, 1.0]]);
        let ln2 = 2f64.ln();
        let k = t(&[&[0.0, 5.0], &[ln2 / 2.0, -1.0]]);
        let v = t(&[&[10.0, 0.0], &[40.0, 0.0]]);
        // scores = 2 · [0, ln2/2] = [0, ln 2] → weights [1/3, 2/3].
        let (o, a) = single_head(&q, &k, &v, &[wq, wk, wv]);
        assert!((a.data()[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((a.data()[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((o.data()[0] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn dead_head_masked_by_output_projection() {
        let h1 = [
            t(&[&[0.3, -0.2], &[1.0, 0.4]]),
            t(&[&[0.9, 0.1], &[-0.5, 0.6]]),
            t(&[&[1.2, 0.0], &[0.3, -0.7]]),
        ];
        let h2 = [h1[1].clone(), h1[0].clone(), Tensor::zeros(&[2, 2])];
        let q = t(&[&[0.1, 0.2], &[-1.0, 0.5]]);
        let k = t(&[&[1.0, -1.0], &[0.3, 0.3], &[2.0, 0.0]]);
        let v = t(&[&[0.5, 0.5], &[-1.0, 2.0], &[0.0, 1.0]]);
        let mut wo = Tensor::zeros(&[4, 2]);
        wo.data_mut()[0] = 1.0;
        wo.data_mut()[3] = 1.0;
        let (multi, _) = multi_head_values(&q, &k, &v, &[h1.clone(), h2], &wo).unwrap();
        let (single, _) = single_head(&q, &k, &v, &h1);
        assert_eq!(multi, single);
    }

    #[test]
    fn empty_head_list_rejected() {
        let q = Tensor::zeros(&[1, 2]);
        assert!(multi_head_values(&q, &q, &q, &[], &Tensor::zeros(&[1, 2])).is_err());
    }
}
