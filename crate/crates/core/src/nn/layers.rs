use rand::Rng;

use super::{sigmoid, xavier_init, Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

fn check_dense(x: &[f64], w: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    if w.shape().len() != 2 {
        return Err(Error::Shape(format!("weight must be 2-d, got {:?}", w.shape())));
    }
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    if x.len() != n_in || b.len() != n_out {
        return Err(Error::Shape(format!(
            "dense: x has {} values, weight is {n_in}x{n_out}, bias has {}",
            x.len(),
            b.len()
        )));
    }
    Ok((n_in, n_out))
}

/// `activation(x W + b)` for a row vector `x` and a `[n_in, n_out]` weight.
pub fn dense_forward(x: &[f64], w: &Tensor, b: &Tensor, act: Activation) -> Result<Vec<f64>> {
    let (n_in, n_out) = check_dense(x, w, b)?;
    let wd = w.data();
    let mut y = b.data().to_vec();
    for (r, &xv) in x.iter().enumerate().take(n_in) {
        if xv == 0.0 {
            continue;
        }
        let row = &wd[r * n_out..(r + 1) * n_out];
        for (yj, wj) in y.iter_mut().zip(row) {
            *yj += xv * wj;
        }
    }
    y.iter_mut().for_each(|v| *v = act.apply(*v));
    Ok(y)
}

/// Backward of [`dense_forward`]. `y` is the forward output and `dy` the
/// upstream gradient. Accumulates into `gw`/`gb` and returns `dL/dx`.
pub fn dense_backward(
    x: &[f64],
    w: &Tensor,
    y: &[f64],
    dy: &[f64],
    act: Activation,
    gw: &mut Tensor,
    gb: &mut Tensor,
) -> Vec<f64> {
    let n_out = w.cols();
    let da: Vec<f64> = y
        .iter()
        .zip(dy)
        .map(|(&yv, &g)| g * act.derivative_from_output(yv))
        .collect();
    for (gbj, daj) in gb.data_mut().iter_mut().zip(&da) {
        *gbj += daj;
    }
    let wd = w.data();
    let gwd = gw.data_mut();
    let mut dx = vec![0.0; x.len()];
    for (r, &xv) in x.iter().enumerate() {
        let row = &wd[r * n_out..(r + 1) * n_out];
        let grow = &mut gwd[r * n_out..(r + 1) * n_out];
        let mut acc = 0.0;
        for j in 0..n_out {
            grow[j] += xv * da[j];
            acc += row[j] * da[j];
        }
        dx[r] = acc;
    }
    dx
}

/// Fully connected layer whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
    pub act: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), xavier_init(n_in, n_out, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[n_out]));
        Dense {
            w,
            b,
            n_in,
            n_out,
            act,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        dense_forward(x, store.get(self.w), store.get(self.b), self.act)
            .expect("dense layer input width")
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let (gw, gb) = grads.pair_mut(self.w, self.b);
        dense_backward(x, store.get(self.w), y, dy, self.act, gw, gb)
    }
}

/// Lookup table; looking up row `i` equals multiplying a one-hot vector by
/// the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = store.add(format!("{name}.table"), xavier_init(rows, dim, rng));
        Embedding { table, rows, dim }
    }

    pub fn lookup(&self, store: &ParamStore, index: usize) -> Result<Vec<f64>> {
        if index >= self.rows {
            return Err(Error::ItemOutOfRange {
                item: index,
                num_items: self.rows,
            });
        }
        Ok(store.get(self.table).row(index).to_vec())
    }

    /// Adds `upstream` to the gradient of row `index` only.
    pub fn backward(&self, index: usize, upstream: &[f64], grads: &mut Gradients) {
        for (g, u) in grads.get_mut(self.table).row_mut(index).iter_mut().zip(upstream) {
            *g += u;
        }
    }
}

/// One LSTM cell. Gate pre-activations are `x Wx + h Wh + b`, laid out as
/// `[input | forget | output | candidate]` blocks of width `hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Everything one forward step needs to run its backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let wx = store.add(format!("{name}.wx"), xavier_init(input, 4 * hidden, rng));
        let wh = store.add(format!("{name}.wh"), xavier_init(hidden, 4 * hidden, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[4 * hidden]));
        LstmCell {
            wx,
            wh,
            b,
            input,
            hidden,
        }
    }

    pub fn step(&self, store: &ParamStore, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmCache> {
        let hn = self.hidden;
        if x.len() != self.input || h_prev.len() != hn || c_prev.len() != hn {
            return Err(Error::Shape(format!(
                "lstm: x {} (want {}), h {} / c {} (want {hn})",
                x.len(),
                self.input,
                h_prev.len(),
                c_prev.len()
            )));
        }
        let mut pre = store.get(self.b).data().to_vec();
        for (src, w) in [(x, store.get(self.wx)), (h_prev, store.get(self.wh))] {
            let wd = w.data();
            for (r, &v) in src.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &wd[r * 4 * hn..(r + 1) * 4 * hn];
                for (p, wv) in pre.iter_mut().zip(row) {
                    *p += v * wv;
                }
            }
        }
        let i: Vec<f64> = pre[..hn].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = pre[hn..2 * hn].iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<f64> = pre[2 * hn..3 * hn].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = pre[3 * hn..].iter().map(|v| v.tanh()).collect();
        let c: Vec<f64> = (0..hn).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hn).map(|k| o[k] * tanh_c[k]).collect();
        Ok(LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        })
    }

    /// Backward through one step. `dh` is the total gradient reaching `h_t`
    /// and `dc_next` the gradient reaching `c_t` from step `t + 1`. Returns
    /// `(dx, dh_prev, dc_prev)`.
    pub fn backward_step(
        &self,
        store: &ParamStore,
        cache: &LstmCache,
        dh: &[f64],
        dc_next: &[f64],
        grads: &mut Gradients,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hn = self.hidden;
        let mut da = vec![0.0; 4 * hn];
        let mut dc_prev = vec![0.0; hn];
        for k in 0..hn {
            let dc = dc_next[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let d_o = dh[k] * cache.tanh_c[k];
            let d_i = dc * cache.g[k];
            let d_g = dc * cache.i[k];
            let d_f = dc * cache.c_prev[k];
            dc_prev[k] = dc * cache.f[k];
            da[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
            da[hn + k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
            da[2 * hn + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
            da[3 * hn + k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
        }
        for (gb, d) in grads.get_mut(self.b).data_mut().iter_mut().zip(&da) {
            *gb += d;
        }
        let outer = |src: &[f64], w: ParamId, grads: &mut Gradients| -> Vec<f64> {
            let wd = store.get(w).data();
            let gw = grads.get_mut(w).data_mut();
            let width = 4 * hn;
            src.iter()
                .enumerate()
                .map(|(r, &v)| {
                    let row = &wd[r * width..(r + 1) * width];
                    let grow = &mut gw[r * width..(r + 1) * width];
                    let mut acc = 0.0;
                    for j in 0..width {
                        grow[j] += v * da[j];
                        acc += row[j] * da[j];
                    }
                    acc
                })
                .collect()
        };
        let dx = outer(&cache.x, self.wx, grads);
        let dh_prev = outer(&cache.h_prev, self.wh, grads);
        (dx, dh_prev, dc_prev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs;

    fn rel_err(a: f64, b: f64) -> f64 {
        let denom = a.abs().max(b.abs());
        if denom < 1e-8 {
            (a - b).abs()
        } else {
            (a - b).abs() / denom
        }
    }

    const H: f64 = 1e-5;

    #[test]
    fn dense_trivial_cases() {
        let w = Tensor::zeros(&[3, 2]);
        let b = Tensor::zeros(&[2]);
        let y = dense_forward(&[0.3, -1.0, 2.0], &w, &b, Activation::Sigmoid).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);

        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = dense_forward(&[0.7, -0.2], &eye, &b, Activation::Identity).unwrap();
        assert_eq!(y, vec![0.7, -0.2]);

        assert!(matches!(
            dense_forward(&[1.0], &eye, &b, Activation::Identity),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = rngs::stream(11, "dense-fd", &[]);
        for act in [Activation::Identity, Activation::Sigmoid, Activation::Tanh] {
            let mut store = ParamStore::new();
            let layer = Dense::new(&mut store, "d", 4, 3, act, &mut rng);
            store.get_mut(layer.b).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let coef: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |s: &ParamStore, x: &[f64]| -> f64 {
                layer.forward(s, x).iter().zip(&coef).map(|(y, c)| y * c).sum()
            };
            let y = layer.forward(&store, &x);
            let mut grads = store.zero_grads_like();
            let dx = layer.backward(&store, &x, &y, &coef, &mut grads);

            for pid in [layer.w, layer.b] {
                for k in 0..store.get(pid).len() {
                    let mut plus = store.clone();
                    plus.get_mut(pid).data_mut()[k] += H;
                    let mut minus = store.clone();
                    minus.get_mut(pid).data_mut()[k] -= H;
                    let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * H);
                    let an = grads.get(pid).data()[k];
                    assert!(rel_err(fd, an) < 1e-4, "{act:?} param {k}: {fd} vs {an}");
                }
            }
            for k in 0..4 {
                let mut xp = x.clone();
                xp[k] += H;
                let mut xm = x.clone();
                xm[k] -= H;
                let fd = (loss(&store, &xp) - loss(&store, &xm)) / (2.0 * H);
                assert!(rel_err(fd, dx[k]) < 1e-4);
            }
        }
    }

    #[test]
    fn embedding_lookup_and_sparse_backward() {
        let mut store = ParamStore::new();
        let table = store.add(
            "e.table",
            Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        );
        let emb = Embedding { table, rows: 2, dim: 2 };
        assert_eq!(emb.lookup(&store, 1).unwrap(), vec![3.0, 4.0]);
        assert!(emb.lookup(&store, 2).is_err());

        let mut grads = store.zero_grads_like();
        emb.backward(0, &[1.0, 1.0], &mut grads);
        assert_eq!(grads.get(table).data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_equals_one_hot_matmul() {
        let mut rng = rngs::stream(5, "emb", &[]);
        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "e", 6, 4, &mut rng);
        let zero_b = Tensor::zeros(&[4]);
        for idx in 0..6 {
            let mut one_hot = vec![0.0; 6];
            one_hot[idx] = 1.0;
            let dense = dense_forward(&one_hot, store.get(emb.table), &zero_b, Activation::Identity).unwrap();
            assert_eq!(dense, emb.lookup(&store, idx).unwrap());
        }
    }

    #[test]
    fn lstm_zero_weights_give_zero_state() {
        let mut store = ParamStore::new();
        let mut rng = rngs::stream(0, "lstm", &[]);
        let cell = LstmCell::new(&mut store, "l", 3, 4, &mut rng);
        store.get_mut(cell.wx).fill(0.0);
        store.get_mut(cell.wh).fill(0.0);
        let out = cell.step(&store, &[0.0; 3], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(out.h, vec![0.0; 4]);
        assert_eq!(out.c, vec![0.0; 4]);
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_cell() {
        let mut store = ParamStore::new();
        let mut rng = rngs::stream(1, "lstm", &[]);
        let cell = LstmCell::new(&mut store, "l", 2, 3, &mut rng);
        for k in 3..6 {
            store.get_mut(cell.b).data_mut()[k] = 20.0;
        }
        let c_prev = [0.4, -0.7, 1.3];
        let out = cell.step(&store, &[0.5, -0.5], &[0.1, 0.2, -0.3], &c_prev).unwrap();
        for k in 0..3 {
            assert!((1.0 - out.f[k]).abs() < 1e-8);
            let expected = c_prev[k] + out.i[k] * out.g[k];
            assert!((out.c[k] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn lstm_shape_mismatch() {
        let mut store = ParamStore::new();
        let mut rng = rngs::stream(1, "lstm", &[]);
        let cell = LstmCell::new(&mut store, "l", 2, 3, &mut rng);
        assert!(cell.step(&store, &[0.0; 3], &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn lstm_bptt_matches_finite_differences() {
        let mut rng = rngs::stream(9, "lstm-fd", &[]);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "l", 3, 4, &mut rng);
        store.get_mut(cell.b).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let coef: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();

        let run = |s: &ParamStore, xs: &[Vec<f64>]| -> (f64, Vec<LstmCache>) {
            let mut h = vec![0.0; 4];
            let mut c = vec![0.0; 4];
            let mut loss = 0.0;
            let mut caches = Vec::new();
            for (t, x) in xs.iter().enumerate() {
                let step = cell.step(s, x, &h, &c).unwrap();
                loss += step.h.iter().zip(&coef[t]).map(|(a, b)| a * b).sum::<f64>()
                    + 0.5 * step.c.iter().map(|v| v * v).sum::<f64>();
                h = step.h.clone();
                c = step.c.clone();
                caches.push(step);
            }
            (loss, caches)
        };

        let (_, caches) = run(&store, &xs);
        let mut grads = store.zero_grads_like();
        let mut dh_next = vec![0.0; 4];
        let mut dc_next = vec![0.0; 4];
        let mut dxs = vec![Vec::new(); 3];
        for t in (0..3).rev() {
            let dh: Vec<f64> = (0..4).map(|k| coef[t][k] + dh_next[k]).collect();
            let dc: Vec<f64> = (0..4).map(|k| dc_next[k] + caches[t].c[k]).collect();
            let (dx, dhp, dcp) = cell.backward_step(&store, &caches[t], &dh, &dc, &mut grads);
            dxs[t] = dx;
            dh_next = dhp;
            dc_next = dcp;
        }

        for pid in [cell.wx, cell.wh, cell.b] {
            for k in 0..store.get(pid).len() {
                let mut plus = store.clone();
                plus.get_mut(pid).data_mut()[k] += H;
                let mut minus = store.clone();
                minus.get_mut(pid).data_mut()[k] -= H;
                let fd = (run(&plus, &xs).0 - run(&minus, &xs).0) / (2.0 * H);
                let an = grads.get(pid).data()[k];
                assert!(rel_err(fd, an) < 1e-4, "{} [{k}]: fd {fd} vs {an}", store.name(pid));
            }
        }
        for t in 0..3 {
            for k in 0..3 {
                let mut xp = xs.clone();
                xp[t][k] += H;
                let mut xm = xs.clone();
                xm[t][k] -= H;
                let fd = (run(&store, &xp).0 - run(&store, &xm).0) / (2.0 * H);
                assert!(rel_err(fd, dxs[t][k]) < 1e-4);
            }
        }
    }
}
