//! Shared recurrent policy network with batched forward and
//! backpropagation through time.
//!
//! Every column of a batch is one agent sequence (one user in one episode);
//! all agents share the same parameters.
//!
//! Layout: `Linear + ReLU` input module, a gated recurrent unit, and two
//! heads (`Linear + ReLU + Linear`) for the pilot logits and the power
//! pre-activation. Gate order in the recurrent weights is reset, update,
//! candidate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear {
            w: DMatrix::zeros(n_out, n_in),
            b: DVector::zeros(n_out),
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization.
    pub fn random<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let k = 1.0 / (n_in as f64).sqrt();
        let u = Uniform::new_inclusive(-k, k).expect("finite bound");
        Linear {
            w: DMatrix::from_fn(n_out, n_in, |_, _| u.sample(rng)),
            b: DVector::from_fn(n_out, |_, _| u.sample(rng)),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.w * x;
        for mut col in y.column_iter_mut() {
            col += &self.b;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Linear) -> DMatrix<f64> {
        grad.w.gemm(1.0, dy, &x.transpose(), 1.0);
        for col in dy.column_iter() {
            grad.b += col;
        }
        self.w.tr_mul(dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    /// `3H x in`.
    pub w_ih: DMatrix<f64>,
    /// `3H x H`.
    pub w_hh: DMatrix<f64>,
    pub b_ih: DVector<f64>,
    pub b_hh: DVector<f64>,
}

impl Gru {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        Gru {
            w_ih: DMatrix::zeros(3 * hidden, n_in),
            w_hh: DMatrix::zeros(3 * hidden, hidden),
            b_ih: DVector::zeros(3 * hidden),
            b_hh: DVector::zeros(3 * hidden),
        }
    }

    pub fn random<R: Rng + ?Sized>(n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let u = Uniform::new_inclusive(-k, k).expect("finite bound");
        let mut m = |r, c| DMatrix::from_fn(r, c, |_, _| u.sample(rng));
        Gru {
            w_ih: m(3 * hidden, n_in),
            w_hh: m(3 * hidden, hidden),
            b_ih: m(3 * hidden, 1).column(0).into_owned(),
            b_hh: m(3 * hidden, 1).column(0).into_owned(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub input: Linear,
    pub gru: Gru,
    pub pilot_hidden: Linear,
    pub pilot_out: Linear,
    pub power_hidden: Linear,
    pub power_out: Linear,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: DMatrix<f64>,
    h_in: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    n: DMatrix<f64>,
    gh_n: DMatrix<f64>,
    h: DMatrix<f64>,
    p1: DMatrix<f64>,
    q1: DMatrix<f64>,
}

/// Raw network outputs for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `(L+1) x batch`.
    pub logits: DMatrix<f64>,
    /// `1 x batch`.
    pub power_preact: DMatrix<f64>,
}

fn relu(m: &mut DMatrix<f64>) {
    m.apply(|x| *x = x.max(0.0));
}

fn sigmoid_in_place(m: &mut DMatrix<f64>) {
    m.apply(|x| *x = crate::objective::sigmoid(*x));
}

impl PolicyNet {
    pub fn zeros(n_obs: usize, hidden: usize, n_pilots: usize) -> Self {
        PolicyNet {
            input: Linear::zeros(n_obs, hidden),
            gru: Gru::zeros(hidden, hidden),
            pilot_hidden: Linear::zeros(hidden, hidden),
            pilot_out: Linear::zeros(hidden, n_pilots + 1),
            power_hidden: Linear::zeros(hidden, hidden),
            power_out: Linear::zeros(hidden, 1),
        }
    }

    pub fn random<R: Rng + ?Sized>(n_obs: usize, hidden: usize, n_pilots: usize, rng: &mut R) -> Self {
        PolicyNet {
            input: Linear::random(n_obs, hidden, rng),
            gru: Gru::random(hidden, hidden, rng),
            pilot_hidden: Linear::random(hidden, hidden, rng),
            pilot_out: Linear::random(hidden, n_pilots + 1, rng),
            power_hidden: Linear::random(hidden, hidden, rng),
            power_out: Linear::random(hidden, 1, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_tensor_mut(|_, t| t.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    pub fn n_obs(&self) -> usize {
        self.input.w.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    pub fn n_pilots(&self) -> usize {
        self.pilot_out.w.nrows() - 1
    }

    /// Named tensors in a fixed order with their shapes.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        fn mat<'a>(name: &'static str, m: &'a DMatrix<f64>) -> (&'static str, Vec<usize>, &'a [f64]) {
            (name, vec![m.nrows(), m.ncols()], m.as_slice())
        }
        fn vec<'a>(name: &'static str, v: &'a DVector<f64>) -> (&'static str, Vec<usize>, &'a [f64]) {
            (name, vec![v.len()], v.as_slice())
        }
        vec![
            mat("input.w", &self.input.w),
            vec("input.b", &self.input.b),
            mat("gru.w_ih", &self.gru.w_ih),
            mat("gru.w_hh", &self.gru.w_hh),
            vec("gru.b_ih", &self.gru.b_ih),
            vec("gru.b_hh", &self.gru.b_hh),
            mat("pilot_hidden.w", &self.pilot_hidden.w),
            vec("pilot_hidden.b", &self.pilot_hidden.b),
            mat("pilot_out.w", &self.pilot_out.w),
            vec("pilot_out.b", &self.pilot_out.b),
            mat("power_hidden.w", &self.power_hidden.w),
            vec("power_hidden.b", &self.power_hidden.b),
            mat("power_out.w", &self.power_out.w),
            vec("power_out.b", &self.power_out.b),
        ]
    }

    /// Visits every tensor mutably in the order of [`PolicyNet::tensors`].
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64])) {
        f("input.w", self.input.w.as_mut_slice());
        f("input.b", self.input.b.as_mut_slice());
        f("gru.w_ih", self.gru.w_ih.as_mut_slice());
        f("gru.w_hh", self.gru.w_hh.as_mut_slice());
        f("gru.b_ih", self.gru.b_ih.as_mut_slice());
        f("gru.b_hh", self.gru.b_hh.as_mut_slice());
        f("pilot_hidden.w", self.pilot_hidden.w.as_mut_slice());
        f("pilot_hidden.b", self.pilot_hidden.b.as_mut_slice());
        f("pilot_out.w", self.pilot_out.w.as_mut_slice());
        f("pilot_out.b", self.pilot_out.b.as_mut_slice());
        f("power_hidden.w", self.power_hidden.w.as_mut_slice());
        f("power_hidden.b", self.power_hidden.b.as_mut_slice());
        f("power_out.w", self.power_out.w.as_mut_slice());
        f("power_out.b", self.power_out.b.as_mut_slice());
    }

    /// All parameters concatenated in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, _, t)| t.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        let mut at = 0;
        self.for_each_tensor_mut(|_, t| {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        });
    }

    pub fn is_recurrent_tensor(name: &str) -> bool {
        name.starts_with("gru.")
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn initial_hidden(&self, batch: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.hidden(), batch)
    }

    /// One step for a batch of agents. Returns the outputs, the next hidden
    /// state and the activations needed by [`PolicyNet::backward`].
    pub fn step(&self, x: &DMatrix<f64>, h_prev: &DMatrix<f64>) -> (StepOutput, DMatrix<f64>, StepCache) {
        let hid = self.hidden();
        let mut h_in = self.input.forward(x);
        relu(&mut h_in);

        let gi = {
            let mut g = &self.gru.w_ih * &h_in;
            for mut col in g.column_iter_mut() {
                col += &self.gru.b_ih;
            }
            g
        };
        let gh = {
            let mut g = &self.gru.w_hh * h_prev;
            for mut col in g.column_iter_mut() {
                col += &self.gru.b_hh;
            }
            g
        };
        let mut r = gi.rows(0, hid) + gh.rows(0, hid);
        sigmoid_in_place(&mut r);
        let mut z = gi.rows(hid, hid) + gh.rows(hid, hid);
        sigmoid_in_place(&mut z);
        let gh_n = gh.rows(2 * hid, hid).into_owned();
        let mut n = gi.rows(2 * hid, hid) + r.component_mul(&gh_n);
        n.apply(|v| *v = v.tanh());
        let h = n.zip_zip_map(&z, h_prev, |n, z, hp| (1.0 - z) * n + z * hp);

        let mut p1 = self.pilot_hidden.forward(&h);
        relu(&mut p1);
        let logits = self.pilot_out.forward(&p1);
        let mut q1 = self.power_hidden.forward(&h);
        relu(&mut q1);
        let power_preact = self.power_out.forward(&q1);

        let cache = StepCache {
            x: x.clone(),
            h_in,
            h_prev: h_prev.clone(),
            r,
            z,
            n,
            gh_n,
            h: h.clone(),
            p1,
            q1,
        };
        (StepOutput { logits, power_preact }, h, cache)
    }

    /// Forward over a sequence from the zero state.
    pub fn forward_sequence(&self, xs: &[DMatrix<f64>]) -> (Vec<StepOutput>, Vec<StepCache>) {
        let batch = xs.first().map_or(0, |x| x.ncols());
        let mut h = self.initial_hidden(batch);
        let mut outs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (o, h_next, c) = self.step(x, &h);
            outs.push(o);
            caches.push(c);
            h = h_next;
        }
        (outs, caches)
    }

    /// Backpropagation through time. `d_out[t]` holds the loss gradient with
    /// respect to the raw outputs of step `t`. Gradients are accumulated into
    /// `grad`.
    pub fn backward(&self, caches: &[StepCache], d_out: &[StepOutput], grad: &mut PolicyNet) {
        let hid = self.hidden();
        let batch = caches.first().map_or(0, |c| c.x.ncols());
        let mut dh_next = DMatrix::zeros(hid, batch);
        for (c, d) in caches.iter().zip(d_out).rev() {
            let mut dq1 = self.power_out.backward(&c.q1, &d.power_preact, &mut grad.power_out);
            dq1.zip_apply(&c.q1, |g, a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            let mut dh = self.power_hidden.backward(&c.h, &dq1, &mut grad.power_hidden);

            let mut dp1 = self.pilot_out.backward(&c.p1, &d.logits, &mut grad.pilot_out);
            dp1.zip_apply(&c.p1, |g, a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            dh += self.pilot_hidden.backward(&c.h, &dp1, &mut grad.pilot_hidden);
            dh += &dh_next;

            // h = (1 - z) n + z h_prev
            let dz_pre = DMatrix::from_fn(hid, batch, |i, j| {
                let z = c.z[(i, j)];
                dh[(i, j)] * (c.h_prev[(i, j)] - c.n[(i, j)]) * z * (1.0 - z)
            });
            let dn_pre = DMatrix::from_fn(hid, batch, |i, j| {
                let n = c.n[(i, j)];
                dh[(i, j)] * (1.0 - c.z[(i, j)]) * (1.0 - n * n)
            });
            let dr_pre = DMatrix::from_fn(hid, batch, |i, j| {
                let r = c.r[(i, j)];
                dn_pre[(i, j)] * c.gh_n[(i, j)] * r * (1.0 - r)
            });
            let mut dgi = DMatrix::zeros(3 * hid, batch);
            dgi.rows_mut(0, hid).copy_from(&dr_pre);
            dgi.rows_mut(hid, hid).copy_from(&dz_pre);
            dgi.rows_mut(2 * hid, hid).copy_from(&dn_pre);
            let mut dgh = dgi.clone();
            dgh.rows_mut(2 * hid, hid).component_mul_assign(&c.r);

            grad.gru.w_ih.gemm(1.0, &dgi, &c.h_in.transpose(), 1.0);
            grad.gru.w_hh.gemm(1.0, &dgh, &c.h_prev.transpose(), 1.0);
            for col in dgi.column_iter() {
                grad.gru.b_ih += col;
            }
            for col in dgh.column_iter() {
                grad.gru.b_hh += col;
            }

            dh_next = self.gru.w_hh.tr_mul(&dgh);
            dh_next += dh.component_mul(&c.z);

            let mut dh_in = self.gru.w_ih.tr_mul(&dgi);
            dh_in.zip_apply(&c.h_in, |g, a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            self.input.backward(&c.x, &dh_in, &mut grad.input);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_uniform_logits_and_half_power() {
        let net = PolicyNet::zeros(5, 8, 3);
        let x = DMatrix::from_element(5, 2, 0.7);
        let (out, _, _) = net.step(&x, &net.initial_hidden(2));
        assert!(out.logits.iter().all(|&v| v == 0.0));
        assert!(out.power_preact.iter().all(|&v| v == 0.0));
        assert_eq!(crate::objective::sigmoid(out.power_preact[(0, 0)]), 0.5);
    }

    #[test]
    fn forward_is_deterministic_and_column_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PolicyNet::random(6, 10, 2, &mut rng);
        let xs: Vec<DMatrix<f64>> = (0..4)
            .map(|_| DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let (a, _) = net.forward_sequence(&xs);
        let (b, _) = net.forward_sequence(&xs);
        assert_eq!(a, b);
        // Column 1 run alone matches column 1 of the batch.
        let solo: Vec<DMatrix<f64>> = xs.iter().map(|x| x.columns(1, 1).into_owned()).collect();
        let (s, _) = net.forward_sequence(&solo);
        for (o, so) in a.iter().zip(&s) {
            for k in 0..3 {
                assert!((o.logits[(k, 1)] - so.logits[(k, 0)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn bptt_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n_obs, hid, l, batch, t_len) = (4, 4, 2, 3, 3);
        let net = PolicyNet::random(n_obs, hid, l, &mut rng);
        let xs: Vec<DMatrix<f64>> = (0..t_len)
            .map(|_| DMatrix::from_fn(n_obs, batch, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        // Linear functional of all outputs.
        let weights: Vec<StepOutput> = (0..t_len)
            .map(|_| StepOutput {
                logits: DMatrix::from_fn(l + 1, batch, |_, _| rng.random_range(-1.0..1.0)),
                power_preact: DMatrix::from_fn(1, batch, |_, _| rng.random_range(-1.0..1.0)),
            })
            .collect();
        let loss = |n: &PolicyNet| {
            let (outs, _) = n.forward_sequence(&xs);
            outs.iter()
                .zip(&weights)
                .map(|(o, w)| o.logits.dot(&w.logits) + o.power_preact.dot(&w.power_preact))
                .sum::<f64>()
        };
        let (_, caches) = net.forward_sequence(&xs);
        let mut grad = net.zeros_like();
        net.backward(&caches, &weights, &mut grad);

        let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, _, d)| d.to_vec()).collect();
        let n_params = net.n_params();
        let h = 1e-6;
        for k in 0..n_params {
            let bump = |delta: f64| {
                let mut n = net.clone();
                let mut idx = 0;
                n.for_each_tensor_mut(|_, t| {
                    for v in t.iter_mut() {
                        if idx == k {
                            *v += delta;
                        }
                        idx += 1;
                    }
                });
                loss(&n)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let a = analytic[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            assert!(err < 1e-5, "param {k}: analytic {a} numeric {numeric}");
        }
    }
}
