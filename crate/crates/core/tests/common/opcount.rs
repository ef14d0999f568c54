//! Scalar reference implementations that count every floating-point
//! operation they perform.
//!
//! Conventions: each `+ - * /`, `sqrt`, `exp`, `abs`, comparison-based
//! `max` and sign is one operation; dot products accumulate from zero, so a
//! length-`L` dot costs `2L`; parameter updates are plain gradient steps
//! (`p -= lr * g`, two operations per entry); constant scalings of a gradient
//! are folded into the learning rate. Everything is per single sample.

use std::cell::Cell;
use std::ops::{Add, Div, Mul, Sub};

thread_local! {
    static OPS: Cell<u64> = const { Cell::new(0) };
}

fn tick() {
    OPS.with(|c| c.set(c.get() + 1));
}

/// Runs `f` and returns the number of counted operations.
pub fn count(f: impl FnOnce()) -> u64 {
    OPS.with(|c| c.set(0));
    f();
    OPS.with(|c| c.get())
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct F(pub f64);

impl Add for F {
    type Output = F;
    fn add(self, o: F) -> F {
        tick();
        F(self.0 + o.0)
    }
}

impl Sub for F {
    type Output = F;
    fn sub(self, o: F) -> F {
        tick();
        F(self.0 - o.0)
    }
}

impl Mul for F {
    type Output = F;
    fn mul(self, o: F) -> F {
        tick();
        F(self.0 * o.0)
    }
}

impl Div for F {
    type Output = F;
    fn div(self, o: F) -> F {
        tick();
        F(self.0 / o.0)
    }
}

impl F {
    pub fn sqrt(self) -> F {
        tick();
        F(self.0.sqrt())
    }

    pub fn relu(self) -> F {
        tick();
        F(self.0.max(0.0))
    }

    pub fn abs(self) -> F {
        tick();
        F(self.0.abs())
    }

    pub fn sign(self) -> F {
        tick();
        F(self.0.signum())
    }
}

type Mat = Vec<Vec<F>>;

fn filled(rows: usize, cols: usize, seed: usize) -> Mat {
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| F(((i * 7 + j * 3 + seed) % 11) as f64 / 11.0 - 0.4))
                .collect()
        })
        .collect()
}

fn vector(len: usize, seed: usize) -> Vec<F> {
    filled(1, len, seed).remove(0)
}

fn dot(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F(0.0), |acc, (&x, &y)| acc + x * y)
}

/// `W v` for `W` stored row-major.
fn matvec(w: &Mat, v: &[F]) -> Vec<F> {
    w.iter().map(|row| dot(row, v)).collect()
}

/// `Wᵀ v`.
fn matvec_t(w: &Mat, v: &[F]) -> Vec<F> {
    let cols = w[0].len();
    (0..cols)
        .map(|j| {
            w.iter()
                .zip(v)
                .fold(F(0.0), |acc, (row, &x)| acc + row[j] * x)
        })
        .collect()
}

/// Rescales every column of the `M × N` matrix `d` to unit norm.
fn normalize_columns(d: &mut Mat) {
    for j in 0..d[0].len() {
        let norm = d
            .iter()
            .fold(F(0.0), |acc, row| acc + row[j] * row[j])
            .sqrt();
        for row in d.iter_mut() {
            row[j] = row[j] / norm;
        }
    }
}

fn sgd(params: &mut [F], grads: &[F], lr: F) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p = *p - lr * g;
    }
}

fn sgd_mat(params: &mut Mat, grads: &Mat, lr: F) {
    for (p, g) in params.iter_mut().zip(grads) {
        sgd(p, g, lr);
    }
}

fn outer(a: &[F], b: &[F]) -> Mat {
    a.iter()
        .map(|&x| b.iter().map(|&y| x * y).collect())
        .collect()
}

/// `relu'(pre) ⊙ g`, one operation per entry.
fn relu_backward(pre: &[F], g: &[F]) -> Vec<F> {
    pre.iter()
        .zip(g)
        .map(|(&p, &g)| {
            tick();
            if p.0 > 0.0 {
                g
            } else {
                F(0.0)
            }
        })
        .collect()
}

pub fn sae_inference(m: usize, n: usize) -> u64 {
    let w = filled(n, m, 1);
    let d = filled(m, n, 2);
    let x = vector(m, 3);
    count(|| {
        let s: Vec<F> = matvec(&w, &x).into_iter().map(F::relu).collect();
        let _ = matvec(&d, &s);
    })
}

/// One gradient step of an SAE with an encoder bias on one sample.
pub fn sae_train_step(m: usize, n: usize, learn_dictionary: bool) -> u64 {
    let mut w = filled(n, m, 1);
    let mut b = vector(n, 4);
    let mut d = filled(m, n, 2);
    let x = vector(m, 3);
    let (lr, lambda) = (F(0.1), F(0.01));
    count(|| {
        if learn_dictionary {
            normalize_columns(&mut d);
        }
        let pre: Vec<F> = matvec(&w, &x)
            .into_iter()
            .zip(&b)
            .map(|(z, &bi)| z + bi)
            .collect();
        let s: Vec<F> = pre.iter().map(|p| p.relu()).collect();
        let x_hat = matvec(&d, &s);
        let r: Vec<F> = x_hat.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let g_s: Vec<F> = matvec_t(&d, &r)
            .into_iter()
            .zip(&s)
            .map(|(g, si)| g + lambda * si.sign())
            .collect();
        let g_pre = relu_backward(&pre, &g_s);
        let g_w = outer(&g_pre, &x);
        if learn_dictionary {
            let g_d = outer(&r, &s);
            sgd_mat(&mut d, &g_d, lr);
        }
        sgd_mat(&mut w, &g_w, lr);
        sgd(&mut b, &g_pre, lr);
    })
}

pub fn mlp_inference(m: usize, n: usize, h: usize) -> u64 {
    let w1 = filled(h, m, 1);
    let w2 = filled(n, h, 5);
    let d = filled(m, n, 2);
    let x = vector(m, 3);
    count(|| {
        let a: Vec<F> = matvec(&w1, &x).into_iter().map(F::relu).collect();
        let s: Vec<F> = matvec(&w2, &a).into_iter().map(F::relu).collect();
        let _ = matvec(&d, &s);
    })
}

/// One gradient step of a one-hidden-layer MLP encoder with biases.
pub fn mlp_train_step(m: usize, n: usize, h: usize, learn_dictionary: bool) -> u64 {
    let mut w1 = filled(h, m, 1);
    let mut b1 = vector(h, 6);
    let mut w2 = filled(n, h, 5);
    let mut b2 = vector(n, 4);
    let mut d = filled(m, n, 2);
    let x = vector(m, 3);
    let (lr, lambda) = (F(0.1), F(0.01));
    count(|| {
        if learn_dictionary {
            normalize_columns(&mut d);
        }
        let pre1: Vec<F> = matvec(&w1, &x)
            .into_iter()
            .zip(&b1)
            .map(|(z, &bi)| z + bi)
            .collect();
        let a: Vec<F> = pre1.iter().map(|p| p.relu()).collect();
        let pre2: Vec<F> = matvec(&w2, &a)
            .into_iter()
            .zip(&b2)
            .map(|(z, &bi)| z + bi)
            .collect();
        let s: Vec<F> = pre2.iter().map(|p| p.relu()).collect();
        let x_hat = matvec(&d, &s);
        let r: Vec<F> = x_hat.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let g_s: Vec<F> = matvec_t(&d, &r)
            .into_iter()
            .zip(&s)
            .map(|(g, si)| g + lambda * si.sign())
            .collect();
        let g_pre2 = relu_backward(&pre2, &g_s);
        let g_w2 = outer(&g_pre2, &a);
        let g_a = matvec_t(&w2, &g_pre2);
        let g_pre1 = relu_backward(&pre1, &g_a);
        let g_w1 = outer(&g_pre1, &x);
        if learn_dictionary {
            let g_d = outer(&r, &s);
            sgd_mat(&mut d, &g_d, lr);
        }
        sgd_mat(&mut w2, &g_w2, lr);
        sgd(&mut b2, &g_pre2, lr);
        sgd_mat(&mut w1, &g_w1, lr);
        sgd(&mut b1, &g_pre1, lr);
    })
}

/// Decoding one sample's codes, normalising the dictionary first when it is learned.
pub fn sc_inference(m: usize, n: usize, learn_dictionary: bool) -> u64 {
    let mut d = filled(m, n, 2);
    let s = vector(n, 3);
    count(|| {
        if learn_dictionary {
            normalize_columns(&mut d);
        }
        let _ = matvec(&d, &s);
    })
}

/// One joint gradient step on one sample's codes and, optionally, the dictionary.
pub fn sc_train_step(m: usize, n: usize, learn_dictionary: bool) -> u64 {
    let mut d = filled(m, n, 2);
    let mut s = vector(n, 3);
    let x = vector(m, 1);
    let (lr, lambda) = (F(0.1), F(0.01));
    count(|| {
        if learn_dictionary {
            normalize_columns(&mut d);
        }
        let x_hat = matvec(&d, &s);
        let r: Vec<F> = x_hat.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let sq = dot(&r, &r);
        let l1 = s.iter().fold(F(0.0), |acc, v| acc + v.abs());
        let _loss = sq + lambda * l1;
        let g_s: Vec<F> = matvec_t(&d, &r)
            .into_iter()
            .zip(&s)
            .map(|(g, si)| g + lambda * si.sign())
            .collect();
        if learn_dictionary {
            let g_d = outer(&r, &s);
            sgd_mat(&mut d, &g_d, lr);
        }
        sgd(&mut s, &g_s, lr);
    })
}

/// SAE encoder pass followed by `iters` proximal gradient steps on the codes.
pub fn ito(m: usize, n: usize, iters: usize) -> u64 {
    let w = filled(n, m, 1);
    let d = filled(m, n, 2);
    let x = vector(m, 3);
    let (lr, shrink) = (F(0.1), F(0.001));
    count(|| {
        let mut s: Vec<F> = matvec(&w, &x).into_iter().map(F::relu).collect();
        for _ in 0..iters {
            let x_hat = matvec(&d, &s);
            let r: Vec<F> = x_hat.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let g = matvec_t(&d, &r);
            for (si, gi) in s.iter_mut().zip(g) {
                let z = *si - lr * gi;
                *si = z.sign() * (z.abs() - shrink).relu();
            }
        }
    })
}
