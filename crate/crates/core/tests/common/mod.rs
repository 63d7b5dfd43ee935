//! Independent reference implementations. Nothing here calls the crate's
//! numeric code; everything is plain loops over `Vec<Vec<f64>>`.
#![allow(dead_code)]

use inhernet::linalg::Matrix;
use inhernet::rng::{domain, Philox};

pub fn rng(seed: u64) -> Philox {
    Philox::derived(seed, domain::TEST, 99)
}

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut g = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| g.normal())
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn triple_loop(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted nonincreasing.
pub fn jacobi_eigenvalues(sym: &[Vec<f64>]) -> Vec<f64> {
    let n = sym.len();
    let mut a = sym.to_vec();
    for _ in 0..200 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values via eigenvalues of `WᵀW`.
pub fn singular_values_oracle(w: &Matrix) -> Vec<f64> {
    let rows = to_rows(w);
    let gram = triple_loop(&transpose(&rows), &rows);
    let k = w.rows().min(w.cols());
    jacobi_eigenvalues(&gram).into_iter().take(k).map(|e| e.max(0.0).sqrt()).collect()
}

/// Dense ReLU MLP evaluated one sample at a time.
pub fn mlp_oracle(layers: &[(Vec<Vec<f64>>, Vec<f64>)], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, (w, b)) in layers.iter().enumerate() {
        let mut out = b.clone();
        for (i, hi) in h.iter().enumerate() {
            for (o, wij) in out.iter_mut().zip(&w[i]) {
                *o += hi * wij;
            }
        }
        if l + 1 < layers.len() {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = out;
    }
    h
}

/// Direct convolution: kernel `[n][c][kh][kw]`, image `[c][h][w]`, zero padding.
pub fn conv_oracle(kernel: &[Vec<Vec<Vec<f64>>>], bias: Option<&[f64]>, img: &[Vec<Vec<f64>>], stride: usize, pad: usize) -> Vec<Vec<Vec<f64>>> {
    let (c, h, w) = (img.len(), img[0].len(), img[0][0].len());
    let (kh, kw) = (kernel[0][0].len(), kernel[0][0][0].len());
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![vec![vec![0.0; ow]; oh]; kernel.len()];
    for (n, plane) in out.iter_mut().enumerate() {
        for (oy, row) in plane.iter_mut().enumerate() {
            for (ox, o) in row.iter_mut().enumerate() {
                let mut s = bias.map_or(0.0, |b| b[n]);
                for ci in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                s += kernel[n][ci][ky][kx] * img[ci][iy as usize][ix as usize];
                            }
                        }
                    }
                }
                *o = s;
            }
        }
    }
    out
}

pub fn softmax_oracle(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Gated mixture evaluated sample by sample:
/// `y = Σ_h G_h·(x·D·U_h + c_h) + b` with `G = softmax(g·W_g + b_g)`.
pub struct MixtureOracle {
    pub down: Vec<Vec<f64>>,
    pub heads: Vec<Vec<Vec<f64>>>,
    pub head_bias: Option<Vec<Vec<f64>>>,
    /// `(weight, bias, gate reads input instead of code)`.
    pub gate: Option<(Vec<Vec<f64>>, Vec<f64>, bool)>,
    pub bias: Option<Vec<f64>>,
}

impl MixtureOracle {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let r = self.down[0].len();
        let mut code = vec![0.0; r];
        for (i, xi) in x.iter().enumerate() {
            for k in 0..r {
                code[k] += xi * self.down[i][k];
            }
        }
        let hcount = self.heads.len();
        let g = match &self.gate {
            None => vec![1.0 / hcount as f64; hcount],
            Some((w, b, on_input)) => {
                let v: &[f64] = if *on_input { x } else { &code };
                let mut logits = b.clone();
                for (i, vi) in v.iter().enumerate() {
                    for (l, wij) in logits.iter_mut().zip(&w[i]) {
                        *l += vi * wij;
                    }
                }
                softmax_oracle(&logits)
            }
        };
        let n = self.heads[0][0].len();
        let mut y = self.bias.clone().unwrap_or_else(|| vec![0.0; n]);
        for h in 0..hcount {
            for j in 0..n {
                let mut s = self.head_bias.as_ref().map_or(0.0, |hb| hb[h][j]);
                for k in 0..r {
                    s += code[k] * self.heads[h][k][j];
                }
                y[j] += g[h] * s;
            }
        }
        y
    }
}
