//! Neural-network ops: matmul, 1-D convolutions, batch norm, pooling,
//! activations and softmax cross-entropy.
//!
//! Convolutions lower to GEMM over an im2col buffer spanning the whole
//! batch; the buffer is rebuilt in the backward pass instead of being
//! saved, trading a little compute for a much smaller live graph.

use super::{Scalar, Tape, Var};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView3, Axis, Ix1, Ix2, Ix3, IxDyn};

/// Per-channel batch statistics produced by a training-mode batch norm,
/// fed back into the running estimates between optimizer steps.
#[derive(Clone, Debug)]
pub struct BnStats<T> {
    pub mean: Array1<T>,
    pub var: Array1<T>,
    pub count: usize,
}

fn as3<T: Scalar>(a: &ArrayD<T>) -> ArrayView3<'_, T> {
    a.view().into_dimensionality::<Ix3>().expect("3-D tensor")
}

fn im2col<T: Scalar>(x: &ArrayView3<'_, T>, k: usize, pad: usize) -> Array2<T> {
    let (b, ci, l) = x.dim();
    let mut cols = Array2::<T>::zeros((ci * k, b * l));
    for c in 0..ci {
        for kk in 0..k {
            let shift = kk as isize - pad as isize;
            let lo = (-shift).max(0) as usize;
            let hi = ((l as isize - shift).max(0) as usize).min(l);
            if lo >= hi {
                continue;
            }
            let mut row = cols.row_mut(c * k + kk);
            for bb in 0..b {
                let src = x.slice(ndarray::s![
                    bb,
                    c,
                    (lo as isize + shift) as usize..(hi as isize + shift) as usize
                ]);
                row.slice_mut(ndarray::s![bb * l + lo..bb * l + hi])
                    .assign(&src);
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(
    dcols: &Array2<T>,
    b: usize,
    ci: usize,
    l: usize,
    k: usize,
    pad: usize,
) -> Array3<T> {
    let mut dx = Array3::<T>::zeros((b, ci, l));
    for c in 0..ci {
        for kk in 0..k {
            let shift = kk as isize - pad as isize;
            let lo = (-shift).max(0) as usize;
            let hi = ((l as isize - shift).max(0) as usize).min(l);
            if lo >= hi {
                continue;
            }
            let row = dcols.row(c * k + kk);
            for bb in 0..b {
                let mut dst = dx.slice_mut(ndarray::s![
                    bb,
                    c,
                    (lo as isize + shift) as usize..(hi as isize + shift) as usize
                ]);
                dst += &row.slice(ndarray::s![bb * l + lo..bb * l + hi]);
            }
        }
    }
    dx
}

impl<T: Scalar> Tape<T> {
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self
            .value(a)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul lhs 2-D");
        let bv = self
            .value(b)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul rhs 2-D");
        let mut out = Array2::<T>::zeros((av.nrows(), bv.ncols()));
        general_mat_mul(T::one(), &av, &bv, T::zero(), &mut out);
        self.op(out.into_dyn(), &[a, b], move |g, t| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let av = t.value(a).view().into_dimensionality::<Ix2>().unwrap();
            let bv = t.value(b).view().into_dimensionality::<Ix2>().unwrap();
            let mut da = Array2::<T>::zeros(av.raw_dim());
            let mut db = Array2::<T>::zeros(bv.raw_dim());
            general_mat_mul(T::one(), &g2, &bv.t(), T::zero(), &mut da);
            general_mat_mul(T::one(), &av.t(), &g2, T::zero(), &mut db);
            vec![Some(da.into_dyn()), Some(db.into_dyn())]
        })
    }

    /// Standard-layout axis permutation.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Var {
        let axes_vec = axes.to_vec();
        let value = self
            .value(a)
            .view()
            .permuted_axes(IxDyn(&axes_vec))
            .as_standard_layout()
            .to_owned();
        self.op(value, &[a], move |g, _| {
            let mut inverse = vec![0usize; axes_vec.len()];
            for (i, &ax) in axes_vec.iter().enumerate() {
                inverse[ax] = i;
            }
            let back = g
                .view()
                .permuted_axes(IxDyn(&inverse))
                .as_standard_layout()
                .to_owned();
            vec![Some(back)]
        })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let old_shape: Vec<usize> = self.value(a).shape().to_vec();
        let value = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape size mismatch");
        self.op(value, &[a], move |g, _| {
            vec![Some(
                g.clone()
                    .into_shape_with_order(IxDyn(&old_shape))
                    .expect("reshape grad"),
            )]
        })
    }

    /// Same-padded 1-D convolution: `x [B,Ci,L] * w [Co,Ci,K] + bias [Co]`
    /// with odd `K`, output `[B,Co,L]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Var) -> Var {
        let xv = as3(self.value(x));
        let (b, ci, l) = xv.dim();
        let wshape = self.value(w).shape().to_vec();
        let (co, wci, k) = (wshape[0], wshape[1], wshape[2]);
        assert_eq!(ci, wci, "conv1d channel mismatch");
        assert_eq!(k % 2, 1, "conv1d kernel must be odd for same padding");
        let pad = (k - 1) / 2;

        let cols = im2col(&xv, k, pad);
        let w2 = self
            .value(w)
            .view()
            .into_shape_with_order((co, ci * k))
            .unwrap();
        let mut y2 = Array2::<T>::zeros((co, b * l));
        general_mat_mul(T::one(), &w2, &cols, T::zero(), &mut y2);
        drop(cols);

        let bv = self.value(bias).view().into_dimensionality::<Ix1>().unwrap();
        let mut y = Array3::<T>::zeros((b, co, l));
        for bb in 0..b {
            for cc in 0..co {
                let add = bv[cc];
                let src = y2.row(cc);
                y.slice_mut(ndarray::s![bb, cc, ..])
                    .iter_mut()
                    .zip(src.slice(ndarray::s![bb * l..(bb + 1) * l]))
                    .for_each(|(o, &v)| *o = v + add);
            }
        }

        self.op(y.into_dyn(), &[x, w, bias], move |g, t| {
            let g3 = as3(g);
            let xv = as3(t.value(x));
            let mut dy2 = Array2::<T>::zeros((co, b * l));
            for bb in 0..b {
                for cc in 0..co {
                    dy2.row_mut(cc)
                        .slice_mut(ndarray::s![bb * l..(bb + 1) * l])
                        .assign(&g3.slice(ndarray::s![bb, cc, ..]));
                }
            }
            let db = g3.sum_axis(Axis(0)).sum_axis(Axis(1));

            let cols = im2col(&xv, k, pad);
            let mut dw2 = Array2::<T>::zeros((co, ci * k));
            general_mat_mul(T::one(), &dy2, &cols.t(), T::zero(), &mut dw2);
            drop(cols);

            let w2 = t
                .value(w)
                .view()
                .into_shape_with_order((co, ci * k))
                .unwrap();
            let mut dcols = Array2::<T>::zeros((ci * k, b * l));
            general_mat_mul(T::one(), &w2.t(), &dy2, T::zero(), &mut dcols);
            let dx = col2im_add(&dcols, b, ci, l, k, pad);

            vec![
                Some(dx.into_dyn()),
                Some(
                    dw2.into_shape_with_order(IxDyn(&[co, ci, k]))
                        .unwrap()
                        .into_dyn(),
                ),
                Some(db.into_dyn()),
            ]
        })
    }

    /// Transposed 1-D convolution used for upsampling by `stride`:
    /// `x [B,Ci,L] -> [B,Co,L*stride]`, weight `[Ci,Co,K]`, `K >= stride`,
    /// `(K - stride)` even. The symmetric crop keeps the output length an
    /// exact multiple of the input length.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, bias: Var, stride: usize) -> Var {
        let xv = as3(self.value(x));
        let (b, ci, l) = xv.dim();
        let wshape = self.value(w).shape().to_vec();
        let (wci, co, k) = (wshape[0], wshape[1], wshape[2]);
        assert_eq!(ci, wci, "conv_transpose1d channel mismatch");
        assert!(k >= stride && (k - stride) % 2 == 0, "invalid kernel/stride");
        let crop = (k - stride) / 2;
        let lo_len = l * stride;

        // cols[(co,k), (b,t)] = sum_ci w[ci,co,k] * x[b,ci,t]
        let w2 = self
            .value(w)
            .view()
            .into_shape_with_order((ci, co * k))
            .unwrap();
        let mut x2 = Array2::<T>::zeros((ci, b * l));
        for bb in 0..b {
            for cc in 0..ci {
                x2.row_mut(cc)
                    .slice_mut(ndarray::s![bb * l..(bb + 1) * l])
                    .assign(&xv.slice(ndarray::s![bb, cc, ..]));
            }
        }
        let mut cols = Array2::<T>::zeros((co * k, b * l));
        general_mat_mul(T::one(), &w2.t(), &x2, T::zero(), &mut cols);

        let bv = self.value(bias).view().into_dimensionality::<Ix1>().unwrap();
        let mut y = Array3::<T>::zeros((b, co, lo_len));
        for cc in 0..co {
            for kk in 0..k {
                let row = cols.row(cc * k + kk);
                for bb in 0..b {
                    for t in 0..l {
                        let s = (t * stride + kk) as isize - crop as isize;
                        if s >= 0 && (s as usize) < lo_len {
                            y[[bb, cc, s as usize]] += row[bb * l + t];
                        }
                    }
                }
            }
        }
        for cc in 0..co {
            let add = bv[cc];
            y.slice_mut(ndarray::s![.., cc, ..]).mapv_inplace(|v| v + add);
        }

        self.op(y.into_dyn(), &[x, w, bias], move |g, t| {
            let g3 = as3(g);
            let db = g3.sum_axis(Axis(0)).sum_axis(Axis(1));

            // gather grad into cols layout
            let mut dcols = Array2::<T>::zeros((co * k, b * l));
            for cc in 0..co {
                for kk in 0..k {
                    let mut row = dcols.row_mut(cc * k + kk);
                    for bb in 0..b {
                        for tt in 0..l {
                            let s = (tt * stride + kk) as isize - crop as isize;
                            if s >= 0 && (s as usize) < lo_len {
                                row[bb * l + tt] = g3[[bb, cc, s as usize]];
                            }
                        }
                    }
                }
            }

            let xv = as3(t.value(x));
            let mut x2 = Array2::<T>::zeros((ci, b * l));
            for bb in 0..b {
                for cc in 0..ci {
                    x2.row_mut(cc)
                        .slice_mut(ndarray::s![bb * l..(bb + 1) * l])
                        .assign(&xv.slice(ndarray::s![bb, cc, ..]));
                }
            }
            let mut dw2 = Array2::<T>::zeros((ci, co * k));
            general_mat_mul(T::one(), &x2, &dcols.t(), T::zero(), &mut dw2);

            let w2 = t
                .value(w)
                .view()
                .into_shape_with_order((ci, co * k))
                .unwrap();
            let mut dx2 = Array2::<T>::zeros((ci, b * l));
            general_mat_mul(T::one(), &w2, &dcols, T::zero(), &mut dx2);
            let mut dx = Array3::<T>::zeros((b, ci, l));
            for bb in 0..b {
                for cc in 0..ci {
                    dx.slice_mut(ndarray::s![bb, cc, ..])
                        .assign(&dx2.row(cc).slice(ndarray::s![bb * l..(bb + 1) * l]));
                }
            }

            vec![
                Some(dx.into_dyn()),
                Some(
                    dw2.into_shape_with_order(IxDyn(&[ci, co, k]))
                        .unwrap()
                        .into_dyn(),
                ),
                Some(db.into_dyn()),
            ]
        })
    }

    /// Training-mode batch normalization over `[B,C,L]` with per-channel
    /// statistics; returns the normalized output plus the batch stats so
    /// the caller can refresh its running estimates.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> (Var, BnStats<T>) {
        let xv = as3(self.value(x));
        let (b, c, l) = xv.dim();
        let n = (b * l) as f64;
        let mut mean = Array1::<T>::zeros(c);
        let mut var = Array1::<T>::zeros(c);
        for cc in 0..c {
            let lane = xv.slice(ndarray::s![.., cc, ..]);
            let m: T = lane.iter().copied().sum::<T>() / T::from_f64(n);
            let v: T = lane.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_f64(n);
            mean[cc] = m;
            var[cc] = v;
        }
        let invstd = var.mapv(|v| T::one() / (v + eps).sqrt());
        let gv = self.value(gamma).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(beta).view().into_dimensionality::<Ix1>().unwrap();
        let mut y = Array3::<T>::zeros((b, c, l));
        for cc in 0..c {
            let (m, is, ga, be) = (mean[cc], invstd[cc], gv[cc], bv[cc]);
            y.slice_mut(ndarray::s![.., cc, ..])
                .zip_mut_with(&xv.slice(ndarray::s![.., cc, ..]), |o, &v| {
                    *o = (v - m) * is * ga + be
                });
        }
        let stats = BnStats {
            mean: mean.clone(),
            var: var.clone(),
            count: b * l,
        };

        let out = self.op(y.into_dyn(), &[x, gamma, beta], move |g, t| {
            let g3 = as3(g);
            let xv = as3(t.value(x));
            let gv = t.value(gamma).view().into_dimensionality::<Ix1>().unwrap();
            let nn = T::from_f64(n);
            let mut dgamma = Array1::<T>::zeros(c);
            let mut dbeta = Array1::<T>::zeros(c);
            let mut dx = Array3::<T>::zeros((b, c, l));
            for cc in 0..c {
                let (m, is) = (mean[cc], invstd[cc]);
                let glane = g3.slice(ndarray::s![.., cc, ..]);
                let xlane = xv.slice(ndarray::s![.., cc, ..]);
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for (&gg, &xx) in glane.iter().zip(xlane.iter()) {
                    let xh = (xx - m) * is;
                    sum_g = sum_g + gg;
                    sum_gx = sum_gx + gg * xh;
                }
                dbeta[cc] = sum_g;
                dgamma[cc] = sum_gx;
                let mg = sum_g / nn;
                let mgx = sum_gx / nn;
                let coef = gv[cc] * is;
                dx.slice_mut(ndarray::s![.., cc, ..])
                    .iter_mut()
                    .zip(glane.iter().zip(xlane.iter()))
                    .for_each(|(o, (&gg, &xx))| {
                        let xh = (xx - m) * is;
                        *o = coef * (gg - mg - xh * mgx);
                    });
            }
            vec![
                Some(dx.into_dyn()),
                Some(dgamma.into_dyn()),
                Some(dbeta.into_dyn()),
            ]
        });
        (out, stats)
    }

    /// Inference-mode batch normalization using frozen running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Array1<T>,
        running_var: &Array1<T>,
        eps: T,
    ) -> Var {
        let xv = as3(self.value(x));
        let (b, c, l) = xv.dim();
        let invstd = running_var.mapv(|v| T::one() / (v + eps).sqrt());
        let mean = running_mean.clone();
        let gv = self.value(gamma).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(beta).view().into_dimensionality::<Ix1>().unwrap();
        let mut y = Array3::<T>::zeros((b, c, l));
        for cc in 0..c {
            let (m, is, ga, be) = (mean[cc], invstd[cc], gv[cc], bv[cc]);
            y.slice_mut(ndarray::s![.., cc, ..])
                .zip_mut_with(&xv.slice(ndarray::s![.., cc, ..]), |o, &v| {
                    *o = (v - m) * is * ga + be
                });
        }
        self.op(y.into_dyn(), &[x, gamma, beta], move |g, t| {
            let g3 = as3(g);
            let xv = as3(t.value(x));
            let gv = t.value(gamma).view().into_dimensionality::<Ix1>().unwrap();
            let mut dgamma = Array1::<T>::zeros(c);
            let mut dbeta = Array1::<T>::zeros(c);
            let mut dx = Array3::<T>::zeros((b, c, l));
            for cc in 0..c {
                let (m, is) = (mean[cc], invstd[cc]);
                let glane = g3.slice(ndarray::s![.., cc, ..]);
                let xlane = xv.slice(ndarray::s![.., cc, ..]);
                let coef = gv[cc] * is;
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for (&gg, &xx) in glane.iter().zip(xlane.iter()) {
                    sum_g = sum_g + gg;
                    sum_gx = sum_gx + gg * (xx - m) * is;
                }
                dbeta[cc] = sum_g;
                dgamma[cc] = sum_gx;
                dx.slice_mut(ndarray::s![.., cc, ..])
                    .zip_mut_with(&glane, |o, &gg| *o = coef * gg);
            }
            vec![
                Some(dx.into_dyn()),
                Some(dgamma.into_dyn()),
                Some(dbeta.into_dyn()),
            ]
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|v| T::one() / (T::one() + (-v).exp()));
        self.op(value, &[a], move |g, t| {
            let y = t.value(a).mapv(|v| T::one() / (T::one() + (-v).exp()));
            let dx = g * &y.mapv(|s| s * (T::one() - s));
            vec![Some(dx)]
        })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let value = self
            .value(a)
            .mapv(|v| if v > T::zero() { v } else { v * slope });
        self.op(value, &[a], move |g, t| {
            let mask = t
                .value(a)
                .mapv(|v| if v > T::zero() { T::one() } else { slope });
            vec![Some(g * &mask)]
        })
    }

    /// Max pooling along the last axis of `[B,C,L]` by an integer factor.
    pub fn max_pool1d(&mut self, x: Var, factor: usize) -> Var {
        let xv = as3(self.value(x));
        let (b, c, l) = xv.dim();
        assert_eq!(l % factor, 0, "pool length must divide");
        let lo = l / factor;
        let mut y = Array3::<T>::zeros((b, c, lo));
        let mut arg = Array3::<u32>::zeros((b, c, lo));
        for bb in 0..b {
            for cc in 0..c {
                for t in 0..lo {
                    let mut best = xv[[bb, cc, t * factor]];
                    let mut besti = 0u32;
                    for k in 1..factor {
                        let v = xv[[bb, cc, t * factor + k]];
                        if v > best {
                            best = v;
                            besti = k as u32;
                        }
                    }
                    y[[bb, cc, t]] = best;
                    arg[[bb, cc, t]] = besti;
                }
            }
        }
        self.op(y.into_dyn(), &[x], move |g, _| {
            let g3 = as3(g);
            let mut dx = Array3::<T>::zeros((b, c, l));
            for bb in 0..b {
                for cc in 0..c {
                    for t in 0..lo {
                        let k = arg[[bb, cc, t]] as usize;
                        dx[[bb, cc, t * factor + k]] = g3[[bb, cc, t]];
                    }
                }
            }
            vec![Some(dx.into_dyn())]
        })
    }

    /// Softmax along the given axis.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Var {
        fn compute<T: Scalar>(x: &ArrayD<T>, axis: usize) -> ArrayD<T> {
            let mut y = x.clone();
            for mut lane in y.lanes_mut(Axis(axis)) {
                let m = lane.iter().copied().fold(T::neg_infinity(), T::max);
                lane.mapv_inplace(|v| (v - m).exp());
                let s: T = lane.iter().copied().sum();
                lane.mapv_inplace(|v| v / s);
            }
            y
        }
        let value = compute(self.value(a), axis);
        self.op(value, &[a], move |g, t| {
            let y = compute(t.value(a), axis);
            let mut dx = g * &y;
            // dx = y * (g - sum(g*y)) per lane
            for (mut dlane, ylane) in dx.lanes_mut(Axis(axis)).into_iter().zip(y.lanes(Axis(axis)))
            {
                let s: T = dlane.iter().copied().sum();
                dlane
                    .iter_mut()
                    .zip(ylane.iter())
                    .for_each(|(d, &yy)| *d = *d - s * yy);
            }
            vec![Some(dx)]
        })
    }

    /// Mean categorical cross-entropy of logits `[B,F,H]` against integer
    /// targets `[B,F]`, computed with the log-sum-exp trick.
    pub fn cross_entropy_mean(&mut self, logits: Var, targets: Array2<usize>) -> Var {
        let lv = as3(self.value(logits));
        let (b, f, h) = lv.dim();
        assert_eq!(targets.dim(), (b, f), "target shape mismatch");
        let n = T::from_f64((b * f) as f64);
        let mut total = T::zero();
        for bb in 0..b {
            for ff in 0..f {
                let row = lv.slice(ndarray::s![bb, ff, ..]);
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = row.iter().map(|&v| (v - m).exp()).sum::<T>().ln() + m;
                total = total + lse - row[targets[[bb, ff]]];
            }
        }
        let value = ArrayD::from_elem(IxDyn(&[1]), total / n);
        self.op(value, &[logits], move |g, t| {
            let gs = g[[0]] / n;
            let lv = as3(t.value(logits));
            let mut dl = Array3::<T>::zeros((b, f, h));
            for bb in 0..b {
                for ff in 0..f {
                    let row = lv.slice(ndarray::s![bb, ff, ..]);
                    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
                    let s: T = exps.iter().copied().sum();
                    let mut drow = dl.slice_mut(ndarray::s![bb, ff, ..]);
                    for (i, e) in exps.iter().enumerate() {
                        drow[i] = gs * (*e / s);
                    }
                    let tgt = targets[[bb, ff]];
                    drow[tgt] = drow[tgt] - gs;
                }
            }
            vec![Some(dl.into_dyn())]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::check_gradients;
    use super::*;
    use ndarray::{Array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn conv1d_grads_match_finite_differences() {
        let x = randn(&[2, 3, 7], 1);
        let w = randn(&[4, 3, 3], 2);
        let b = randn(&[4], 3);
        check_gradients(
            &[x, w, b],
            |t, v| {
                let y = t.conv1d(v[0], v[1], v[2]);
                let s = t.square(y);
                t.sum_all(s)
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn conv_transpose1d_grads_and_length() {
        let x = randn(&[2, 3, 5], 4);
        let w = randn(&[3, 2, 8], 5);
        let b = randn(&[2], 6);
        {
            let mut t: Tape<f64> = Tape::new();
            let (xv, wv, bv) = (t.leaf(x.clone()), t.leaf(w.clone()), t.leaf(b.clone()));
            let y = t.conv_transpose1d(xv, wv, bv, 4);
            assert_eq!(t.value(y).shape(), &[2, 2, 20]);
        }
        check_gradients(
            &[x, w, b],
            |t, v| {
                let y = t.conv_transpose1d(v[0], v[1], v[2], 4);
                let s = t.square(y);
                t.sum_all(s)
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn batch_norm_train_grads() {
        let x = randn(&[3, 2, 5], 7);
        let gamma = randn(&[2], 8);
        let beta = randn(&[2], 9);
        check_gradients(
            &[x, gamma, beta],
            |t, v| {
                let (y, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5);
                let s = t.square(y);
                t.sum_all(s)
            },
            1e-4,
            1e-6,
        );
    }

    #[test]
    fn batch_norm_eval_grads() {
        let x = randn(&[2, 2, 4], 10);
        let gamma = randn(&[2], 11);
        let beta = randn(&[2], 12);
        let mean = Array1::from_vec(vec![0.1, -0.2]);
        let var = Array1::from_vec(vec![1.3, 0.7]);
        check_gradients(
            &[x, gamma, beta],
            |t, v| {
                let y = t.batch_norm_eval(v[0], v[1], v[2], &mean, &var, 1e-5);
                let s = t.square(y);
                t.sum_all(s)
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn activations_and_pool_grads() {
        let x = randn(&[2, 2, 8], 13);
        check_gradients(
            &[x],
            |t, v| {
                let s = t.sigmoid(v[0]);
                let r = t.leaky_relu(s, 0.2);
                let p = t.max_pool1d(r, 2);
                let q = t.square(p);
                t.sum_all(q)
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn matmul_and_softmax_grads() {
        let a = randn(&[3, 4], 14);
        let b = randn(&[4, 2], 15);
        check_gradients(
            &[a, b],
            |t, v| {
                let y = t.matmul(v[0], v[1]);
                let sm = t.softmax(y, 1);
                let sq = t.square(sm);
                t.sum_all(sq)
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_h() {
        let mut t: Tape<f64> = Tape::new();
        let logits = t.constant(ArrayD::zeros(IxDyn(&[2, 3, 27])));
        let targets = Array2::from_elem((2, 3), 5usize);
        let ce = t.cross_entropy_mean(logits, targets);
        let expected = (27f64).ln();
        assert!((t.scalar(ce) - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_grads() {
        let logits = randn(&[2, 3, 5], 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let targets = Array2::from_shape_simple_fn((2, 3), || rng.gen_range(0..5usize));
        check_gradients(
            &[logits],
            |t, v| t.cross_entropy_mean(v[0], targets.clone()),
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn permute_reshape_roundtrip_grads() {
        let x = randn(&[2, 3, 4], 18);
        check_gradients(
            &[x],
            |t, v| {
                let p = t.permute(v[0], &[0, 2, 1]);
                let r = t.reshape(p, &[2, 12]);
                let s = t.square(r);
                t.sum_all(s)
            },
            1e-5,
            1e-6,
        );
    }
}
