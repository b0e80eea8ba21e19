//! Differentiable operations on [`Tensor`].
//!
//! Broadcasting is limited to two forms: a one-element operand, or an
//! operand whose shape is a suffix of the other's (leading batch axes).

use std::sync::Arc;

use super::kernels::{gemm_acc, inverse_permutation, permute, transpose};
use super::tape::{record, BackwardFn};
use super::{numel, Element, Tensor};
use crate::error::{dim_err, usage_err, Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

fn finish<E: Element>(
    shape: Vec<usize>,
    data: Vec<E>,
    inputs: &[&Tensor<E>],
    tag: &'static str,
    make: impl FnOnce() -> BackwardFn<E>,
) -> Tensor<E> {
    debug_assert!(
        !inputs.iter().all(|t| t.all_finite()) || data.iter().all(|v| v.is_finite()),
        "{tag} produced non-finite output from finite inputs"
    );
    let numel = data.len();
    let node = record(inputs, tag, numel, make);
    Tensor::raw(shape, data).with_node(node)
}

/// Output shape when `small` broadcasts into `big` (or they are equal).
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let na = numel(a);
    let nb = numel(b);
    if a == b {
        return Some(a.to_vec());
    }
    if nb == 1 {
        return Some(a.to_vec());
    }
    if na == 1 {
        return Some(b.to_vec());
    }
    if b.len() <= a.len() && a.ends_with(b) {
        return Some(a.to_vec());
    }
    if a.len() < b.len() && b.ends_with(a) {
        return Some(b.to_vec());
    }
    None
}

/// Folds a full-size gradient back onto an operand of `n` elements that
/// was tiled with period `n`.
fn reduce_to<E: Element>(g: &[E], n: usize) -> Vec<E> {
    if g.len() == n {
        return g.to_vec();
    }
    let mut out = vec![E::zero(); n];
    for (i, &v) in g.iter().enumerate() {
        out[i % n] += v;
    }
    out
}

impl<E: Element> Tensor<E> {
    fn binary(
        &self,
        other: &Self,
        tag: &'static str,
        f: fn(E, E) -> E,
        grad: fn(E, E, E) -> (E, E),
    ) -> Result<Self> {
        let shape = broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            dim_err!(
                "{tag}: shapes {:?} and {:?} do not broadcast",
                self.shape(),
                other.shape()
            )
        })?;
        let n = numel(&shape);
        let (na, nb) = (self.numel(), other.numel());
        let (a, b) = (self.data(), other.data());
        let data: Vec<E> = (0..n).map(|i| f(a[i % na], b[i % nb])).collect();
        let (a, b) = (Arc::clone(self.data_arc()), Arc::clone(other.data_arc()));
        Ok(finish(shape, data, &[self, other], tag, move || {
            Box::new(move |g: &[E], needs: &[bool]| {
                let mut ga = needs[0].then(|| vec![E::zero(); g.len()]);
                let mut gb = needs[1].then(|| vec![E::zero(); g.len()]);
                for (i, &gi) in g.iter().enumerate() {
                    let (da, db) = grad(a[i % na], b[i % nb], gi);
                    if let Some(ga) = ga.as_mut() {
                        ga[i] = da;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[i] = db;
                    }
                }
                vec![ga.map(|v| reduce_to(&v, na)), gb.map(|v| reduce_to(&v, nb))]
            })
        }))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binary(other, "add", |a, b| a + b, |_, _, g| (g, g))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binary(other, "sub", |a, b| a - b, |_, _, g| (g, -g))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binary(other, "mul", |a, b| a * b, |a, b, g| (g * b, g * a))
    }

    fn unary(
        &self,
        tag: &'static str,
        f: impl Fn(E) -> E,
        df: impl Fn(E) -> E + 'static,
    ) -> Self {
        let data: Vec<E> = self.data().iter().map(|&v| f(v)).collect();
        let x = Arc::clone(self.data_arc());
        finish(self.shape().to_vec(), data, &[self], tag, move || {
            Box::new(move |g: &[E], _: &[bool]| {
                vec![Some(g.iter().zip(x.iter()).map(|(&gi, &xi)| gi * df(xi)).collect())]
            })
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        let s = E::from_f64(s);
        self.unary("scale", move |v| v * s, move |_| s)
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let s = E::from_f64(s);
        self.unary("add_scalar", move |v| v + s, |_| E::one())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn square(&self) -> Result<Self> {
        let two = E::from_f64(2.0);
        Ok(self.unary("square", |v| v * v, move |v| two * v))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Self {
        let c = E::from_f64(SQRT_2_OVER_PI);
        let k = E::from_f64(GELU_C);
        let half = E::from_f64(0.5);
        let three = E::from_f64(3.0);
        self.unary(
            "gelu",
            move |x| half * x * (E::one() + (c * (x + k * x * x * x)).tanh()),
            move |x| {
                let u = c * (x + k * x * x * x);
                let th = u.tanh();
                let du = c * (E::one() + three * k * x * x);
                half * (E::one() + th) + half * x * (E::one() - th * th) * du
            },
        )
    }

    /// x · sigmoid(x).
    pub fn silu(&self) -> Self {
        let sig = |x: E| E::one() / (E::one() + (-x).exp());
        self.unary(
            "silu",
            move |x| x * sig(x),
            move |x| {
                let s = sig(x);
                s * (E::one() + x * (E::one() - s))
            },
        )
    }

    pub fn sum(&self) -> Result<Self> {
        let mut acc = E::zero();
        for &v in self.data() {
            acc += v;
        }
        let n = self.numel();
        Ok(finish(Vec::new(), vec![acc], &[self], "sum", move || {
            Box::new(move |g: &[E], _: &[bool]| vec![Some(vec![g[0]; n])])
        }))
    }

    pub fn mean(&self) -> Result<Self> {
        Ok(self.sum()?.scale(1.0 / self.numel() as f64))
    }

    /// Sum over one axis, which is removed from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(usage_err!("sum_axis: axis {axis} for shape {:?}", shape));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x[base + i];
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        Ok(finish(out_shape, out, &[self], "sum_axis", move || {
            Box::new(move |g: &[E], _: &[bool]| {
                let mut gx = vec![E::zero(); outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        let base = (o * len + a) * inner;
                        gx[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            })
        }))
    }

    /// Batched matrix product `[..., M, K] × [..., K, N]`. Batch axes must
    /// match, or one operand may be a plain matrix shared by every batch.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (sa, sb) = (self.shape(), other.shape());
        let mismatch = || dim_err!("matmul: shapes {:?} and {:?} are incompatible", sa, sb);
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch_shape = if ba == bb || bb.is_empty() {
            ba.to_vec()
        } else if ba.is_empty() {
            bb.to_vec()
        } else {
            return Err(mismatch());
        };
        let batch = numel(&batch_shape);
        let a_step = if ba.is_empty() { 0 } else { m * k };
        let b_step = if bb.is_empty() { 0 } else { k * n };
        let (a, b) = (self.data(), other.data());
        let mut out = vec![E::zero(); batch * m * n];
        for i in 0..batch {
            gemm_acc(
                &a[i * a_step..i * a_step + m * k],
                &b[i * b_step..i * b_step + k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = batch_shape;
        shape.extend([m, n]);
        let (a, b) = (Arc::clone(self.data_arc()), Arc::clone(other.data_arc()));
        let (na, nb) = (self.numel(), other.numel());
        Ok(finish(shape, out, &[self, other], "matmul", move || {
            Box::new(move |g: &[E], needs: &[bool]| {
                let mut ga = needs[0].then(|| vec![E::zero(); na]);
                let mut gb = needs[1].then(|| vec![E::zero(); nb]);
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    if let Some(ga) = ga.as_mut() {
                        let bt = transpose(&b[i * b_step..i * b_step + k * n], k, n);
                        gemm_acc(gi, &bt, &mut ga[i * a_step..i * a_step + m * k], m, n, k);
                    }
                    if let Some(gb) = gb.as_mut() {
                        let at = transpose(&a[i * a_step..i * a_step + m * k], m, k);
                        gemm_acc(&at, gi, &mut gb[i * b_step..i * b_step + k * n], k, m, n);
                    }
                }
                vec![ga, gb]
            })
        }))
    }

    /// Reorders axes: output axis `j` is input axis `order[j]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if order.len() != rank || order.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(dim_err!(
                "permute: {:?} is not a permutation of {} axes",
                order,
                rank
            ));
        }
        let shape: Vec<usize> = order.iter().map(|&a| self.shape()[a]).collect();
        let data = permute(self.data(), self.shape(), order);
        let inv = inverse_permutation(order);
        let out_shape = shape.clone();
        Ok(finish(shape, data, &[self], "permute", move || {
            Box::new(move |g: &[E], _: &[bool]| vec![Some(permute(g, &out_shape, &inv))])
        }))
    }

    /// Relabels the row-major buffer with a new shape of equal size.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(dim_err!(
                "reshape: cannot view {:?} as {:?}",
                self.shape(),
                shape
            ));
        }
        let node = record(&[self], "reshape", self.numel(), || {
            Box::new(|g: &[E], _: &[bool]| vec![Some(g.to_vec())])
        });
        Ok(Tensor::shared(shape.to_vec(), Arc::clone(self.data_arc())).with_node(node))
    }

    /// Permutes axes, then reinterprets the result with `new_shape`.
    pub fn permute_reshape(&self, order: &[usize], new_shape: &[usize]) -> Result<Self> {
        self.permute(order)?.reshape(new_shape)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(usage_err!("softmax: axis {axis} for shape {:?}", shape));
        }
        if self.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax: NaN input".into()));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut y = vec![E::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let mut mx = x[at(0)];
                for a in 1..len {
                    mx = mx.max(x[at(a)]);
                }
                let mut z = E::zero();
                for a in 0..len {
                    let e = (x[at(a)] - mx).exp();
                    y[at(a)] = e;
                    z += e;
                }
                for a in 0..len {
                    y[at(a)] = y[at(a)] / z;
                }
            }
        }
        let out = Arc::new(y);
        let saved = Arc::clone(&out);
        let node = record(&[self], "softmax", out.len(), move || {
            Box::new(move |g: &[E], _: &[bool]| {
                let y = &saved;
                let mut gx = vec![E::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * len + a) * inner + i;
                        let mut dot = E::zero();
                        for a in 0..len {
                            dot += g[at(a)] * y[at(a)];
                        }
                        for a in 0..len {
                            gx[at(a)] = y[at(a)] * (g[at(a)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            })
        });
        Ok(Tensor::shared(shape.to_vec(), out).with_node(node))
    }

    /// `out[i] = self.flat[indices[i]]`, shaped as `shape`.
    pub fn gather(&self, indices: &[usize], shape: &[usize]) -> Result<Self> {
        if numel(shape) != indices.len() {
            return Err(dim_err!(
                "gather: {} indices cannot fill shape {:?}",
                indices.len(),
                shape
            ));
        }
        let n = self.numel();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(dim_err!("gather: index {bad} out of range for {n} elements"));
        }
        let x = self.data();
        let data: Vec<E> = indices.iter().map(|&i| x[i]).collect();
        let idx = indices.to_vec();
        Ok(finish(shape.to_vec(), data, &[self], "gather", move || {
            Box::new(move |g: &[E], _: &[bool]| {
                let mut gx = vec![E::zero(); n];
                for (&i, &gi) in idx.iter().zip(g) {
                    gx[i] += gi;
                }
                vec![Some(gx)]
            })
        }))
    }

    /// Rows of a matrix-like tensor `[R, ...]` selected along axis 0.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let r = *self.shape().first().ok_or_else(|| dim_err!("select_rows on a scalar"))?;
        let width = self.numel() / r;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(dim_err!("select_rows: row {bad} out of range for {r} rows"));
        }
        let indices: Vec<usize> = rows
            .iter()
            .flat_map(|&row| row * width..(row + 1) * width)
            .collect();
        let mut shape = self.shape().to_vec();
        shape[0] = rows.len();
        self.gather(&indices, &shape)
    }

    /// Normalizes the last axis to zero mean and unit variance, then
    /// applies `gain` and `bias` (both shaped like the last axis).
    pub fn layer_norm(&self, gain: &Self, bias: &Self, eps: f64) -> Result<Self> {
        let d = *self.shape().last().ok_or_else(|| dim_err!("layer_norm on a scalar"))?;
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(dim_err!(
                "layer_norm: input {:?} with gain {:?} and bias {:?}",
                self.shape(),
                gain.shape(),
                bias.shape()
            ));
        }
        let rows = self.numel() / d;
        let x = self.data();
        let (gw, bw) = (gain.data(), bias.data());
        let inv_d = E::from_f64(1.0 / d as f64);
        let eps = E::from_f64(eps);
        let mut xhat = vec![E::zero(); x.len()];
        let mut rstd = vec![E::zero(); rows];
        let mut y = vec![E::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mut mu = E::zero();
            for &v in row {
                mu += v;
            }
            mu *= inv_d;
            let mut var = E::zero();
            for &v in row {
                var += (v - mu) * (v - mu);
            }
            var *= inv_d;
            let rs = E::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mu) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gw[j] + bw[j];
            }
        }
        let g_arc = Arc::clone(gain.data_arc());
        Ok(finish(self.shape().to_vec(), y, &[self, gain, bias], "layer_norm", move || {
            Box::new(move |g: &[E], needs: &[bool]| {
                let mut gx = needs[0].then(|| vec![E::zero(); rows * d]);
                let mut gg = needs[1].then(|| vec![E::zero(); d]);
                let mut gb = needs[2].then(|| vec![E::zero(); d]);
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    if let Some(gg) = gg.as_mut() {
                        for j in 0..d {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for j in 0..d {
                            gb[j] += gr[j];
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let mut mean_dh = E::zero();
                        let mut mean_dh_h = E::zero();
                        for j in 0..d {
                            let dh = gr[j] * g_arc[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh *= inv_d;
                        mean_dh_h *= inv_d;
                        for j in 0..d {
                            let dh = gr[j] * g_arc[j];
                            gx[r * d + j] = rstd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                }
                vec![gx, gg, gb]
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_identity_and_selection() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(i2.matmul(&m).unwrap().data(), m.data());
        let r = t(&[1, 2], &[1.0, 0.0]).matmul(&t(&[2, 1], &[2.0, 3.0])).unwrap();
        assert_eq!(r.shape(), &[1, 1]);
        assert_eq!(r.data(), &[2.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = t(&[2, 3], &[0.0; 6]).matmul(&t(&[2, 3], &[0.0; 6])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn matmul_broadcasts_shared_matrix() {
        let a = t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[2, 1], &[10.0, 1.0]);
        let y = a.matmul(&w).unwrap();
        assert_eq!(y.shape(), &[2, 1, 1]);
        assert_eq!(y.data(), &[12.0, 34.0]);
    }

    #[test]
    fn softmax_examples() {
        let s = t(&[2], &[0.0, 0.0]).softmax(0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = t(&[2], &[2f64.ln(), 0.0]).softmax(0).unwrap();
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-12);
        let s = Tensor::<f32>::from_f64(&[2], &[1000.0, 0.0]).unwrap().softmax(0).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let err = t(&[2], &[f64::NAN, 0.0]).softmax(0).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn softmax_inner_axis() {
        let x = t(&[2, 2], &[0.0, 5.0, 0.0, 5.0]);
        let s = x.softmax(0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn permute_examples() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.permute(&[1, 0]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert!(x.permute(&[0, 0]).is_err());
        assert!(x.reshape(&[4]).is_err());
    }

    #[test]
    fn frame_major_to_spatial_major() {
        // tokens (f, w) with value 10f + w, frame-major
        let x = t(&[2, 2], &[0.0, 1.0, 10.0, 11.0]);
        let y = x.permute_reshape(&[1, 0], &[4]).unwrap();
        assert_eq!(y.data(), &[0.0, 10.0, 1.0, 11.0]);
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t(&[3], &[1.0, 2.0, 3.0]).mean().unwrap().item().unwrap(), 2.0);
        assert_eq!(t(&[1], &[-2.0]).square().unwrap().data(), &[4.0]);
        assert_eq!(t(&[1], &[0.0]).gelu().data(), &[0.0]);
        assert!(t(&[2], &[1.0, 2.0]).add(&t(&[3], &[1.0; 3])).is_err());
    }

    #[test]
    fn suffix_broadcast_add() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2], &[10.0, 20.0]);
        assert_eq!(x.add(&b).unwrap().data(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(b.add(&x).unwrap().data(), &[11.0, 22.0, 13.0, 24.0]);
        let tape = Tape::<f64>::new().unwrap();
        let bw = tape.watch(&b);
        let l = x.mul(&bw).unwrap().sum().unwrap();
        let g = tape.backward(&l).unwrap();
        assert_eq!(g.get(&bw).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn layer_norm_examples() {
        let ones = t(&[3], &[1.0; 3]);
        let zeros = t(&[3], &[0.0; 3]);
        let y = t(&[3], &[2.5; 3]).layer_norm(&ones, &zeros, 1e-5).unwrap();
        assert_eq!(y.data(), &[0.0; 3]);
        let y = t(&[2], &[1.0, -1.0])
            .layer_norm(&t(&[2], &[1.0; 2]), &t(&[2], &[0.0; 2]), 1e-5)
            .unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - expect).abs() < 1e-12);
        assert!((y.data()[1] + expect).abs() < 1e-12);
        assert!(t(&[2], &[1.0, -1.0]).layer_norm(&ones, &zeros, 1e-5).is_err());
    }

    #[test]
    fn backward_examples() {
        let tape = Tape::<f64>::new().unwrap();
        let x = tape.watch(&t(&[2], &[1.0, 2.0]));
        let l = x.square().unwrap().sum().unwrap();
        let g = tape.backward(&l).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[2.0, 4.0]);
        drop(tape);

        let tape = Tape::<f64>::new().unwrap();
        let x = tape.watch(&t(&[2], &[0.0, 0.0]));
        let l = x.softmax(0).unwrap().gather(&[0], &[]).unwrap();
        let g = tape.backward(&l).unwrap();
        let g = g.get(&x).unwrap();
        assert!((g.data()[0] - 0.25).abs() < 1e-15);
        assert!((g.data()[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn sum_axis_and_gather() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(x.sum_axis(0).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(x.sum_axis(1).unwrap().data(), &[6.0, 15.0]);
        assert_eq!(x.select_rows(&[1, 1]).unwrap().data(), &[4.0, 5.0, 6.0, 4.0, 5.0, 6.0]);
        assert!(x.gather(&[6], &[1]).is_err());
    }

    #[test]
    fn repeated_backward_is_identical() {
        let tape = Tape::<f32>::new().unwrap();
        let a = tape.watch(&Tensor::from_f64(&[2, 2], &[0.3, -0.2, 0.5, 1.0]).unwrap());
        let l = a.matmul(&a).unwrap().softmax(1).unwrap().square().unwrap().sum().unwrap();
        let g1 = tape.backward(&l).unwrap().get(&a).unwrap();
        let g2 = tape.backward(&l).unwrap().get(&a).unwrap();
        assert!(g1.bit_eq(&g2));
    }
}
