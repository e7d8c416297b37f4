//! Elementwise and reduction ops.

use super::{Scalar, Tape, Var};
use ndarray::{ArrayD, IxDyn};

impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.op(value, &[a, b], |g, _| {
            vec![Some(g.clone()), Some(g.clone())]
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.op(value, &[a, b], |g, _| {
            vec![Some(g.clone()), Some(g.mapv(|v| -v))]
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.op(value, &[a, b], move |g, t| {
            vec![Some(g * t.value(b)), Some(g * t.value(a))]
        })
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a).mapv(|v| v * k);
        self.op(value, &[a], move |g, _| vec![Some(g.mapv(|v| v * k))])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v * v);
        self.op(value, &[a], move |g, t| {
            let two = T::from_f64(2.0);
            vec![Some(g * &t.value(a).mapv(|v| v * two))]
        })
    }

    /// Elementwise square root with a guarded derivative: the gradient
    /// denominator is floored at `guard` so exact zeros do not produce NaN.
    pub fn sqrt_guard(&mut self, a: Var, guard: T) -> Var {
        let value = self.value(a).mapv(|v| v.max(T::zero()).sqrt());
        self.op(value, &[a], move |g, t| {
            let half = T::from_f64(0.5);
            let root = t.value(a).mapv(|v| v.max(T::zero()).sqrt().max(guard));
            vec![Some(g / &root * half)]
        })
    }

    /// Sum of all elements, yielding a scalar node of shape `[1]`.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let total: T = self.value(a).iter().copied().sum();
        let shape = self.value(a).raw_dim();
        let value = ArrayD::from_elem(IxDyn(&[1]), total);
        self.op(value, &[a], move |g, _| {
            let gs = g[[0]];
            vec![Some(ArrayD::from_elem(shape, gs))]
        })
    }

    /// Mean of all elements as a scalar node.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum_all(a);
        self.scale(s, T::one() / T::from_f64(n as f64))
    }

    /// Mean over axis 1 (e.g. pooling audio channels), keeping other axes.
    pub fn mean_axis1(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mean_axis(ndarray::Axis(1))
            .expect("non-empty axis 1");
        let c = self.value(a).shape()[1];
        self.op(value, &[a], move |g, t| {
            let shape = t.value(a).raw_dim();
            let inv = T::one() / T::from_f64(c as f64);
            let mut out = ArrayD::zeros(shape);
            for mut lane in out.axis_iter_mut(ndarray::Axis(1)) {
                lane.zip_mut_with(g, |o, &gv| *o = gv * inv);
            }
            vec![Some(out)]
        })
    }

    /// Sum a list of scalar/same-shape vars.
    pub fn add_n(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        let mut acc = vars[0];
        for v in &vars[1..] {
            acc = self.add(acc, *v);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::check_gradients;
    use super::*;
    use ndarray::arr2;

    #[test]
    fn elementwise_grads_match_finite_differences() {
        let x = arr2(&[[0.3, -0.7], [1.2, 0.01]]).into_dyn();
        check_gradients(
            &[x],
            |t, vars| {
                let a = vars[0];
                let sq = t.square(a);
                let sc = t.scale(sq, 1.7);
                let rt = t.sqrt_guard(sc, 1e-12);
                t.sum_all(rt)
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn mean_axis1_grad() {
        let x = ndarray::Array3::from_shape_fn((2, 3, 4), |(i, j, k)| {
            0.1 * (i as f64) - 0.2 * (j as f64) + 0.05 * (k as f64) + 0.3
        })
        .into_dyn();
        check_gradients(
            &[x],
            |t, vars| {
                let m = t.mean_axis1(vars[0]);
                let sq = t.square(m);
                t.sum_all(sq)
            },
            1e-5,
            1e-7,
        );
    }
}
