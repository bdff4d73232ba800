//! Finite-difference gradient checking.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// Max relative error between analytic and central-difference gradients for a
/// graph already built over `input`, checked at the scalar node `out`.
///
/// The relative error at each coordinate is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`; the floor keeps
/// degenerate (exactly zero) coordinates from dividing by zero.
pub fn grad_check_graph(g: &mut Graph, input: NodeId, out: NodeId, eps: f32) -> f32 {
    g.backward(out).expect("grad_check needs a scalar output");
    let analytic = g
        .grad(input)
        .expect("grad_check input must be differentiable")
        .to_vec();
    let base: Vec<f64> = g.value(input).data().iter().map(|&v| v as f64).collect();
    let mut max_rel = 0.0f32;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps as f64;
        let mut minus = base.clone();
        minus[i] -= eps as f64;
        let fp = g.eval_scalar_f64(out, input, &plus);
        let fm = g.eval_scalar_f64(out, input, &minus);
        let numeric = ((fp - fm) / (2.0 * eps as f64)) as f32;
        let a = analytic[i];
        let denom = (a.abs() + numeric.abs()).max(1e-8);
        let rel = (a - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}

/// Build a graph with `x` as the differentiable input, map it to a scalar via
/// `build`, and return the max relative error of the analytic gradient
/// against central finite differences.
pub fn grad_check<F>(build: F, x: &Tensor, eps: f32) -> f32
where
    F: Fn(&mut Graph, NodeId) -> NodeId,
{
    let mut g = Graph::new();
    let xid = g.input_grad(x.clone());
    let out = build(&mut g, xid);
    grad_check_graph(&mut g, xid, out, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::vector(vec![0.4, -1.1, 2.3]);
        let err = grad_check(
            |g, xid| {
                let w = g.input(Tensor::vector(vec![1.5, -0.5, 2.0]));
                let p = g.mul(xid, w);
                g.sum(p)
            },
            &x,
            1e-3,
        );
        assert!(err <= 1e-6, "linear map error {err}");
    }

    #[test]
    fn constant_function_is_zero_error() {
        let x = Tensor::vector(vec![0.4, -1.1]);
        let err = grad_check(
            |g, xid| {
                let zeroed = g.scale(xid, 0.0);
                g.sum(zeroed)
            },
            &x,
            1e-3,
        );
        assert_eq!(err, 0.0, "constant output should be exactly flat");
    }

    #[test]
    fn two_layer_tanh_network() {
        use rand::{Rng, SeedableRng};
        for seed in 0..5u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::matrix(1, 6, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let w1 = Tensor::matrix(6, 5, (0..30).map(|_| rng.gen_range(-0.8..0.8)).collect());
            let w2 = Tensor::matrix(5, 3, (0..15).map(|_| rng.gen_range(-0.8..0.8)).collect());
            let err = grad_check(
                |g, xid| {
                    let w1 = g.input(w1.clone());
                    let w2 = g.input(w2.clone());
                    let h = g.matmul(xid, w1);
                    let h = g.tanh(h);
                    let o = g.matmul(h, w2);
                    let o = g.tanh(o);
                    g.sum(o)
                },
                &x,
                1e-3,
            );
            assert!(err < 1e-3, "seed {seed}: error {err}");
        }
    }
}
