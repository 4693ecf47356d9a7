use super::{Graph, NdArray, Real, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Compares reverse-mode gradients against central finite differences and
/// returns the worst relative error over the checked coordinates.
///
/// `build` must construct a scalar loss from leaf vars (one per entry of
/// `params`, registered in order). When a tensor has more coordinates than
/// `max_coords_per_param`, a seeded random subset is probed; 0 checks all.
pub fn grad_check<R: Real>(
    build: &dyn Fn(&mut Graph<R>, &[Var]) -> Var,
    params: &[NdArray<R>],
    eps: f64,
    max_coords_per_param: usize,
    seed: u64,
) -> f64 {
    let eval = |tensors: &[NdArray<R>]| -> (f64, Vec<NdArray<R>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars);
        let value = g.value(loss).item().as_f64();
        g.backward(loss);
        let grads = vars.iter().map(|&v| g.grad(v)).collect();
        (value, grads)
    };

    let (_, analytic) = eval(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;

    let mut work: Vec<NdArray<R>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let n = p.len();
        let coords: Vec<usize> = if max_coords_per_param == 0 || n <= max_coords_per_param {
            (0..n).collect()
        } else {
            (0..max_coords_per_param).map(|_| rng.gen_range(0..n)).collect()
        };
        for ci in coords {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + R::of(eps);
            let (f_plus, _) = {
                let mut g = Graph::new();
                let vars: Vec<Var> = work.iter().map(|t| g.leaf(t.clone())).collect();
                let loss = build(&mut g, &vars);
                (g.value(loss).item().as_f64(), ())
            };
            work[pi].data_mut()[ci] = orig - R::of(eps);
            let f_minus = {
                let mut g = Graph::new();
                let vars: Vec<Var> = work.iter().map(|t| g.leaf(t.clone())).collect();
                let loss = build(&mut g, &vars);
                g.value(loss).item().as_f64()
            };
            work[pi].data_mut()[ci] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let exact = analytic[pi].data()[ci].as_f64();
            let denom = 1.0f64.max(exact.abs()).max(numeric.abs());
            let rel = (exact - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_is_exact() {
        // loss = 0.5 ||x||^2, gradient x
        let x = NdArray::from_fn(&[6], |i| (i as f64 * 0.7).sin());
        let err = grad_check::<f64>(
            &|g, vars| {
                let s = g.square(vars[0]);
                let tot = g.sum_all(s);
                g.mul_scalar(tot, 0.5)
            },
            &[x],
            1e-5,
            0,
            7,
        );
        assert!(err < 1e-10, "rel err {err}");
    }

    #[test]
    fn nonlinear_composite_passes() {
        let x = NdArray::from_fn(&[4], |i| 0.3 * (i as f64 + 1.0));
        let w = NdArray::from_fn(&[4, 3], |i| ((i * 37 % 11) as f64 - 5.0) * 0.1);
        let err = grad_check::<f64>(
            &|g, vars| {
                let x2 = vars[0];
                let xm = g.linear(x2, vars[1], None);
                let t = g.tanh(xm);
                let e = g.exp(t);
                g.mean_all(e)
            },
            &[NdArray::from_vec(&[1, 4], x.data().to_vec()).unwrap(), w],
            1e-6,
            0,
            3,
        );
        assert!(err < 1e-9, "rel err {err}");
    }
}
