//! Central-difference gradient checks shared by the model and acceptance tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vahf::model::layers::*;
use vahf::model::net::{Extractor, ExtractorConfig, Mlp};

pub const PROBES: usize = 20;
pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Worst relative error per checked tensor.
pub type Errors = Vec<(String, f64)>;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-7)
}

fn random(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn weighted(y: &Array2<f64>, r: &Array2<f64>) -> f64 {
    (y * r).sum()
}

/// Compares `analytic` with central differences of `loss` at random entries of `x`.
fn check(
    errs: &mut Errors,
    name: &str,
    x: &Array2<f64>,
    analytic: &Array2<f64>,
    loss: impl Fn(&Array2<f64>) -> f64,
    rng: &mut ChaCha8Rng,
) {
    let mut worst = 0.0f64;
    for _ in 0..PROBES {
        let i = rng.random_range(0..x.nrows());
        let j = rng.random_range(0..x.ncols());
        let mut p = x.clone();
        p[[i, j]] += H;
        let up = loss(&p);
        p[[i, j]] -= 2.0 * H;
        let down = loss(&p);
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max(rel_err(analytic[[i, j]], numeric));
    }
    errs.push((name.to_string(), worst));
}

/// Every check, one entry per tensor.
pub fn all() -> Errors {
    let mut errs = Vec::new();
    linear_gradients(&mut errs);
    conv_gradients(&mut errs);
    batchnorm_gradients(&mut errs);
    relu_pool_and_gap_gradients(&mut errs);
    softmax_cross_entropy_gradient(&mut errs);
    mlp_with_fixed_dropout_mask_gradients(&mut errs);
    extractor_end_to_end_gradients(&mut errs);
    errs
}

pub fn linear_gradients(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut layer = Linear::<f64>::new(7, 5, &mut rng);
    layer.bias.value = random((1, 5), &mut rng);
    let x = random((4, 7), &mut rng);
    let r = random((4, 5), &mut rng);
    let dx = layer.backward(&x, &r);
    let l0 = layer.clone();
    check(
        errs,
        "linear.x",
        &x,
        &dx,
        |x| weighted(&l0.forward(x).unwrap(), &r),
        &mut rng,
    );
    check(
        errs,
        "linear.w",
        &l0.weight.value,
        &layer.weight.grad,
        |w| {
            let mut l = l0.clone();
            l.weight.value = w.clone();
            weighted(&l.forward(&x).unwrap(), &r)
        },
        &mut rng,
    );
    check(
        errs,
        "linear.b",
        &l0.bias.value,
        &layer.bias.grad,
        |b| {
            let mut l = l0.clone();
            l.bias.value = b.clone();
            weighted(&l.forward(&x).unwrap(), &r)
        },
        &mut rng,
    );
}

pub fn conv_gradients(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut conv = Conv3x3::<f64>::new(2, 3, &mut rng);
    conv.bias.value = random((3, 1), &mut rng);
    let (n, h, w) = (2, 4, 5);
    let x = random((2, n * h * w), &mut rng);
    let maps = |x: &Array2<f64>| Maps::new(x.clone(), n, h, w).unwrap();
    let r = random((3, n * h * w), &mut rng);
    let (_, cache) = conv.forward(&maps(&x)).unwrap();
    let c0 = conv.clone();
    let dx = conv.backward(&cache, &r, true).unwrap();
    check(
        errs,
        "conv.x",
        &x,
        &dx,
        |x| weighted(&c0.forward(&maps(x)).unwrap().0.data, &r),
        &mut rng,
    );
    check(
        errs,
        "conv.w",
        &c0.weight.value,
        &conv.weight.grad,
        |wt| {
            let mut c = c0.clone();
            c.weight.value = wt.clone();
            weighted(&c.forward(&maps(&x)).unwrap().0.data, &r)
        },
        &mut rng,
    );
    check(
        errs,
        "conv.b",
        &c0.bias.value,
        &conv.bias.grad,
        |b| {
            let mut c = c0.clone();
            c.bias.value = b.clone();
            weighted(&c.forward(&maps(&x)).unwrap().0.data, &r)
        },
        &mut rng,
    );
}

pub fn batchnorm_gradients(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bn = BatchNorm::<f64>::new(3);
    bn.gamma.value = random((3, 1), &mut rng);
    bn.beta.value = random((3, 1), &mut rng);
    let x = random((3, 12), &mut rng);
    let r = random((3, 12), &mut rng);
    let b0 = bn.clone();
    let out = |b: &BatchNorm<f64>, x: &Array2<f64>| weighted(&b.clone().forward_train(x).0, &r);
    let (_, cache) = bn.forward_train(&x);
    let dx = bn.backward(&cache, &r);
    check(errs, "bn.x", &x, &dx, |x| out(&b0, x), &mut rng);
    check(
        errs,
        "bn.gamma",
        &b0.gamma.value,
        &bn.gamma.grad,
        |g| {
            let mut b = b0.clone();
            b.gamma.value = g.clone();
            out(&b, &x)
        },
        &mut rng,
    );
    check(
        errs,
        "bn.beta",
        &b0.beta.value,
        &bn.beta.grad,
        |g| {
            let mut b = b0.clone();
            b.beta.value = g.clone();
            out(&b, &x)
        },
        &mut rng,
    );
}

pub fn relu_pool_and_gap_gradients(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random((3, 10), &mut rng);
    let r = random((3, 10), &mut rng);
    let dx = relu_backward(&relu(&x), &r);
    check(errs, "relu", &x, &dx, |x| weighted(&relu(x), &r), &mut rng);

    let (n, h, w) = (2, 4, 6);
    let x = random((3, n * h * w), &mut rng);
    let maps = |x: &Array2<f64>| Maps::new(x.clone(), n, h, w).unwrap();
    let (pooled, arg) = max_pool(&maps(&x));
    let r = random(pooled.data.dim(), &mut rng);
    let dx = max_pool_backward(&arg, &r, x.ncols());
    check(
        errs,
        "maxpool",
        &x,
        &dx,
        |x| weighted(&max_pool(&maps(x)).0.data, &r),
        &mut rng,
    );

    let r = random((n, 3), &mut rng);
    let dx = global_avg_pool_backward(&r, h, w);
    check(
        errs,
        "gap",
        &x,
        &dx,
        |x| weighted(&global_avg_pool(&maps(x)), &r),
        &mut rng,
    );
}

pub fn softmax_cross_entropy_gradient(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = random((5, 9), &mut rng);
    let labels = [0, 3, 8, 3, 1];
    let (_, d) = softmax_cross_entropy(&z, &labels).unwrap();
    check(
        errs,
        "softmax-ce",
        &z,
        &d,
        |z| softmax_cross_entropy(z, &labels).unwrap().0,
        &mut rng,
    );
    let p = softmax(&z);
    for row in p.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-6);
    }
    let mut confident = Array2::<f64>::zeros((1, 9));
    confident[[0, 2]] = 50.0;
    assert!(softmax_cross_entropy(&confident, &[2]).unwrap().0 < 1e-12);
}

pub fn mlp_with_fixed_dropout_mask_gradients(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mlp = Mlp::<f64>::new(&[6, 8, 5], 0.5, &mut rng).unwrap();
    let x = random((4, 6), &mut rng);
    let mask: Array2<f64> = dropout_mask((4, 6), 0.5, &mut rng);
    assert!(mask.iter().any(|&m| m == 0.0) && mask.iter().any(|&m| m == 2.0));
    let r = random((4, 5), &mut rng);
    let m0 = mlp.clone();
    let (_, cache) = mlp.forward_masked(&x, mask.clone()).unwrap();
    let dx = mlp.backward(&cache, &r);
    let out = |m: &Mlp<f64>, x: &Array2<f64>| weighted(&m.forward_masked(x, mask.clone()).unwrap().0, &r);
    check(errs, "mlp.x", &x, &dx, |x| out(&m0, x), &mut rng);
    check(
        errs,
        "mlp.w0",
        &m0.layers[0].weight.value,
        &mlp.layers[0].weight.grad,
        |w| {
            let mut m = m0.clone();
            m.layers[0].weight.value = w.clone();
            out(&m, &x)
        },
        &mut rng,
    );
}

pub fn extractor_end_to_end_gradients(errs: &mut Errors) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = ExtractorConfig {
        widths: vec![3, 4],
        embedding: 5,
    };
    let mut ext = Extractor::<f64>::new([2, 8, 8], &cfg, &mut rng).unwrap();
    let x = random((2, 3 * 64), &mut rng);
    let maps = |x: &Array2<f64>| Maps::new(x.clone(), 3, 8, 8).unwrap();
    let r = random((3, 5), &mut rng);
    let e0 = ext.clone();
    let (_, cache) = ext.forward_train(&maps(&x)).unwrap();
    ext.backward(&cache, &r);
    let out = |e: &Extractor<f64>| weighted(&e.clone().forward_train(&maps(&x)).unwrap().0, &r);
    check(
        errs,
        "extractor.conv0",
        &e0.blocks[0].conv.weight.value,
        &ext.blocks[0].conv.weight.grad,
        |w| {
            let mut e = e0.clone();
            e.blocks[0].conv.weight.value = w.clone();
            out(&e)
        },
        &mut rng,
    );
    check(
        errs,
        "extractor.embed",
        &e0.embed.weight.value,
        &ext.embed.weight.grad,
        |w| {
            let mut e = e0.clone();
            e.embed.weight.value = w.clone();
            out(&e)
        },
        &mut rng,
    );
}
