//! Central-difference verification of every differentiable operation.
//!
//! Each case builds a scalar loss `sum(op(vars) * projection)` from leaf
//! variables, runs `backward`, then probes parameter elements against the
//! finite-difference oracle.

use std::rc::Rc;

use mtunet_core::gradcheck::{probe_gradients, FD_STEP, REL_TOL_OP};
use mtunet_core::ops::norm::batch_norm;
use mtunet_core::{cast, Parameter, RngState, Tensor};

fn rand_vec(rng: &mut RngState, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(lo, hi)).collect()
}

/// Random values kept away from zero (relu/clamp kinks).
fn rand_vec_off_kink(rng: &mut RngState, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.uniform_in(0.1, 1.0);
            if rng.uniform() < 0.5 {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn check(name: &str, params: &[(String, Parameter<f64>)], build: &dyn Fn() -> Tensor<f64>) {
    let loss = build();
    assert_eq!(loss.numel(), 1, "{name}: loss must be scalar");
    loss.backward().unwrap();
    let mut loss_fn = || build().item();
    let mut rng = RngState::new(0x9e3779b9);
    let total: usize = params.iter().map(|(_, p)| p.numel()).sum();
    let count = total.min(48);
    let probes = probe_gradients(&params.to_vec(), &mut loss_fn, count, FD_STEP, &mut rng);
    for p in &probes {
        assert!(
            p.relative_error() < REL_TOL_OP,
            "{name}: probe {p:?} rel err {}",
            p.relative_error()
        );
    }
}

fn var(rng: &mut RngState, shape: &[usize]) -> Parameter<f64> {
    let n = shape.iter().product();
    Parameter::new(rand_vec(rng, n, -1.0, 1.0), shape).unwrap()
}

fn named(params: Vec<(&str, Parameter<f64>)>) -> Vec<(String, Parameter<f64>)> {
    params.into_iter().map(|(n, p)| (n.to_string(), p)).collect()
}

fn projection(rng: &mut RngState, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(rand_vec(rng, n, -1.0, 1.0), shape).unwrap()
}

#[test]
fn binary_ops_with_broadcast() {
    let mut rng = RngState::new(1);
    let a = var(&mut rng, &[2, 3, 4]);
    let b = var(&mut rng, &[3, 1]);
    // denominators away from zero
    let bdata: Vec<f64> = b.data().iter().map(|v| v + 2.0f64.copysign(*v)).collect();
    b.set_data(bdata);
    let proj = projection(&mut rng, &[2, 3, 4]);
    let params = named(vec![("a", a.clone()), ("b", b.clone())]);
    for (name, f) in [
        ("add", 0usize),
        ("sub", 1),
        ("mul", 2),
        ("div", 3),
    ] {
        let (a, b, proj) = (a.clone(), b.clone(), proj.clone());
        check(name, &params, &move || {
            let x = a.value();
            let y = b.value();
            let out = match f {
                0 => x.add(&y).unwrap(),
                1 => x.sub(&y).unwrap(),
                2 => x.mul(&y).unwrap(),
                _ => x.div(&y).unwrap(),
            };
            out.mul(&proj).unwrap().sum_all().unwrap()
        });
    }
}

#[test]
fn unary_ops() {
    let mut rng = RngState::new(2);
    let shape = [3, 5];
    let w = Parameter::new(rand_vec_off_kink(&mut rng, 15), &shape).unwrap();
    let proj = projection(&mut rng, &shape);
    let params = named(vec![("w", w.clone())]);
    type BuildFn = Box<dyn Fn(&Tensor<f64>) -> Tensor<f64>>;
    let cases: Vec<(&str, BuildFn)> = vec![
        ("neg", Box::new(|x: &Tensor<f64>| x.neg())),
        ("relu", Box::new(|x: &Tensor<f64>| x.relu())),
        ("gelu", Box::new(|x: &Tensor<f64>| x.gelu())),
        ("sigmoid", Box::new(|x: &Tensor<f64>| x.sigmoid())),
        ("mul_scalar", Box::new(|x: &Tensor<f64>| x.mul_scalar(2.5))),
        ("add_scalar", Box::new(|x: &Tensor<f64>| x.add_scalar(-1.25))),
        ("clamp_min", Box::new(|x: &Tensor<f64>| x.clamp_min(0.05))),
    ];
    for (name, f) in cases {
        let (w, proj) = (w.clone(), proj.clone());
        check(name, &params, &move || {
            f(&w.value()).mul(&proj).unwrap().sum_all().unwrap()
        });
    }
}

#[test]
fn log_of_positive_input() {
    let mut rng = RngState::new(3);
    let w = Parameter::new(rand_vec(&mut rng, 12, 0.5, 2.0), &[12]).unwrap();
    let proj = projection(&mut rng, &[12]);
    let params = named(vec![("w", w.clone())]);
    check("log", &params, &move || {
        w.value().log().mul(&proj).unwrap().sum_all().unwrap()
    });
}

#[test]
fn softmax_gradient() {
    let mut rng = RngState::new(4);
    let w = var(&mut rng, &[2, 4, 3]);
    let proj = projection(&mut rng, &[2, 4, 3]);
    let params = named(vec![("w", w.clone())]);
    for axis in [1usize, 2] {
        let (w, proj) = (w.clone(), proj.clone());
        check("softmax", &params, &move || {
            w.value()
                .softmax(axis)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
}

#[test]
fn matmul_and_linear_gradients() {
    let mut rng = RngState::new(5);
    let a = var(&mut rng, &[2, 3, 4]);
    let b = var(&mut rng, &[2, 4, 5]);
    let proj = projection(&mut rng, &[2, 3, 5]);
    let params = named(vec![("a", a.clone()), ("b", b.clone())]);
    {
        let (a, b, proj) = (a.clone(), b.clone(), proj.clone());
        check("matmul", &params, &move || {
            a.value()
                .matmul(&b.value())
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }

    let x = var(&mut rng, &[2, 3, 6]);
    let w = var(&mut rng, &[4, 6]);
    let bias = var(&mut rng, &[4]);
    let proj = projection(&mut rng, &[2, 3, 4]);
    let params = named(vec![("x", x.clone()), ("w", w.clone()), ("bias", bias.clone())]);
    check("linear", &params, &move || {
        x.value()
            .linear(&w.value(), Some(&bias.value()))
            .unwrap()
            .mul(&proj)
            .unwrap()
            .sum_all()
            .unwrap()
    });
}

#[test]
fn conv2d_gradients() {
    let mut rng = RngState::new(6);
    for (stride, padding, dilation) in [(1, 1, 1), (2, 1, 1), (1, 2, 2), (1, 6, 6)] {
        let x = var(&mut rng, &[2, 3, 7, 7]);
        let w = var(&mut rng, &[4, 3, 3, 3]);
        let b = var(&mut rng, &[4]);
        let params = named(vec![("x", x.clone()), ("w", w.clone()), ("b", b.clone())]);
        let out = x
            .value()
            .conv2d(&w.value(), Some(&b.value()), stride, padding, dilation)
            .unwrap();
        let proj = projection(&mut rng, out.shape());
        check("conv2d", &params, &move || {
            x.value()
                .conv2d(&w.value(), Some(&b.value()), stride, padding, dilation)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
}

#[test]
fn batch_norm_gradients_train_and_eval() {
    let mut rng = RngState::new(7);
    let x = var(&mut rng, &[2, 3, 4, 4]);
    let gamma = Parameter::new(rand_vec(&mut rng, 3, 0.5, 1.5), &[3]).unwrap();
    let beta = var(&mut rng, &[3]);
    let proj = projection(&mut rng, &[2, 3, 4, 4]);
    let params = named(vec![("x", x.clone()), ("gamma", gamma.clone()), ("beta", beta.clone())]);
    for training in [true, false] {
        let (x, gamma, beta, proj) = (x.clone(), gamma.clone(), beta.clone(), proj.clone());
        check("batch_norm", &params, &move || {
            // fresh stats per call so the loss is a pure function
            let mut mean = vec![0.1, -0.2, 0.3];
            let mut var = vec![1.0, 0.8, 1.2];
            batch_norm(
                &x.value(),
                &gamma.value(),
                &beta.value(),
                &mut mean,
                &mut var,
                training,
                cast(1e-5),
                cast(0.1),
            )
            .unwrap()
            .mul(&proj)
            .unwrap()
            .sum_all()
            .unwrap()
        });
    }
}

#[test]
fn layer_norm_gradients() {
    let mut rng = RngState::new(8);
    let x = var(&mut rng, &[2, 5, 6]);
    let gamma = Parameter::new(rand_vec(&mut rng, 6, 0.5, 1.5), &[6]).unwrap();
    let beta = var(&mut rng, &[6]);
    let proj = projection(&mut rng, &[2, 5, 6]);
    let params = named(vec![("x", x.clone()), ("gamma", gamma.clone()), ("beta", beta.clone())]);
    check("layer_norm", &params, &move || {
        x.value()
            .layer_norm(&gamma.value(), &beta.value(), 1e-5)
            .unwrap()
            .mul(&proj)
            .unwrap()
            .sum_all()
            .unwrap()
    });
}

#[test]
fn pooling_gradients() {
    let mut rng = RngState::new(9);
    let x = var(&mut rng, &[2, 3, 6, 6]);
    let params = named(vec![("x", x.clone())]);
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 3, 3, 3]);
        check("max_pool2d", &params, &move || {
            x.value()
                .max_pool2d(2, 2)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 3]);
        check("global_avg_pool", &params, &move || {
            x.value()
                .global_avg_pool()
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
}

#[test]
fn upsample_gradients() {
    let mut rng = RngState::new(10);
    let x = var(&mut rng, &[1, 2, 3, 4]);
    let proj = projection(&mut rng, &[1, 2, 6, 8]);
    let params = named(vec![("x", x.clone())]);
    check("upsample_bilinear2x", &params, &move || {
        x.value()
            .upsample_bilinear2x()
            .unwrap()
            .mul(&proj)
            .unwrap()
            .sum_all()
            .unwrap()
    });
}

#[test]
fn shape_op_gradients() {
    let mut rng = RngState::new(11);
    let x = var(&mut rng, &[2, 3, 4]);
    let params = named(vec![("x", x.clone())]);
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[4, 6]);
        check("reshape", &params, &move || {
            x.value()
                .reshape(&[4, 6])
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[4, 2, 3]);
        check("permute", &params, &move || {
            x.value()
                .permute(&[2, 0, 1])
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 6, 5]);
        check("pad", &params, &move || {
            x.value()
                .pad_zeros(&[(0, 0), (1, 2), (0, 1)])
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 2, 2]);
        check("slice", &params, &move || {
            x.value()
                .slice(&[0..2, 1..3, 2..4])
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 3, 4]);
        check("roll", &params, &move || {
            x.value()
                .roll(&[1, -2, 3])
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
}

#[test]
fn concat_gradients() {
    let mut rng = RngState::new(12);
    let a = var(&mut rng, &[2, 2, 3]);
    let b = var(&mut rng, &[2, 4, 3]);
    let proj = projection(&mut rng, &[2, 6, 3]);
    let params = named(vec![("a", a.clone()), ("b", b.clone())]);
    check("concat", &params, &move || {
        Tensor::concat(&[a.value(), b.value()], 1)
            .unwrap()
            .mul(&proj)
            .unwrap()
            .sum_all()
            .unwrap()
    });
}

#[test]
fn reduction_gradients() {
    let mut rng = RngState::new(13);
    let x = var(&mut rng, &[2, 3, 4]);
    let params = named(vec![("x", x.clone())]);
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 1, 4]);
        check("sum_axes", &params, &move || {
            x.value()
                .sum_axes(&[1], true)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[3]);
        check("mean_axes", &params, &move || {
            x.value()
                .mean_axes(&[0, 2], false)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
    {
        let x = x.clone();
        let proj = projection(&mut rng, &[2, 1, 4]);
        check("max_axis", &params, &move || {
            x.value()
                .max_axis(1, true)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum_all()
                .unwrap()
        });
    }
}

#[test]
fn index_select_gradients() {
    let mut rng = RngState::new(14);
    let table = var(&mut rng, &[5, 3]);
    let idx = Rc::new(vec![4usize, 0, 2, 2, 1]);
    let proj = projection(&mut rng, &[5, 3]);
    let params = named(vec![("table", table.clone())]);
    check("index_select", &params, &move || {
        table
            .value()
            .index_select_rows(&idx)
            .unwrap()
            .mul(&proj)
            .unwrap()
            .sum_all()
            .unwrap()
    });
}

#[test]
fn composed_graph_gradient() {
    // a small composite: conv -> relu -> layer-norm-ish mix -> softmax -> loss
    let mut rng = RngState::new(15);
    let x = var(&mut rng, &[1, 2, 5, 5]);
    let w = var(&mut rng, &[3, 2, 3, 3]);
    let b = var(&mut rng, &[3]);
    let proj = projection(&mut rng, &[1, 3]);
    let params = named(vec![("x", x.clone()), ("w", w.clone()), ("b", b.clone())]);
    check("composed", &params, &move || {
        let y = x
            .value()
            .conv2d(&w.value(), Some(&b.value()), 1, 1, 1)
            .unwrap()
            .relu()
            .global_avg_pool()
            .unwrap()
            .softmax(1)
            .unwrap();
        y.mul(&proj).unwrap().sum_all().unwrap()
    });
}
