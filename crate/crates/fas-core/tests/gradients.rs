//! Finite-difference validation of every tape operation and of the full
//! forward pass for each variant.

use fas_core::config::{FasConfig, Variant};
use fas_core::matrix::Matrix;
use fas_core::params::ParameterStore;
use fas_core::rng::{Stream, StreamRng};
use fas_core::tape::{NodeId, Tape};
use fas_core::train::{compare_grads_fd, gradient_check};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Check d(sum(op(params...)))/d(params) against central differences for a
/// closure that rebuilds the graph from a parameter store.
fn check_op(
    params: &mut ParameterStore,
    build: impl Fn(&mut Tape, &ParameterStore) -> fas_core::Result<NodeId>,
) {
    let loss_of = |p: &ParameterStore| -> fas_core::Result<f64> {
        let mut t = Tape::new();
        let out = build(&mut t, p)?;
        let loss = t.sum_all(out)?;
        Ok(t.value(loss).at(0, 0))
    };
    let grads = {
        let mut t = Tape::new();
        let out = build(&mut t, params).unwrap();
        let loss = t.sum_all(out).unwrap();
        t.backward(loss).unwrap()
    };
    let report = compare_grads_fd(params, &grads, loss_of, EPS, 10_000, TOL, 1).unwrap();
    assert!(
        report.passed,
        "max rel err {} at {}[{}]",
        report.max_rel_err, report.worst_param, report.worst_entry
    );
}

fn two_params(ra: usize, ca: usize, rb: usize, cb: usize, seed: u64) -> ParameterStore {
    let mut rng = StreamRng::new(seed, Stream::Init);
    let mut p = ParameterStore::new();
    p.insert("a".into(), rand_matrix(ra, ca, &mut rng));
    p.insert("b".into(), rand_matrix(rb, cb, &mut rng));
    p
}

fn reg(t: &mut Tape, p: &ParameterStore, name: &str) -> NodeId {
    t.param(name, p.get(name).unwrap().clone()).unwrap()
}

#[test]
fn matmul_gradient() {
    let mut p = two_params(3, 4, 4, 5, 1);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let b = reg(t, p, "b");
        t.matmul(a, b)
    });
}

#[test]
fn matmul_transpose_b_gradient() {
    let mut p = two_params(3, 4, 5, 4, 2);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let b = reg(t, p, "b");
        t.matmul_transpose_b(a, b)
    });
}

#[test]
fn add_sub_hadamard_scale_gradients() {
    let mut p = two_params(4, 3, 4, 3, 3);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let b = reg(t, p, "b");
        let s = t.add(a, b)?;
        let d = t.sub(s, b)?;
        let h = t.hadamard(d, a)?;
        t.scale(h, -1.7)
    });
}

#[test]
fn add_row_bias_gradient() {
    let mut p = two_params(5, 4, 1, 4, 4);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let b = reg(t, p, "b");
        t.add_row_bias(a, b)
    });
}

#[test]
fn softmax_rows_gradient() {
    let mut p = two_params(3, 5, 3, 5, 5);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let b = reg(t, p, "b");
        let s = t.softmax_rows(a)?;
        // weight the softmax so the gradient is not the trivial zero
        t.hadamard(s, b)
    });
}

#[test]
fn gelu_gradient() {
    let mut p = two_params(4, 4, 1, 1, 6);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let _unused = reg(t, p, "b");
        t.gelu(a)
    });
}

#[test]
fn sigmoid_gradient() {
    let mut p = two_params(4, 4, 1, 1, 7);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let _unused = reg(t, p, "b");
        t.sigmoid(a)
    });
}

#[test]
fn gather_concat_mean_broadcast_reshape_gradients() {
    let mut p = two_params(6, 4, 3, 4, 8);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let b = reg(t, p, "b");
        let picked = t.gather_rows(a, vec![Some(4), Some(1), None, Some(0)])?;
        let cat = t.concat_rows(picked, b)?;
        let mean = t.mean_rows(cat)?;
        let wide = t.broadcast_row(mean, 3)?;
        let cc = t.concat_cols(wide, b)?;
        t.reshape(cc, 4, 6)
    });
}

#[test]
fn cross_entropy_gradient() {
    let mut p = two_params(1, 7, 1, 1, 9);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let _unused = reg(t, p, "b");
        t.cross_entropy(a, 3)
    });
}

#[test]
fn dropout_gradient_with_reseeded_mask() {
    // mask regenerated identically per evaluation, so FD sees the same graph
    let mut p = two_params(6, 6, 1, 1, 10);
    check_op(&mut p, |t, p| {
        let a = reg(t, p, "a");
        let _unused = reg(t, p, "b");
        let mut rng = StreamRng::new(99, Stream::Dropout);
        t.dropout(a, 0.4, true, &mut rng)
    });
}

fn variant_cfg(variant: Variant) -> FasConfig {
    FasConfig {
        d: 6,
        s: 2,
        k_aco: 2,
        k_sem: 3,
        n_q: 2,
        d_aco_in: 4,
        d_sem_in: 5,
        ffn_expansion: 2,
        dropout: 0.3,
        variant,
        ..FasConfig::default()
    }
}

#[test]
fn full_forward_gradients_all_variants() {
    for variant in Variant::ALL {
        // fas_no_topk consumes the dropout stream for selection, which the
        // reseeded loss closure replays identically
        let report = gradient_check(&variant_cfg(variant), 17, EPS, 600, TOL).unwrap();
        assert!(
            report.passed,
            "{}: max rel err {} at {}[{}]",
            variant.name(),
            report.max_rel_err,
            report.worst_param,
            report.worst_entry
        );
    }
}

#[test]
fn full_forward_gradients_without_dropout() {
    for variant in Variant::ALL {
        let cfg = FasConfig { dropout: 0.0, ..variant_cfg(variant) };
        let report = gradient_check(&cfg, 23, EPS, 600, TOL).unwrap();
        assert!(report.passed, "{}: {:?}", variant.name(), report);
    }
}
