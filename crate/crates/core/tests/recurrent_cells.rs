mod common;

use common::{check_tensor, randn, rng, scalar_lstm, sigmoid, uniform};
use lunet::recurrent::{
    conv_lstm_sequence, conv_lstm_sequence_backward, conv_lstm_step, fc_lstm_step, ConvLstmParams, FcLstmParams,
    Gate, LstmState, OutputPeephole,
};
use lunet::tensor::Tensor;
use rand::Rng;

fn random_params(r: &mut impl Rng, cin: usize, h: usize, k: usize, peephole: bool) -> ConvLstmParams<f64> {
    let mut p = ConvLstmParams::zeros(cin, h, k, peephole);
    p.input_kernel = randn(r, p.input_kernel.shape());
    p.recurrent_kernel = randn(r, p.recurrent_kernel.shape());
    p.bias = randn(r, p.bias.shape());
    if let Some(w) = &mut p.peephole {
        *w = randn(r, w.shape());
    }
    p
}

fn seq_input(r: &mut impl Rng, t: usize, n: usize, c: usize, s: usize) -> Tensor<f64> {
    randn(r, &[t, n, c, s, s])
}

#[test]
fn scalar_cell_example() {
    let mut p = FcLstmParams::<f64>::zeros(1, 1);
    for g in 0..4 {
        p.input_weights[g] = Tensor::full([1, 1], 1.0);
    }
    let (s, _) = fc_lstm_step(&Tensor::new([1], vec![1.0]).unwrap(), &LstmState::zeros([1]), &p).unwrap();
    let s1 = sigmoid(1.0);
    assert!((s1 - 0.73106).abs() < 1e-5);
    let c = s1 * 1f64.tanh();
    assert!((s.cell.data()[0] - c).abs() < 1e-15);
    assert!((s.cell.data()[0] - 0.55677).abs() < 1e-5);
    assert!((s.hidden.data()[0] - s1 * c.tanh()).abs() < 1e-15);
    assert!((s.hidden.data()[0] - 0.3697).abs() < 1e-4);
}

#[test]
fn zero_params_give_zero_state() {
    let p = ConvLstmParams::<f64>::zeros(3, 2, 3, true);
    let x = randn(&mut rng(1), &[2, 3, 5, 4]);
    let (s, cache) = conv_lstm_step(&x, &LstmState::zeros([2, 2, 5, 4]), &p).unwrap();
    assert!(s.hidden.data().iter().chain(s.cell.data()).all(|&v| v == 0.0));
    assert!(cache.gates().data()[..2 * 2 * 20 * 3].iter().all(|&g| g == 0.5 || g == 0.0));
}

#[test]
fn gate_saturation_gives_pure_memory() {
    let mut p = FcLstmParams::<f64>::zeros(2, 3);
    let mut r = rng(2);
    for g in 0..4 {
        p.input_weights[g] = randn(&mut r, &[3, 2]);
    }
    p.biases[Gate::Forget.index()] = Tensor::full([3], 60.0);
    p.biases[Gate::Input.index()] = Tensor::full([3], -60.0);
    let prev = LstmState { hidden: randn(&mut r, &[3]), cell: randn(&mut r, &[3]) };
    let (s, _) = fc_lstm_step(&randn(&mut r, &[2]), &prev, &p).unwrap();
    assert!(s.cell.max_abs_diff(&prev.cell).unwrap() < 1e-12);
}

#[test]
fn fc_step_matches_independent_oracle() {
    let mut r = rng(3);
    for mode in [OutputPeephole::Previous, OutputPeephole::Current] {
        let mut p = FcLstmParams::<f64>::zeros(3, 2);
        p.output_peephole = mode;
        for g in 0..4 {
            p.input_weights[g] = randn(&mut r, &[2, 3]);
            p.recurrent_weights[g] = randn(&mut r, &[2, 2]);
            p.biases[g] = randn(&mut r, &[2]);
        }
        for k in 0..3 {
            p.peepholes[k] = randn(&mut r, &[2]);
        }
        let x = randn(&mut r, &[3]);
        let prev = LstmState { hidden: randn(&mut r, &[2]), cell: randn(&mut r, &[2]) };
        let (s, _) = fc_lstm_step(&x, &prev, &p).unwrap();
        let v = |ts: &[Tensor<f64>]| -> Vec<Vec<f64>> { ts.iter().map(|t| t.data().to_vec()).collect() };
        let (h, c) = scalar_lstm(
            x.data(),
            prev.hidden.data(),
            prev.cell.data(),
            &v(&p.input_weights).try_into().unwrap(),
            &v(&p.recurrent_weights).try_into().unwrap(),
            &v(&p.biases).try_into().unwrap(),
            &v(&p.peepholes).try_into().unwrap(),
            mode == OutputPeephole::Previous,
        );
        for j in 0..2 {
            assert!((s.hidden.data()[j] - h[j]).abs() < 1e-14);
            assert!((s.cell.data()[j] - c[j]).abs() < 1e-14);
        }
    }
}

#[test]
fn conv_cell_on_one_pixel_equals_fc_cell() {
    let mut r = rng(4);
    for draw in 0..50 {
        let (cin, h) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let mut p = random_params(&mut r, cin, h, 1, true);
        if draw % 2 == 1 {
            p.output_peephole = OutputPeephole::Current;
        }
        let fc = p.to_fc().unwrap();
        let x = randn(&mut r, &[cin]);
        let prev = LstmState { hidden: randn(&mut r, &[h]), cell: randn(&mut r, &[h]) };
        let (fs, _) = fc_lstm_step(&x, &prev, &fc).unwrap();
        let as4 = |t: &Tensor<f64>, c| t.clone().reshape([1, c, 1, 1]).unwrap();
        let cprev = LstmState { hidden: as4(&prev.hidden, h), cell: as4(&prev.cell, h) };
        let (cs, _) = conv_lstm_step(&as4(&x, cin), &cprev, &p).unwrap();
        assert!(cs.hidden.clone().reshape([h]).unwrap().max_abs_diff(&fs.hidden).unwrap() <= 1e-12);
        assert!(cs.cell.clone().reshape([h]).unwrap().max_abs_diff(&fs.cell).unwrap() <= 1e-12);
    }
    assert!(ConvLstmParams::<f64>::zeros(2, 2, 3, true).to_fc().is_err());
}

#[test]
fn disabled_peephole_equals_zero_peephole() {
    let mut r = rng(5);
    let mut with = random_params(&mut r, 2, 3, 3, true);
    with.peephole = Some(Tensor::zeros([3, 3]));
    let mut without = with.clone();
    without.peephole = None;
    let x = seq_input(&mut r, 3, 2, 2, 5);
    let a = conv_lstm_sequence(&x, &with).unwrap();
    let b = conv_lstm_sequence(&x, &without).unwrap();
    assert_eq!(a.hidden, b.hidden);
    assert_eq!(a.last, b.last);
}

#[test]
fn single_phase_sequence_equals_one_step() {
    let mut r = rng(6);
    let p = random_params(&mut r, 2, 3, 3, true).with_dilation(2);
    let x = seq_input(&mut r, 1, 2, 2, 6);
    let seq = conv_lstm_sequence(&x, &p).unwrap();
    let (s, _) = conv_lstm_step(&x.outer(0).unwrap(), &LstmState::zeros([2, 3, 6, 6]), &p).unwrap();
    assert_eq!(seq.last, s);
    assert_eq!(seq.hidden.outer(0).unwrap(), s.hidden);
}

#[test]
fn state_accumulates_over_identical_frames() {
    let mut r = rng(7);
    let p = random_params(&mut r, 2, 2, 3, true);
    let frame = randn(&mut r, &[1, 2, 4, 4]);
    let x = Tensor::stack(&[frame.clone(), frame]).unwrap();
    let out = conv_lstm_sequence(&x, &p).unwrap();
    assert!(out.hidden.outer(0).unwrap().max_abs_diff(&out.hidden.outer(1).unwrap()).unwrap() > 1e-6);
}

#[test]
fn phase_order_matters() {
    let mut r = rng(8);
    for _ in 0..3 {
        let p = random_params(&mut r, 2, 2, 3, true);
        let a = randn(&mut r, &[1, 2, 4, 4]);
        let b = randn(&mut r, &[1, 2, 4, 4]);
        let ab = conv_lstm_sequence(&Tensor::stack(&[a.clone(), b.clone()]).unwrap(), &p).unwrap();
        let ba = conv_lstm_sequence(&Tensor::stack(&[b, a]).unwrap(), &p).unwrap();
        assert!(ab.last.hidden.max_abs_diff(&ba.last.hidden).unwrap() > 1e-6);
    }
}

#[test]
fn zero_input_and_zero_bias_keep_cell_zero() {
    let mut r = rng(9);
    let mut p = random_params(&mut r, 2, 3, 3, true);
    p.bias = Tensor::zeros([12]);
    let out = conv_lstm_sequence(&Tensor::zeros([4, 1, 2, 5, 5]), &p).unwrap();
    assert!(out.last.cell.data().iter().all(|&v| v == 0.0));
    assert!(out.hidden.data().iter().all(|&v| v == 0.0));
}

#[test]
fn gates_and_hidden_are_bounded() {
    let mut r = rng(10);
    let p = random_params(&mut r, 3, 2, 3, true);
    let x = uniform(&mut r, &[3, 2, 3, 5, 5], -3.0, 3.0);
    let out = conv_lstm_sequence(&x, &p).unwrap();
    assert!(out.hidden.data().iter().all(|v| v.abs() < 1.0));
    for step in out.cache.steps() {
        let g = step.gates();
        let plane = 25;
        for n in 0..2 {
            let base = n * 8 * plane;
            // i, f, o occupy the first 3h channels
            assert!(g.data()[base..base + 6 * plane].iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn mismatched_state_is_rejected() {
    let p = ConvLstmParams::<f64>::zeros(2, 3, 3, true);
    let x = Tensor::zeros([1, 2, 4, 4]);
    assert!(conv_lstm_step(&x, &LstmState::zeros([1, 3, 4, 5]), &p).is_err());
    assert!(Tensor::<f64>::new([0, 1, 2, 4, 4], vec![]).is_err());
    assert!(conv_lstm_sequence(&x, &p).is_err());
    assert!(fc_lstm_step(&Tensor::<f64>::zeros([3]), &LstmState::zeros([2]), &FcLstmParams::zeros(2, 2)).is_err());
}

fn objective(p: &ConvLstmParams<f64>, x: &Tensor<f64>, rh: &Tensor<f64>, rc: &Tensor<f64>) -> f64 {
    let out = conv_lstm_sequence(x, p).unwrap();
    out.hidden.dot(rh).unwrap() + out.last.cell.dot(rc).unwrap()
}

#[test]
fn bptt_gradcheck() {
    let mut r = rng(11);
    for (phases, dilation, mode) in [
        (1, 1, OutputPeephole::Previous),
        (2, 1, OutputPeephole::Previous),
        (3, 1, OutputPeephole::Previous),
        (3, 1, OutputPeephole::Current),
        (3, 2, OutputPeephole::Previous),
    ] {
        let mut p = random_params(&mut r, 2, 2, 3, true).with_dilation(dilation);
        p.output_peephole = mode;
        let x = seq_input(&mut r, phases, 1, 2, 4);
        let out = conv_lstm_sequence(&x, &p).unwrap();
        let rh = randn(&mut r, out.hidden.shape());
        let rc = randn(&mut r, out.last.cell.shape());
        let last = LstmState { hidden: Tensor::zeros(rc.shape().to_vec()), cell: rc.clone() };
        let (dx, g) = conv_lstm_sequence_backward(&p, &out.cache, &rh, Some(&last)).unwrap();

        let err = check_tensor(&x, &dx, |t| objective(&p, t, &rh, &rc));
        assert!(err <= 1e-4, "T={phases} input {err}");
        let grads = [&g.input_kernel, &g.recurrent_kernel, &g.bias, g.peephole.as_ref().unwrap()];
        for (slot, grad) in grads.into_iter().enumerate() {
            let at = p.tensors()[slot].1.clone();
            let err = check_tensor(&at, grad, |t| {
                let mut q = p.clone();
                *q.tensors_mut()[slot] = t.clone();
                objective(&q, &x, &rh, &rc)
            });
            assert!(err <= 1e-4, "T={phases} d={dilation} {mode:?} {} {err}", p.tensors()[slot].0);
        }
    }
}
