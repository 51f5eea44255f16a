//! Runs a Conv-LSTM cell over a short random sequence.

use lunet::recurrent::{conv_lstm_sequence, ConvLstmParams};
use lunet::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lunet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ConvLstmParams::<f32>::init(&mut rng, 3, 8, 3, true).with_dilation(2);
    // 3 phases, batch 1, 3 bands, 16x16
    let x = Tensor::from_fn([3, 1, 3, 16, 16], |_| rng.gen_range(0.0..1.0));
    let out = conv_lstm_sequence(&x, &params)?;
    println!("hidden sequence {:?}", out.hidden.shape());
    for t in 0..3 {
        let h = out.hidden.outer(t)?;
        println!("phase {t}: mean hidden {:+.4}, max |h| {:.4}", h.sum() / h.len() as f32, h.max_abs());
    }
    println!("final cell max |c| {:.4}", out.last.cell.max_abs());
    Ok(())
}
