//! Scores a prediction map against ground truth.

use lunet::metrics::{accumulate_confusion, compute_report, ConfusionMatrix};
use lunet::tensor::ClassMap;

fn main() -> lunet::Result<()> {
    let truth = ClassMap::new(1, 4, 4, vec![0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0])?;
    let pred = ClassMap::new(1, 4, 4, vec![0, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0])?;
    let cm = accumulate_confusion(&pred, &truth, ConfusionMatrix::new(2))?;
    println!("confusion (rows truth, cols predicted): {:?}", cm.rows());
    println!("{}", compute_report(&cm)?.table("example"));

    let fixture = ConfusionMatrix::from_rows(&[vec![40, 10], vec![5, 45]])?;
    println!("{}", compute_report(&fixture)?.table("fixture"));
    Ok(())
}
