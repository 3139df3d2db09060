//! Straightforward metric formulas.

/// Mean first, then the root: pixels valid (> 0) in both maps.
pub fn two_pass_rmse(a: &[f64], b: &[f64]) -> (f64, usize) {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (*x, *y))
        .collect();
    let n = pairs.len();
    let mean = pairs.iter().map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64;
    (mean.sqrt(), n)
}

/// mIOU from a full confusion matrix, rows = truth, columns = prediction.
pub fn confusion_iou(pred: &[usize], gt: &[usize], classes: usize) -> f64 {
    let mut cm = vec![vec![0usize; classes]; classes];
    for (&p, &g) in pred.iter().zip(gt) {
        cm[g][p] += 1;
    }
    let mut ious = Vec::new();
    for c in 0..classes {
        let tp = cm[c][c];
        let row: usize = cm[c].iter().sum();
        let col: usize = (0..classes).map(|r| cm[r][c]).sum();
        let union = row + col - tp;
        if union > 0 {
            ious.push(tp as f64 / union as f64);
        }
    }
    ious.iter().sum::<f64>() / ious.len() as f64
}

/// `−mean(y ln σ(x) + (1 − y) ln(1 − σ(x)))` evaluated literally.
pub fn bce_direct(logits: &[f64], labels: &[f64]) -> f64 {
    let n = logits.len() as f64;
    -logits
        .iter()
        .zip(labels)
        .map(|(x, y)| {
            let s = 1.0 / (1.0 + (-x).exp());
            y * s.ln() + (1.0 - y) * (1.0 - s).ln()
        })
        .sum::<f64>()
        / n
}
