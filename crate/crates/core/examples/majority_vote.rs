//! Majority vote over four modality classifiers, including the tie rule.

use mmal::fusion::{confidence, majority_vote, EnsembleOutput};

fn output(probs: &[[f64; 3]]) -> EnsembleOutput {
    let probs: Vec<Vec<f64>> = probs.iter().map(|p| p.to_vec()).collect();
    EnsembleOutput {
        classes: probs.iter().map(|p| mmal::numerics::argmax(p)).collect(),
        confidences: probs.iter().map(|p| confidence(p)).collect(),
        probs,
    }
}

fn main() {
    let cases = [
        ("clear majority", output(&[[0.8, 0.1, 0.1], [0.7, 0.2, 0.1], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8]])),
        ("2-2 tie, class 2 more confident", output(&[[0.5, 0.3, 0.2], [0.5, 0.4, 0.1], [0.0, 0.05, 0.95], [0.1, 0.1, 0.8]])),
        ("plurality of two", output(&[[0.4, 0.3, 0.3], [0.2, 0.7, 0.1], [0.3, 0.3, 0.4], [0.6, 0.2, 0.2]])),
        ("uniform members", output(&[[1.0 / 3.0; 3]; 4])),
    ];
    for (name, out) in &cases {
        let conf: Vec<String> = out.confidences.iter().map(|c| format!("{c:.2}")).collect();
        println!(
            "{name:<34} votes {:?} confidences [{}] -> class {}",
            out.classes,
            conf.join(", "),
            majority_vote(out)
        );
    }
}
