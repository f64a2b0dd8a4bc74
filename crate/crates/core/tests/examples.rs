//! Runs every example so that they stay in step with the library.

#[path = "../examples/uncertainty_measures.rs"]
mod uncertainty_measures;

#[test]
fn run_uncertainty_measures() {
    uncertainty_measures::run_example();
}

#[path = "../examples/tensor_format.rs"]
mod tensor_format;

#[test]
fn run_tensor_format() {
    tensor_format::run_example();
}

#[path = "../examples/classification_fairness_sweep.rs"]
mod classification_fairness_sweep;

#[test]
fn run_classification_fairness_sweep() {
    classification_fairness_sweep::run_example();
}

#[path = "../examples/segmentation_dice_qubrats.rs"]
mod segmentation_dice_qubrats;

#[test]
fn run_segmentation_dice_qubrats() {
    segmentation_dice_qubrats::run_example();
}

#[path = "../examples/regression_total_variance.rs"]
mod regression_total_variance;

#[test]
fn run_regression_total_variance() {
    regression_total_variance::run_example();
}

#[path = "../examples/mitigation_strategies.rs"]
mod mitigation_strategies;

#[test]
fn run_mitigation_strategies() {
    mitigation_strategies::run_example();
}

#[path = "../examples/end_to_end_pipeline.rs"]
mod end_to_end_pipeline;

#[test]
fn run_end_to_end_pipeline() {
    end_to_end_pipeline::run_example();
}
