mod common;

use stgcnn_cvae::model::param_shapes;
use stgcnn_cvae::trainer::PreparedWindow;

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let model = common::generic_model(4);
    let prepared = PreparedWindow::new(common::two_agent_window()).unwrap();
    let r = common::fd_check(&model, &prepared, 1e-5);
    let total: usize = param_shapes(&model.config).iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    assert_eq!(r.checked, total);
    assert!(r.score < 1.0, "score {:e} at {}", r.score, r.worst);
}
