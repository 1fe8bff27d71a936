mod conv2d;
mod heatmap;
mod net;
mod train;

pub use conv2d::{Conv2d, Conv2dGrad};
pub use heatmap::{gt_heatmap, mse_loss, Heatmap, DEFAULT_SIGMA};
pub use net::{predictor_forward, pooled_input, Head, NetGrad, PredictorNet, GROUPS, POOL, TRUNK_CHANNELS, TRUNK_WIDTH, WEIGHTS_VERSION};
pub use train::{
    analytic_gradient, fit_input_scales, loss_and_gradient, sample_loss, train_on_targets, train_predictor, Adam,
    Schedule, TrainConfig, TrainReport, TrainSample,
};
