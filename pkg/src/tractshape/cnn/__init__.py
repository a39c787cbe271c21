from .layers import (
    affine_forward,
    batchnorm_forward,
    conv1d_forward,
    mse_loss,
    softmax,
    softmax_cross_entropy,
)
from .model import CLASSIFICATION, REGRESSION, Architecture, Cnn1dModel, backward_pass, cnn_predict
from .train import TrainConfig, sgd_step, train_cnn
