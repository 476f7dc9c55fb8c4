from .layers import (
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    mse_loss,
    relu_backward,
    relu_forward,
)
from .network import (
    CONV,
    FC,
    RELU,
    Layer,
    LayerSpec,
    Network,
    backward,
    backward_with_input,
    conv,
    forward,
    fully_connected,
    infer_shapes,
    init_weights,
    relu,
)
from .optim import SGD, BatchSchedule, TrainConfig, TrainResult, sgd_step, train_network
