"""Dense float64 layer engine with hand-written reverse-mode gradients."""

from . import checkpoint
from .functional import (
    LossError,
    categorical_crossentropy,
    categorical_crossentropy_grad,
    cce_on_logits,
    kld,
    kld_grad_q,
    kld_on_logits,
    log_softmax,
    one_hot,
    softmax,
    softmax_backward,
    sparse_ce_from_logits,
    sparse_ce_from_logits_grad,
    sparse_ce_on_logits,
)
from .gradcheck import gradient_check
from .graph import Concat, ModelGraph, Sequential, UsageError, backward, forward, param_count
from .layers import (
    LSTM,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool1D,
    Layer,
    MaxPool1D,
    MaxPool2D,
    ReLU,
    ShapeError,
    Softmax,
)
from .optim import Adadelta, Adam, adadelta_step, adam_step, make_optimizer
from .params import Param, ParamStore
