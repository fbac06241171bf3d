"""Bit-exact quantized inference, quantizers and the STE trainer."""
from .data import Dataset, TrainingSample
from .layers import (LayerKind, LayerSpec, conv2d_forward, fully_connected_forward, maxpool2d,
                     quant_activation)
from .network import NetworkModel, accuracy, infer, loss, mean_loss, network_loss, predict
from .quant import (QuantTensor, hard_sigmoid, quantize_deterministic, quantize_levels,
                    quantize_stochastic, quantize_tensor)
from .train import TrainResult, loss_and_grad, shadow_from_net, train
