"""Differentiable tensor engine and model zoo."""

from .tensor import (Tensor, backward, no_grad, gelu, relu, sigmoid, softmax,
                     layer_norm, conv2d, conv_transpose2d, max_pool2d,
                     pixel_shuffle, matmul, concat, bce_with_logits, l1_loss,
                     loss_bce_soft_iou)
from .checkpoint import ModelCheckpoint, save_checkpoint, load_checkpoint
from .optim import adamw_step
from .models import (EncoderConfig, AdapterParams, adapter_forward,
                     encoder_forward, decoder_forward, adapter_model_forward,
                     unet_baseline_forward, init_adapter_checkpoint,
                     init_unet_checkpoint, predictor_from_checkpoint,
                     evenly_spaced_global_layers)

__all__ = [
    "Tensor", "backward", "no_grad", "gelu", "relu", "sigmoid", "softmax",
    "layer_norm", "conv2d", "conv_transpose2d", "max_pool2d", "pixel_shuffle",
    "matmul", "concat", "bce_with_logits", "l1_loss", "loss_bce_soft_iou",
    "ModelCheckpoint", "save_checkpoint", "load_checkpoint", "adamw_step",
    "EncoderConfig", "AdapterParams", "adapter_forward", "encoder_forward",
    "decoder_forward", "adapter_model_forward", "unet_baseline_forward",
    "init_adapter_checkpoint", "init_unet_checkpoint",
    "predictor_from_checkpoint", "evenly_spaced_global_layers",
]
