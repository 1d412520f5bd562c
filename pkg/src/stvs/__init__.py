"""Spatiotemporal video saliency engine.

A from-scratch 3-frame saliency network built around a lightweight
temporal module (sequential temporal convolutions with fast cyclic
padding and a cross-frame channel shuffle), a recurrent UNet-style
decoder with multi-dilation attention, saliency metrics, gradient-checked
training support at desk scale, and oracle-verified benchmarks.
"""

from .attention import AttentionWeights, attention_forward, attention_inject
from .bench import (BenchReport, bench_conv3d, bench_forward, bench_padding,
                    bench_shuffle, naive_cyclic_conv3d, naive_shuffle)
from .media import FrameClip, clip_iter, hflip_clip, read_image, resize_to, write_gray
from .metrics import EvalRecord, evaluate_dataset, f_max, mae, s_measure
from .network import (NetworkConfig, NetworkWeights, SaliencyResult, WeightStore,
                      decoder_stage, encoder_forward, init_weights, load_weights,
                      network_forward, save_weights)
from .nn_ops import (Conv2dWeights, Conv3dWeights, conv2d, conv3d_window, maxpool2,
                     upsample_bilinear)
from .temporal import (PaddingPolicy, TemporalBlock, TemporalModuleWeights,
                       cyclic_expand, residual_fix, temporal_module_forward,
                       temporal_shuffle, temporal_shuffle_inverse, tm_conv3d_layer)
from .train import (GradTape, SgdState, bce_loss, fd_gradcheck, sgd_step,
                    tm_overfit_demo)

__version__ = "0.1.0"

__all__ = [
    "AttentionWeights", "attention_forward", "attention_inject",
    "BenchReport", "bench_conv3d", "bench_forward", "bench_padding", "bench_shuffle",
    "naive_cyclic_conv3d", "naive_shuffle",
    "FrameClip", "clip_iter", "hflip_clip", "read_image", "resize_to", "write_gray",
    "EvalRecord", "evaluate_dataset", "f_max", "mae", "s_measure",
    "NetworkConfig", "NetworkWeights", "SaliencyResult", "WeightStore",
    "decoder_stage", "encoder_forward", "init_weights", "load_weights",
    "network_forward", "save_weights",
    "Conv2dWeights", "Conv3dWeights", "conv2d", "conv3d_window", "maxpool2",
    "upsample_bilinear",
    "PaddingPolicy", "TemporalBlock", "TemporalModuleWeights", "cyclic_expand",
    "residual_fix", "temporal_module_forward", "temporal_shuffle",
    "temporal_shuffle_inverse", "tm_conv3d_layer",
    "GradTape", "SgdState", "bce_loss", "fd_gradcheck", "sgd_step", "tm_overfit_demo",
]
