"""Dynamic graph message passing layers with sampled linear attention.

A float64 verification-first implementation: a small reverse-mode autodiff
engine, dilated-grid sampling with learned walks, dynamic-filter message
passing, a sampled-attention Transformer block and backbone family, plus
brute-force oracles, gradient checks and analytic complexity accounting.
"""

from .backbone import BackboneSpec, build_backbone, forward_features
from .dgmn import DgmnConfig, DgmnModule, DynamicKernel, dgmn_forward, dmc, predict_dynamic_kernel
from .dgmn2 import Dgmn2Attention, Dgmn2Block, Dgmn2Config, RelPosTable, dgmn2_attention, dgmn2_block, dgmn2_sample, relpos_bias
from .errors import ConfigError, DgmnError, GraphError, ShapeError, TrainingError
from .rng import SplitMix
from .sampler import SamplingField, WalkPredictor, bilinear_sample, predict_walks, uniform_grid
from .tensor import Tensor, backward, finite_diff_grad
from .training import SyntheticTask, make_dataset, train

__version__ = "0.1.0"

__all__ = [
    "BackboneSpec",
    "ConfigError",
    "DgmnConfig",
    "DgmnError",
    "DgmnModule",
    "Dgmn2Attention",
    "Dgmn2Block",
    "Dgmn2Config",
    "DynamicKernel",
    "GraphError",
    "RelPosTable",
    "SamplingField",
    "ShapeError",
    "SplitMix",
    "SyntheticTask",
    "Tensor",
    "TrainingError",
    "WalkPredictor",
    "backward",
    "bilinear_sample",
    "build_backbone",
    "dgmn_forward",
    "dgmn2_attention",
    "dgmn2_block",
    "dgmn2_sample",
    "dmc",
    "finite_diff_grad",
    "forward_features",
    "make_dataset",
    "predict_dynamic_kernel",
    "predict_walks",
    "relpos_bias",
    "train",
    "uniform_grid",
]
