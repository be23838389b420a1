from .layers import (
    Attention,
    BatchNorm,
    Conv,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    RngHolder,
    init_parameters,
    kaiming_uniform,
)
from .densenet import DenseBlock, DenseLayer, DenseNet3dBranch, Transition
from .networks import (
    FusionNet,
    ModelOutput,
    MriFeatureExtractor,
    MriHybridNet,
    UsResNet50Net,
    build_model,
)
from .profiles import MICRO, PAPER, ScaleProfile, get_profile
from .resnet import Bottleneck, ResNet50Trunk
from .vit import EncoderBlock, Vit3dBranch

__all__ = [
    "Module", "ModuleList", "Conv", "Linear", "BatchNorm", "LayerNorm",
    "Dropout", "Attention", "RngHolder", "init_parameters", "kaiming_uniform",
    "DenseLayer", "DenseBlock", "Transition", "DenseNet3dBranch",
    "EncoderBlock", "Vit3dBranch", "Bottleneck", "ResNet50Trunk",
    "ModelOutput", "MriFeatureExtractor", "MriHybridNet", "UsResNet50Net",
    "FusionNet", "build_model", "ScaleProfile", "get_profile", "PAPER", "MICRO",
]
