"""Self-supervised pre-training for multi-entity spatiotemporal event streams."""

from .autodiff import Tensor, grad_check
from .backbone import BackboneConfig, CliqueTensor, FactorizedBackbone
from .config import RunConfig, load_config, load_profile
from .cooc import CoocIndex, PeerSet, build_index, retrieve_peers
from .featencode import (
    ActivityProjection,
    EventFeaturizer,
    PrototypeTable,
    Space2VecEncoder,
    Time2VecEncoder,
)
from .model import EventStreamModel
from .objectives import (
    AnomalyHead,
    GmmTimeHead,
    LossConfig,
    NoiseHead,
    PoiHead,
    PrototypeProjector,
    joint_loss,
    noise_loss,
    prototype_loss,
)
from .params import ParamRegistry, load_checkpoint, save_checkpoint
from .perturb import PerturbConfig, PerturbedWindow, corrupt, perturb_location, perturb_time, swap_corrupt
from .schema import (
    ContextRecord,
    CorpusSplit,
    DataError,
    EventRecord,
    EventWindow,
    Substrate,
    chunk_windows,
    load_corpus,
    temporal_split,
)
from .synthgen import GenConfig, generate, generate_full, plant_inserted_visits
from .train import AdamW, EmaEarlyStop, OptimConfig, cosine_lr, finetune, pretrain

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "ActivityProjection",
    "AnomalyHead",
    "BackboneConfig",
    "CliqueTensor",
    "ContextRecord",
    "CoocIndex",
    "CorpusSplit",
    "DataError",
    "EmaEarlyStop",
    "EventFeaturizer",
    "EventRecord",
    "EventStreamModel",
    "EventWindow",
    "FactorizedBackbone",
    "GenConfig",
    "GmmTimeHead",
    "LossConfig",
    "NoiseHead",
    "OptimConfig",
    "ParamRegistry",
    "PeerSet",
    "PerturbConfig",
    "PerturbedWindow",
    "PoiHead",
    "PrototypeProjector",
    "PrototypeTable",
    "RunConfig",
    "Space2VecEncoder",
    "Substrate",
    "Tensor",
    "Time2VecEncoder",
    "build_index",
    "chunk_windows",
    "corrupt",
    "cosine_lr",
    "finetune",
    "generate",
    "generate_full",
    "grad_check",
    "joint_loss",
    "load_checkpoint",
    "load_config",
    "load_corpus",
    "load_profile",
    "noise_loss",
    "perturb_location",
    "perturb_time",
    "plant_inserted_visits",
    "pretrain",
    "prototype_loss",
    "retrieve_peers",
    "save_checkpoint",
    "swap_corrupt",
    "temporal_split",
]
