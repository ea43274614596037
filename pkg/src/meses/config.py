"""Run configuration: one static config with named profile overlays.

Every pipeline stage resolves a fully-specified RunConfig, embeds it in its
output manifest, and stamps outputs with the config hash so downstream
stages can refuse mismatched inputs.  Profiles `desk` (CPU-minutes scale)
and `paper` (full-scale settings) ship with the package; a user config file
is a JSON object with the same keys as ``RunConfig.to_dict``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .schema import DataError
from .synthgen import GenConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0

    # data
    window: int = 16  # events per window (T)
    train_frac: float = 0.9
    val_frac_of_train: float = 0.2

    # generator
    gen: GenConfig = field(
        default_factory=lambda: GenConfig(
            n_entities=50,
            n_contexts=40,
            n_activities=6,
            signature_size=4,
            events_per_entity=400,
            hotspot_count=5,
            hour_profile_spread=1.5,
            anomaly_rate=0.05,
            seed=0,
        )
    )

    # backbone and encoders
    d: int = 40
    L: int = 2
    H: int = 2
    C: int = 4
    d_ff: int | None = None  # None = d
    n_scales: int = 8
    lambda_min: float = 0.01
    lambda_max: float = 2.0
    period: str = "daily"
    h: int = 8  # prototype latent width
    h_proj: int | None = None  # projector hidden width, None = d
    bypass_cooc: bool = False
    prototype_as_input: bool = True  # off = the prototype-input ablation arm
    min_overlap: float = 0.0

    # perturbation operator
    p_norm: float = 0.7
    flag_rate: float = 0.3
    modes: tuple[str, ...] = ("loc", "time", "both")
    perturb_variant: str = "structural"
    swap_prob: float = 0.3

    # losses
    gamma: float = 0.5
    beta: float = 0.07
    prototype_loss_enabled: bool = True  # off = the prototype-loss ablation arm
    n_neg: int = 256
    poi_temperature: float = 0.1
    gmm_components: int = 3

    # optimization
    peak_lr: float = 2e-4
    eta_min: float = 1e-6
    weight_decay: float = 1e-3
    clip_norm: float = 1.0
    batch_size: int = 64
    max_epochs: int = 40
    patience: int = 10
    ema_factor: float = 0.1
    finetune_max_epochs: int = 15
    finetune_patience: int = 5

    def validate(self) -> None:
        F = 5 if self.prototype_as_input else 4
        if self.d % F:
            raise DataError(f"d={self.d} must be divisible by F={F}")
        d_f = self.d // F
        if d_f % self.H:
            raise DataError(f"d_f={d_f} must be divisible by H={self.H}")
        if self.h > d_f:
            raise DataError(f"h={self.h} must not exceed d_f={d_f}")
        if self.window < 1 or self.C < 1 or self.L < 0:
            raise DataError("window, C >= 1 and L >= 0 required")
        if self.period not in ("daily", "weekly", "none"):
            raise DataError(f"unknown period: {self.period}")
        self.gen.validate()

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["modes"] = list(self.modes)
        return out

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        if "gen" in data and isinstance(data["gen"], dict):
            data["gen"] = GenConfig(**data["gen"])
        if "modes" in data:
            data["modes"] = tuple(data["modes"])
        return RunConfig(**data)

    def with_overrides(self, **kwargs) -> "RunConfig":
        merged = self.to_dict()
        for key, value in kwargs.items():
            if value is None:
                continue
            merged[key] = value
        return RunConfig.from_dict(merged)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()[:16]


def load_profile(name: str) -> RunConfig:
    """Load one of the packaged profiles (`desk`, `paper`)."""
    path = resources.files("meses").joinpath(f"profiles/{name}.json")
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError as err:
        raise DataError(f"unknown profile: {name}") from err
    return RunConfig.from_dict(json.loads(raw))


def load_config(path=None, profile: str | None = None, **overrides) -> RunConfig:
    """Resolve profile defaults, then a config file, then CLI overrides."""
    cfg = load_profile(profile) if profile else RunConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            file_data = json.load(fh)
        merged = cfg.to_dict()
        for key, value in file_data.items():
            merged[key] = value
        cfg = RunConfig.from_dict(merged)
    cfg = cfg.with_overrides(**overrides)
    cfg.validate()
    return cfg
