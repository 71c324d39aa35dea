import dataclasses
import hashlib
import json
import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields

import settings
from errors import ConfigError

logger = logging.getLogger(__name__)

# fields that change what a checkpoint computes
MODEL_FIELDS = (
    'window', 'horizon', 'mode', 'hidden_dim', 'link_dim', 'out_hidden_dim', 'gnn_steps',
    'gnn_activation', 'fusion_relu', 'padding', 'smoothness', 'smoothness_end', 'dtype',
)


@dataclass
class RunConfig:
    data: str = None
    preset: str = None
    header: str = 'auto'  # 'auto' | 'yes' | 'no'
    timestamp: str = 'auto'
    missing: str = settings.MISSING_POLICY

    window: int = settings.WINDOW
    horizon: int = settings.HORIZON
    horizons: list = None  # sweep, e.g. settings.HORIZONS; overrides horizon
    mode: str = settings.FORECAST_MODE
    batch_size: int = settings.BATCH_SIZE
    train_frac: float = settings.TRAIN_FRAC
    val_frac: float = settings.VAL_FRAC
    test_frac: float = settings.TEST_FRAC
    scaler_policy: str = settings.SCALER_POLICY

    hidden_dim: int = None  # preset or settings.HIDDEN_DIM
    link_dim: int = settings.LINK_DIM
    out_hidden_dim: int = settings.OUT_HIDDEN_DIM
    gnn_steps: int = settings.GNN_STEPS
    gnn_activation: str = settings.GNN_ACTIVATION
    fusion_relu: bool = settings.FUSION_RELU
    padding: str = settings.PADDING
    smoothness: float = settings.SMOOTHNESS
    smoothness_end: float = settings.SMOOTHNESS_END
    sample_eval: bool = settings.SAMPLE_EVAL

    lr: float = settings.LEARNING_RATE
    epochs: int = settings.EPOCHS
    runs: int = settings.RUNS
    seed: int = settings.SEED
    dtype: str = settings.DTYPE
    grad_clip: float = settings.GRAD_CLIP
    checkpoint_every: int = settings.CHECKPOINT_EVERY
    resume: str = None  # checkpoint whose parameters and Adam moments start the run

    checkpoint: str = settings.CHECKPOINT_PATH
    metrics: str = settings.METRICS_PATH
    graphs: str = settings.GRAPHS_PATH

    def __post_init__(self):
        if self.hidden_dim is None:
            preset = settings.DATASET_PRESETS.get(self.preset or '', {})
            self.hidden_dim = preset.get('hidden_dim', settings.HIDDEN_DIM)
        self.validate()

    @property
    def splits(self):
        return self.train_frac, self.val_frac, self.test_frac

    @property
    def link_width(self):
        return self.link_dim or self.hidden_dim

    @property
    def out_width(self):
        return self.out_hidden_dim or self.hidden_dim

    def validate(self):
        checks = [
            (self.window >= 2, f'window must be >= 2, got {self.window}'),
            (self.horizon >= 1, f'horizon must be >= 1, got {self.horizon}'),
            (self.horizons is None or (len(self.horizons) > 0 and min(self.horizons) >= 1),
             f'horizons must be a non-empty list of values >= 1, got {self.horizons}'),
            (self.batch_size >= 1, f'batch_size must be >= 1, got {self.batch_size}'),
            (self.hidden_dim >= 1, f'hidden_dim must be >= 1, got {self.hidden_dim}'),
            (self.gnn_steps >= 1, f'gnn_steps must be >= 1, got {self.gnn_steps}'),
            (self.smoothness > 0, f'smoothness must be > 0, got {self.smoothness}'),
            (self.smoothness_end is None or self.smoothness_end > 0,
             f'smoothness_end must be > 0, got {self.smoothness_end}'),
            (self.lr > 0, f'lr must be > 0, got {self.lr}'),
            (self.epochs >= 1, f'epochs must be >= 1, got {self.epochs}'),
            (self.runs >= 1, f'runs must be >= 1, got {self.runs}'),
            (self.grad_clip is None or self.grad_clip > 0, f'grad_clip must be > 0, got {self.grad_clip}'),
            (min(self.splits) > 0, f'split fractions must be positive, got {self.splits}'),
            (abs(sum(self.splits) - 1) <= settings.SPLIT_TOL, f'split fractions must sum to 1, got {self.splits}'),
            (self.mode in ('single-step', 'multi-step'), f'unknown mode {self.mode!r}'),
            (self.scaler_policy in ('train', 'per-split'), f'unknown scaler_policy {self.scaler_policy!r}'),
            (self.padding in ('same', 'causal'), f'unknown padding {self.padding!r}'),
            (self.gnn_activation in ('relu', 'sigmoid'), f'unknown gnn_activation {self.gnn_activation!r}'),
            (self.missing in ('fill', 'error'), f'unknown missing policy {self.missing!r}'),
            (self.dtype in ('float32', 'float64'), f'unknown dtype {self.dtype!r}'),
            (self.header in ('auto', 'yes', 'no'), f'header must be auto/yes/no, got {self.header!r}'),
            (self.timestamp in ('auto', 'yes', 'no'), f'timestamp must be auto/yes/no, got {self.timestamp!r}'),
            (self.preset is None or self.preset in settings.DATASET_PRESETS, f'unknown preset {self.preset!r}'),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def model_dict(self):
        return {name: getattr(self, name) for name in MODEL_FIELDS}

    def config_hash(self):
        blob = json.dumps(self.model_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _known():
    return {f.name for f in fields(RunConfig)}


def read_toml(path):
    try:
        with open(path, 'rb') as f:
            table = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f'{path}: {e}') from e
    flat = {}
    for key, value in table.items():
        # one level of tables is allowed for grouping, e.g. [model]
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    unknown = sorted(set(flat) - _known())
    if unknown:
        raise ConfigError(f'{path}: unknown config key {unknown[0]!r}')
    return flat


def load_config(path=None, overrides=None):
    """settings defaults < TOML file (or $TIMEGNN_CONFIG) < explicit overrides."""
    values = {}
    path = path or os.environ.get(settings.CONFIG_ENV)
    if path:
        logger.debug('reading config %s', path)
        values.update(read_toml(path))
    for key, value in (overrides or {}).items():
        if key not in _known():
            raise ConfigError(f'unknown config key {key!r}')
        if value is not None:
            values[key] = value
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
