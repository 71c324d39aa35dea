import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import settings
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MISSING_TOKENS = {'', 'nan', 'NaN', 'NA', 'N/A', 'null', 'None'}
TIMESTAMP_NAMES = {'date', 'time', 'timestamp', 'datetime'}


@dataclass
class RawSeries:
    values: np.ndarray  # T x m
    channels: list
    source: str = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f'{self.source}: series must be 2-D, got shape {self.values.shape}')
        if len(self.channels) != self.values.shape[1]:
            raise DataError(f'{self.source}: {len(self.channels)} channel names for {self.values.shape[1]} columns')

    def __len__(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    def segment(self, start, stop, label=None):
        return RawSeries(self.values[start:stop], list(self.channels), label or self.source)

    def with_values(self, values):
        return RawSeries(values, list(self.channels), self.source)


@dataclass
class SplitSpec:
    train: float = settings.TRAIN_FRAC
    val: float = settings.VAL_FRAC
    test: float = settings.TEST_FRAC

    def __post_init__(self):
        fracs = self.train, self.val, self.test
        if min(fracs) <= 0:
            raise ConfigError(f'split fractions must be positive, got {fracs}')
        if abs(sum(fracs) - 1) > settings.SPLIT_TOL:
            raise ConfigError(f'split fractions must sum to 1, got {fracs}')


@dataclass
class ScalerState:
    mean: np.ndarray
    std: np.ndarray
    policy: str = settings.SCALER_POLICY

    def transform(self, values):
        # channels whose std hit the floor are constant: they scale to exactly 0
        live = self.std > settings.STD_MIN
        return np.where(live, (np.asarray(values) - self.mean) / self.std, 0.0)

    def inverse_transform(self, values):
        return np.asarray(values) * self.std + self.mean

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'std': self.std.tolist(), 'policy': self.policy}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d['mean'], dtype=np.float64), np.asarray(d['std'], dtype=np.float64), d['policy'])


@dataclass
class WindowBatch:
    inputs: np.ndarray  # B x tau x m
    targets: np.ndarray  # B x m, or B x h x m in multi-step mode
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    def __len__(self):
        return self.inputs.shape[0]


# ingestion

def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _decide(flag, guess):
    return guess if flag == 'auto' else flag == 'yes'


def ingest_csv(path, header='auto', timestamp='auto', missing=settings.MISSING_POLICY, min_length=None):
    """Read a comma-delimited table of timesteps x channels."""
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                          skipinitialspace=True, compression='infer').fillna('')
    except pd.errors.EmptyDataError:
        raise DataError(f'{path}: file is empty') from None
    except pd.errors.ParserError as e:
        raise DataError(f'{path}: {e}') from None
    except UnicodeDecodeError as e:
        raise DataError(f'{path}: not UTF-8 text ({e.reason})') from None

    first = [c.strip() for c in raw.iloc[0]]
    # a leading timestamp is not evidence of a header row
    tail = first[1:] if len(first) > 1 else first
    has_header = _decide(header, any(c not in MISSING_TOKENS and not _is_number(c) for c in tail))
    names = first if has_header else None
    body = raw.iloc[1:] if has_header else raw
    row_offset = 2 if has_header else 1
    if body.empty:
        raise DataError(f'{path}: no data rows')

    lead = body.iloc[0, 0].strip()
    guess_ts = (names is not None and names[0].lower() in TIMESTAMP_NAMES) or (
        lead not in MISSING_TOKENS and not _is_number(lead))
    drop_ts = _decide(timestamp, guess_ts) and body.shape[1] > 1
    if drop_ts:
        body = body.iloc[:, 1:]
        names = names[1:] if names else None
    col_offset = 2 if drop_ts else 1

    cells = body.apply(lambda col: col.str.strip())
    blank = cells.isin(MISSING_TOKENS)
    numbers = cells.apply(pd.to_numeric, errors='coerce')
    bad = numbers.isna() & ~blank
    if bad.values.any():
        r, c = np.argwhere(bad.values)[0]
        raise DataError(f'{path}: unparseable cell {cells.iat[r, c]!r} '
                        f'at row {r + row_offset}, column {c + col_offset}')

    numbers = numbers.astype(np.float64)
    gaps = numbers.isna()
    if gaps.values.any():
        if missing == 'error':
            r, c = np.argwhere(gaps.values)[0]
            raise DataError(f'{path}: missing value at row {r + row_offset}, column {c + col_offset}')
        logger.info('%s: filling %d missing cells', path, int(gaps.values.sum()))
        numbers = numbers.ffill().bfill()
        if numbers.isna().values.any():
            c = int(np.argwhere(numbers.isna().values)[0][1])
            raise DataError(f'{path}: column {c + col_offset} has no values to fill from')
    if not np.isfinite(numbers.values).all():
        raise DataError(f'{path}: non-finite values after ingestion')

    channels = names or [f'ch{i}' for i in range(numbers.shape[1])]
    series = RawSeries(numbers.to_numpy(), list(channels), str(path))
    if min_length is not None and len(series) < min_length:
        raise DataError(f'{path}: {len(series)} rows, need at least {min_length}')
    logger.debug('ingested %s: T=%d m=%d', path, len(series), series.m)
    return series


def check_preset(series, preset):
    if preset is None:
        return
    expected = settings.DATASET_PRESETS[preset]['channels']
    if series.m != expected:
        logger.warning('%s: preset %s expects %d channels, file has %d', series.source, preset, expected, series.m)


# splitting and scaling

def split_lengths(total, spec):
    train = int(np.floor(total * spec.train + settings.SPLIT_TOL))
    val = int(np.floor(total * spec.val + settings.SPLIT_TOL))
    return train, val, total - train - val


def split(series, spec, window, horizon):
    lengths = split_lengths(len(series), spec)
    need = window + horizon
    cuts = np.cumsum((0,) + lengths)
    parts = []
    for label, start, stop in zip(('train', 'val', 'test'), cuts[:-1], cuts[1:]):
        if stop - start < need:
            raise DataError(f'{label} segment has {stop - start} rows, need window + horizon = {need}')
        parts.append(series.segment(start, stop, f'{series.source}[{label}]'))
    return tuple(parts)


def fit_scaler(segment, policy=settings.SCALER_POLICY):
    if len(segment) == 0:
        raise DataError(f'{segment.source}: cannot fit a scaler on an empty segment')
    mean = segment.values.mean(axis=0)
    std = np.maximum(segment.values.std(axis=0), settings.STD_MIN)
    return ScalerState(mean, std, policy)


def apply_scaler(state, segment):
    if segment.m != len(state.mean):
        raise DataError(f'{segment.source}: {segment.m} channels, scaler fitted on {len(state.mean)}')
    return segment.with_values(state.transform(segment.values))


def scale_splits(parts, policy=settings.SCALER_POLICY):
    """Returns the scaled segments and the scaler that belongs to the training segment."""
    if policy == 'train':
        state = fit_scaler(parts[0], policy)
        return tuple(apply_scaler(state, p) for p in parts), state
    states = [fit_scaler(p, policy) for p in parts]
    return tuple(apply_scaler(s, p) for s, p in zip(states, parts)), states[0]


# windows

def count_windows(length, window, horizon):
    return max(length - window - horizon + 1, 0)


def window_view(values, window):
    # (T - window + 1) x window x m, no copy
    return np.lib.stride_tricks.sliding_window_view(values, window, axis=0).swapaxes(-1, -2)


def targets_for(values, starts, window, horizon, mode):
    if mode == 'single-step':
        return values[starts + window + horizon - 1]
    offsets = np.arange(horizon)
    return values[starts[:, None] + window + offsets[None, :]]


def epoch_order(n, seed, epoch):
    return np.random.default_rng([seed, epoch]).permutation(n)


def make_windows(segment, window, horizon, batch_size, mode=settings.FORECAST_MODE,
                 shuffle=False, seed=settings.SEED, epoch=0):
    values = segment.values if isinstance(segment, RawSeries) else np.asarray(segment)
    n = count_windows(len(values), window, horizon)
    if n == 0:
        raise DataError(f'{len(values)} rows, need window + horizon = {window + horizon}')
    if mode not in ('single-step', 'multi-step'):
        raise ConfigError(f'unknown mode {mode!r}')
    views = window_view(values, window)
    starts = epoch_order(n, seed, epoch) if shuffle else np.arange(n)
    for i in range(0, n, batch_size):
        idx = starts[i:i + batch_size]
        yield WindowBatch(np.ascontiguousarray(views[idx]), targets_for(values, idx, window, horizon, mode), idx)


# synthetic data

def sine_series(length, channels, period=50.0, seed=settings.SEED, noise=0.0):
    rng = np.random.default_rng(seed)
    t = np.arange(length)[:, None]
    phase = rng.uniform(0, 2 * np.pi, size=channels)
    values = np.sin(2 * np.pi * t / period + phase) + noise * rng.standard_normal((length, channels))
    return RawSeries(values, [f'sin{i}' for i in range(channels)], 'synthetic:sine')


def random_walk_series(length, channels, seed=settings.SEED):
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.standard_normal((length, channels)), axis=0)
    return RawSeries(values, [f'rw{i}' for i in range(channels)], 'synthetic:random-walk')
