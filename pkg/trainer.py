import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

import checkpoint
from config import RunConfig
from dataloader import (ScalerState, SplitSpec, check_preset, count_windows, ingest_csv, make_windows,
                        scale_splits, split)
from errors import CheckpointError, DataError, TrainingError
from graph_learner import smoothness_at
from model import TimeGNN
from optimizer import Adam, clip_grad_norm
from tensor import Tensor, absolute, backward, mean, sub

logger = logging.getLogger(__name__)


@dataclass
class DataBundle:
    train: object
    val: object
    test: object
    scaler: object

    @property
    def channels(self):
        return self.train.m


@dataclass
class EvalResult:
    mse: float
    mae: float
    predictions: np.ndarray
    targets: np.ndarray
    seconds: float


@dataclass
class MetricsReport:
    train_loss: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = None
    test_mse: float = None
    test_mae: float = None
    inference_seconds: float = None
    seed: int = None

    def to_dict(self):
        return asdict(self)


def mae_loss(pred, target):
    target = target if isinstance(target, Tensor) else Tensor(target, dtype=pred.dtype)
    return mean(absolute(sub(pred, target)))


def _pair(pred, target):
    pred = pred.values if isinstance(pred, Tensor) else np.asarray(pred)
    target = target.values if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != target.shape:
        raise DataError(f'prediction shape {pred.shape} does not match target {target.shape}')
    return pred.astype(np.float64), target.astype(np.float64)


def mae_metric(pred, target):
    pred, target = _pair(pred, target)
    return float(np.abs(pred - target).mean())


def mse_metric(pred, target):
    pred, target = _pair(pred, target)
    return float(((pred - target) ** 2).mean())


def first_non_finite(named):
    for name, t in named.items():
        values = t.values if isinstance(t, Tensor) else t
        if not np.isfinite(values).all():
            return name
    return None


def load_series(config):
    if not config.data:
        raise DataError('no dataset given (set data in the config or pass --data)')
    return ingest_csv(config.data, config.header, config.timestamp, config.missing)


def prepare_data(config, series=None):
    if series is None:
        series = load_series(config)
    check_preset(series, config.preset)
    spec = SplitSpec(*config.splits)
    parts, scaler = scale_splits(split(series, spec, config.window, config.horizon), config.scaler_policy)
    logger.info('data %s: T=%d m=%d splits=%s', series.source, len(series), series.m,
                '/'.join(str(len(p)) for p in parts))
    return DataBundle(*parts, scaler)


def evaluate(model, segment, batch_size=None):
    config = model.config
    if segment.m != model.m:
        raise DataError(f'{segment.source}: {segment.m} channels, model expects {model.m}')
    preds, targets = [], []
    seconds = 0.0
    for batch in make_windows(segment, config.window, config.horizon, batch_size or config.batch_size,
                              config.mode):
        start = time.perf_counter()
        preds.append(model.predict(batch.inputs, batch.starts))
        seconds += time.perf_counter() - start
        targets.append(batch.targets)
    pred, target = np.concatenate(preds), np.concatenate(targets)
    return EvalResult(mse_metric(pred, target), mae_metric(pred, target), pred, target, seconds)


class Trainer:
    def __init__(self, config, data, seed=None):
        self.config = config
        self.data = data
        self.seed = config.seed if seed is None else seed
        self.model = TimeGNN(config.replace(seed=self.seed), data.channels)
        self.optimizer = Adam(self.model.params, lr=config.lr)
        self.report = MetricsReport(seed=self.seed)
        self.best_state = None
        self.best_val = np.inf
        self.start_epoch = 0
        if config.resume:
            self.resume(config.resume)

    def resume(self, path):
        """Continue from a checkpoint's parameters and Adam moments."""
        state = checkpoint.load(path)
        if state.metadata.get('config_hash') != self.model.config.config_hash():
            raise CheckpointError(f'{path}: model config differs from the run being resumed')
        self.model.load_state(state)
        if state.optimizer:
            self.optimizer.state.load(state.optimizer)
        self.start_epoch = state.metadata.get('epoch', -1) + 1
        logger.info('resuming from %s at epoch %d, optimizer step %d', path, self.start_epoch + 1,
                    self.optimizer.state.step)

    def train_epoch(self, epoch):
        config = self.config
        model = self.model
        # the anneal runs over this invocation's epochs, shuffles and noise use the absolute epoch
        s = smoothness_at(config.smoothness, config.smoothness_end, epoch - self.start_epoch, config.epochs)
        total, count = 0.0, 0
        for batch in make_windows(self.data.train, config.window, config.horizon, config.batch_size,
                                  config.mode, shuffle=True, seed=self.seed, epoch=epoch):
            pred, _ = model.forward(batch.inputs, batch.starts, epoch, s, train=True)
            loss = mae_loss(pred, batch.targets)
            if not np.isfinite(loss.values):
                bad = first_non_finite({**model.params, 'prediction': pred}) or 'loss'
                raise TrainingError(f'epoch {epoch}: non-finite loss, first non-finite tensor: {bad}')
            self.optimizer.zero_grad()
            backward(loss)
            clip_grad_norm(model.params, config.grad_clip)
            self.optimizer.step()
            total += loss.item() * len(batch)
            count += len(batch)
        return total / count

    def snapshot(self, epoch):
        state = self.model.state(self.data.scaler)
        state.metadata['epoch'] = epoch
        state.optimizer = self.optimizer.state.to_dict()
        return state

    def flush(self):
        if self.config.checkpoint and self.best_state is not None:
            checkpoint.save(self.best_state, self.config.checkpoint)

    def fit(self):
        config = self.config
        report = self.report
        for epoch in range(self.start_epoch, self.start_epoch + config.epochs):
            start = time.perf_counter()
            train_loss = self.train_epoch(epoch)
            seconds = time.perf_counter() - start
            val = evaluate(self.model, self.data.val)
            report.train_loss.append(train_loss)
            report.val_mse.append(val.mse)
            report.val_mae.append(val.mae)
            report.epoch_seconds.append(seconds)
            improved = val.mae < self.best_val
            if improved:
                self.best_val = val.mae
                self.best_state = self.snapshot(epoch)
                report.best_epoch = len(report.val_mae) - 1
            logger.info('epoch %3d  train %.5f  val mae %.5f mse %.5f  %.1fs%s', epoch + 1, train_loss,
                        val.mae, val.mse, seconds, '  *' if improved else '')
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                self.flush()
        self.model.load_state(self.best_state)
        test = evaluate(self.model, self.data.test)
        report.test_mse, report.test_mae = test.mse, test.mae
        report.inference_seconds = test.seconds
        logger.info('best epoch %d  test mae %.5f mse %.5f', report.best_epoch + 1, test.mae, test.mse)
        self.flush()
        return self.best_state, report


def train(config, data=None, seed=None):
    data = data or prepare_data(config)
    if count_windows(len(data.train), config.window, config.horizon) == 0:
        raise DataError('training segment too short for one window')
    return Trainer(config, data, seed).fit()


def summarize(reports):
    """mean and half-range of the test metrics over runs."""
    summary = {}
    for key in ('test_mse', 'test_mae'):
        values = np.array([getattr(r, key) for r in reports])
        summary[key] = {'mean': float(values.mean()), 'half_range': float((values.max() - values.min()) / 2)}
    return summary


def suffixed(path, tag):
    root, ext = os.path.splitext(path)
    return f'{root}.{tag}{ext}'


def train_runs(config, data=None):
    data = data or prepare_data(config)
    results = []
    for i in range(config.runs):
        run_config = config
        if config.runs > 1 and config.checkpoint:
            run_config = config.replace(checkpoint=suffixed(config.checkpoint, f'run{i}'))
        results.append(train(run_config, data, seed=config.seed + i))
    return results, summarize([report for _, report in results])


def train_horizons(config, series=None):
    """train_runs once per horizon in config.horizons, sharing one ingested series.

    Returns {horizon: (run config, [(state, report)], summary)}; checkpoints get an .h<N> suffix.
    """
    series = series if series is not None else load_series(config)
    sweep = {}
    for h in config.horizons:
        run_config = config.replace(horizon=h, horizons=None)
        if config.checkpoint:
            run_config = run_config.replace(checkpoint=suffixed(config.checkpoint, f'h{h}'))
        results, summary = train_runs(run_config, prepare_data(run_config, series))
        logger.info('horizon %d: test mae %.5f mse %.5f', h, summary['test_mae']['mean'], summary['test_mse']['mean'])
        sweep[h] = run_config, results, summary
    return sweep


def load_model(path, config=None):
    """Rebuild a model and its scaler from a checkpoint."""
    state = checkpoint.load(path)
    meta = state.metadata
    base = config.as_dict() if config is not None else {}
    base.update(meta['config'])
    base['seed'] = meta['seed']
    model = TimeGNN(RunConfig(**base), meta['m']).load_state(state)
    scaler = ScalerState.from_dict(meta['scaler']) if 'scaler' in meta else None
    return model, scaler
