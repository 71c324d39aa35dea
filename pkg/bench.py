import json
import logging
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass

import pandas as pd

import settings
from dataloader import ingest_csv, make_windows, random_walk_series
from errors import DataError
from graph_learner import pair_count
from model import TimeGNN
from trainer import Trainer, prepare_data

logger = logging.getLogger(__name__)


@dataclass
class BenchRecord:
    dataset: str
    m: int
    tau: int
    infer_ms: float  # median per batch over the eval split
    epoch_s: float
    reps: int
    nodes: int
    pairs: int
    hardware: str = ''
    skipped: str = None

    def row(self):
        return [getattr(self, c) for c in settings.BENCH_COLUMNS]


def hardware_note():
    threads = os.environ.get('OMP_NUM_THREADS', 'default')
    return f'{platform.machine()} {platform.processor() or "cpu"} python {platform.python_version()} threads={threads}'


def time_inference(model, scaler, raw_segment, config, reps):
    """Median over reps of the mean per-batch time (ms): scaler transform + forward pass."""
    batches = [b.inputs for b in make_windows(raw_segment, config.window, config.horizon,
                                              config.batch_size, config.mode)]
    model.predict(scaler.transform(batches[0]))  # warm-up
    per_batch = []
    for _ in range(reps):
        start = time.perf_counter()
        for inputs in batches:
            model.predict(scaler.transform(inputs))
        per_batch.append((time.perf_counter() - start) / len(batches) * 1000)
    return statistics.median(per_batch)


def time_epoch(config, data):
    trainer = Trainer(config, data)
    start = time.perf_counter()
    trainer.train_epoch(0)
    return time.perf_counter() - start


def bench_point(config, series, label, reps):
    tau, m = config.window, series.m
    try:
        data = prepare_data(config, series)
    except DataError as e:
        logger.warning('skipping %s tau=%d: %s', label, tau, e)
        return BenchRecord(label, m, tau, None, None, 0, tau, pair_count(tau), hardware_note(), str(e))
    raw_test = series.segment(len(series) - len(data.test), len(series))
    model = TimeGNN(config, m)
    infer_ms = time_inference(model, data.scaler, raw_test, config, reps)
    epoch_s = time_epoch(config, data)
    logger.info('%s m=%d tau=%d: %.2f ms/batch, %.2f s/epoch', label, m, tau, infer_ms, epoch_s)
    return BenchRecord(label, m, tau, infer_ms, epoch_s, reps, tau, pair_count(tau), hardware_note())


def bench_scaling(config, channels=None, windows=None, files=None, reps=settings.BENCH_REPS,
                  length=settings.BENCH_SERIES_LEN):
    """One record per sweep point: channel counts, window sizes, or dataset files."""
    reps = max(reps, 3)
    records = []
    if channels:
        for m in channels:
            series = random_walk_series(length, m, config.seed)
            records.append(bench_point(config, series, f'synthetic-m{m}', reps))
    if windows:
        if config.data:
            base = ingest_csv(config.data, config.header, config.timestamp, config.missing)
            label = os.path.basename(config.data)
        else:
            m = settings.BENCH_CHANNELS[0]
            if config.preset:
                m = settings.DATASET_PRESETS[config.preset]['channels']
            base = random_walk_series(length, m, config.seed)
            label = f'synthetic-m{m}'
        for tau in windows:
            records.append(bench_point(config.replace(window=tau), base, label, reps))
    for path in files or ():
        series = ingest_csv(path, config.header, config.timestamp, config.missing)
        records.append(bench_point(config, series, os.path.basename(path), reps))
    return records


def write_records(records, prefix, config=None):
    folder = os.path.dirname(prefix)
    if folder:
        os.makedirs(folder, exist_ok=True)
    frame = pd.DataFrame([r.row() for r in records], columns=list(settings.BENCH_COLUMNS))
    frame.to_csv(f'{prefix}.csv', index=False)
    payload = {'units': {'infer_ms': 'ms', 'epoch_s': 's'}, 'records': [asdict(r) for r in records]}
    if config is not None:
        payload['config'] = config.as_dict()
    with open(f'{prefix}.json', 'w') as f:
        json.dump(payload, f, indent=2)
    return frame
