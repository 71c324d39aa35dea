import os
import sys

THREAD_VARS = 'OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'


def pin_threads(argv):
    # BLAS reads these once, when numpy is first imported
    if '--threads' in argv[:-1]:
        threads = argv[argv.index('--threads') + 1]
    elif argv[:1] == ['bench']:
        threads = '1'
    else:
        return
    for var in THREAD_VARS:
        os.environ[var] = threads


if __name__ == '__main__':
    pin_threads(sys.argv[1:])

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402

import numpy as np  # noqa: E402

import settings  # noqa: E402
from bench import bench_scaling, write_records  # noqa: E402
from config import load_config  # noqa: E402
from dataloader import apply_scaler, ingest_csv, make_windows  # noqa: E402
from errors import ConfigError, DataError, TimeGNNError  # noqa: E402
from graph_learner import dump_graphs  # noqa: E402
from trainer import evaluate, load_model, train_horizons, train_runs  # noqa: E402

# flag -> RunConfig field, shared by every subcommand that builds a config
CONFIG_FLAGS = {
    '--data': ('data', str), '--preset': ('preset', str), '--window': ('window', int),
    '--horizon': ('horizon', int), '--batch-size': ('batch_size', int), '--hidden-dim': ('hidden_dim', int),
    '--gnn-steps': ('gnn_steps', int), '--smoothness': ('smoothness', float),
    '--smoothness-end': ('smoothness_end', float), '--lr': ('lr', float), '--epochs': ('epochs', int),
    '--runs': ('runs', int), '--seed': ('seed', int), '--scaler-policy': ('scaler_policy', str),
    '--mode': ('mode', str), '--padding': ('padding', str), '--gnn-activation': ('gnn_activation', str),
    '--dtype': ('dtype', str), '--grad-clip': ('grad_clip', float), '--checkpoint': ('checkpoint', str),
    '--metrics': ('metrics', str), '--header': ('header', str), '--timestamp': ('timestamp', str),
    '--missing': ('missing', str), '--resume': ('resume', str),
}


class UsageError(TimeGNNError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def int_list(text):
    try:
        return [int(v) for v in text.split(',') if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got {text!r}') from None


def build_parser():
    parser = Parser(prog='timegnn', description='Temporal graph forecasting engine.')
    parser.add_argument('-v', '--verbose', action='store_true')
    parser.add_argument('-q', '--quiet', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=Parser)

    def with_config(p):
        p.add_argument('--config', help=f'TOML run config (default: ${settings.CONFIG_ENV})')
        for flag, (_, kind) in CONFIG_FLAGS.items():
            p.add_argument(flag, type=kind, default=None)
        p.add_argument('--fusion-relu', action='store_true', default=None)
        p.add_argument('--sample-eval', action='store_true', default=None)
        p.add_argument('--threads', type=int)
        return p

    p = with_config(sub.add_parser('train', help='train and write checkpoint + metrics JSON'))
    p.add_argument('--horizons', type=int_list, nargs='?', const=list(settings.HORIZONS),
                   help=f'one training sweep per horizon (bare flag: {",".join(map(str, settings.HORIZONS))})')

    p = with_config(sub.add_parser('eval', help='MSE/MAE of a checkpoint on a CSV'))
    p.add_argument('--dump-graphs', metavar='PATH')

    with_config(sub.add_parser('predict', help='forecast after the last window of a CSV'))

    p = with_config(sub.add_parser('bench', help='inference/epoch timing sweeps'))
    p.add_argument('--channels', type=int_list)
    p.add_argument('--windows', type=int_list)
    p.add_argument('--datasets', type=lambda t: [v for v in t.split(',') if v])
    p.add_argument('--reps', type=int, default=settings.BENCH_REPS)
    p.add_argument('--length', type=int, default=settings.BENCH_SERIES_LEN)
    p.add_argument('--out', default=settings.BENCH_PATH, help='output prefix for .csv and .json')

    p = with_config(sub.add_parser('dump-graphs', help='per-window theta/adjacency as JSON'))
    p.add_argument('--out', default=settings.GRAPHS_PATH)
    p.add_argument('--limit', type=int)
    return parser


class Engine:
    def __init__(self, args, stdout=None):
        self.args = args
        self.stdout = stdout or sys.stdout
        self.commands = {
            'train': self.train,
            'eval': self.eval,
            'predict': self.predict,
            'bench': self.bench,
            'dump-graphs': self.dump_graphs,
        }
        self.new_run()

    def new_run(self):
        args = self.args
        overrides = {field: getattr(args, flag[2:].replace('-', '_')) for flag, (field, _) in CONFIG_FLAGS.items()}
        overrides['fusion_relu'] = args.fusion_relu
        overrides['sample_eval'] = args.sample_eval
        overrides['horizons'] = getattr(args, 'horizons', None)
        self.config = load_config(args.config, overrides)

    def emit(self, payload):
        json.dump(payload, self.stdout, indent=2, default=float)
        self.stdout.write('\n')

    def write_json(self, path, payload):
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(payload, f, indent=2, default=float)

    # commands

    def train(self):
        if self.config.horizons:
            return self.train_horizons()
        results, summary = train_runs(self.config)
        payload = {
            'config': self.config.as_dict(),
            'runs': [report.to_dict() for _, report in results],
            'summary': summary,
        }
        if self.config.metrics:
            self.write_json(self.config.metrics, payload)
        self.emit({'summary': summary, 'checkpoint': self.config.checkpoint, 'metrics': self.config.metrics})

    def train_horizons(self):
        sweep = train_horizons(self.config)
        horizons = {
            str(h): {'horizon': h, 'checkpoint': run_config.checkpoint,
                     'runs': [report.to_dict() for _, report in results], 'summary': summary}
            for h, (run_config, results, summary) in sweep.items()
        }
        if self.config.metrics:
            self.write_json(self.config.metrics, {'config': self.config.as_dict(), 'horizons': horizons})
        self.emit({'summary': {h: entry['summary'] for h, entry in horizons.items()},
                   'checkpoints': {h: entry['checkpoint'] for h, entry in horizons.items()},
                   'metrics': self.config.metrics})

    def load(self):
        if not self.args.checkpoint:
            raise ConfigError('--checkpoint is required')
        model, scaler = load_model(self.args.checkpoint, self.config)
        if not self.config.data:
            raise ConfigError('--data is required')
        series = ingest_csv(self.config.data, self.config.header, self.config.timestamp, self.config.missing)
        if series.m != model.m:
            raise DataError(f'{series.source}: {series.m} channels, checkpoint expects {model.m}')
        return model, scaler, series

    def eval(self):
        model, scaler, series = self.load()
        result = evaluate(model, apply_scaler(scaler, series))
        if self.args.dump_graphs:
            self.write_graphs(model, apply_scaler(scaler, series), self.args.dump_graphs)
        self.emit({'mse': result.mse, 'mae': result.mae, 'windows': len(result.predictions),
                   'config': model.config.as_dict()})

    def predict(self):
        model, scaler, series = self.load()
        tau = model.config.window
        if len(series) < tau:
            raise DataError(f'{series.source}: {len(series)} rows, need at least window = {tau}')
        window = scaler.transform(series.values[-tau:])[None]
        # sampled graphs are keyed on the window start, as in evaluate
        scaled = model.predict(window, np.array([len(series) - tau]))[0]
        self.emit({'scaled': scaled.tolist(), 'forecast': scaler.inverse_transform(scaled).tolist(),
                   'channels': series.channels, 'config': model.config.as_dict()})

    def bench(self):
        args = self.args
        if not (args.channels or args.windows or args.datasets):
            args.channels = list(settings.BENCH_CHANNELS)
        records = bench_scaling(self.config, args.channels, args.windows, args.datasets, args.reps, args.length)
        frame = write_records(records, args.out, self.config)
        self.stdout.write(frame.to_csv(index=False))

    def write_graphs(self, model, segment, path, limit=None):
        config = model.config
        records = []
        for batch in make_windows(segment, config.window, config.horizon, config.batch_size, config.mode):
            _, graph = model.forward(batch.inputs, batch.starts, train=False)
            for k, start in enumerate(batch.starts):
                records.append({'window_index': int(start), 'edges': graph.edges(k)})
            if limit is not None and len(records) >= limit:
                break
        dump_graphs(records[:limit], path)
        return len(records[:limit])

    def dump_graphs(self):
        model, scaler, series = self.load()
        count = self.write_graphs(model, apply_scaler(scaler, series), self.args.out, self.args.limit)
        self.emit({'graphs': count, 'path': self.args.out, 'config': model.config.as_dict()})

    def run(self):
        self.commands[self.args.command]()


def setup_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=settings.LOG_FORMAT, stream=sys.stderr)


def cli(argv=None, stdout=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.verbose, args.quiet)
        np.seterr(over='ignore', under='ignore')
        Engine(args, stdout).run()
    except UsageError as e:
        print(f'error: UsageError: {e}', file=sys.stderr)
        return 2
    except (TimeGNNError, OSError) as e:
        print(f'error: {type(e).__name__}: {str(e).splitlines()[0] if str(e) else ""}', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(cli())
