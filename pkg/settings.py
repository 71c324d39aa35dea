# run defaults
WINDOW = 96
HORIZON = 1
HORIZONS = 1, 3, 6, 9
BATCH_SIZE = 16
SPLITS = TRAIN_FRAC, VAL_FRAC, TEST_FRAC = 0.7, 0.1, 0.2
FORECAST_MODE = 'single-step'  # or 'multi-step'
SCALER_POLICY = 'train'  # or 'per-split'
MISSING_POLICY = 'fill'  # or 'error'

# model
HIDDEN_DIM = 64
LINK_DIM = None  # None -> HIDDEN_DIM
OUT_HIDDEN_DIM = None  # None -> HIDDEN_DIM
GNN_STEPS = 3
GNN_ACTIVATION = 'relu'  # or 'sigmoid'
FUSION_RELU = False
PADDING = 'same'  # or 'causal'
SMOOTHNESS = 0.3
SMOOTHNESS_END = None  # linear anneal target, None keeps s constant
SAMPLE_EVAL = False

# optimisation
LEARNING_RATE = 1e-3
BETA1, BETA2 = 0.9, 0.999
ADAM_EPS = 1e-8
EPOCHS = 50
RUNS = 1
GRAD_CLIP = 5.0  # global norm, None disables
CHECKPOINT_EVERY = 10
SEED = 0
DTYPE = 'float32'

# numeric guards
SIGMOID_CLAMP = 500.0
LOG_EPS = 1e-12
THETA_EPS = 1e-6
NORM_EPS = 1e-12
STD_MIN = 1e-8
SPLIT_TOL = 1e-9

# branches of the extractor: name -> (kernel size, dilation) of the stacked conv
BRANCHES = {
    'f0': None,
    'f1': (3, 3),
    'f2': (5, 5),
}

# reference datasets: channels and hidden width
DATASET_PRESETS = {
    'exchange_rate': {'channels': 8, 'hidden_dim': 32},
    'weather': {'channels': 12, 'hidden_dim': 64},
    'electricity': {'channels': 370, 'hidden_dim': 128},
    'solar': {'channels': 137, 'hidden_dim': 128},
    'traffic': {'channels': 862, 'hidden_dim': 128},
}

# bench
BENCH_SERIES_LEN = 5000
BENCH_REPS = 5
BENCH_CHANNELS = 8, 32, 128
BENCH_WINDOWS = 24, 48, 96, 192
BENCH_COLUMNS = 'dataset', 'm', 'tau', 'infer_ms', 'epoch_s', 'reps', 'nodes', 'pairs'

# io
CONFIG_ENV = 'TIMEGNN_CONFIG'
CHECKPOINT_MAGIC = b'TGNNCKPT'
CHECKPOINT_VERSION = 1
CHECKPOINT_PATH = 'runs/model.ckpt'
METRICS_PATH = 'runs/metrics.json'
BENCH_PATH = 'runs/bench'
GRAPHS_PATH = 'runs/graphs.json'
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
