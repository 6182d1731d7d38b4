# Commented out default values with details are displayed below. If you want
# to change the values, make sure this file is available in one of the three
# supported config locations:
# - conf/settings.py in the git checkout
# - ~/.config/gmreplay/settings.py
# - /etc/gmreplay/settings.py


#DEBUG = False
#LOG_FILE = None

## Directories for datasets and results ##

# every dataset lives in its own subdirectory holding the four standard IDX files
# (train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte,
# t10k-labels-idx1-ubyte), optionally gzipped
#DATA_DIR = "~/.local/share/gmreplay/datasets"
#OUT_DIR = "results"

# environment variables with this prefix override experiment keys,
# e.g. GMREPLAY_COMPONENTS=50
#ENV_PREFIX = "GMREPLAY_"

## Experiment defaults ##
# Every key below can also be set in an experiment file (lower case, key = value).

#DATASET = "mnist"
#SLT = "D10"
#MODEL = "gmr"

# Gaussian mixture replay
#COMPONENTS = 100
#GMM_LR = 0.01
#CLASSIFIER_LR = 0.01
#BATCH_SIZE = 100
#STRATEGY = "proportional"
#KAPPA = 2.0
#OUTLIER_C = 1.0
#CONFIDENCE = 0.95
#SIGMA_MIN = 0.01
#EMA_ALPHA = 0.01
#STATS_WARMUP = 500
#WEIGHTED_RESPONSIBILITIES = False
#GMM_STEP_CLIP = 0.1
#EPOCHS = 50
#EPOCH_CAP = 400
#MAX_ATTEMPTS_FACTOR = 10
#REPLAY_LABELS = "predict"

# sub-task boundary detection
#WINDOW_SIZE = 10
#DROP_THRESHOLD = 0.2
#DETECTOR_WARMUP = 50

# EWC baseline
#EWC_EPOCHS = 10
#EWC_GRID = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
#HIDDEN_SIZES = [800, 800, 800]

# data selection and seeding
#DATASET_CLASSES = 10
#REPETITIONS = 1
#SEED = 0
#SPLIT_SEED = 0
#CLASS_SEED = 0

# artifacts
#RECORD_WALL_TIME = False
#SAMPLE_CLASSES = [1, 2]
#GRID_ROWS = 5
#GRID_COLS = 5
#SAMPLING_COUNT = 10000
