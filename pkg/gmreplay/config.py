# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Configuration for gmreplay.

Application settings come from a ``settings.py`` file (upper case names only) merged over
:class:`ConfigData`. Experiments are described by line oriented ``key = value`` files parsed
into :class:`ExperimentConfig`, whose defaults are taken from the application settings.
"""

import hashlib
import logging
import os
import types

import gmreplay
from gmreplay.exceptions import GmreplayConfigError

log = logging.getLogger("gmreplay.config")

DEFAULT_CONF_DIR = os.path.abspath(os.path.dirname(gmreplay.__file__)) + "/../conf"

CONF_DIRS = [
    DEFAULT_CONF_DIR,
    "{}/.config/gmreplay".format(os.environ.get("HOME", "")),
    "/etc/gmreplay",
]

CONF_FILE = "settings.py"

_config = None


def get_config():
    """Retrieve a config instance. If a config instance has already been parsed,
    reuse that parsed instance.

    :return: :class:`.ConfigData` containing configuration values
    """

    global _config
    if not _config:
        _config = _parse_config()
    return _config


def _parse_config():
    """Parse config file in a supported location and merge with default values.

    :return: loaded config data merged with defaults from :class:`.ConfigData`
    """

    config = ConfigData()
    config_filename = _find_config_file()

    if config_filename is not None:
        loaded_config = _load_config(config_filename)
        config._merge_object(loaded_config)

    return config


def _find_config_file():
    """Look in supported config dirs for a configuration file.

    :return: filename of first discovered file, None if no files are found
    """

    for conf_dir in CONF_DIRS:
        conf_file = "{}/{}".format(conf_dir, CONF_FILE)
        if os.path.exists(conf_file):
            return conf_file
    return None


def _load_config(conf_filename):
    """Load configuration data from a python file. Only loads attrs which are
    named using all caps.

    :param conf_filename: full path to config file to load
    :type conf_filename: str
    :return: object containing configuration values
    """

    new_conf = types.ModuleType("config")
    new_conf.__file__ = conf_filename
    try:
        with open(conf_filename, "r") as conf_file:
            exec(compile(conf_file.read(), conf_filename, "exec"), new_conf.__dict__)
    except IOError as e:
        e.strerror = "Unable to load config file {}".format(e.strerror)
        raise
    return new_conf


class ConfigData(object):
    """Holds configuration data for gmreplay. Is initialized with default
    values which can be overridden.
    """

    DEBUG = False
    LOG_FILE = None

    # Directories gmreplay cares about
    DATA_DIR = "{}/.local/share/gmreplay/datasets".format(os.environ.get("HOME", ""))
    OUT_DIR = "results"

    # Environment variables starting with this prefix override experiment keys,
    # e.g. GMREPLAY_COMPONENTS=50
    ENV_PREFIX = "GMREPLAY_"

    # Experiment defaults, see ExperimentConfig for the meaning of each key
    DATASET = "mnist"
    SLT = "D10"
    MODEL = "gmr"
    COMPONENTS = 100
    GMM_LR = 0.01
    CLASSIFIER_LR = 0.01
    BATCH_SIZE = 100
    STRATEGY = "proportional"
    KAPPA = 2.0
    OUTLIER_C = 1.0
    CONFIDENCE = 0.95
    SIGMA_MIN = 0.01
    EMA_ALPHA = 0.01
    STATS_WARMUP = 500
    WEIGHTED_RESPONSIBILITIES = False
    GMM_STEP_CLIP = 0.1
    EPOCHS = 50
    EPOCH_CAP = 400
    MAX_ATTEMPTS_FACTOR = 10
    REPLAY_LABELS = "predict"
    WINDOW_SIZE = 10
    DROP_THRESHOLD = 0.2
    DETECTOR_WARMUP = 50
    EWC_EPOCHS = 10
    EWC_GRID = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
    HIDDEN_SIZES = [800, 800, 800]
    DATASET_CLASSES = 10
    REPETITIONS = 1
    SEED = 0
    SPLIT_SEED = 0
    CLASS_SEED = 0
    RECORD_WALL_TIME = False
    SAMPLE_CLASSES = [1, 2]
    GRID_ROWS = 5
    GRID_COLS = 5
    SAMPLING_COUNT = 10000

    def _merge_object(self, obj):
        """Overwrites default values with values from a python object which have
        names containing all upper case letters.

        :param obj: python object containing configuration values
        :type obj: python object
        """

        for key in dir(obj):
            if key.isupper():
                setattr(self, key, getattr(obj, key))


def _parse_bool(value):
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: {!r}".format(value))


def _parse_optional_float(value):
    if value.strip().lower() in ("none", ""):
        return None
    return float(value)


def _parse_float_list(value):
    return [float(v) for v in value.replace(",", " ").split()]


def _parse_int_list(value):
    return [int(v) for v in value.replace(",", " ").split()]


def _parse_choice(*choices):
    def parse(value):
        value = value.strip()
        if value not in choices:
            raise ValueError("expected one of {}, got {!r}".format(", ".join(choices), value))
        return value

    return parse


#: experiment keys and the parser turning their textual value into a python value
EXPERIMENT_KEYS = {
    "dataset": str,
    "data_dir": str,
    "slt": str,
    "model": _parse_choice("gmr", "ewc"),
    "components": int,
    "gmm_lr": float,
    "classifier_lr": float,
    "batch_size": int,
    "strategy": _parse_choice("proportional", "constant"),
    "kappa": float,
    "outlier_c": float,
    "confidence": float,
    "sigma_min": float,
    "ema_alpha": float,
    "stats_warmup": int,
    "weighted_responsibilities": _parse_bool,
    "gmm_step_clip": _parse_optional_float,
    "epochs": int,
    "epoch_cap": int,
    "max_attempts_factor": int,
    "replay_labels": _parse_choice("predict", "conditional"),
    "window_size": int,
    "drop_threshold": float,
    "detector_warmup": int,
    "ewc_epochs": int,
    "ewc_grid": _parse_float_list,
    "hidden_sizes": _parse_int_list,
    "dataset_classes": int,
    "repetitions": int,
    "seed": int,
    "split_seed": int,
    "class_seed": int,
    "record_wall_time": _parse_bool,
    "sample_classes": _parse_int_list,
    "grid_rows": int,
    "grid_cols": int,
    "sampling_count": int,
}

# keys that do not change results and are left out of the config hash
_UNHASHED_KEYS = ("data_dir",)


class ExperimentConfig(object):
    """All hyper-parameters of one experiment. Attribute names are the keys of
    :data:`EXPERIMENT_KEYS`; defaults come from :class:`ConfigData`.
    """

    def __init__(self, defaults=None, **overrides):
        defaults = defaults if defaults is not None else get_config()
        for key in EXPERIMENT_KEYS:
            value = getattr(defaults, key.upper())
            # lists are copied so mutating one config never leaks into the defaults
            setattr(self, key, list(value) if isinstance(value, list) else value)
        self.out_dir = defaults.OUT_DIR
        self.source = None
        for key, value in overrides.items():
            self.set(key, value)
        self.validate()

    def set(self, key, value):
        """Set ``key``, parsing ``value`` when it is given as text.

        :raises GmreplayConfigError: for unknown keys or unparsable values
        """
        if key == "out_dir":
            self.out_dir = value
            return
        if key not in EXPERIMENT_KEYS:
            raise GmreplayConfigError("Unknown experiment key {!r}".format(key))
        if isinstance(value, str) and EXPERIMENT_KEYS[key] is not str:
            try:
                value = EXPERIMENT_KEYS[key](value)
            except ValueError as e:
                raise GmreplayConfigError("Bad value for {}: {}".format(key, e))
        elif isinstance(value, str):
            value = value.strip()
        setattr(self, key, value)

    def validate(self):
        """Check value ranges.

        :raises GmreplayConfigError: if a value is out of range
        """
        checks = [
            (self.components >= 1, "components must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.gmm_lr > 0, "gmm_lr must be > 0"),
            (self.classifier_lr > 0, "classifier_lr must be > 0"),
            (0 < self.confidence < 1, "confidence must lie in (0, 1)"),
            (0 < self.ema_alpha < 1, "ema_alpha must lie in (0, 1)"),
            (self.sigma_min > 0, "sigma_min must be > 0"),
            (0 < self.drop_threshold < 1, "drop_threshold must lie in (0, 1)"),
            (self.window_size >= 1, "window_size must be >= 1"),
            (self.repetitions >= 1, "repetitions must be >= 1"),
            (self.epochs >= 1 and self.epoch_cap >= 1, "epochs and epoch_cap must be >= 1"),
            (self.max_attempts_factor >= 1, "max_attempts_factor must be >= 1"),
            (all(eps > 0 for eps in self.ewc_grid) and len(self.ewc_grid) > 0, "ewc_grid needs positive step sizes"),
        ]
        for ok, message in checks:
            if not ok:
                raise GmreplayConfigError(message)

    def items(self):
        """Experiment keys and values in a stable (sorted) order."""
        return [(key, getattr(self, key)) for key in sorted(EXPERIMENT_KEYS)]

    def dump(self):
        """Canonical ``key = value`` text of this config, loadable by :func:`load_experiment_config`."""
        lines = []
        for key, value in self.items():
            if isinstance(value, list):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append("{} = {}".format(key, value))
        return "\n".join(lines) + "\n"

    def config_hash(self):
        """Short hash identifying every result-relevant setting of this config."""
        text = "".join(line + "\n" for line in self.dump().splitlines() if line.split(" = ")[0] not in _UNHASHED_KEYS)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]

    def copy(self, **overrides):
        new = ExperimentConfig.__new__(ExperimentConfig)
        new.__dict__.update({k: (list(v) if isinstance(v, list) else v) for k, v in self.__dict__.items()})
        for key, value in overrides.items():
            new.set(key, value)
        new.validate()
        return new


def _read_config_lines(path, seen):
    """Yield (key, value, origin) from a key=value file, following ``include`` directives."""
    path = os.path.abspath(path)
    if path in seen:
        raise GmreplayConfigError("Include cycle detected at {}".format(path))
    seen = seen | {path}
    try:
        with open(path, "r") as conf_file:
            lines = conf_file.readlines()
    except IOError as e:
        raise GmreplayConfigError("Unable to read experiment config {}: {}".format(path, e.strerror))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        origin = "{}:{}".format(path, lineno)
        if line.startswith("include ") or line.startswith("include\t"):
            target = line[len("include"):].strip()
            if not os.path.isabs(target):
                target = os.path.join(os.path.dirname(path), target)
            for item in _read_config_lines(target, seen):
                yield item
            continue
        if "=" not in line:
            raise GmreplayConfigError("Expected 'key = value' at {}".format(origin))
        key, value = line.split("=", 1)
        yield key.strip().lower(), value.strip(), origin


def load_experiment_config(path=None, environ=None, defaults=None):
    """Build an :class:`ExperimentConfig` from defaults, an optional key=value file and
    environment overrides, in that order of precedence (later wins).

    :param path: experiment config file or None for pure defaults
    :param environ: mapping used for overrides, ``os.environ`` by default
    :param defaults: :class:`ConfigData` instance, the global one by default
    :raises GmreplayConfigError: for unreadable files, unknown keys or bad values
    """
    defaults = defaults if defaults is not None else get_config()
    environ = environ if environ is not None else os.environ
    config = ExperimentConfig(defaults=defaults)

    if path is not None:
        for key, value, origin in _read_config_lines(path, frozenset()):
            try:
                config.set(key, value)
            except GmreplayConfigError as e:
                raise GmreplayConfigError("{} ({})".format(e, origin))
        config.source = os.path.abspath(path)

    prefix = defaults.ENV_PREFIX
    for name, value in sorted(environ.items()):
        if not name.startswith(prefix):
            continue
        key = name[len(prefix):].lower()
        log.debug("environment override %s=%s", key, value)
        config.set(key, value)

    config.validate()
    return config
