# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Dataset handling: IDX parsing, merged 90/10 splits, sequential learning tasks and
mini-batches.
"""

import gzip
import logging
import os
import struct

import numpy as np

from gmreplay.exceptions import GmreplayDataError

log = logging.getLogger("gmreplay.dataio")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

#: file names of the standard IDX distribution, optionally gzipped
IDX_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

TRAIN_FRACTION = 0.9


class IdxTensor(object):
    """Raw content of an IDX file: dimensions and the uint8 payload."""

    def __init__(self, dims, payload):
        self.dims = tuple(dims)
        self.payload = payload

    def as_array(self):
        return self.payload.reshape(self.dims)


class Dataset(object):
    """Flattened images in [0, 1] with integer labels.

    :param images: N x d float array
    :param labels: N int array, every entry < class_count
    :param class_count: number of classes C
    :param shape: (H, W) of a single image, defaults to a square of side sqrt(d)
    """

    def __init__(self, images, labels, class_count, shape=None):
        images = np.asarray(images, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim != 2:
            raise GmreplayDataError("Images must be an N x d matrix, got shape {}".format(images.shape))
        if labels.shape != (images.shape[0],):
            raise GmreplayDataError("{} labels for {} images".format(labels.shape[0], images.shape[0]))
        if labels.size and (labels.min() < 0 or labels.max() >= class_count):
            raise GmreplayDataError("Labels must lie in 0..{}".format(class_count - 1))
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise GmreplayDataError("Pixel values must lie in [0, 1]")
        if shape is None:
            side = int(round(np.sqrt(images.shape[1])))
            shape = (side, side) if side * side == images.shape[1] else (1, images.shape[1])
        self.images = images
        self.labels = labels
        self.class_count = class_count
        self.shape = tuple(shape)

    @property
    def dim(self):
        return self.images.shape[1]

    def __len__(self):
        return self.images.shape[0]

    def classes(self):
        return set(int(c) for c in np.unique(self.labels))


class SltSpec(object):
    """A sequential learning task: an ordered list of disjoint class sets."""

    def __init__(self, name, sub_tasks):
        self.name = name
        self.sub_tasks = [tuple(sorted(int(c) for c in classes)) for classes in sub_tasks]
        seen = set()
        for classes in self.sub_tasks:
            if not classes:
                raise GmreplayDataError("SLT {} has an empty sub-task".format(name))
            if seen.intersection(classes):
                raise GmreplayDataError("SLT {} has overlapping classes".format(name))
            seen.update(classes)

    def all_classes(self):
        return tuple(sorted(c for classes in self.sub_tasks for c in classes))

    def __repr__(self):
        return "SltSpec({!r}, {!r})".format(self.name, self.sub_tasks)


class SubTaskData(object):
    """Train and test data of a single sub-task."""

    def __init__(self, classes, train, test):
        self.classes = tuple(classes)
        self.train = train
        self.test = test

    @property
    def nu(self):
        return len(self.train)


SLT_TABLE = {
    "D10": SltSpec("D10", [range(10)]),
    "D9-1a": SltSpec("D9-1a", [(0, 1, 2, 3, 4, 5, 6, 7, 8), (9,)]),
    "D9-1b": SltSpec("D9-1b", [(0, 1, 2, 4, 5, 6, 7, 8, 9), (3,)]),
    "D5-5a": SltSpec("D5-5a", [(0, 1, 2, 3, 4), (5, 6, 7, 8, 9)]),
    "D5-5b": SltSpec("D5-5b", [(0, 1, 2, 6, 7), (3, 4, 5, 8, 9)]),
    "D2-2-2-2-2a": SltSpec("D2-2-2-2-2a", [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]),
    "D2-2-2-2-2b": SltSpec("D2-2-2-2-2b", [(1, 7), (0, 2), (6, 8), (4, 5), (3, 9)]),
}


def get_slt(name):
    """Look up one of the sequential learning tasks of :data:`SLT_TABLE`.

    :raises GmreplayDataError: for unknown names
    """
    try:
        return SLT_TABLE[name]
    except KeyError:
        raise GmreplayDataError("Unknown SLT {!r}, known: {}".format(name, ", ".join(SLT_TABLE)))


def make_rng(seed, *streams):
    """Independent, reproducible PCG64 generator for ``seed`` and a tuple of stream ids."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *[int(s) for s in streams]])))


def parse_idx(data):
    """Parse an IDX container holding uint8 images (3 dims) or labels (1 dim).

    :param bytes data: complete file content
    :returns: :class:`IdxTensor`
    :raises GmreplayDataError: on bad magic, unsupported dimension count or truncated payload
    """
    if len(data) < 4:
        raise GmreplayDataError("bad magic: file shorter than its header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise GmreplayDataError("bad magic 0x{:08x}".format(magic))
    ndims = magic & 0xFF
    if ndims not in (1, 3):
        raise GmreplayDataError("unsupported dimension count {}".format(ndims))
    header_end = 4 + 4 * ndims
    if len(data) < header_end:
        raise GmreplayDataError("truncated header")
    dims = struct.unpack(">" + "I" * ndims, data[4:header_end])
    expected = int(np.prod(dims))
    payload = np.frombuffer(data, dtype=np.uint8, offset=header_end)
    if payload.size < expected:
        raise GmreplayDataError("truncated payload: expected {} bytes, got {}".format(expected, payload.size))
    if payload.size > expected:
        log.warning("ignoring %d trailing bytes after IDX payload", payload.size - expected)
    return IdxTensor(dims, payload[:expected])


def load_idx_file(path):
    """Read and parse a (possibly gzipped) IDX file."""
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "rb") as idx_file:
            return parse_idx(idx_file.read())
    except IOError as e:
        raise GmreplayDataError("Unable to read {}: {}".format(path, e))


def _find_idx(root, base):
    for candidate in (base, base + ".gz"):
        path = os.path.join(root, candidate)
        if os.path.exists(path):
            return path
    raise GmreplayDataError("Missing IDX file {}[.gz] in {}".format(base, root))


def build_continual_dataset(train_raw, test_raw, split_seed):
    """Merge the provided train and test sets, shuffle them and re-split 90/10.

    :param train_raw: (images IdxTensor, labels IdxTensor) of the provided train set
    :param test_raw: (images IdxTensor, labels IdxTensor) of the provided test set
    :param int split_seed: seed of the global permutation
    :returns: (train, test) :class:`Dataset` pair
    :raises GmreplayDataError: if image and label counts differ
    """
    images, labels = [], []
    shape = None
    for image_raw, label_raw in (train_raw, test_raw):
        if len(image_raw.dims) != 3 or len(label_raw.dims) != 1:
            raise GmreplayDataError("Expected an image tensor and a label tensor")
        if image_raw.dims[0] != label_raw.dims[0]:
            raise GmreplayDataError("count mismatch: {} images, {} labels".format(image_raw.dims[0], label_raw.dims[0]))
        if shape is not None and image_raw.dims[1:] != shape:
            raise GmreplayDataError("Train and test images differ in size")
        shape = image_raw.dims[1:]
        images.append(image_raw.as_array().reshape(image_raw.dims[0], -1))
        labels.append(label_raw.as_array())

    images = np.concatenate(images).astype(np.float64) / 255.0
    labels = np.concatenate(labels).astype(np.int64)
    if len(labels) == 0:
        raise GmreplayDataError("Dataset is empty")
    class_count = int(labels.max()) + 1

    order = make_rng(split_seed).permutation(len(labels))
    cut = int(round(TRAIN_FRACTION * len(labels)))
    train_idx, test_idx = order[:cut], order[cut:]
    log.debug("split %d samples into %d train / %d test", len(labels), len(train_idx), len(test_idx))
    return (
        Dataset(images[train_idx], labels[train_idx], class_count, shape),
        Dataset(images[test_idx], labels[test_idx], class_count, shape),
    )


def choose_classes(dataset, count, seed):
    """Deterministic random choice of ``count`` class ids present in ``dataset``, sorted.

    :raises GmreplayDataError: if the dataset has fewer than ``count`` classes
    """
    present = sorted(dataset.classes())
    if len(present) < count:
        raise GmreplayDataError("Cannot select {} classes out of {}".format(count, len(present)))
    return sorted(int(c) for c in make_rng(seed).choice(present, size=count, replace=False))


def select_classes(dataset, count, seed, chosen=None):
    """Keep ``count`` randomly chosen classes and relabel them 0..count-1 in ascending
    order of their original id.

    :param chosen: explicit class ids, overrides the random draw (used to apply the
        draw of the training half to the test half)
    :raises GmreplayDataError: if the dataset has fewer than ``count`` classes
    """
    if chosen is None:
        chosen = choose_classes(dataset, count, seed)
    mapping = np.full(dataset.class_count, -1, dtype=np.int64)
    mapping[list(chosen)] = np.arange(len(chosen))
    keep = mapping[dataset.labels] >= 0
    return Dataset(dataset.images[keep], mapping[dataset.labels[keep]], len(chosen), dataset.shape)


def filter_classes(dataset, classes):
    """Rows of ``dataset`` whose label is in ``classes``; class ids are left untouched."""
    keep = np.isin(dataset.labels, list(classes))
    return Dataset(dataset.images[keep], dataset.labels[keep], dataset.class_count, dataset.shape)


def concatenate(first, second):
    """Stack two datasets of equal dimension."""
    if first.dim != second.dim:
        raise GmreplayDataError("Cannot merge datasets of dimension {} and {}".format(first.dim, second.dim))
    return Dataset(
        np.concatenate([first.images, second.images]),
        np.concatenate([first.labels, second.labels]),
        max(first.class_count, second.class_count),
        first.shape,
    )


def load_dataset(root, name, split_seed, class_seed=0, class_count=10):
    """Load ``root/name`` from the standard four IDX files and build the 90/10 split.
    Datasets with more than ``class_count`` classes (Devanagari) are then reduced with
    :func:`select_classes`: the classes are chosen on the train half and the same choice
    is applied to the test half.
    """
    directory = os.path.join(root, name)
    raw = {key: load_idx_file(_find_idx(directory, base)) for key, base in IDX_FILES.items()}
    train, test = build_continual_dataset(
        (raw["train_images"], raw["train_labels"]),
        (raw["test_images"], raw["test_labels"]),
        split_seed,
    )
    if train.class_count > class_count:
        chosen = choose_classes(train, class_count, class_seed)
        log.info("%s: keeping classes %s", name, chosen)
        train = select_classes(train, class_count, class_seed, chosen=chosen)
        test = select_classes(test, class_count, class_seed, chosen=chosen)
    log.info("loaded %s: %d train / %d test samples, d=%d", name, len(train), len(test), train.dim)
    return train, test


def build_slt(dataset, spec, test=None):
    """Slice a dataset into the sub-tasks of ``spec``, preserving the sub-task order.

    :param dataset: training :class:`Dataset`
    :param spec: :class:`SltSpec`
    :param test: optional test :class:`Dataset`, sliced the same way
    :returns: list of :class:`SubTaskData`
    :raises GmreplayDataError: if a class of the SLT is absent from the dataset
    """
    present = dataset.classes()
    missing = [c for c in spec.all_classes() if c not in present]
    if missing:
        raise GmreplayDataError("Classes {} of {} are absent from the dataset".format(missing, spec.name))
    if test is None:
        test = Dataset(np.zeros((0, dataset.dim)), np.zeros(0, dtype=np.int64), dataset.class_count, dataset.shape)
    return [SubTaskData(classes, filter_classes(dataset, classes), filter_classes(test, classes)) for classes in spec.sub_tasks]


def one_hot(labels, class_count):
    targets = np.zeros((len(labels), class_count))
    targets[np.arange(len(labels)), labels] = 1.0
    return targets


def iterate_batches(dataset, batch_size, shuffle_seed):
    """Yield (images, one-hot targets) mini-batches covering every sample once.
    The last batch may be short.

    :raises GmreplayDataError: for an empty dataset or a batch size below 1
    """
    if batch_size < 1:
        raise GmreplayDataError("Batch size must be >= 1")
    if len(dataset) == 0:
        raise GmreplayDataError("Cannot iterate over an empty dataset")
    order = make_rng(shuffle_seed).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], one_hot(dataset.labels[idx], dataset.class_count)
