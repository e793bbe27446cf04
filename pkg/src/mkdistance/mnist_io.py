"""
MNIST IDX parsing and construction of the sampling protocol used by the experiment.

IDX layout (all header words are big-endian unsigned 32 bit integers):
    images: magic 0x00000803, count, rows, cols, then count * rows * cols pixel bytes in row-major order
    labels: magic 0x00000801, count, then count label bytes
Files ending in .gz are decompressed transparently.
"""
import gzip
import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
from typing import Sequence

import numpy as np

from mkdistance.exceptions import BadMagic
from mkdistance.exceptions import DimensionMismatch
from mkdistance.exceptions import InsufficientData
from mkdistance.exceptions import LabelOutOfRange
from mkdistance.exceptions import MKDistanceError
from mkdistance.exceptions import TruncatedFile
from mkdistance.knn import LabeledImage
from mkdistance.measures import normalize_image

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_SHAPE = (28, 28)
DIGITS = range(10)

_PGM_HEADER = re.compile(rb'P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s')
MNIST_FILES = {
    'train_images': 'train-images-idx3-ubyte',
    'train_labels': 'train-labels-idx1-ubyte',
    'test_images': 't10k-images-idx3-ubyte',
    'test_labels': 't10k-labels-idx1-ubyte',
}


@dataclass(frozen=True, eq=False)
class RawDataset:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            error_msg = f"Found {len(self.images)} images but {len(self.labels)} labels."
            logging.error(error_msg)
            raise MKDistanceError(error_msg)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class ProtocolSets:
    """
    training_sets: disjoint training sets. Each one is laid out rank by rank (the rank-0 item of every digit,
        then the rank-1 items, ...) so the first t items per digit form a prefix
    test_set: the test items, laid out the same way
    seed: the seed the sets were drawn with
    """
    training_sets: tuple
    test_set: tuple
    seed: int


def read_idx_images(path, expected_shape: Optional[tuple] = MNIST_SHAPE) -> np.ndarray:
    """
    Reads an IDX image file
    :param path: file path, gzip compressed when it ends in .gz
    :param expected_shape: (rows, cols) the header must declare, None accepts any shape
    :return: uint8 array of shape (count, rows, cols)
    """
    data = _read_bytes(path)
    _check_magic(data, IMAGE_MAGIC, path)
    if len(data) < 16:
        _truncated(path, 16, len(data))
    _, count, rows, cols = struct.unpack('>IIII', data[:16])
    if expected_shape is not None and (rows, cols) != tuple(expected_shape):
        error_msg = f"{path} holds {rows}x{cols} images, expected {expected_shape[0]}x{expected_shape[1]}."
        logging.error(error_msg)
        raise DimensionMismatch(error_msg)
    size = count * rows * cols
    if len(data) < 16 + size:
        _truncated(path, 16 + size, len(data))
    logging.info(f"Read {count} images of {rows}x{cols} from {path}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    """
    Reads an IDX label file
    :param path: file path, gzip compressed when it ends in .gz
    :return: uint8 array of labels, each in 0-9
    """
    data = _read_bytes(path)
    _check_magic(data, LABEL_MAGIC, path)
    if len(data) < 8:
        _truncated(path, 8, len(data))
    _, count = struct.unpack('>II', data[:8])
    if len(data) < 8 + count:
        _truncated(path, 8 + count, len(data))
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=8)
    if count and labels.max() > 9:
        position = int(np.argmax(labels > 9))
        error_msg = f"{path} has label {labels[position]} at position {position}, labels must be 0-9."
        logging.error(error_msg)
        raise LabelOutOfRange(error_msg)
    logging.info(f"Read {count} labels from {path}")
    return labels


def load_raw_dataset(images_path, labels_path) -> RawDataset:
    return RawDataset(read_idx_images(images_path), read_idx_labels(labels_path))


def find_mnist_files(directory) -> dict:
    """
    Locates the four official MNIST files in a directory, raw or gzipped
    :return: config key -> path for each file found
    """
    located = {}
    for key, stem in MNIST_FILES.items():
        for name in (stem, stem + '.gz'):
            candidate = Path(directory) / name
            if candidate.exists():
                located[key] = str(candidate)
                break
    return located


def read_pgm(path) -> np.ndarray:
    """
    Reads a plain (P2) or binary (P5) greyscale PGM file
    :return: the raw intensities as a float array of shape (height, width)
    """
    data = _read_bytes(path)
    if data[:2] == b'P2':
        tokens = re.sub(r'#[^\n]*', ' ', data.decode('ascii')).split()
        if len(tokens) < 4:
            _truncated(path, 4, len(tokens))
        width, height = int(tokens[1]), int(tokens[2])
        values = np.array([int(token) for token in tokens[4:4 + width * height]], dtype=np.float64)
    elif data[:2] == b'P5':
        header = _PGM_HEADER.match(data)
        if header is None:
            _truncated(path, 4, len(data))
        width, height, maxval = (int(group) for group in header.groups())
        dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype('>u2')
        payload = data[header.end():]
        if len(payload) < width * height * dtype.itemsize:
            _truncated(path, header.end() + width * height * dtype.itemsize, len(data))
        values = np.frombuffer(payload, dtype=dtype, count=width * height).astype(np.float64)
    else:
        error_msg = f"{path} is not a P2 or P5 PGM file."
        logging.error(error_msg)
        raise BadMagic(error_msg)
    if len(values) < width * height:
        _truncated(path, width * height, len(values))
    return values.reshape(height, width)


def read_image(path, index: int = 0) -> np.ndarray:
    """
    Reads one greyscale image, from a PGM file or as entry `index` of an IDX image file.
    Intensities are returned unscaled.
    """
    name = str(path).lower()
    if name.endswith('.pgm') or name.endswith('.pgm.gz'):
        return read_pgm(path)
    images = read_idx_images(path, expected_shape=None)
    if not 0 <= index < len(images):
        raise MKDistanceError(f"{path} holds {len(images)} images, index {index} is out of range.")
    return images[index].astype(np.float64)


def to_labeled_image(raw_pixels, label: int, source_index: int) -> LabeledImage:
    """
    Scales pixels by 1/255 and normalizes them to unit sum
    """
    pixels = normalize_image(np.asarray(raw_pixels, dtype=np.float64) / 255.0)
    pixels.setflags(write=False)
    return LabeledImage(pixels, int(label), int(source_index))


def build_protocol_sets(train: RawDataset, test: RawDataset, seed: int, num_training_sets: int = 20,
                        per_digit: int = 21, pool_per_digit: int = 1000, test_per_digit: int = 20) -> ProtocolSets:
    """
    Draws the disjoint training sets and the test set.
    Each digit's training indices are shuffled and cut to a working pool of pool_per_digit, whose first
    num_training_sets * per_digit entries are dealt out to the training sets in consecutive blocks.
    The test set takes test_per_digit shuffled images of each digit from the test split.
    The generator is numpy's PCG64 seeded with `seed`, so the sets are identical across platforms.
    :return: the protocol sets, all images unit-sum normalized
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    needed = num_training_sets * per_digit
    if pool_per_digit < needed:
        error_msg = f"A pool of {pool_per_digit} per digit cannot supply {num_training_sets} sets of {per_digit}."
        logging.error(error_msg)
        raise InsufficientData(error_msg)

    pools = {}
    for digit in DIGITS:
        candidates = np.flatnonzero(train.labels == digit)
        if len(candidates) < needed:
            error_msg = f"Digit {digit} has {len(candidates)} training images, {needed} are needed."
            logging.error(error_msg)
            raise InsufficientData(error_msg)
        pools[digit] = rng.permutation(candidates)[:pool_per_digit]

    test_pools = {}
    for digit in DIGITS:
        candidates = np.flatnonzero(test.labels == digit)
        if len(candidates) < test_per_digit:
            error_msg = f"Digit {digit} has {len(candidates)} test images, {test_per_digit} are needed."
            logging.error(error_msg)
            raise InsufficientData(error_msg)
        test_pools[digit] = rng.permutation(candidates)[:test_per_digit]

    training_sets = tuple(
        tuple(_labeled(train, pools[digit][set_index * per_digit + rank])
              for rank in range(per_digit) for digit in DIGITS)
        for set_index in range(num_training_sets)
    )
    test_set = tuple(_labeled(test, test_pools[digit][rank]) for rank in range(test_per_digit) for digit in DIGITS)
    logging.info(f"Built {num_training_sets} training sets of {per_digit} per digit and a test set of "
                 f"{len(test_set)} images with seed {seed}")
    return ProtocolSets(training_sets, test_set, seed)


def training_subset(items: Sequence[LabeledImage], per_digit: int) -> list:
    """
    Keeps the first per_digit items of each digit, preserving order
    """
    seen = {}
    subset = []
    for item in items:
        if seen.get(item.label, 0) < per_digit:
            seen[item.label] = seen.get(item.label, 0) + 1
            subset.append(item)
    return subset


def _labeled(dataset: RawDataset, index) -> LabeledImage:
    return to_labeled_image(dataset.images[index], dataset.labels[index], index)


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == '.gz' else open
    with opener(path, 'rb') as fh:
        return fh.read()


def _check_magic(data: bytes, expected: int, path):
    if len(data) < 4:
        _truncated(path, 4, len(data))
    magic = struct.unpack('>I', data[:4])[0]
    if magic != expected:
        error_msg = f"{path} starts with magic 0x{magic:08x}, expected 0x{expected:08x}."
        logging.error(error_msg)
        raise BadMagic(error_msg)


def _truncated(path, expected: int, actual: int):
    error_msg = f"{path} is truncated: expected at least {expected} bytes, found {actual}."
    logging.error(error_msg)
    raise TruncatedFile(error_msg)
