# Writers and fixtures used by the test-suite.
# They live in the package so tests and ad-hoc scripts can build IDX and PGM fixtures the same way.

import gzip
import struct
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd

from mkdistance.mnist_io import IMAGE_MAGIC
from mkdistance.mnist_io import LABEL_MAGIC
from mkdistance.verification import BAKER_OFFSET
from mkdistance.verification import BAKERS


def _write(path, payload: bytes):
    path = Path(path)
    opener = gzip.open if path.suffix == '.gz' else open
    with opener(path, 'wb') as fh:
        fh.write(payload)


def idx_images_bytes(images) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    return struct.pack('>IIII', IMAGE_MAGIC, count, rows, cols) + images.tobytes()


def idx_labels_bytes(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack('>II', LABEL_MAGIC, len(labels)) + labels.tobytes()


def write_idx_images(path, images):
    _write(path, idx_images_bytes(images))


def write_idx_labels(path, labels):
    _write(path, idx_labels_bytes(labels))


def write_pgm(path, img, plain: bool = True):
    img = np.asarray(img, dtype=np.int64)
    height, width = img.shape
    maxval = max(int(img.max()), 1)
    if plain:
        body = '\n'.join(' '.join(str(value) for value in row) for row in img)
        _write(path, f"P2\n# fixture\n{width} {height}\n{maxval}\n{body}\n".encode('ascii'))
    else:
        _write(path, f"P5\n{width} {height}\n{maxval}\n".encode('ascii') + img.astype(np.uint8).tobytes())


def baker_images(shape=(8, 8)):
    """
    The baker image (one unit pixel per baker) and the cafe image (the same pixels moved by BAKER_OFFSET)
    """
    bakers = np.zeros(shape)
    cafes = np.zeros(shape)
    for x, y in BAKERS:
        bakers[y, x] = 1
        cafes[y + BAKER_OFFSET[1], x + BAKER_OFFSET[0]] = 1
    return bakers, cafes


def synthetic_digits(per_digit: int, seed: int = 0, shape=(28, 28)):
    """
    Sparse 8-bit images in which each digit class is a three pixel bar on its own cell of a 2 x 5 layout,
    jittered vertically by up to a pixel. Bars of different classes are at least five pixels apart.
    :return: (images, labels) with images of shape (10 * per_digit, rows, cols), labels in the order 0..9 repeated
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    images = np.zeros((10 * per_digit,) + tuple(shape), dtype=np.uint8)
    labels = np.tile(np.arange(10, dtype=np.uint8), per_digit)
    for position, label in enumerate(labels):
        row = 6 + 12 * (int(label) // 5) + int(rng.integers(-1, 2))
        col = 3 + 5 * (int(label) % 5)
        images[position, row, col:col + 3] = rng.integers(128, 256, size=3)
    return images, labels


def write_synthetic_mnist(directory, train_per_digit: int = 21, test_per_digit: int = 2, seed: int = 0) -> dict:
    """
    Writes a tiny dataset under the official MNIST file names
    :return: config key -> path
    """
    directory = Path(directory)
    train_images, train_labels = synthetic_digits(train_per_digit, seed)
    test_images, test_labels = synthetic_digits(test_per_digit, seed + 1)
    paths = {
        'train_images': directory / 'train-images-idx3-ubyte',
        'train_labels': directory / 'train-labels-idx1-ubyte',
        'test_images': directory / 't10k-images-idx3-ubyte',
        'test_labels': directory / 't10k-labels-idx1-ubyte',
    }
    write_idx_images(paths['train_images'], train_images)
    write_idx_labels(paths['train_labels'], train_labels)
    write_idx_images(paths['test_images'], test_images)
    write_idx_labels(paths['test_labels'], test_labels)
    return {key: str(path) for key, path in paths.items()}


def str_to_df(s, rstrip_str='_', index_col=None, **kwargs):
    """
    Parses a fixed-width table into a DataFrame; trailing underscores in headers only pad the column width
    """
    s = s.lstrip('\n').rstrip(' ')
    df = pd.read_fwf(StringIO(s), index_col=index_col, **kwargs)
    if rstrip_str is not None:
        df.columns = [column.rstrip(rstrip_str) for column in df.columns]
    return df
