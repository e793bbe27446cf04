"""
k-nearest-neighbour classification over any configured distance.
"""
import logging
import threading
from dataclasses import dataclass
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np

from mkdistance.distances import DistanceKind
from mkdistance.distances import Metric
from mkdistance.exceptions import EmptyTestSet
from mkdistance.exceptions import EmptyTrainingSet
from mkdistance.exceptions import MKDistanceError

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LabeledImage:
    pixels: np.ndarray
    label: int
    source_index: int

    def __post_init__(self):
        if not 0 <= self.label <= 9:
            raise MKDistanceError(f"Labels are digits 0-9, got {self.label}")


@dataclass(frozen=True)
class Prediction:
    predicted: int
    neighbour: int
    distance: float


class DistanceCache:
    """
    Distance values keyed by (test source_index, train source_index, DistanceKind).
    Reads are lock free, inserts are serialized.
    """

    def __init__(self):
        self._values = {}
        self._lock = threading.Lock()

    def get(self, key) -> Optional[float]:
        return self._values.get(key)

    def put(self, key, value: float):
        with self._lock:
            self._values[key] = value

    def update(self, values: dict):
        with self._lock:
            self._values.update(values)

    def __contains__(self, key) -> bool:
        return key in self._values

    def __len__(self) -> int:
        return len(self._values)


def as_metric(metric: Union[Metric, DistanceKind, str]) -> Metric:
    if isinstance(metric, Metric):
        return metric
    return Metric(DistanceKind(metric))


def classify_from_distances(distances: Sequence[float], train: Sequence[LabeledImage], k: int = 1) -> Prediction:
    """
    Applies the nearest neighbour rule to precomputed distances, distances[p] being the distance to train[p].
    With k = 1 the nearest item wins; distances within 1e-12 of the minimum tie and go to the smallest source_index.
    With k > 1 the k nearest vote; vote ties go to the class with the smallest summed distance, then to the class
    holding the smallest source_index.
    :param distances: one distance per training item
    :param train: the training items
    :param k: number of neighbours
    :return: the prediction
    """
    if len(train) == 0:
        error_msg = "Cannot classify against an empty training set."
        logging.error(error_msg)
        raise EmptyTrainingSet(error_msg)
    if k < 1:
        raise MKDistanceError(f"k must be at least 1, got {k}")
    if k == 1:
        nearest = min(distances)
        tied = [p for p, d in enumerate(distances) if d <= nearest + TIE_TOL]
        best = min(tied, key=lambda p: train[p].source_index)
        return Prediction(train[best].label, train[best].source_index, float(distances[best]))

    order = sorted(range(len(train)), key=lambda p: (distances[p], train[p].source_index))[:k]
    votes = {}
    for p in order:
        count, total, first = votes.get(train[p].label, (0, 0.0, train[p].source_index))
        votes[train[p].label] = (count + 1, total + distances[p], min(first, train[p].source_index))
    winner = min(votes, key=lambda label: (-votes[label][0], votes[label][1], votes[label][2]))
    best = next(p for p in order if train[p].label == winner)
    return Prediction(winner, train[best].source_index, float(distances[best]))


def classify(test: LabeledImage, train: Sequence[LabeledImage], metric, k: int = 1,
             cache: Optional[DistanceCache] = None) -> Prediction:
    """
    Classifies test as the class of its nearest training item(s).
    :param test: the item to classify
    :param train: the training items
    :param metric: a Metric, or a DistanceKind evaluated with default settings
    :param k: number of neighbours, 1 by default
    :param cache: optional distance cache shared across calls
    :return: the prediction
    """
    if len(train) == 0:
        error_msg = "Cannot classify against an empty training set."
        logging.error(error_msg)
        raise EmptyTrainingSet(error_msg)
    metric = as_metric(metric)
    distances = [_distance(metric, item, test, cache) for item in train]
    return classify_from_distances(distances, train, k)


def accuracy(tests: Sequence[LabeledImage], train: Sequence[LabeledImage], metric, k: int = 1,
             cache: Optional[DistanceCache] = None) -> float:
    """
    Fraction of tests whose predicted class equals their label
    """
    if len(tests) == 0:
        error_msg = "Cannot measure accuracy on an empty test set."
        logging.error(error_msg)
        raise EmptyTestSet(error_msg)
    metric = as_metric(metric)
    correct = sum(classify(test, train, metric, k, cache).predicted == test.label for test in tests)
    return correct / len(tests)


def _distance(metric: Metric, item: LabeledImage, test: LabeledImage, cache: Optional[DistanceCache]) -> float:
    # the training item carries the tangent space, so its tangent vectors are reused across tests
    if cache is None:
        return metric(item.pixels, test.pixels, a_key=item.source_index).value
    key = (test.source_index, item.source_index, metric.kind)
    value = cache.get(key)
    if value is None:
        value = metric(item.pixels, test.pixels, a_key=item.source_index).value
        cache.put(key, value)
    return value
