"""
Distances between images: euclidean, one-sided tangent distance and the Monge-Kantorovich transport cost.

Images are expected to be unit-sum normalized beforehand (the dataset loader does it), so the three distances
see identical inputs.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import ndimage

from mkdistance.exceptions import LengthMismatch
from mkdistance.exceptions import MKDistanceError
from mkdistance.exceptions import ShapeMismatch
from mkdistance.exceptions import SingularSystem
from mkdistance.measures import BalancedPair
from mkdistance.measures import make_balanced_pair
from mkdistance.measures import measure_from_image
from mkdistance.transport import CostMatrix
from mkdistance.transport import SolverOptions
from mkdistance.transport import TransportPlan
from mkdistance.transport import build_cost_matrix
from mkdistance.transport import solve_transport_problem

TRANSFORMATIONS = ('translate_x', 'translate_y', 'rotate', 'scale', 'shear_diag', 'shear_axis', 'thicken')
CENTRAL_DIFFERENCE = np.array([-0.5, 0.0, 0.5])


class DistanceKind(Enum):
    EUCLIDEAN = 'euclidean'
    TANGENT = 'tangent'
    KANTOROVICH = 'kantorovich'


@dataclass(frozen=True)
class TangentConfig:
    """
    transformations: names from TRANSFORMATIONS spanning the tangent space
    smoothing_sigma: gaussian smoothing applied before differentiating, in pixels
    regularization: added to the diagonal of the normal equations, None means 1e-6 * trace(T'T) / L
    """
    transformations: tuple = TRANSFORMATIONS
    smoothing_sigma: float = 1.0
    regularization: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'transformations', tuple(self.transformations))
        unknown = set(self.transformations) - set(TRANSFORMATIONS)
        if unknown:
            raise MKDistanceError(f"Unknown tangent transformations {sorted(unknown)}")
        if len(set(self.transformations)) != len(self.transformations) or len(self.transformations) > 7:
            raise MKDistanceError("Tangent transformations must be distinct, at most 7 of them.")
        if not 0.5 <= self.smoothing_sigma <= 3:
            raise MKDistanceError(f"smoothing_sigma must lie in [0.5, 3], got {self.smoothing_sigma}")
        if self.regularization is not None and self.regularization < 0:
            raise MKDistanceError("regularization must be nonnegative.")


@dataclass(frozen=True, eq=False)
class DistanceResult:
    value: float
    kind: DistanceKind
    plan: Optional[TransportPlan] = None
    cost: Optional[CostMatrix] = None


def euclidean(a, b) -> DistanceResult:
    """
    sqrt(sum_k (a_k - b_k)^2) over the flattened images
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        error_msg = f"Cannot compare vectors of length {a.size} and {b.size}."
        logging.error(error_msg)
        raise LengthMismatch(error_msg)
    return DistanceResult(float(np.linalg.norm(a - b)), DistanceKind.EUCLIDEAN)


def tangent_vectors(img, cfg: Optional[TangentConfig] = None) -> np.ndarray:
    """
    Derivatives of the configured transformations at the identity, one tangent image per transformation.
    With I the smoothed image and (x, y) measured from the image centre:
    translate_x = Ix, translate_y = Iy, rotate = y Ix - x Iy, scale = x Ix + y Iy,
    shear_diag = x Ix - y Iy, shear_axis = y Ix + x Iy, thicken = |grad I|
    :param img: 2-D image
    :param cfg: tangent configuration, defaults when None
    :return: array of shape (L, rows, cols)
    """
    cfg = cfg or TangentConfig()
    img = np.asarray(img, dtype=np.float64)
    smooth = ndimage.gaussian_filter(img, cfg.smoothing_sigma, mode='nearest')
    ix = ndimage.correlate1d(smooth, CENTRAL_DIFFERENCE, axis=1, mode='nearest')
    iy = ndimage.correlate1d(smooth, CENTRAL_DIFFERENCE, axis=0, mode='nearest')
    rows, cols = img.shape
    y, x = np.mgrid[0:rows, 0:cols].astype(np.float64)
    x -= (cols - 1) / 2
    y -= (rows - 1) / 2
    fields = {
        'translate_x': lambda: ix,
        'translate_y': lambda: iy,
        'rotate': lambda: y * ix - x * iy,
        'scale': lambda: x * ix + y * iy,
        'shear_diag': lambda: x * ix - y * iy,
        'shear_axis': lambda: y * ix + x * iy,
        'thicken': lambda: np.hypot(ix, iy),
    }
    if not cfg.transformations:
        return np.zeros((0, rows, cols))
    return np.stack([fields[name]() for name in cfg.transformations])


def tangent_distance(a, b, cfg: Optional[TangentConfig] = None, tangents: Optional[np.ndarray] = None) -> DistanceResult:
    """
    One-sided tangent distance min_alpha ||a + T alpha - b|| with the tangent space attached to a.
    alpha solves (T'T + lambda Id) alpha = T'(b - a).
    :param a: image carrying the tangent space
    :param b: image compared against it
    :param cfg: tangent configuration
    :param tangents: precomputed tangent_vectors(a, cfg), computed here when None
    :return: the distance
    """
    cfg = cfg or TangentConfig()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        error_msg = f"Cannot compare images of shape {a.shape} and {b.shape}."
        logging.error(error_msg)
        raise ShapeMismatch(error_msg)
    if not cfg.transformations:
        return DistanceResult(euclidean(a, b).value, DistanceKind.TANGENT)
    if tangents is None:
        tangents = tangent_vectors(a, cfg)
    t = tangents.reshape(len(tangents), -1).T
    diff = (b - a).ravel()
    gram = t.T @ t
    trace = float(np.trace(gram))
    if cfg.regularization is None:
        if trace == 0:
            return DistanceResult(float(np.linalg.norm(diff)), DistanceKind.TANGENT)
        regularization = 1e-6 * trace / t.shape[1]
    else:
        regularization = cfg.regularization
    if regularization == 0 and np.linalg.matrix_rank(gram) < t.shape[1]:
        error_msg = f"The tangent space of dimension {t.shape[1]} is rank deficient and no regularization is set."
        logging.error(error_msg)
        raise SingularSystem(error_msg)
    alpha = np.linalg.solve(gram + regularization * np.eye(t.shape[1]), t.T @ diff)
    return DistanceResult(float(np.linalg.norm(t @ alpha - diff)), DistanceKind.TANGENT)


def kantorovich(a, b, opts: Optional[SolverOptions] = None, normalize: bool = True,
                min_mass: float = 0.0) -> DistanceResult:
    """
    Optimal squared-distance transport cost between the pixel measures of two images.
    The raw objective is returned, not its square root; nearest neighbour search only needs the ordering.
    :param a: source image
    :param b: target image
    :param opts: solver options
    :param normalize: scale both measures to unit mass first, otherwise the pixel sums must already agree
    :param min_mass: pixels at or below this intensity are dropped
    :return: the distance, carrying the plan and the cost matrix for certification
    """
    source = measure_from_image(a, min_mass)
    target = measure_from_image(b, min_mass)
    pair = make_balanced_pair(source, target) if normalize else BalancedPair(source, target)
    cost = build_cost_matrix(pair)
    plan = solve_transport_problem(pair.source.masses, pair.target.masses, cost, opts)
    return DistanceResult(plan.objective, DistanceKind.KANTOROVICH, plan=plan, cost=cost)


class Metric:
    """
    A distance with its configuration bound, callable as metric(a, b).
    Tangent vectors of the first argument are cached under a_key when one is given, so a training image
    compared against many test images is differentiated once.
    """

    def __init__(self, kind: DistanceKind, solver_options: Optional[SolverOptions] = None,
                 tangent_config: Optional[TangentConfig] = None):
        self.kind = DistanceKind(kind)
        self.solver_options = solver_options or SolverOptions()
        self.tangent_config = tangent_config or TangentConfig()
        self._tangents = {}

    def __call__(self, a, b, a_key=None) -> DistanceResult:
        if self.kind is DistanceKind.EUCLIDEAN:
            return euclidean(a, b)
        if self.kind is DistanceKind.TANGENT:
            tangents = None
            if a_key is not None:
                tangents = self._tangents.get(a_key)
                if tangents is None:
                    tangents = tangent_vectors(a, self.tangent_config)
                    self._tangents[a_key] = tangents
            return tangent_distance(a, b, self.tangent_config, tangents)
        return kantorovich(a, b, self.solver_options)

    def __repr__(self):
        return f"Metric({self.kind.value})"


def sqrt_objective(result: DistanceResult) -> DistanceResult:
    """The L2 Wasserstein value of a Kantorovich result."""
    return DistanceResult(math.sqrt(max(result.value, 0.0)), result.kind, result.plan, result.cost)
