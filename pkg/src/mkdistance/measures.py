"""
Images and point clouds as discrete measures: finite sums of weighted Diracs on the plane.

A pixel at (row r, col c) becomes the point (x=c, y=r), distances are measured in pixel units.
"""
import logging
import math
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from mkdistance.exceptions import AllZeroImage
from mkdistance.exceptions import InvalidMeasure
from mkdistance.exceptions import UnbalancedProblem
from mkdistance.exceptions import ZeroTotalMass

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class GridPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidMeasure(f"Grid point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """
    Weighted point masses.
    coords is a (k, 2) float array of (x, y) positions, masses a (k,) float array of nonnegative weights.
    Both arrays are copied and made read-only so a measure can be shared freely between threads.
    """
    coords: np.ndarray
    masses: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64).reshape(-1, 2)
        masses = np.array(self.masses, dtype=np.float64).reshape(-1)
        if len(coords) == 0 or len(coords) != len(masses):
            error_msg = f"A measure needs at least one point and one mass per point, got {len(coords)} points " \
                        f"and {len(masses)} masses."
            logging.error(error_msg)
            raise InvalidMeasure(error_msg)
        if not np.all(np.isfinite(coords)):
            raise InvalidMeasure("Support point coordinates must be finite.")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise InvalidMeasure("Masses must be finite and nonnegative.")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise InvalidMeasure("Support points must be pairwise distinct.")
        coords.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, 'coords', coords)
        object.__setattr__(self, 'masses', masses)
        object.__setattr__(self, 'total_mass', math.fsum(masses))

    @property
    def points(self) -> tuple:
        return tuple(GridPoint(float(x), float(y)) for x, y in self.coords)

    def __len__(self) -> int:
        return len(self.masses)

    def scaled(self, factor: float) -> 'DiscreteMeasure':
        return DiscreteMeasure(self.coords, self.masses * factor)

    def translated(self, dx: float, dy: float) -> 'DiscreteMeasure':
        return DiscreteMeasure(self.coords + np.array([dx, dy]), self.masses)


@dataclass(frozen=True)
class BalancedPair:
    source: DiscreteMeasure
    target: DiscreteMeasure

    def __post_init__(self):
        check_balanced(self.source.total_mass, self.target.total_mass)


def check_balanced(supply_total: float, demand_total: float, balance_tol: float = BALANCE_TOL):
    """
    Raises UnbalancedProblem unless the two totals agree within balance_tol, relative to max(supply_total, 1)
    """
    if abs(supply_total - demand_total) > balance_tol * max(supply_total, 1.0):
        error_msg = f"Total supply {supply_total!r} and total demand {demand_total!r} differ. " \
                    f"Normalize the measures before solving."
        logging.error(error_msg)
        raise UnbalancedProblem(error_msg)


def measure_from_image(img, min_mass: float = 0.0) -> DiscreteMeasure:
    """
    Builds a measure with one Dirac per pixel whose intensity exceeds min_mass.
    Pixels are scanned in row-major order, pixel (r, c) is placed at (x=c, y=r) with mass equal to its intensity.
    :param img: 2-D array of nonnegative intensities
    :param min_mass: intensities at or below this threshold are dropped
    :return: the discrete measure of the kept pixels
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidMeasure(f"Expected a 2-D image, got an array of shape {img.shape}")
    if np.any(img < 0):
        raise InvalidMeasure("Image intensities must be nonnegative.")
    rows, cols = np.nonzero(img > min_mass)
    if len(rows) == 0:
        error_msg = f"No pixel of the {img.shape[0]}x{img.shape[1]} image exceeds {min_mass}."
        logging.error(error_msg)
        raise AllZeroImage(error_msg)
    coords = np.column_stack([cols, rows]).astype(np.float64)
    return DiscreteMeasure(coords, img[rows, cols])


def normalize(m: DiscreteMeasure) -> DiscreteMeasure:
    """
    Scales the masses so that they sum to one
    """
    if not m.total_mass > 0:
        error_msg = "Cannot normalize a measure with zero total mass."
        logging.error(error_msg)
        raise ZeroTotalMass(error_msg)
    return DiscreteMeasure(m.coords, m.masses / m.total_mass)


def make_balanced_pair(a: DiscreteMeasure, b: DiscreteMeasure) -> BalancedPair:
    """
    Normalizes both measures to unit total mass and pairs them as source and target
    """
    return BalancedPair(normalize(a), normalize(b))


def normalize_image(img) -> np.ndarray:
    """
    Divides an image by its pixel sum
    """
    img = np.asarray(img, dtype=np.float64)
    total = math.fsum(img.ravel())
    if not total > 0:
        error_msg = f"Cannot normalize a {'x'.join(str(d) for d in img.shape)} image whose pixel sum is {total}."
        logging.error(error_msg)
        raise ZeroTotalMass(error_msg)
    return img / total
