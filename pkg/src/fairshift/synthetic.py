"""Synthetic two-Gaussian task family.

Training tasks draw points from an equal mixture of
  component 1: N([2, 2],  [[5, 1], [1, 5]])
  component 2: N([-2, -2], [[10, 1], [1, 3]])
and label them by a line through the origin with a random slope in
[-5, 5]. The sensitive attribute is drawn from the density ratio of the
two components evaluated at the point rotated by an angle phi, selected
from {2, 4, 8, 16}.

phi is an angle in radians and the rotation matrix is
[[cos phi, -sin phi], [sin phi, cos phi]]; the source construction never
states units, so this is pinned here and documented. Note the realized
sensitive/label correlation is NOT monotone in phi under this reading
(16 rad wraps to ~197 degrees and re-correlates by near-reflection).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from fairshift.dataset import make_dataset

MEAN_POS = np.array([2.0, 2.0])
COV_POS = np.array([[5.0, 1.0], [1.0, 5.0]])
MEAN_NEG = np.array([-2.0, -2.0])
COV_NEG = np.array([[10.0, 1.0], [1.0, 3.0]])

_CHOL_POS = np.linalg.cholesky(COV_POS)
_CHOL_NEG = np.linalg.cholesky(COV_NEG)
_INV_POS = np.linalg.inv(COV_POS)
_INV_NEG = np.linalg.inv(COV_NEG)
_LOGNORM_POS = -np.log(2.0 * np.pi) - 0.5 * np.log(np.linalg.det(COV_POS))
_LOGNORM_NEG = -np.log(2.0 * np.pi) - 0.5 * np.log(np.linalg.det(COV_NEG))

SLOPE_RANGE = (-5.0, 5.0)
PHI_CHOICES = (2.0, 4.0, 8.0, 16.0)

COLUMN_NAMES = ["x1", "x2"]


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticTaskSpec:
    slope: float
    phi: float
    seed: int

    def __post_init__(self):
        if not SLOPE_RANGE[0] <= self.slope <= SLOPE_RANGE[1]:
            raise ValueError(f"slope {self.slope} outside {SLOPE_RANGE}")
        if self.phi not in PHI_CHOICES:
            raise ValueError(f"phi {self.phi} not one of {PHI_CHOICES}")


def sample_task_spec(seed):
    rng = np.random.default_rng(seed)
    slope = float(rng.uniform(*SLOPE_RANGE))
    phi = float(rng.choice(PHI_CHOICES))
    return SyntheticTaskSpec(slope, phi, int(seed))


def draw_component(rng, component, n):
    """n points from mixture component 1 or 2."""
    mean, chol = ((MEAN_POS, _CHOL_POS) if component == 1
                  else (MEAN_NEG, _CHOL_NEG))
    return mean + rng.standard_normal((n, 2)) @ chol.T


def _logpdf(points, mean, inv, lognorm):
    d = points - mean
    quad = np.einsum("ij,jk,ik->i", d, inv, d)
    return lognorm - 0.5 * quad


def line_labels(points, slope):
    """1 above the line x2 = slope * x1, 0 on or below."""
    return (points[:, 1] > slope * points[:, 0]).astype(np.int8)


def protected_probability(points, phi):
    """P(a = 0) per row: density ratio of the components at the rotated point."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    rot = np.array([[np.cos(phi), -np.sin(phi)],
                    [np.sin(phi), np.cos(phi)]])
    xp = np.atleast_2d(points) @ rot.T
    log1 = _logpdf(xp, MEAN_POS, _INV_POS, _LOGNORM_POS)
    log0 = _logpdf(xp, MEAN_NEG, _INV_NEG, _LOGNORM_NEG)
    bad = ~(np.isfinite(log1) & np.isfinite(log0))
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} rows with vanishing densities; "
                      "assigning P(a=0) = 0.5 there", RuntimeWarning)
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(np.where(bad, 0.0, log0 - log1)))
    return np.where(bad, 0.5, p)


def assign_sensitive(points, labels, phi, rng=None, uniforms=None):
    """Draw the sensitive attribute per row (0 = protected).

    labels is accepted for signature parity with the task tuple but the
    draw depends only on the point's position: the class-conditional
    densities are those of the two fixed components. Pass uniforms to
    make the per-row draws explicit (used by permutation tests).
    """
    del labels
    points = np.asarray(points, dtype=np.float64)
    p0 = protected_probability(points, phi)
    if uniforms is None:
        if rng is None:
            raise ValueError("need rng or explicit uniforms")
        uniforms = rng.random(points.shape[0])
    return (np.asarray(uniforms) >= p0).astype(np.int8)


def draw_task_points(spec, n, rng):
    """(points, labels, sensitive) for n fresh mixture draws from a task."""
    if n < 1:
        raise ValueError("need n >= 1")
    component = rng.integers(1, 3, size=n)
    pts = np.empty((n, 2))
    for comp in (1, 2):
        mask = component == comp
        if mask.any():
            pts[mask] = draw_component(rng, comp, int(mask.sum()))
    labels = line_labels(pts, spec.slope)
    sens = assign_sensitive(pts, labels, spec.phi, rng=rng)
    return pts, labels, sens


def sample_training_points(spec, n):
    """A labeled, sensitive-annotated Dataset of n mixture draws."""
    pts, labels, sens = draw_task_points(spec, n, np.random.default_rng(spec.seed))
    return make_dataset(pts, labels, sens, COLUMN_NAMES)


def make_biased_finetune_set(seed, support_size=5, eval_size=1000, phi=4.0,
                             max_attempts=10 ** 6):
    """The skewed fine-tuning task: (support, evaluation) Datasets.

    Support: exactly `support_size` rows, every one a positive-outcome
    member of the protected class, drawn from component 1 with the
    sensitive attribute rejection-sampled at the given phi. Evaluation:
    a fresh two-component mixture labeled by component membership.
    """
    rng = np.random.default_rng(seed)
    rows = []
    attempts = 0
    while len(rows) < support_size:
        if attempts >= max_attempts:
            raise SamplingError(f"rejection sampling exceeded {max_attempts} "
                                "attempts")
        pt = draw_component(rng, 1, 1)
        attempts += 1
        if assign_sensitive(pt, None, phi, rng=rng)[0] == 0:
            rows.append(pt[0])
    support = make_dataset(np.asarray(rows),
                           np.ones(support_size, dtype=np.int8),
                           np.zeros(support_size, dtype=np.int8),
                           COLUMN_NAMES)

    component = rng.integers(1, 3, size=eval_size)
    pts = np.empty((eval_size, 2))
    for comp in (1, 2):
        mask = component == comp
        if mask.any():
            pts[mask] = draw_component(rng, comp, int(mask.sum()))
    labels = (component == 1).astype(np.int8)
    sens = assign_sensitive(pts, labels, phi, rng=rng)
    evaluation = make_dataset(pts, labels, sens, COLUMN_NAMES)
    return support, evaluation
