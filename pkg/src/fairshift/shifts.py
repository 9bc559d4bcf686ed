"""Mean-shift perturbations and the warning-set loop.

A shift assigns every shiftable column one real delta: numeric columns
get an additive mean shift in native units, binary columns a change to
their Bernoulli proportion (realized p clipped to [0, 1]). Shift
magnitudes are drawn from N(0, sigma_col) for numeric columns and the
new proportion from N(p, spread) for binary ones; spread defaults to 1
as stated, which clips most draws to an endpoint, and is exposed as a
knob because narrower spreads are often more informative.

build_warning_set labels each sampled shift with the fairness oracle's
verdict on the shifted data, redrawing the (rare) draws on which the
oracle is undefined. Draw i uses its own spawned RNG stream, so results
are reproducible and independent of evaluation order.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from fairshift.dataset import KIND_BINARY, make_dataset
from fairshift.metrics import FAIR, ORACLE_UNDEFINED, UNFAIR, fairness_oracle

MIN_SHIFT_STD = 1e-6

NO_WARNING = "no_warning"


class ShiftError(ValueError):
    pass


class WarningSetError(RuntimeError):
    pass


class SingleOutcomeWarning(UserWarning):
    """Every sampled shift got the same verdict; widen the shifts."""


@dataclass
class ShiftVector:
    columns: tuple
    deltas: np.ndarray

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.deltas = np.asarray(self.deltas, dtype=np.float64)
        if self.deltas.shape != (len(self.columns),):
            raise ShiftError("one delta per column required")
        if not np.isfinite(self.deltas).all():
            raise ShiftError("shift deltas must be finite")

    @classmethod
    def from_dict(cls, mapping):
        cols = tuple(mapping)
        return cls(cols, np.array([mapping[c] for c in cols]))

    def get(self, column):
        try:
            return float(self.deltas[self.columns.index(column)])
        except ValueError:
            raise ShiftError(f"shift has no column {column!r}") from None

    def as_dict(self):
        return dict(zip(self.columns, self.deltas.tolist()))


def shiftable_columns(dataset):
    """Columns eligible for shifting: empirical std at least 1e-6."""
    return [m for m in dataset.column_meta if m.std_dev >= MIN_SHIFT_STD]


def sample_shift_vector(dataset, seed, spread=1.0):
    """One random mean shift over all shiftable columns."""
    rng = np.random.default_rng(seed)
    cols, deltas = [], []
    for meta in shiftable_columns(dataset):
        if meta.kind == KIND_BINARY:
            new_p = float(np.clip(rng.normal(meta.mean, spread), 0.0, 1.0))
            deltas.append(new_p - meta.mean)
        else:
            deltas.append(float(rng.normal(0.0, meta.std_dev)))
        cols.append(meta.name)
    return ShiftVector(tuple(cols), np.array(deltas))


def apply_shift(dataset, shift, seed):
    """Shifted copy: numeric columns translated, binary columns resampled.

    Labels and the sensitive column are never touched here; shifting them
    is not part of the mean-shift scheme this engine implements.
    """
    rng = np.random.default_rng(seed)
    features = dataset.features.copy()
    names = dataset.column_names
    for col, delta in zip(shift.columns, shift.deltas):
        if col not in names:
            raise ShiftError(f"unknown column in shift: {col!r}")
        j = names.index(col)
        meta = dataset.column_meta[j]
        if meta.kind == KIND_BINARY:
            p_new = float(np.clip(meta.mean + delta, 0.0, 1.0))
            features[:, j] = (rng.random(dataset.n_rows) < p_new)
        else:
            features[:, j] = features[:, j] + delta
    return make_dataset(features, dataset.labels, dataset.sensitive, names)


@dataclass
class WarningTrainingSet:
    """Sampled shifts with their fairness verdicts (1 = unfair)."""

    columns: tuple
    shifts: np.ndarray    # (n, d) deltas
    outcomes: np.ndarray  # (n,) uint8, 1 = unfair

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.shifts = np.asarray(self.shifts, dtype=np.float64)
        self.outcomes = np.asarray(self.outcomes, dtype=np.uint8)
        if self.shifts.ndim != 2 or self.shifts.shape[1] != len(self.columns):
            raise ShiftError("shift matrix width must match columns")
        if self.outcomes.shape != (self.shifts.shape[0],):
            raise ShiftError("one outcome per shift row required")

    def __len__(self):
        return self.shifts.shape[0]

    @property
    def n_unfair(self):
        return int(self.outcomes.sum())

    @property
    def n_fair(self):
        return int(len(self) - self.outcomes.sum())

    def row(self, i):
        return ShiftVector(self.columns, self.shifts[i])

    def take(self, idx):
        idx = np.asarray(idx)
        return WarningTrainingSet(self.columns, self.shifts[idx],
                                  self.outcomes[idx])

    def to_csv(self, path_or_buf):
        header = ",".join([*self.columns, "outcome"])
        rows = [",".join([repr(float(v)) for v in self.shifts[i]]
                         + [str(int(self.outcomes[i]))])
                for i in range(len(self))]
        text = "\n".join([header, *rows]) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8") as fh:
                fh.write(text)

    @classmethod
    def from_csv(cls, path_or_buf):
        if hasattr(path_or_buf, "read"):
            fh = path_or_buf
            lines = fh.read().splitlines()
        else:
            with open(path_or_buf, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        header = lines[0].split(",")
        if header[-1] != "outcome":
            raise ShiftError("last column of a warning set must be 'outcome'")
        body = [line.split(",") for line in lines[1:] if line]
        shifts = np.array([[float(v) for v in row[:-1]] for row in body])
        outcomes = np.array([int(row[-1]) for row in body], dtype=np.uint8)
        return cls(tuple(header[:-1]), shifts, outcomes)


def build_warning_set(model, dataset, notion, n_shifts, seed, spread=1.0,
                      max_attempt_factor=10):
    """Algorithm: repeat n_shifts times (shift data, ask the oracle).

    Undefined oracle verdicts (a subgroup emptied by the shift) trigger a
    redraw, capped at max_attempt_factor * n_shifts total attempts.
    Deterministic in the seed; attempt i draws from its own spawned
    stream, so accepted rows are independent of evaluation order.
    """
    if n_shifts < 2:
        raise WarningSetError("need n_shifts >= 2")
    columns = tuple(m.name for m in shiftable_columns(dataset))
    if not columns:
        raise WarningSetError("dataset has no shiftable columns")
    cap = max_attempt_factor * n_shifts
    streams = np.random.SeedSequence(seed).spawn(cap)
    shifts = np.empty((n_shifts, len(columns)))
    outcomes = np.empty(n_shifts, dtype=np.uint8)
    kept = 0
    for attempt in range(cap):
        if kept == n_shifts:
            break
        child = np.random.default_rng(streams[attempt])
        shift = sample_shift_vector(dataset, child, spread=spread)
        shifted = apply_shift(dataset, shift, child)
        verdict = fairness_oracle(model, shifted, notion)
        if verdict == ORACLE_UNDEFINED:
            continue
        shifts[kept] = shift.deltas
        outcomes[kept] = 1 if verdict == UNFAIR else 0
        kept += 1
    if kept < n_shifts:
        raise WarningSetError(f"oracle undefined too often: kept {kept} of "
                              f"{n_shifts} after {cap} attempts")
    wset = WarningTrainingSet(columns, shifts, outcomes)
    if wset.n_fair == 0 or wset.n_unfair == 0:
        only = UNFAIR if wset.n_fair == 0 else FAIR
        warnings.warn(f"all {n_shifts} outcomes are {only!r}; consider wider "
                      "shifts (spread) or a different threshold",
                      SingleOutcomeWarning, stacklevel=2)
    return wset


def predict_warning(card, shift):
    """Scorecard verdict for one shift: 'unfair' or 'no_warning'.

    No warning certifies nothing; the scorecard is one-directional.
    """
    from fairshift.scorecard import score
    return UNFAIR if score(card, shift) < card.threshold else NO_WARNING
