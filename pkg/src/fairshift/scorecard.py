"""Sparse integer scorecards over shift vectors.

A card is a handful of integer coefficients, a per-column unit scale and
an integer threshold; it predicts "unfair" when the summed points fall
below the threshold. Fitting minimizes

    (1/n) * zero-one loss  +  C * (number of nonzero coefficients)
                           +  epsilon * sum(|coefficients|)

over integer coefficients in [-coeff_bound, coeff_bound] and integer
thresholds in [-intercept_bound, intercept_bound]. Small instances are
solved exactly by enumeration; larger ones by a deterministic heuristic:
an L1 subgradient separator, a top-m screen by |weight| * sigma, a
rounding grid over scalings, and greedy +/-1 local search to local
optimality (with a few seeded restarts).

Fitting uses the exact products coefficient * (delta / unit_scale); the
deployed score() additionally rounds delta / unit_scale per term so the
arithmetic a reader does on the printed table stays integer. The two
differ by at most the rounding slack (one unit per term).
"""

import json
from dataclasses import dataclass

import numpy as np


class ScorecardError(ValueError):
    pass


SCORECARD_FORMAT = "fairshift-scorecard/1"

NOTION_TITLES = {
    "demographic_parity": "DEMOGRAPHIC PARITY",
    "equal_opportunity": "EQUAL OPPORTUNITY",
    "equalized_odds": "EQUALIZED ODDS",
}


def round_half_away(x):
    """Round to nearest integer, halves away from zero (not banker's)."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def unit_scale_for(sigma):
    """Points-per-unit granularity: finer units for tightly spread columns."""
    if sigma < 0.01:
        return 0.01
    if sigma < 0.1:
        return 0.1
    return 1.0


@dataclass(frozen=True)
class SlimConfig:
    C: float = 1e-3             # objective cost per retained coefficient
    epsilon: float = 1e-3       # objective cost per unit of magnitude
    coeff_bound: int = 30
    intercept_bound: int = 50
    screen_top: int = 4         # columns kept after the |weight|*sigma screen
    n_restarts: int = 5

    def __post_init__(self):
        if self.C < 0 or self.epsilon < 0:
            raise ScorecardError("C and epsilon must be >= 0")
        if self.coeff_bound < 1 or self.intercept_bound < 1:
            raise ScorecardError("bounds must be >= 1")


@dataclass(frozen=True)
class ScorecardTerm:
    column: str
    coefficient: int
    unit_scale: float = 1.0
    original_mean: float = float("nan")
    sigma: float = float("nan")

    def __post_init__(self):
        if self.coefficient == 0:
            raise ScorecardError("zero-coefficient terms are not retained")
        if not self.unit_scale > 0:
            raise ScorecardError("unit_scale must be positive")


@dataclass
class Scorecard:
    terms: list
    threshold: int
    notion: str = "demographic_parity"
    warning_accuracy: float = None
    tpr: float = None
    tnr: float = None

    def __post_init__(self):
        self.threshold = int(self.threshold)

    def to_json(self):
        return {
            "format": SCORECARD_FORMAT,
            "notion": self.notion,
            "threshold": self.threshold,
            "terms": [{"column": t.column, "coefficient": int(t.coefficient),
                       "unit_scale": t.unit_scale,
                       "original_mean": t.original_mean, "sigma": t.sigma}
                      for t in self.terms],
            "warning_accuracy": self.warning_accuracy,
            "tpr": self.tpr,
            "tnr": self.tnr,
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != SCORECARD_FORMAT:
            raise ScorecardError(f"unsupported scorecard format: "
                                 f"{obj.get('format')!r}")
        terms = [ScorecardTerm(t["column"], int(t["coefficient"]),
                               t.get("unit_scale", 1.0),
                               t.get("original_mean", float("nan")),
                               t.get("sigma", float("nan")))
                 for t in obj["terms"]]
        return cls(terms, obj["threshold"], obj["notion"],
                   obj.get("warning_accuracy"), obj.get("tpr"), obj.get("tnr"))

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def score(card, shift):
    """Integer points for a shift: sum of coeff * round(delta / unit)."""
    total = 0
    for term in card.terms:
        units = int(round_half_away(shift.get(term.column) / term.unit_scale))
        total += term.coefficient * units
    return int(total)


def exact_score(card, shift):
    """The unrounded sum; exposed so tests can bound the rounding slack."""
    return float(sum(t.coefficient * shift.get(t.column) / t.unit_scale
                     for t in card.terms))


def objective_value(x_scaled, outcomes, coeffs, threshold, config):
    """The fitting objective on unit-scaled shift features."""
    pred = (x_scaled @ coeffs < threshold)
    loss = float(np.mean(pred != (outcomes == 1)))
    nnz = int(np.count_nonzero(coeffs))
    return loss + config.C * nnz + config.epsilon * float(np.abs(coeffs).sum())


def _tie_key(x_scaled, outcomes, coeffs, threshold, config):
    obj = objective_value(x_scaled, outcomes, coeffs, threshold, config)
    return (obj, int(np.count_nonzero(coeffs)), int(np.abs(coeffs).sum()),
            tuple(int(c) for c in coeffs), int(threshold))


def _best_threshold(scores, outcomes, t_bound):
    """Integer threshold minimizing 0-1 loss (smallest t on ties)."""
    ts = np.arange(-t_bound, t_bound + 1)
    pred = scores[:, None] < ts[None, :]
    losses = (pred != (outcomes == 1)[:, None]).mean(axis=0)
    j = int(np.argmin(losses))  # argmin takes the first (smallest t) on ties
    return int(ts[j]), float(losses[j])


def fit_exhaustive(x_scaled, outcomes, config, chunk=4096):
    """Enumerate every integer coefficient vector and threshold.

    Ties are broken by (objective, nnz, l1, lexicographic coefficients,
    threshold); rows of the enumeration grid are generated in ascending
    lexicographic order, so the first index among ties is canonical.
    """
    d = x_scaled.shape[1]
    b = config.coeff_bound
    axes = [np.arange(-b, b + 1, dtype=np.float64)] * d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    truth = (outcomes == 1)[:, None]
    ts = np.arange(-config.intercept_bound, config.intercept_bound + 1)
    best = None
    for start in range(0, mesh.shape[0], chunk):
        block = mesh[start:start + chunk]
        scores = x_scaled @ block.T                       # (n, K)
        nnz = np.count_nonzero(block, axis=1)
        l1 = np.abs(block).sum(axis=1)
        penalty = config.C * nnz + config.epsilon * l1
        for t in ts:
            obj = ((scores < t) != truth).mean(axis=0) + penalty
            lo = obj.min()
            ties = np.flatnonzero(obj == lo)
            k = ties[np.lexsort((ties, l1[ties], nnz[ties]))[0]]
            key = (float(lo), int(nnz[k]), int(l1[k]),
                   tuple(int(c) for c in block[k]), int(t))
            if best is None or key < best:
                best = key
    return np.array(best[3], dtype=np.float64), best[4], best[0]


def _subgradient_separator(x, outcomes, iters=400, lam=1e-3):
    """Real-valued L1 linear separator: unfair iff w.x < t (hinge loss)."""
    n, d = x.shape
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd < 1e-12] = 1.0
    xs = (x - mu) / sd
    z = np.where(outcomes == 1, 1.0, -1.0)  # +1 = unfair = low score side
    w = np.zeros(d)
    t = 0.0
    for k in range(iters):
        eta = 0.5 / np.sqrt(k + 1.0)
        margin = z * (t - xs @ w)
        active = margin < 1.0
        gw = (z[active, None] * xs[active]).sum(axis=0) / n
        gt = -float(z[active].sum()) / n
        w -= eta * gw
        t -= eta * gt
        w = np.sign(w) * np.maximum(np.abs(w) - eta * lam, 0.0)
    w_native = w / sd
    t_native = t + float(w_native @ mu)
    return w_native, t_native


def _local_search(x_scaled, outcomes, coeffs, threshold, config):
    """Greedy +/-1 and zero-out moves until no single change improves."""
    b, tb = config.coeff_bound, config.intercept_bound
    coeffs = coeffs.copy()
    scores = x_scaled @ coeffs
    best_key = _tie_key(x_scaled, outcomes, coeffs, threshold, config)
    improved = True
    while improved:
        improved = False
        candidates = []
        for j in range(x_scaled.shape[1]):
            for step in (1, -1, -int(coeffs[j])):
                if step == 0:
                    continue
                new_c = coeffs[j] + step
                if abs(new_c) > b:
                    continue
                trial = coeffs.copy()
                trial[j] = new_c
                t_new, _ = _best_threshold(scores + step * x_scaled[:, j],
                                           outcomes, tb)
                candidates.append((trial, t_new))
        for dt in (1, -1):
            if abs(threshold + dt) <= tb:
                candidates.append((coeffs.copy(), threshold + dt))
        for trial, t_new in candidates:
            key = _tie_key(x_scaled, outcomes, trial, t_new, config)
            if key < best_key:
                best_key = key
                coeffs = trial
                threshold = t_new
                scores = x_scaled @ coeffs
                improved = True
    return coeffs, threshold, best_key


def fit_heuristic(x_scaled, outcomes, config, seed):
    n, d = x_scaled.shape
    w_real, _ = _subgradient_separator(x_scaled, outcomes)
    sigma = x_scaled.std(axis=0)
    strength = np.abs(w_real) * sigma
    order = np.argsort(-strength, kind="stable")
    keep = [j for j in order[:config.screen_top] if strength[j] > 0]
    if not keep:
        keep = list(order[:1])
    keep = sorted(keep)
    x_kept = x_scaled[:, keep]
    w_kept = w_real[keep]

    rng = np.random.default_rng(seed)
    best = None

    def consider(coeffs, threshold):
        nonlocal best
        coeffs, threshold, key = _local_search(x_kept, outcomes,
                                               coeffs.astype(np.float64),
                                               threshold, config)
        if best is None or key < best:
            best = key

    # constant card baseline (threshold-only)
    t0, _ = _best_threshold(np.zeros(n), outcomes, config.intercept_bound)
    consider(np.zeros(len(keep)), t0)

    w_max = np.abs(w_kept).max()
    if w_max > 0:
        for target in range(1, config.coeff_bound + 1):
            coeffs = np.clip(round_half_away(w_kept * (target / w_max)),
                             -config.coeff_bound, config.coeff_bound
                             ).astype(np.float64)
            t, _ = _best_threshold(x_kept @ coeffs, outcomes,
                                   config.intercept_bound)
            consider(coeffs, t)

    base = np.array(best[3], dtype=np.float64)
    for _ in range(config.n_restarts):
        jitter = rng.integers(-1, 2, size=len(keep)).astype(np.float64)
        coeffs = np.clip(base + jitter, -config.coeff_bound, config.coeff_bound)
        t, _ = _best_threshold(x_kept @ coeffs, outcomes, config.intercept_bound)
        consider(coeffs, t)

    coeffs_kept = np.array(best[3], dtype=np.float64)
    coeffs = np.zeros(d)
    coeffs[keep] = coeffs_kept
    return coeffs, best[4], best[0]


def fit(train, config, seed, method="auto", column_info=None):
    """Fit a Scorecard on a WarningTrainingSet.

    method: "auto" enumerates exactly when the instance is small
    (columns <= 3 and coeff_bound <= 10), otherwise runs the heuristic;
    "exhaustive"/"heuristic" force a route. column_info optionally maps
    column name -> (original mean, original std) for rendering.
    """
    if len(train) < 10:
        raise ScorecardError("need at least 10 training rows")
    if train.n_fair == 0 or train.n_unfair == 0:
        raise ScorecardError("training set must contain both outcomes")
    d = train.shifts.shape[1]
    unit_scales = np.array([unit_scale_for(s)
                            for s in train.shifts.std(axis=0)])
    x_scaled = train.shifts / unit_scales[None, :]

    if method == "auto":
        method = ("exhaustive" if d <= 3 and config.coeff_bound <= 10
                  else "heuristic")
    if method == "exhaustive":
        coeffs, threshold, _ = fit_exhaustive(x_scaled, train.outcomes, config)
    elif method == "heuristic":
        coeffs, threshold, _ = fit_heuristic(x_scaled, train.outcomes, config, seed)
    else:
        raise ScorecardError(f"unknown fit method {method!r}")

    column_info = column_info or {}
    terms = []
    for j in np.flatnonzero(coeffs != 0):
        name = train.columns[j]
        mean, sig = column_info.get(name, (float("nan"),
                                           float(train.shifts[:, j].std())))
        terms.append(ScorecardTerm(name, int(coeffs[j]),
                                   float(unit_scales[j]), float(mean),
                                   float(sig)))
    terms.sort(key=lambda t: (-abs(t.coefficient) * (t.sigma if
                                                     np.isfinite(t.sigma)
                                                     else 1.0), t.column))
    return Scorecard(terms, threshold)


def card_metrics(card, wset):
    """(accuracy, TPR, TNR) of the card's unfair-warnings on a warning set."""
    from fairshift.shifts import predict_warning
    pred = np.array([predict_warning(card, wset.row(i)) == "unfair"
                     for i in range(len(wset))])
    truth = wset.outcomes == 1
    acc = float((pred == truth).mean())
    tpr = float(pred[truth].mean()) if truth.any() else None
    tnr = float((~pred[~truth]).mean()) if (~truth).any() else None
    return acc, tpr, tnr


def attach_metrics(card, wset):
    acc, tpr, tnr = card_metrics(card, wset)
    card.warning_accuracy = acc
    card.tpr = tpr
    card.tnr = tnr
    return card


def _fmt(v, digits=3):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "n/a"
    return f"{v:.{digits}g}"


def render(card):
    """Fixed-width, human-readable points table; byte-stable per card."""
    title = NOTION_TITLES.get(card.notion, card.notion.upper())
    header = f"Predict UNFAIR {title} if SCORE < {card.threshold}"
    lines = [header]
    rule = "-" * max(len(header), 64)
    lines.append(rule)
    if card.terms:
        lines.append(f"{'Feature':<32}{'Original mean':<16}{'Score':<16}")
        for t in card.terms:
            unit = ("unit" if t.unit_scale == 1.0 else f"{_fmt(t.unit_scale)} units")
            points = f"{t.coefficient:+d} points / {unit}"
            lines.append(f"{t.column:<32}{_fmt(t.original_mean):<16}{points:<16}")
        lines.append(rule)
        lines.append(f"ADD POINTS FROM ROWS 1 to {len(card.terms)}"
                     f"{'':<8}SCORE = ...")
        lines.append(rule)
    footer = (f"(Warning accuracy: {_fmt(card.warning_accuracy)}, "
              f"true positive rate: {_fmt(card.tpr)}, "
              f"true negative rate: {_fmt(card.tnr)})")
    lines.append(footer)
    return "\n".join(lines) + "\n"
