"""Group-fairness ratios and the thresholded fairness oracle.

Ratios are protected-over-unprotected as written (not symmetrized): the
regularized training path only ever pushes the protected group's rates
up, so values above 1 are possible and count as fair for any threshold
<= 1. A symmetrize flag is available for sensitivity studies.

Zero-cell guard: 0/0 -> 1.0; x/0 with x > 0 -> a large cap (default 1e6).
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

FAIR = "fair"
UNFAIR = "unfair"
ORACLE_UNDEFINED = "oracle_undefined"

NOTION_KINDS = ("demographic_parity", "equal_opportunity", "equalized_odds")

RATIO_CAP = 1e6


class SubgroupError(ValueError):
    """A conditioning subgroup required by a metric is empty."""


@dataclass(frozen=True)
class FairnessNotion:
    kind: str
    threshold: float

    def __post_init__(self):
        if self.kind not in NOTION_KINDS:
            raise ValueError(f"unknown fairness notion {self.kind!r}")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")


def _as_binary(name, v):
    v = np.asarray(v)
    if not np.isin(v, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1")
    return v.astype(np.int8)


def _safe_ratio(num, den, cap):
    if den == 0.0:
        return 1.0 if num == 0.0 else cap
    return num / den


def _symmetrize(r):
    if r == 0.0:
        return 0.0
    return min(r, 1.0 / r)


def demographic_parity_ratio(preds, sensitive, cap=RATIO_CAP, symmetrize=False):
    """P(pred=1 | protected) / P(pred=1 | unprotected)."""
    preds = _as_binary("preds", preds)
    sensitive = _as_binary("sensitive", sensitive)
    if preds.shape != sensitive.shape:
        raise ValueError("preds and sensitive lengths differ")
    prot = sensitive == 0
    if not prot.any() or prot.all():
        raise SubgroupError("both sensitive groups must be present")
    r = _safe_ratio(preds[prot].mean(), preds[~prot].mean(), cap)
    return _symmetrize(r) if symmetrize else float(r)


def equal_opportunity_ratio(preds, sensitive, labels, cap=RATIO_CAP,
                            symmetrize=False):
    """True-positive-rate ratio, protected over unprotected."""
    preds = _as_binary("preds", preds)
    sensitive = _as_binary("sensitive", sensitive)
    labels = _as_binary("labels", labels)
    pos = labels == 1
    prot = (sensitive == 0) & pos
    unprot = (sensitive == 1) & pos
    if not prot.any():
        raise SubgroupError("no protected rows with positive labels")
    if not unprot.any():
        raise SubgroupError("no unprotected rows with positive labels")
    r = _safe_ratio(preds[prot].mean(), preds[unprot].mean(), cap)
    return _symmetrize(r) if symmetrize else float(r)


def equalized_odds_ratios(preds, sensitive, labels, cap=RATIO_CAP,
                          symmetrize=False):
    """(TPR ratio, FPR ratio), each protected over unprotected."""
    preds = _as_binary("preds", preds)
    sensitive = _as_binary("sensitive", sensitive)
    labels = _as_binary("labels", labels)
    out = []
    for y in (1, 0):
        cond = labels == y
        prot = (sensitive == 0) & cond
        unprot = (sensitive == 1) & cond
        if not prot.any() or not unprot.any():
            raise SubgroupError(f"empty (sensitive, label={y}) subgroup")
        r = _safe_ratio(preds[prot].mean(), preds[unprot].mean(), cap)
        out.append(_symmetrize(r) if symmetrize else float(r))
    return tuple(out)


def notion_ratios(notion, preds, sensitive, labels, cap=RATIO_CAP):
    """The ratio(s) the notion thresholds, as a tuple."""
    if notion.kind == "demographic_parity":
        return (demographic_parity_ratio(preds, sensitive, cap),)
    if notion.kind == "equal_opportunity":
        return (equal_opportunity_ratio(preds, sensitive, labels, cap),)
    return equalized_odds_ratios(preds, sensitive, labels, cap)


def fairness_oracle(model, dataset, notion, cap=RATIO_CAP):
    """Binary verdict for a predictor on a dataset: fair / unfair.

    Subgroup preconditions that cannot be met (e.g. a group vanished from
    a shifted dataset) yield the distinct third outcome oracle_undefined
    rather than an exception; downstream callers redraw on it.
    """
    preds = np.asarray(model(dataset.features))
    try:
        ratios = notion_ratios(notion, preds, dataset.sensitive,
                               dataset.labels, cap)
    except SubgroupError:
        return ORACLE_UNDEFINED
    return FAIR if all(r >= notion.threshold for r in ratios) else UNFAIR


def _rate(preds, mask):
    return float(preds[mask].mean()) if mask.any() else None


@dataclass
class EvalReport:
    """Accuracy plus every fairness ratio and the underlying group rates.

    Ratio fields are None when their conditioning subgroup is empty.
    """

    accuracy: float
    dp_ratio: float = None
    eop_ratio: float = None
    eodds_tpr_ratio: float = None
    eodds_fpr_ratio: float = None
    rate_a0: float = None
    rate_a1: float = None
    tpr_a0: float = None
    tpr_a1: float = None
    fpr_a0: float = None
    fpr_a1: float = None

    def to_json(self):
        return dict(asdict(self))

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def evaluation_report(preds, labels, sensitive, cap=RATIO_CAP):
    preds = _as_binary("preds", preds)
    labels = _as_binary("labels", labels)
    sensitive = _as_binary("sensitive", sensitive)
    prot = sensitive == 0
    report = EvalReport(accuracy=float((preds == labels).mean()))
    report.rate_a0 = _rate(preds, prot)
    report.rate_a1 = _rate(preds, ~prot)
    report.tpr_a0 = _rate(preds, prot & (labels == 1))
    report.tpr_a1 = _rate(preds, ~prot & (labels == 1))
    report.fpr_a0 = _rate(preds, prot & (labels == 0))
    report.fpr_a1 = _rate(preds, ~prot & (labels == 0))
    if report.rate_a0 is not None and report.rate_a1 is not None:
        report.dp_ratio = _safe_ratio(report.rate_a0, report.rate_a1, cap)
    if report.tpr_a0 is not None and report.tpr_a1 is not None:
        report.eop_ratio = _safe_ratio(report.tpr_a0, report.tpr_a1, cap)
        if report.fpr_a0 is not None and report.fpr_a1 is not None:
            report.eodds_tpr_ratio = report.eop_ratio
            report.eodds_fpr_ratio = _safe_ratio(report.fpr_a0,
                                                 report.fpr_a1, cap)
    return report
