"""Meta-training, the pre-trained baseline, fine-tuning and evaluation.

The meta loop follows the one-inner-step recipe: per task, adapt on a
K-row support draw, compute the meta-gradient through that step on a
fresh K-row query draw, sum task meta-gradients in task order and apply
one Adam step. The baseline consumes the same per-task draw volume but
applies plain gradient steps directly to the shared parameters.
"""

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from fairshift import nn
from fairshift.metrics import evaluation_report
from fairshift.nn import (AdamState, Batch, ParamSet, TaskLossSpec, adam_step,
                          init_mlp, inner_adapt, meta_grad, grad)
from fairshift.synthetic import COLUMN_NAMES as SYNTH_COLUMNS
from fairshift.synthetic import draw_task_points, sample_task_spec

MODEL_FORMAT = "fairshift-model/1"


class TrainingError(RuntimeError):
    pass


class SmallTaskWarning(UserWarning):
    """A task had fewer than 2K rows; query rows were redrawn."""


@dataclass(frozen=True)
class MetaConfig:
    shapes: tuple
    K: int = 5
    meta_batch_size: int = 8
    meta_iterations: int = 1000
    alpha: float = 0.3
    beta: float = 1e-3
    spec: TaskLossSpec = field(default_factory=TaskLossSpec)
    first_order: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.meta_batch_size < 1:
            raise ValueError("K and meta_batch_size must be >= 1")
        if self.meta_iterations < 0:
            raise ValueError("meta_iterations must be >= 0")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be > 0")


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features):
        std = features.std(axis=0)
        return cls(features.mean(axis=0), np.where(std < 1e-9, 1.0, std))

    @classmethod
    def identity(cls, width):
        return cls(np.zeros(width), np.ones(width))

    def transform(self, features):
        return (features - self.mean) / self.std

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["mean"], dtype=np.float64),
                   np.asarray(obj["std"], dtype=np.float64))


def batch_from_rows(dataset, idx, scaler=None):
    feats = dataset.features[idx]
    if scaler is not None:
        feats = scaler.transform(feats)
    return Batch(feats, dataset.labels[idx], dataset.sensitive[idx])


def _ensure_group(rng, dataset, idx, pool, mask):
    """Swap one drawn row for a masked row when the draw missed the group."""
    if mask[idx].any() or not mask[pool].any():
        return idx
    candidates = pool[mask[pool]]
    replacement = candidates[rng.integers(len(candidates))]
    idx = idx.copy()
    idx[rng.integers(len(idx))] = replacement
    return idx


def _stratified_draw(rng, dataset, k, stratify, exclude=None):
    n = dataset.n_rows
    pool = np.arange(n)
    if exclude is not None:
        pool = np.setdiff1d(pool, exclude)
    if len(pool) >= k:
        idx = rng.choice(pool, size=k, replace=False)
    else:
        warnings.warn("task smaller than 2K rows; drawing query rows with "
                      "replacement", SmallTaskWarning, stacklevel=2)
        idx = rng.choice(pool, size=k, replace=True)
    if stratify in ("protected", "protected_positive"):
        idx = _ensure_group(rng, dataset, idx, pool, dataset.sensitive == 0)
    if stratify == "protected_positive":
        idx = _ensure_group(rng, dataset, idx, pool,
                            (dataset.sensitive == 0) & (dataset.labels == 1))
    return np.sort(idx)


class SyntheticTaskSampler:
    """Draws support/query from a cache of synthetic task specs.

    The cache mirrors the protocol of generating a fixed pool of tasks up
    front; support and query are fresh draws from the task distribution,
    so they are disjoint by construction.
    """

    def __init__(self, seed, n_cached_tasks=100):
        children = np.random.SeedSequence(seed).spawn(n_cached_tasks)
        self.specs = [sample_task_spec(child.generate_state(1)[0])
                      for child in children]
        self.width = 2

    def sample_batch(self, rng, batch_size, k, iteration=0):
        del iteration
        picks = rng.integers(0, len(self.specs), size=batch_size)
        out = []
        for i in picks:
            spec = self.specs[i]
            sx, sy, sa = draw_task_points(spec, k, rng)
            qx, qy, qa = draw_task_points(spec, k, rng)
            out.append((f"task{i}", Batch(sx, sy, sa), Batch(qx, qy, qa)))
        return out


class CollectionTaskSampler:
    """Draws support/query rows from tasks of a TaskCollection.

    cache_batches > 0 pre-generates that many batches at construction and
    cycles through them by iteration index (the cached-batch protocol);
    0 draws fresh batches from the loop RNG every iteration.
    """

    def __init__(self, collection, seed, k, meta_batch_size, scaler=None,
                 stratify=None, cache_batches=0):
        self.collection = collection
        self.scaler = scaler
        self.stratify = stratify
        self.cache = []
        if cache_batches > 0:
            rng = np.random.default_rng(np.random.SeedSequence(seed))
            self.cache = [self._draw(rng, meta_batch_size, k)
                          for _ in range(cache_batches)]
        widths = {ds.n_cols for _, ds in collection}
        if len(widths) != 1:
            raise TrainingError("tasks must share a feature width")
        self.width = widths.pop()

    def _draw(self, rng, batch_size, k):
        n_tasks = len(self.collection.tasks)
        picks = rng.choice(n_tasks, size=min(batch_size, n_tasks),
                           replace=n_tasks < batch_size)
        out = []
        for i in picks:
            task_id, ds = self.collection.tasks[int(i)]
            sup = _stratified_draw(rng, ds, k, self.stratify)
            qry = _stratified_draw(rng, ds, k, self.stratify, exclude=sup)
            out.append((task_id, batch_from_rows(ds, sup, self.scaler),
                        batch_from_rows(ds, qry, self.scaler)))
        return out

    def sample_batch(self, rng, batch_size, k, iteration=0):
        if self.cache:
            return self.cache[iteration % len(self.cache)]
        return self._draw(rng, batch_size, k)


def _loop_rng(seed):
    return np.random.default_rng(np.random.SeedSequence([seed, 0x5A5A]))


def meta_train(sampler, config, init=None):
    """Fair-MAML / MAML meta-training; deterministic in config.seed."""
    params = init if init is not None else init_mlp(config.shapes, config.seed)
    state = AdamState.zeros(params.n_params)
    rng = _loop_rng(config.seed)
    for it in range(config.meta_iterations):
        tasks = sampler.sample_batch(rng, config.meta_batch_size, config.K, it)
        total = np.zeros(params.n_params)
        for task_id, support, query in tasks:
            g = meta_grad(params, support, query, config.spec, config.alpha,
                          config.first_order)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite meta-gradient at iteration "
                                    f"{it}, task {task_id!r}")
            total += g
        state, params = adam_step(state, params, total, config.beta)
    return params


def pretrain_baseline(sampler, config, init=None):
    """Conventional training over the same task stream.

    Each task contributes one plain gradient step on a 2K-row draw
    (support plus query volume), applied directly to the shared
    parameters with step size alpha.
    """
    params = init if init is not None else init_mlp(config.shapes, config.seed)
    rng = _loop_rng(config.seed)
    for it in range(config.meta_iterations):
        tasks = sampler.sample_batch(rng, config.meta_batch_size, config.K, it)
        for task_id, support, query in tasks:
            joint = Batch(np.vstack([support.x, query.x]),
                          np.concatenate([support.y, query.y]),
                          np.concatenate([support.a, query.a]))
            g = grad(params, joint, config.spec)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient at iteration {it}, "
                                    f"task {task_id!r}")
            params = params.with_flat(params.flat - config.alpha * g)
    return params


def finetune(params, support, steps, lr, spec):
    """`steps` plain gradient steps on the support batch; input untouched."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    adapted = params
    for _ in range(steps):
        adapted = inner_adapt(adapted, support, spec, lr)
        if not np.all(np.isfinite(adapted.flat)):
            raise TrainingError("non-finite parameters during fine-tuning")
    return adapted


def evaluate(params, dataset, scaler=None):
    """EvalReport for thresholded P(class 1) >= 0.5 predictions."""
    feats = dataset.features
    if scaler is not None:
        feats = scaler.transform(feats)
    preds = nn.predict(params, feats)
    return evaluation_report(preds, dataset.labels, dataset.sensitive)


def gamma_sweep(sampler, base_config, gammas, holdout, finetune_k,
                finetune_steps, repeats, finetune_lr=None, scaler=None,
                trainer=meta_train, progress=None):
    """Train per (gamma, repeat), fine-tune per holdout task, evaluate.

    Returns one row dict per (gamma, repeat, task): accuracy, dp_ratio,
    eop_ratio. finetune_lr defaults to the inner step size.
    """
    if not gammas or not len(holdout):
        raise ValueError("need at least one gamma and one holdout task")
    lr = base_config.alpha if finetune_lr is None else finetune_lr
    rows = []
    for gamma in gammas:
        for rep in range(repeats):
            config = replace(base_config,
                             spec=replace(base_config.spec, gamma=float(gamma)),
                             seed=base_config.seed + rep)
            params = trainer(sampler, config)
            for t_index, (task_id, ds) in enumerate(holdout):
                if ds.n_rows < finetune_k + 1:
                    raise TrainingError(f"holdout task {task_id!r} smaller "
                                        f"than finetune_K + 1")
                draw = np.random.default_rng(
                    np.random.SeedSequence([config.seed, 7001, t_index]))
                sup_idx = draw.choice(ds.n_rows, size=finetune_k, replace=False)
                rest = np.setdiff1d(np.arange(ds.n_rows), sup_idx)
                support = batch_from_rows(ds, np.sort(sup_idx), scaler)
                adapted = finetune(params, support, finetune_steps, lr,
                                   config.spec)
                report = evaluate(adapted, ds.take(rest), scaler)
                rows.append({"gamma": float(gamma), "repeat": rep,
                             "task_id": task_id,
                             "accuracy": report.accuracy,
                             "dp_ratio": report.dp_ratio,
                             "eop_ratio": report.eop_ratio})
            if progress is not None:
                progress(gamma, rep)
    return rows


@dataclass
class ModelBundle:
    """A trained model with its feature scaler and column contract."""

    params: ParamSet
    scaler: Standardizer
    columns: list
    meta: dict = field(default_factory=dict)

    def predict_proba(self, features):
        return nn.predict_proba(self.params, self.scaler.transform(features))

    def predict(self, features):
        return (self.predict_proba(features) >= 0.5).astype(np.int8)

    def predictor(self):
        """Plain features -> {0,1} callable for the fairness oracle."""
        return self.predict

    def evaluate(self, dataset):
        return evaluate(self.params, dataset, self.scaler)

    def to_json(self):
        return {"format": MODEL_FORMAT, "params": self.params.to_json(),
                "scaler": self.scaler.to_json(), "columns": list(self.columns),
                "meta": self.meta}

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != MODEL_FORMAT:
            raise TrainingError(f"unsupported model format: {obj.get('format')!r}")
        return cls(ParamSet.from_json(obj["params"]),
                   Standardizer.from_json(obj["scaler"]),
                   list(obj["columns"]), dict(obj.get("meta", {})))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def single_task_sampler(dataset, seed, k, scaler=None, stratify=None):
    """The one-task degenerate sampler: minibatch training via pretrain."""
    from fairshift.dataset import TaskCollection
    return CollectionTaskSampler(TaskCollection([("task0", dataset)]), seed,
                                 k, 1, scaler=scaler, stratify=stratify)
