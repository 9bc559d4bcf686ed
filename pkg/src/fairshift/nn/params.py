"""MLP parameter container: a flat float64 vector plus layer-shape metadata.

The flat layout is layer-major: W1.ravel(), b1, W2.ravel(), b2, ...
Per-layer weight matrices are exposed as zero-copy views into the flat
vector, so optimizers work on the vector while kernels see matrices.
"""

import json
from dataclasses import dataclass

import numpy as np

PARAMS_FORMAT = "fairshift-mlp-params/1"


class ParamError(ValueError):
    pass


def param_count(shapes):
    return int(sum(fan_in * fan_out + fan_out for fan_in, fan_out in shapes))


@dataclass
class ParamSet:
    """Flat parameter vector for a dense ReLU/softmax MLP."""

    shapes: tuple
    flat: np.ndarray

    def __post_init__(self):
        self.shapes = tuple((int(i), int(o)) for i, o in self.shapes)
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.ndim != 1 or self.flat.size != param_count(self.shapes):
            raise ParamError(f"flat vector has {self.flat.size} entries, "
                             f"shapes {self.shapes} need {param_count(self.shapes)}")
        if not np.all(np.isfinite(self.flat)):
            raise ParamError("parameter vector contains non-finite values")

    @property
    def n_params(self):
        return self.flat.size

    @property
    def n_inputs(self):
        return self.shapes[0][0]

    def layers(self):
        """Zero-copy (W, b) views per layer, W shaped (fan_in, fan_out)."""
        out = []
        pos = 0
        for fan_in, fan_out in self.shapes:
            w = self.flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = self.flat[pos:pos + fan_out]
            pos += fan_out
            out.append((w, b))
        return out

    def copy(self):
        return ParamSet(self.shapes, self.flat.copy())

    def with_flat(self, flat):
        return ParamSet(self.shapes, flat)

    def to_json(self):
        return {
            "format": PARAMS_FORMAT,
            "shapes": [list(s) for s in self.shapes],
            "values": self.flat.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != PARAMS_FORMAT:
            raise ParamError(f"unsupported parameter format: {obj.get('format')!r}")
        return cls(tuple(tuple(s) for s in obj["shapes"]),
                   np.asarray(obj["values"], dtype=np.float64))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def init_mlp(shapes, seed):
    """Glorot-uniform weights, zero biases; deterministic in the seed."""
    shapes = tuple((int(i), int(o)) for i, o in shapes)
    if not shapes:
        raise ParamError("need at least one layer")
    for fan_in, fan_out in shapes:
        if fan_in < 1 or fan_out < 1:
            raise ParamError(f"zero-sized layer ({fan_in}, {fan_out})")
    for (_, out_prev), (in_next, _) in zip(shapes, shapes[1:]):
        if out_prev != in_next:
            raise ParamError(f"layer width mismatch: {out_prev} -> {in_next}")
    if shapes[-1][1] != 2:
        raise ParamError("final layer must have 2 outputs (binary softmax head)")
    rng = np.random.default_rng(seed)
    flat = np.empty(param_count(shapes), dtype=np.float64)
    pos = 0
    for fan_in, fan_out in shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        n_w = fan_in * fan_out
        flat[pos:pos + n_w] = rng.uniform(-limit, limit, n_w)
        pos += n_w
        flat[pos:pos + fan_out] = 0.0
        pos += fan_out
    return ParamSet(shapes, flat)
