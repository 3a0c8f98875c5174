"""Single-layer GRU with a per-time logistic head.

Cell (row-vector convention, gate blocks ordered z, r, n)::

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    n = tanh(x W_n + b_n + r * (h U_n))
    h' = (1 - z) * n + z * h
    p = sigmoid(h' . w_out + b_out)

The hidden state starts at zero. ``forward`` returns one probability per step.
"""
from __future__ import annotations

import base64
import json

import numpy as np

from .. import _kernels_py
from ..kernels import compiled
from ..numerics import Rng
from .base import DifferentiableModel, check_input

FORMAT_VERSION = 1
PARAM_NAMES = ("W", "U", "b", "w_out", "b_out")
# above this batch size numpy's batched matmuls beat the compiled per-series loop
_COMPILED_MAX_BATCH = 8


class GruClassifier(DifferentiableModel):
    output_kind = "binary"

    def __init__(self, params: dict[str, np.ndarray]):
        # np.array rather than ascontiguousarray: the latter turns the 0-d bias into shape (1,)
        self.params = {k: np.array(params[k], dtype=float, order="C") for k in PARAM_NAMES}
        self.params["b_out"] = self.params["b_out"].reshape(())
        W, U = self.params["W"], self.params["U"]
        self.input_size, self.hidden_size = W.shape[0], U.shape[0]
        if W.shape != (self.input_size, 3 * self.hidden_size) or U.shape != (self.hidden_size, 3 * self.hidden_size):
            raise ValueError("inconsistent GRU parameter shapes")
        self._WT = np.ascontiguousarray(W.T)
        self._UT = np.ascontiguousarray(U.T)

    @classmethod
    def initialize(cls, rng: Rng, input_size: int, hidden_size: int) -> "GruClassifier":
        bound = 1.0 / np.sqrt(hidden_size)
        h3 = 3 * hidden_size
        return cls({
            "W": rng.uniform(-bound, bound, (input_size, h3)),
            "U": rng.uniform(-bound, bound, (hidden_size, h3)),
            "b": rng.uniform(-bound, bound, h3),
            "w_out": rng.uniform(-bound, bound, hidden_size),
            "b_out": rng.uniform(-bound, bound, ()),
        })

    @property
    def n_parameters(self) -> int:
        return sum(int(np.size(v)) for v in self.params.values())

    def _use_compiled(self, batch: int) -> bool:
        return compiled is not None and batch <= _COMPILED_MAX_BATCH

    def _forward(self, X, keep_cache):
        p = self.params
        if self._use_compiled(X.shape[0]):
            return compiled.gru_forward(X, p["W"], p["U"], p["b"], p["w_out"], float(p["b_out"]), keep_cache)
        return _kernels_py.gru_forward(X, p["W"], p["U"], p["b"], p["w_out"], float(p["b_out"]), keep_cache)

    def _backward(self, X, cache, probs, upstream):
        if self._use_compiled(X.shape[0]):
            return compiled.gru_input_backward(cache, probs, upstream, self._WT, self._UT, self.params["w_out"])
        dX, _ = _kernels_py.gru_backward(cache, X, upstream * probs * (1.0 - probs),
                                         self.params["W"], self.params["U"], self.params["w_out"])
        return dX

    def forward(self, X):
        X, single = check_input(X, d=self.input_size)
        X = np.ascontiguousarray(X)
        probs, _ = self._forward(X, False)
        Y = probs[..., None]
        return Y[0] if single else Y

    def forward_with_pullback(self, X):
        X, single = check_input(X, d=self.input_size)
        X = np.ascontiguousarray(X)
        probs, cache = self._forward(X, True)

        def pullback(upstream):
            up = np.ascontiguousarray(np.asarray(upstream, dtype=float).reshape(probs.shape))
            dX = self._backward(X, cache, probs, up)
            return dX[0] if single else dX

        Y = probs[..., None]
        return (Y[0] if single else Y), pullback

    def input_vjp(self, X, upstream):
        return self.forward_with_pullback(X)[1](upstream)

    # -- training support --------------------------------------------------

    def loss_and_param_gradients(self, X, labels, weight_decay: float = 0.0):
        """Mean per-step binary cross-entropy and its gradient for every parameter."""
        X, _ = check_input(X, d=self.input_size)
        y = np.asarray(labels, dtype=float).reshape(X.shape[:2])
        p = self.params
        probs, cache = _kernels_py.gru_forward(X, p["W"], p["U"], p["b"], p["w_out"], float(p["b_out"]), True)
        logits = cache[0][:, 1:] @ p["w_out"] + p["b_out"]
        n = y.size
        loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
        _, grads = _kernels_py.gru_backward(cache, X, (probs - y) / n, p["W"], p["U"], p["w_out"], want_params=True)
        if weight_decay:
            for k in PARAM_NAMES:
                grads[k] = grads[k] + weight_decay * p[k]
        return loss, grads

    def with_params(self, params) -> "GruClassifier":
        return GruClassifier(params)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        arrays = {
            k: {
                "shape": list(np.shape(v)),
                "dtype": "float64-le",
                "data": base64.b64encode(np.asarray(v, dtype="<f8").tobytes()).decode("ascii"),
            }
            for k, v in self.params.items()
        }
        return json.dumps({
            "format_version": FORMAT_VERSION,
            "model": "gru-classifier",
            "hidden_size": self.hidden_size,
            "input_size": self.input_size,
            "arrays": arrays,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GruClassifier":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {doc.get('format_version')}")
        params = {}
        for k, spec in doc["arrays"].items():
            raw = np.frombuffer(base64.b64decode(spec["data"]), dtype="<f8")
            params[k] = raw.reshape(spec["shape"]).astype(float)
        model = cls(params)
        if model.hidden_size != doc["hidden_size"] or model.input_size != doc["input_size"]:
            raise ValueError("model header does not match array shapes")
        return model


def gru_param_gradients(model: GruClassifier, X, labels):
    return model.loss_and_param_gradients(X, labels)[1]
