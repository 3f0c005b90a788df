"""Desk-scale differentiable models over a flat, segment-addressed parameter
vector.

Four kinds are provided: a softmax linear classifier (``logreg``), a
tanh MLP (``mlp``), a one-block single-head attention classifier over token
ids (``tiny_attention``), and a scalar linear regressor
(``linear_regressor``). Classifiers expose log p(y|x) through a log-softmax
head; the regressor's log-likelihood is the unit-variance Gaussian
-(f(x)-y)^2/2 so that squared-gradient scores are well defined for
regression tasks too.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad


class Segment:
    """Named contiguous slice of the flat parameter vector."""

    __slots__ = ("name", "offset", "shape")

    def __init__(self, name: str, offset: int, shape: tuple[int, ...]):
        self.name = name
        self.offset = offset
        self.shape = tuple(shape)

    @property
    def length(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def __repr__(self) -> str:
        return f"Segment({self.name!r}, offset={self.offset}, shape={self.shape})"


class ParamVector:
    """Flat float64 parameter storage with a (name, offset, shape) table.

    Segments partition [0, len) with no gaps or overlaps; the flat-index to
    (segment, position) mapping is a stable bijection for the life of the
    model.
    """

    def __init__(self, layout: list[tuple[str, tuple[int, ...]]]):
        self.segments: list[Segment] = []
        offset = 0
        seen = set()
        for name, shape in layout:
            if name in seen:
                raise ValueError(f"duplicate segment name {name!r}")
            seen.add(name)
            seg = Segment(name, offset, shape)
            self.segments.append(seg)
            offset += seg.length
        self.data = np.zeros(offset, dtype=np.float64)
        self._by_name = {s.name: s for s in self.segments}

    def __len__(self) -> int:
        return len(self.data)

    def view(self, name: str) -> np.ndarray:
        """Writable reshaped view of one segment (shares storage)."""
        seg = self._by_name[name]
        return self.data[seg.offset:seg.offset + seg.length].reshape(seg.shape)

    def locate(self, flat_index: int) -> tuple[str, int]:
        """Map a flat index to (segment name, position within segment)."""
        if not 0 <= flat_index < len(self.data):
            raise IndexError(f"flat index {flat_index} out of range")
        for seg in self.segments:
            if flat_index < seg.offset + seg.length:
                return seg.name, flat_index - seg.offset
        raise AssertionError("segment table does not cover the vector")

    def flat_index(self, name: str, position: int) -> int:
        seg = self._by_name[name]
        if not 0 <= position < seg.length:
            raise IndexError(f"position {position} outside segment {name!r}")
        return seg.offset + position

    def content_hash(self) -> str:
        return hashlib.sha256(self.data.astype("<f8").tobytes()).hexdigest()

    def copy(self) -> "ParamVector":
        out = ParamVector([(s.name, s.shape) for s in self.segments])
        out.data[:] = self.data
        return out


@dataclass(frozen=True)
class ModelSpec:
    """Architecture + init seed. ``num_classes=0`` marks a scalar-output
    regressor; ``input_dim`` is the vocabulary size for ``tiny_attention``
    and the feature dimension otherwise."""

    kind: str  # logreg | mlp | tiny_attention | linear_regressor
    input_dim: int
    hidden: tuple[int, ...] = ()
    num_classes: int = 2
    seed: int = 0
    embed_dim: int = 16
    max_len: int = 16
    activation: str = "tanh"  # mlp / attention FFN nonlinearity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", ()))
        return ModelSpec(**d)


KINDS = ("logreg", "mlp", "tiny_attention", "linear_regressor")


def _validate(spec: ModelSpec) -> None:
    if spec.kind not in KINDS:
        raise ValueError(f"unknown model kind {spec.kind!r}")
    if spec.input_dim <= 0:
        raise ValueError(f"input_dim must be positive, got {spec.input_dim}")
    if any(h <= 0 for h in spec.hidden):
        raise ValueError(f"hidden dims must be positive, got {spec.hidden}")
    if spec.kind == "linear_regressor":
        if spec.num_classes != 0:
            raise ValueError("linear_regressor is scalar-output; set num_classes=0")
    else:
        if spec.num_classes < 2:
            raise ValueError(f"classifiers need num_classes >= 2, got {spec.num_classes}")
    if spec.kind == "tiny_attention":
        if spec.embed_dim <= 0 or spec.embed_dim > 32:
            raise ValueError(f"embed_dim must be in (0, 32], got {spec.embed_dim}")
        if spec.max_len <= 0:
            raise ValueError(f"max_len must be positive, got {spec.max_len}")
    if spec.activation not in ("tanh", "relu"):
        raise ValueError(f"unknown activation {spec.activation!r}")


def _init(params: ParamVector, fan_in: dict[str, int], seed: int) -> None:
    # Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] per segment, drawn in segment
    # order from one generator so rebuilds are bit-identical.
    rng = np.random.default_rng(seed)
    for seg in params.segments:
        bound = 1.0 / math.sqrt(fan_in[seg.name])
        params.view(seg.name)[...] = rng.uniform(-bound, bound, size=seg.shape)


class Model:
    """Shared surface: flat params, batched forward, scalar log-lik / loss."""

    is_classifier = True

    def __init__(self, spec: ModelSpec, params: ParamVector):
        self.spec = spec
        self.params = params

    @property
    def num_params(self) -> int:
        return len(self.params)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def content_hash(self) -> str:
        return self.params.content_hash()

    def clone(self) -> "Model":
        return type(self)(self.spec, self.params.copy())

    def _activate(self, h):
        return ad.tanh(h) if self.spec.activation == "tanh" else ad.relu(h)

    # -- forward protocol (subclasses implement logits_tensor or predict) --

    def logits_tensor(self, tape: ad.Tape, bound, X) -> ad.Tensor:
        raise NotImplementedError

    def log_prob_mean(self, tape: ad.Tape, X, y) -> ad.Tensor:
        """Scalar mean over the batch of log p(y_i | x_i)."""
        bound = tape.bind(self.params)
        logits = self.logits_tensor(tape, bound, self._check_inputs(X))
        return ad.scale(ad.nll(ad.log_softmax(logits), self._check_labels(y)), -1.0)

    def loss_mean(self, tape: ad.Tape, X, y) -> ad.Tensor:
        """Scalar mean cross-entropy over the batch."""
        bound = tape.bind(self.params)
        logits = self.logits_tensor(tape, bound, self._check_inputs(X))
        return ad.nll(ad.log_softmax(logits), self._check_labels(y))

    # -- plain numeric conveniences --

    def log_prob(self, x, y) -> float:
        """log p(y|x) for one sample."""
        tape = ad.Tape()
        value = self.log_prob_mean(tape, np.asarray(x)[None, :], [int(y)])
        return float(value.data)

    def log_probs(self, x) -> np.ndarray:
        """Full log-distribution over classes for one sample."""
        tape = ad.Tape()
        bound = tape.bind(self.params)
        logits = self.logits_tensor(tape, bound, self._check_inputs(np.asarray(x)[None, :]))
        return ad.log_softmax(logits).data[0]

    def predictions(self, X) -> np.ndarray:
        """Argmax class per row; ties resolve to the lowest class index."""
        tape = ad.Tape()
        bound = tape.bind(self.params)
        logits = self.logits_tensor(tape, bound, self._check_inputs(X))
        return np.argmax(logits.data, axis=1)

    def _check_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ValueError(f"{self.spec.kind}: non-finite input")
        if X.ndim != 2 or X.shape[1] != self.spec.input_dim:
            raise ad.ShapeMismatch(self.spec.kind,
                                   f"want (batch, {self.spec.input_dim}) inputs, got {X.shape}")
        return X

    def _check_labels(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        if y.min(initial=0) < 0 or y.max(initial=0) >= self.num_classes:
            raise ValueError(f"label out of range [0, {self.num_classes}): {y}")
        return y


class LogReg(Model):
    """Softmax linear classifier: logits = X W + b."""

    @staticmethod
    def layout(spec: ModelSpec):
        d, c = spec.input_dim, spec.num_classes
        return [("W", (d, c)), ("b", (c,))], {"W": d, "b": d}

    def logits_tensor(self, tape, bound, X):
        return ad.bias_add(ad.matmul(tape.constant(X), bound["W"]), bound["b"])


class MLP(Model):
    """Fully connected classifier with one or more nonlinear hidden layers."""

    @staticmethod
    def layout(spec: ModelSpec):
        dims = (spec.input_dim, *spec.hidden, spec.num_classes)
        layout, fan = [], {}
        for i in range(len(dims) - 1):
            layout += [(f"W{i}", (dims[i], dims[i + 1])), (f"b{i}", (dims[i + 1],))]
            fan[f"W{i}"] = dims[i]
            fan[f"b{i}"] = dims[i]
        return layout, fan

    def logits_tensor(self, tape, bound, X):
        h = tape.constant(X)
        n_layers = len(self.spec.hidden) + 1
        for i in range(n_layers):
            h = ad.bias_add(ad.matmul(h, bound[f"W{i}"]), bound[f"b{i}"])
            if i < n_layers - 1:
                h = self._activate(h)
        return h


class TinyAttention(Model):
    """One attention block over token ids, mean-pooled into a linear head.

    Token and position embeddings are summed, passed through single-head
    scaled dot-product attention, a two-layer feed-forward, mean pooling
    over positions, then the class head. Position embeddings make the model
    order-sensitive. Inputs are (batch, seq) integer ids; sequences are
    processed one at a time on the shared tape.
    """

    @staticmethod
    def layout(spec: ModelSpec):
        v, d, c = spec.input_dim, spec.embed_dim, spec.num_classes
        h = spec.hidden[0] if spec.hidden else d
        layout = [
            ("emb", (v, d)), ("pos", (spec.max_len, d)),
            ("Wq", (d, d)), ("Wk", (d, d)), ("Wv", (d, d)),
            ("Wf1", (d, h)), ("bf1", (h,)), ("Wf2", (h, d)), ("bf2", (d,)),
            ("Wh", (d, c)), ("bh", (c,)),
        ]
        fan = {"emb": d, "pos": d, "Wq": d, "Wk": d, "Wv": d,
               "Wf1": d, "bf1": d, "Wf2": h, "bf2": h, "Wh": d, "bh": d}
        return layout, fan

    def _check_inputs(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim != 2:
            raise ad.ShapeMismatch("tiny_attention", f"want (batch, seq) ids, got {X.shape}")
        X = X.astype(np.int64)
        if X.shape[1] > self.spec.max_len:
            raise ad.ShapeMismatch("tiny_attention",
                                   f"sequence length {X.shape[1]} > max_len {self.spec.max_len}")
        if X.min() < 0 or X.max() >= self.spec.input_dim:
            raise ValueError(f"token id out of range [0, {self.spec.input_dim})")
        return X

    def _logits_single(self, tape, bound, ids: np.ndarray) -> ad.Tensor:
        t = len(ids)
        x = ad.add(ad.embedding(bound["emb"], ids),
                   ad.embedding(bound["pos"], np.arange(t)))
        q = ad.matmul(x, bound["Wq"])
        k = ad.matmul(x, bound["Wk"])
        v = ad.matmul(x, bound["Wv"])
        att = ad.softmax(ad.scale(ad.matmul(q, ad.transpose(k)),
                                  1.0 / math.sqrt(self.spec.embed_dim)))
        ctx = ad.matmul(att, v)
        f = ad.bias_add(ad.matmul(self._activate(
            ad.bias_add(ad.matmul(ctx, bound["Wf1"]), bound["bf1"])), bound["Wf2"]), bound["bf2"])
        pooled = ad.mean_rows(f)
        return ad.bias_add(ad.matmul(pooled, bound["Wh"]), bound["bh"])

    def _mean_nll(self, tape, X, y) -> ad.Tensor:
        # No stack primitive in the op set: accumulate per-sequence scalar
        # losses with add and rescale by 1/B.
        X = self._check_inputs(X)
        y = self._check_labels(y)
        bound = tape.bind(self.params)
        total = None
        for i in range(len(X)):
            term = ad.nll(ad.log_softmax(self._logits_single(tape, bound, X[i])), int(y[i]))
            total = term if total is None else ad.add(total, term)
        return ad.scale(total, 1.0 / len(X))

    def loss_mean(self, tape, X, y) -> ad.Tensor:
        return self._mean_nll(tape, X, y)

    def log_prob_mean(self, tape, X, y) -> ad.Tensor:
        return ad.scale(self._mean_nll(tape, X, y), -1.0)

    def predictions(self, X) -> np.ndarray:
        X = self._check_inputs(X)
        preds = np.empty(len(X), dtype=np.int64)
        for i in range(len(X)):
            tape = ad.Tape()
            bound = tape.bind(self.params)
            preds[i] = int(np.argmax(self._logits_single(tape, bound, X[i]).data))
        return preds

    def log_probs(self, ids) -> np.ndarray:
        tape = ad.Tape()
        bound = tape.bind(self.params)
        logits = self._logits_single(tape, bound, self._check_inputs(np.asarray(ids)[None, :])[0])
        return ad.log_softmax(logits).data


class LinearRegressor(Model):
    """Scalar linear model f(x) = x.w + b with Gaussian log-likelihood."""

    is_classifier = False

    @staticmethod
    def layout(spec: ModelSpec):
        d = spec.input_dim
        return [("w", (d,)), ("b", (1,))], {"w": d, "b": d}

    def _predict_tensor(self, tape, bound, X):
        return ad.bias_add(ad.matmul(tape.constant(X), bound["w"]), bound["b"])

    def logits_tensor(self, tape, bound, X):
        raise ValueError("linear_regressor has no class logits")

    def log_prob_mean(self, tape, X, y) -> ad.Tensor:
        # Unit-variance Gaussian up to a constant fixed at 0:
        # log p = -(f(x)-y)^2 / 2, averaged over the batch.
        bound = tape.bind(self.params)
        pred = self._predict_tensor(tape, bound, self._check_inputs(X))
        return ad.scale(ad.mse(pred, np.asarray(y, dtype=np.float64)), -0.5)

    def loss_mean(self, tape, X, y) -> ad.Tensor:
        bound = tape.bind(self.params)
        pred = self._predict_tensor(tape, bound, self._check_inputs(X))
        return ad.mse(pred, np.asarray(y, dtype=np.float64))

    def predictions(self, X) -> np.ndarray:
        tape = ad.Tape()
        bound = tape.bind(self.params)
        return self._predict_tensor(tape, bound, self._check_inputs(X)).data.copy()

    def log_prob(self, x, y) -> float:
        tape = ad.Tape()
        return float(self.log_prob_mean(tape, np.asarray(x)[None, :], [float(y)]).data)


def gaussian_log_prob(model: Model, x, y) -> float:
    """-(f(x)-y)^2/2 for a scalar-output model; rejects classifiers."""
    if model.is_classifier:
        raise ValueError("gaussian_log_prob needs a scalar-output regressor")
    return model.log_prob(x, y)


_CLASSES = {"logreg": LogReg, "mlp": MLP, "tiny_attention": TinyAttention,
            "linear_regressor": LinearRegressor}


def build(spec: ModelSpec) -> Model:
    """Construct and deterministically initialize a model from its spec."""
    _validate(spec)
    cls = _CLASSES[spec.kind]
    layout, fan = cls.layout(spec)
    params = ParamVector(layout)
    _init(params, fan, spec.seed)
    return cls(spec, params)


def zoo_specs(seed: int = 0) -> list[ModelSpec]:
    """One desk-scale spec per model kind, used by gradient-check sweeps."""
    return [
        ModelSpec("logreg", input_dim=6, num_classes=3, seed=seed),
        ModelSpec("mlp", input_dim=5, hidden=(8,), num_classes=3, seed=seed),
        ModelSpec("tiny_attention", input_dim=24, hidden=(8,), num_classes=2,
                  seed=seed, embed_dim=6, max_len=6),
        ModelSpec("linear_regressor", input_dim=7, num_classes=0, seed=seed),
    ]


# ---------------------------------------------------------------------------
# Checkpoints: one JSON header line, then the raw little-endian float64
# payload. The header records the spec, seed, segment table and a sha256 of
# the payload so corruption is detected on load.
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "fishgrad-checkpoint-v1"


def save_checkpoint(model: Model, path) -> None:
    payload = model.params.data.astype("<f8").tobytes()
    header = {
        "format": CHECKPOINT_FORMAT,
        "spec": model.spec.to_dict(),
        "seed": model.spec.seed,
        "segments": [{"name": s.name, "offset": s.offset, "shape": list(s.shape)}
                     for s in model.params.segments],
        "hash": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} file: {path}")
    if hashlib.sha256(payload).hexdigest() != header["hash"]:
        raise ValueError(f"checkpoint payload hash mismatch: {path}")
    model = build(ModelSpec.from_dict(header["spec"]))
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if len(data) != model.num_params:
        raise ValueError(f"checkpoint has {len(data)} values, model wants {model.num_params}")
    model.params.data[:] = data
    return model
