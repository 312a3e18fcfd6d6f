"""Two-layer feed-forward scorer trained with scaled conjugate gradients.

The network maps a contextual feature vector to a two-way softmax over
{incorrect, correct}; the correct-class probability is the rescored
confidence. Training runs Moller's scaled conjugate gradient on the full
batch: no line search, one curvature probe per accepted direction, and a
Levenberg-Marquardt style damping parameter that grows on rejected steps.
Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geometry import RelationConfig

__all__ = [
    "TrainConfig",
    "TrainReport",
    "NetworkParams",
    "NetworkGradients",
    "init_network",
    "forward",
    "score",
    "score_batch",
    "loss_and_gradient",
    "train_scg",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "MODEL_FORMAT_VERSION",
]

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
_LAMBDA_MAX = 1e100

# output unit order: index 0 = incorrect, index 1 = correct (matches labels)
CORRECT_UNIT = 1


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for scaled-conjugate-gradient training."""

    hidden: int = 1000
    max_epochs: int = 1000
    sigma: float = 5e-5
    lambda_init: float = 5e-7
    min_gradient: float = 1e-6
    validation_fraction: float = 0.15
    max_validation_failures: int = 6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden < 1:
            raise DataError(f"hidden must be >= 1, got {self.hidden}")
        if self.max_epochs < 1:
            raise DataError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.sigma <= 0:
            raise DataError(f"sigma must be > 0, got {self.sigma}")
        if self.lambda_init <= 0:
            raise DataError(f"lambda_init must be > 0, got {self.lambda_init}")
        if self.min_gradient < 0:
            raise DataError(f"min_gradient must be >= 0, got {self.min_gradient}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise DataError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )
        if self.max_validation_failures < 1:
            raise DataError(
                f"max_validation_failures must be >= 1, got {self.max_validation_failures}"
            )

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainReport:
    """What happened during one training run."""

    losses: list[float]
    val_losses: list[float]
    stop_reason: str
    epochs_run: int
    final_train_loss: float
    final_val_loss: float | None = None
    best_val_loss: float | None = None
    best_epoch: int | None = None

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "epochs_run": self.epochs_run,
            "final_train_loss": self.final_train_loss,
            "final_val_loss": self.final_val_loss,
            "best_val_loss": self.best_val_loss,
            "best_epoch": self.best_epoch,
            "losses": self.losses,
            "val_losses": self.val_losses,
        }


@dataclass
class NetworkParams:
    """Weights of the two-layer net, plus the metadata a saved model carries."""

    w1: np.ndarray  # hidden x input
    b1: np.ndarray  # hidden
    w2: np.ndarray  # 2 x hidden
    b2: np.ndarray  # 2
    seed: int = 0
    vocabulary: tuple[str, ...] | None = None
    relation_config: RelationConfig | None = None

    def __post_init__(self) -> None:
        hidden, input_dim = self.w1.shape
        if self.b1.shape != (hidden,):
            raise DataError(f"b1 must have shape ({hidden},), got {self.b1.shape}")
        if self.w2.shape != (2, hidden):
            raise DataError(f"w2 must have shape (2, {hidden}), got {self.w2.shape}")
        if self.b2.shape != (2,):
            raise DataError(f"b2 must have shape (2,), got {self.b2.shape}")
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"{name} contains non-finite values")
        if input_dim < 1:
            raise DataError("input dimension must be >= 1")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


@dataclass
class NetworkGradients:
    """Loss gradient, shaped like the corresponding parameters."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def init_network(input_dim: int, hidden: int, seed: int = 0) -> NetworkParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, seeded."""
    if input_dim < 1:
        raise DataError(f"input_dim must be >= 1, got {input_dim}")
    if hidden < 1:
        raise DataError(f"hidden must be >= 1, got {hidden}")
    rng = np.random.default_rng(seed)
    r1 = 1.0 / math.sqrt(input_dim)
    r2 = 1.0 / math.sqrt(hidden)
    return NetworkParams(
        w1=rng.uniform(-r1, r1, size=(hidden, input_dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-r2, r2, size=(2, hidden)),
        b2=np.zeros(2),
        seed=seed,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward_batch(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a1 = _sigmoid(x @ params.w1.T + params.b1)
    logp = _log_softmax(a1 @ params.w2.T + params.b2)
    return np.exp(logp), a1


def forward(params: NetworkParams, x: np.ndarray) -> tuple[float, float]:
    """Probabilities (correct, incorrect) for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_dim,):
        raise DataError(
            f"feature vector has length {x.shape}, model expects ({params.input_dim},)"
        )
    probs, _ = _forward_batch(params, x[None, :])
    return float(probs[0, CORRECT_UNIT]), float(probs[0, 1 - CORRECT_UNIT])


def score(params: NetworkParams, x: np.ndarray) -> float:
    """Rescored confidence: probability that the detection is correct."""
    return forward(params, x)[0]


def score_batch(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DataError(
            f"feature matrix has shape {x.shape}, model expects (*, {params.input_dim})"
        )
    probs, _ = _forward_batch(params, x)
    return probs[:, CORRECT_UNIT]


def loss_and_gradient(
    params: NetworkParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, NetworkGradients]:
    """Mean cross-entropy and its gradient over a batch.

    ``y`` holds 0 (incorrect) / 1 (correct) labels, matching the output units.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise DataError("x must be (n, d) and y (n,) with matching n")
    if len(x) == 0:
        raise DataError("empty batch")
    if x.shape[1] != params.input_dim:
        raise DataError(
            f"feature matrix has {x.shape[1]} columns, model expects {params.input_dim}"
        )
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    n = len(x)
    a1 = _sigmoid(x @ params.w1.T + params.b1)
    z2 = a1 @ params.w2.T + params.b2
    logp = _log_softmax(z2)
    loss = float(-logp[np.arange(n), y].mean())
    dz2 = np.exp(logp)
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ params.w2
    dz1 = da1 * a1 * (1.0 - a1)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, NetworkGradients(w1=dw1, b1=db1, w2=dw2, b2=db2)


def _flatten(params: NetworkParams) -> np.ndarray:
    return np.concatenate(
        [params.w1.ravel(), params.b1, params.w2.ravel(), params.b2]
    )


def _flatten_grads(grads: NetworkGradients) -> np.ndarray:
    return np.concatenate([grads.w1.ravel(), grads.b1, grads.w2.ravel(), grads.b2])


def _unflatten(vec: np.ndarray, hidden: int, input_dim: int, like: NetworkParams) -> NetworkParams:
    sizes = [hidden * input_dim, hidden, 2 * hidden, 2]
    if vec.size != sum(sizes):
        raise DataError("flat parameter vector has wrong length")
    o1 = sizes[0]
    o2 = o1 + sizes[1]
    o3 = o2 + sizes[2]
    return NetworkParams(
        w1=vec[:o1].reshape(hidden, input_dim).copy(),
        b1=vec[o1:o2].copy(),
        w2=vec[o2:o3].reshape(2, hidden).copy(),
        b2=vec[o3:].copy(),
        seed=like.seed,
        vocabulary=like.vocabulary,
        relation_config=like.relation_config,
    )


def _split_validation(
    y: np.ndarray, fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Boolean mask of validation rows, stratified by label.

    Every label keeps at least one training row.
    """
    mask = np.zeros(len(y), dtype=bool)
    if fraction <= 0.0:
        return mask
    for label in (0, 1):
        idx = np.flatnonzero(y == label)
        k = int(round(fraction * len(idx)))
        k = min(k, len(idx) - 1)
        if k > 0:
            mask[rng.permutation(idx)[:k]] = True
    return mask


def train_scg(
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    vocabulary: tuple[str, ...] | None = None,
    relation_config: RelationConfig | None = None,
) -> tuple[NetworkParams, TrainReport]:
    """Train the scorer on feature rows ``x`` with correctness labels ``y``.

    A stratified validation split (when ``validation_fraction`` > 0) stops
    training after ``max_validation_failures`` consecutive iterations without
    a validation improvement, and the returned parameters are the snapshot
    with the best validation loss. Other stops: gradient norm below
    ``min_gradient``, ``max_epochs`` exhausted, or a stalled damping spiral.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise DataError("x must be (n, d) and y (n,) with matching n")
    if len(x) < 2:
        raise DataError(f"training needs at least 2 rows, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise DataError("training features contain non-finite values")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise DataError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DataError(
            "training labels must contain both correct and incorrect examples"
        )

    rng = np.random.default_rng(config.seed)
    val_mask = _split_validation(y, config.validation_fraction, rng)
    x_train, y_train = x[~val_mask], y[~val_mask]
    x_val, y_val = x[val_mask], y[val_mask]
    use_validation = len(x_val) > 0

    params0 = init_network(x.shape[1], config.hidden, config.seed)
    params0.vocabulary = vocabulary
    params0.relation_config = relation_config
    hidden, input_dim = params0.hidden, params0.input_dim
    n_params = params0.n_params

    def eval_loss(wvec: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> float:
        p = _unflatten(wvec, hidden, input_dim, params0)
        loss, _ = loss_and_gradient(p, xs, ys)
        return loss

    def eval_grad(wvec: np.ndarray) -> np.ndarray:
        p = _unflatten(wvec, hidden, input_dim, params0)
        _, grads = loss_and_gradient(p, x_train, y_train)
        return _flatten_grads(grads)

    w = _flatten(params0)
    e_old = eval_loss(w, x_train, y_train)
    grad_w = eval_grad(w)
    if not (math.isfinite(e_old) and np.all(np.isfinite(grad_w))):
        raise DataError("non-finite loss or gradient at initialization")
    r = -grad_w
    p = r.copy()
    lam = config.lambda_init
    lam_bar = 0.0
    success = True
    accepted = 0
    mu = 0.0
    norm_p2 = 0.0
    delta_raw = 0.0

    losses: list[float] = []
    val_losses: list[float] = []
    best_val = math.inf
    best_w = w.copy()
    best_epoch: int | None = None
    val_failures = 0
    stop_reason = "max_epochs"
    epochs_run = 0

    def grad_norm() -> float:
        return float(np.sqrt(r @ r))

    if grad_norm() < config.min_gradient:
        report = TrainReport(
            losses=[e_old],
            val_losses=[eval_loss(w, x_val, y_val)] if use_validation else [],
            stop_reason="min_gradient",
            epochs_run=0,
            final_train_loss=e_old,
            final_val_loss=eval_loss(w, x_val, y_val) if use_validation else None,
            best_val_loss=None,
            best_epoch=None,
        )
        return _unflatten(w, hidden, input_dim, params0), report

    for k in range(1, config.max_epochs + 1):
        epochs_run = k
        if success:
            mu = float(p @ r)
            if mu <= 0:
                # stale conjugate direction; restart from steepest descent
                p = r.copy()
                mu = float(r @ r)
            norm_p2 = float(p @ p)
            if norm_p2 == 0.0:
                stop_reason = "min_gradient"
                break
            sigma_k = config.sigma / math.sqrt(norm_p2)
            g_plus = eval_grad(w + sigma_k * p)
            delta_raw = float(p @ (g_plus - grad_w)) / sigma_k

        # damped curvature along p
        delta = delta_raw + (lam - lam_bar) * norm_p2
        if delta <= 0:
            lam_bar = 2.0 * (lam - delta / norm_p2)
            delta = -delta + lam * norm_p2
            lam = lam_bar

        alpha = mu / delta
        w_trial = w + alpha * p
        e_new = eval_loss(w_trial, x_train, y_train)
        if math.isfinite(e_new):
            comparison = 2.0 * delta * (e_old - e_new) / (mu * mu)
        else:
            comparison = -math.inf  # overflowing trial step: force rejection

        if comparison >= 0:
            w = w_trial
            e_old = e_new
            grad_w = eval_grad(w)
            if not np.all(np.isfinite(grad_w)):
                raise DataError(f"non-finite gradient during training at epoch {k}")
            r_old = r
            r = -grad_w
            lam_bar = 0.0
            success = True
            accepted += 1
            if accepted % n_params == 0:
                p = r.copy()
            else:
                beta = float(r @ r - r @ r_old) / mu
                p = r + beta * p
            if comparison >= 0.75:
                lam *= 0.25
        else:
            lam_bar = lam
            success = False

        if comparison < 0.25:
            lam += delta * (1.0 - comparison) / norm_p2
        if lam > _LAMBDA_MAX:
            stop_reason = "stalled"
            losses.append(e_old)
            if use_validation:
                val_losses.append(eval_loss(w, x_val, y_val))
            break

        losses.append(e_old)
        if use_validation:
            v = eval_loss(w, x_val, y_val)
            val_losses.append(v)
            if v < best_val:
                best_val = v
                best_w = w.copy()
                best_epoch = k
                val_failures = 0
            else:
                val_failures += 1
                if val_failures >= config.max_validation_failures:
                    stop_reason = "validation"
                    break
        if grad_norm() < config.min_gradient:
            stop_reason = "min_gradient"
            break

    if use_validation and best_epoch is not None:
        final_w = best_w
    else:
        final_w = w
    final_params = _unflatten(final_w, hidden, input_dim, params0)
    final_train_loss = eval_loss(final_w, x_train, y_train)
    final_val_loss = eval_loss(w, x_val, y_val) if use_validation else None
    report = TrainReport(
        losses=losses,
        val_losses=val_losses,
        stop_reason=stop_reason,
        epochs_run=epochs_run,
        final_train_loss=final_train_loss,
        final_val_loss=final_val_loss,
        best_val_loss=best_val if use_validation and best_epoch is not None else None,
        best_epoch=best_epoch,
    )
    logger.info(
        "training stopped after %d epochs (%s), train loss %.6f",
        epochs_run,
        stop_reason,
        final_train_loss,
    )
    return final_params, report


def save_model(params: NetworkParams, path: str) -> None:
    """Serialize the model as a self-describing JSON document.

    Float values survive the JSON round trip exactly, so save -> load -> save
    is byte-identical.
    """
    with open(path, "w") as fh:
        json.dump(model_to_dict(params), fh, separators=(",", ":"))
        fh.write("\n")


def model_to_dict(params: NetworkParams) -> dict:
    """The same document ``save_model`` writes, as a dict."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "model": "context-rescoring-mlp",
        "metadata": {
            "vocabulary": list(params.vocabulary) if params.vocabulary else None,
            "relation_config": (
                params.relation_config.to_dict() if params.relation_config else None
            ),
            "hidden": params.hidden,
            "input_dim": params.input_dim,
            "seed": params.seed,
        },
        "weights": {
            "w1": params.w1.tolist(),
            "b1": params.b1.tolist(),
            "w2": params.w2.tolist(),
            "b2": params.b2.tolist(),
        },
    }


def model_from_dict(doc: dict) -> NetworkParams:
    """Validate and reconstruct a model from its document form."""
    if not isinstance(doc, dict):
        raise DataError("model document must be a JSON object")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(
            f"unsupported model format_version {doc.get('format_version')!r}"
        )
    try:
        meta = doc["metadata"]
        weights = doc["weights"]
        w1 = np.array(weights["w1"], dtype=float)
        b1 = np.array(weights["b1"], dtype=float)
        w2 = np.array(weights["w2"], dtype=float)
        b2 = np.array(weights["b2"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from None
    if w1.ndim != 2:
        raise DataError("w1 must be a 2d array")
    vocab = meta.get("vocabulary")
    rel = meta.get("relation_config")
    try:
        relation_config = RelationConfig.from_dict(rel) if rel is not None else None
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed relation config in model: {exc}") from None
    params = NetworkParams(
        w1=w1,
        b1=b1,
        w2=w2,
        b2=b2,
        seed=int(meta.get("seed", 0)),
        vocabulary=tuple(vocab) if vocab else None,
        relation_config=relation_config,
    )
    declared_hidden = meta.get("hidden")
    declared_dim = meta.get("input_dim")
    if declared_hidden is not None and declared_hidden != params.hidden:
        raise DataError(
            f"metadata hidden={declared_hidden} disagrees with weights ({params.hidden})"
        )
    if declared_dim is not None and declared_dim != params.input_dim:
        raise DataError(
            f"metadata input_dim={declared_dim} disagrees with weights ({params.input_dim})"
        )
    return params


def load_model(path: str) -> NetworkParams:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from None
    return model_from_dict(doc)
