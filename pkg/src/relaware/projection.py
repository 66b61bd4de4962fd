"""Two-layer projection head with a temperature-scaled contrastive loss.

The head maps encoder vectors through W2 tanh(W1 x + b1) + b2 with input,
hidden, and output widths all equal, so downstream cosine code is unchanged.
Training minimizes a softmax contrastive loss over mined triplets: each
anchor's positive competes against either every negative in the batch
(default) or only its own paired negative. All arithmetic is float64;
gradients are exact analytic backprop through the cosine, the affine maps,
and the tanh, and the loss uses a max-shifted log-sum-exp.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .errors import TrainingError
from .mining import ContrastivePair, group_triplets

NEGATIVE_MODES = ("in_batch", "paired")

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8

_PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class TrainConfig:
    temperature: float = 0.05
    learning_rate: float = 3e-5
    epochs: int = 3
    batch_size: int = 16
    seed: int = 0
    negative_mode: str = "in_batch"

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise TrainingError("temperature must be positive")
        if self.learning_rate < 0:
            raise TrainingError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be >= 1")
        if self.negative_mode not in NEGATIVE_MODES:
            raise TrainingError(
                f"negative_mode {self.negative_mode!r} not one of {NEGATIVE_MODES}"
            )


@dataclass
class ProjectionHead:
    """W2 tanh(W1 x + b1) + b2 with equal input/hidden/output widths."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        for name in _PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        hidden, dim = self.W1.shape
        out = self.W2.shape[0]
        if self.W2.shape != (out, hidden) or self.b1.shape != (hidden,) \
                or self.b2.shape != (out,):
            raise TrainingError("inconsistent head parameter shapes")
        if not (dim == hidden == out):
            raise TrainingError(
                f"input, hidden, and output widths must match; got "
                f"{dim}/{hidden}/{out}"
            )

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    @classmethod
    def initialize(cls, dim: int, seed: int) -> "ProjectionHead":
        """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
        if dim < 1:
            raise TrainingError("head width must be >= 1")
        rng = np.random.default_rng(seed)
        bound1 = 1.0 / np.sqrt(dim)
        bound2 = 1.0 / np.sqrt(dim)  # hidden width equals input width
        return cls(
            W1=rng.uniform(-bound1, bound1, size=(dim, dim)),
            b1=rng.uniform(-bound1, bound1, size=dim),
            W2=rng.uniform(-bound2, bound2, size=(dim, dim)),
            b2=rng.uniform(-bound2, bound2, size=dim),
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Map one vector (1-D) or a batch of rows (2-D); output is float64."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise TrainingError(
                f"input width {rows.shape[-1]} does not match head width {self.dim}"
            )
        out, _ = _forward_cached(self, rows)
        if not np.all(np.isfinite(out)):
            raise TrainingError("NaN or infinity in forward pass")
        return out[0] if single else out

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}


def _forward_cached(head: ProjectionHead, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = np.tanh(X @ head.W1.T + head.b1)
    Y = H @ head.W2.T + head.b2
    return Y, H


def _backward(head: ProjectionHead, X: np.ndarray, H: np.ndarray,
              dY: np.ndarray, grads: dict[str, np.ndarray]) -> None:
    grads["W2"] += dY.T @ H
    grads["b2"] += dY.sum(axis=0)
    dH = dY @ head.W2
    dG = dH * (1.0 - H * H)
    grads["W1"] += dG.T @ X
    grads["b1"] += dG.sum(axis=0)


def loss_terms(s_pos: np.ndarray, s_neg: np.ndarray, temperature: float
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-triple losses and softmax weights from raw similarities.

    s_pos has shape (m,). s_neg is (m, n) with one row of negative
    similarities per anchor (n == 1 column in paired mode, n == m in
    in-batch mode). Returns (losses, p_pos, P_neg) where p_pos[i] is the
    softmax mass on the positive and P_neg[i, j] on each negative; the loss
    gradient w.r.t. s_pos is (p_pos - 1)/temperature and w.r.t. s_neg[i, j]
    is P_neg[i, j]/temperature.
    """
    z_pos = np.asarray(s_pos, dtype=np.float64) / temperature
    Z_neg = np.asarray(s_neg, dtype=np.float64) / temperature
    if Z_neg.ndim == 1:
        Z_neg = Z_neg[:, None]
    shift = np.maximum(z_pos, Z_neg.max(axis=1))
    e_pos = np.exp(z_pos - shift)
    E_neg = np.exp(Z_neg - shift[:, None])
    total = e_pos + E_neg.sum(axis=1)
    losses = -z_pos + shift + np.log(total)
    return losses, e_pos / total, E_neg / total[:, None]


def _normalize_rows(Y: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    if np.any(norms == 0.0):
        raise TrainingError(f"zero-norm head output for a {what} vector")
    if not np.all(np.isfinite(norms)):
        raise TrainingError(
            f"head output norm overflowed for a {what} vector; training has "
            f"diverged"
        )
    return Y / norms[:, None], norms


def _unnormalize_grad(dU: np.ndarray, U: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d/dy of u = y/|y|: project out the radial component, then scale.
    radial = np.einsum("ij,ij->i", dU, U)
    return (dU - radial[:, None] * U) / norms[:, None]


def batch_loss(
    head: ProjectionHead,
    anchors: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    temperature: float = 0.05,
    negative_mode: str = "in_batch",
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean contrastive loss over a triplet batch plus exact parameter grads.

    Rows of the three (m, dim) arrays are aligned: anchors[i] pairs with
    positives[i] and (in paired mode) negatives[i]. In in-batch mode every
    row of negatives serves as a negative for every anchor.
    """
    if negative_mode not in NEGATIVE_MODES:
        raise TrainingError(f"negative_mode {negative_mode!r} not one of {NEGATIVE_MODES}")
    A = np.asarray(anchors, dtype=np.float64)
    P = np.asarray(positives, dtype=np.float64)
    N = np.asarray(negatives, dtype=np.float64)
    if not (A.shape == P.shape == N.shape) or A.ndim != 2 or A.shape[0] == 0:
        raise TrainingError("anchors, positives, negatives must share a (m, dim) shape")

    YA, HA = _forward_cached(head, A)
    YP, HP = _forward_cached(head, P)
    YN, HN = _forward_cached(head, N)
    for Y in (YA, YP, YN):
        if not np.all(np.isfinite(Y)):
            raise TrainingError("NaN or infinity in forward pass")
    UA, nA = _normalize_rows(YA, "anchor")
    UP, nP = _normalize_rows(YP, "positive")
    UN, nN = _normalize_rows(YN, "negative")

    m = A.shape[0]
    s_pos = np.einsum("ij,ij->i", UA, UP)
    if negative_mode == "in_batch":
        S_neg = UA @ UN.T
    else:
        S_neg = np.einsum("ij,ij->i", UA, UN)[:, None]

    losses, p_pos, P_neg = loss_terms(s_pos, S_neg, temperature)
    loss = float(losses.mean())

    scale = 1.0 / (m * temperature)
    d_pos = (p_pos - 1.0) * scale            # (m,)
    D_neg = P_neg * scale                    # (m, n)

    if negative_mode == "in_batch":
        dUA = d_pos[:, None] * UP + D_neg @ UN
        dUN = D_neg.T @ UA
    else:
        dUA = d_pos[:, None] * UP + D_neg[:, 0][:, None] * UN
        dUN = D_neg[:, 0][:, None] * UA
    dUP = d_pos[:, None] * UA

    grads = {name: np.zeros_like(param) for name, param in head.parameters().items()}
    _backward(head, A, HA, _unnormalize_grad(dUA, UA, nA), grads)
    _backward(head, P, HP, _unnormalize_grad(dUP, UP, nP), grads)
    _backward(head, N, HN, _unnormalize_grad(dUN, UN, nN), grads)
    return loss, grads


def _triplet_arrays(
    pairs: Sequence[ContrastivePair], store: EmbeddingStore
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    triplets = group_triplets(pairs)
    if not triplets:
        raise TrainingError("no triplets could be assembled from the pair list")

    def sentence(iid: str) -> np.ndarray:
        return store.get(iid, "sentence").astype(np.float64)

    A = np.stack([sentence(a) for a, _, _ in triplets])
    P = np.stack([sentence(p) for _, p, _ in triplets])
    N = np.stack([sentence(n) for _, _, n in triplets])
    return A, P, N


def _dataset_loss(head: ProjectionHead, A: np.ndarray, P: np.ndarray,
                  N: np.ndarray, cfg: TrainConfig) -> float:
    """Full-set loss over canonical-order batches (no shuffle, no grads).

    With in-batch negatives the per-triple loss depends on batch
    composition, so the trace is measured on this fixed batching; it is
    exactly constant when the learning rate is zero.
    """
    total = 0.0
    count = A.shape[0]
    for start in range(0, count, cfg.batch_size):
        stop = min(start + cfg.batch_size, count)
        loss, _ = batch_loss(head, A[start:stop], P[start:stop], N[start:stop],
                             cfg.temperature, cfg.negative_mode)
        total += loss * (stop - start)
    return total / count


def train(
    pairs: Sequence[ContrastivePair],
    store: EmbeddingStore,
    cfg: TrainConfig,
    head_init_seed: int,
) -> tuple[ProjectionHead, list[float]]:
    """Train a head on mined triplets; returns (head, per-epoch loss trace).

    Anchors, positives, and negatives are the instances' sentence vectors.
    Batches are seeded shuffles per epoch; the optimizer is Adam. Runs are
    bit-reproducible for fixed seeds.
    """
    A, P, N = _triplet_arrays(pairs, store)
    dim = A.shape[1]
    head = ProjectionHead.initialize(dim, head_init_seed)

    moment1 = {name: np.zeros_like(p) for name, p in head.parameters().items()}
    moment2 = {name: np.zeros_like(p) for name, p in head.parameters().items()}
    step = 0
    rng = np.random.default_rng(cfg.seed)
    trace: list[float] = []
    count = A.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(count)
        for batch_index, start in enumerate(range(0, count, cfg.batch_size), start=1):
            idx = order[start:start + cfg.batch_size]
            loss, grads = batch_loss(head, A[idx], P[idx], N[idx],
                                     cfg.temperature, cfg.negative_mode)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss diverged at epoch {epoch}, batch {batch_index}"
                )
            step += 1
            for name, param in head.parameters().items():
                g = grads[name]
                moment1[name] = _ADAM_BETA1 * moment1[name] + (1 - _ADAM_BETA1) * g
                moment2[name] = _ADAM_BETA2 * moment2[name] + (1 - _ADAM_BETA2) * g * g
                m_hat = moment1[name] / (1 - _ADAM_BETA1 ** step)
                v_hat = moment2[name] / (1 - _ADAM_BETA2 ** step)
                param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
        trace.append(_dataset_loss(head, A, P, N, cfg))
    return head, trace


def apply_head(head: ProjectionHead, store: EmbeddingStore) -> EmbeddingStore:
    """New store adding ft_sentence/ft_e1/ft_e2 channels; base channels kept.

    Each source channel must exist; every id in it gets a projected float32
    copy under the ft_ name.
    """
    dims = store.channel_dims
    new_entries: dict[tuple[str, str], np.ndarray] = {}
    for channel in ("sentence", "e1", "e2"):
        if channel not in dims:
            raise TrainingError(
                f"store has no {channel!r} channel to project; import base "
                f"embeddings first"
            )
        for iid in store.ids(channel):
            projected = head.forward(store.get(iid, channel).astype(np.float64))
            new_entries[(iid, f"ft_{channel}")] = projected.astype(np.float32)
    return store.extended(new_entries)


def save_head(
    head: ProjectionHead,
    path: str | Path,
    cfg: TrainConfig | None = None,
    trace: Sequence[float] = (),
    init_seed: int | None = None,
) -> None:
    """Write head parameters as one JSON line, then one line per epoch loss."""
    meta = {
        "input_dim": head.dim,
        "hidden_dim": head.W1.shape[0],
        "output_dim": head.W2.shape[0],
        "init_seed": init_seed,
        "config": asdict(cfg) if cfg is not None else None,
        "W1": head.W1.tolist(),
        "b1": head.b1.tolist(),
        "W2": head.W2.tolist(),
        "b2": head.b2.tolist(),
    }
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, ensure_ascii=False))
        fh.write("\n")
        for epoch, loss in enumerate(trace, start=1):
            fh.write(json.dumps({"epoch": epoch, "loss": loss}))
            fh.write("\n")


def load_head(path: str | Path) -> tuple[ProjectionHead, list[float], dict]:
    """Read a head parameter file; returns (head, loss trace, metadata)."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise TrainingError(f"{path}: empty head file")
        try:
            meta = json.loads(first)
        except json.JSONDecodeError as exc:
            raise TrainingError(f"{path}: invalid head JSON: {exc}") from exc
        missing = {"W1", "b1", "W2", "b2"} - set(meta)
        if missing:
            raise TrainingError(f"{path}: head file missing keys {sorted(missing)}")
        head = ProjectionHead(W1=meta["W1"], b1=meta["b1"],
                              W2=meta["W2"], b2=meta["b2"])
        trace: list[float] = []
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TrainingError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            trace.append(float(rec["loss"]))
    extras = {k: v for k, v in meta.items() if k not in {"W1", "b1", "W2", "b2"}}
    return head, trace, extras
