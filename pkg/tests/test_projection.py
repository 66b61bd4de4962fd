"""Projection head: forward oracle, analytic gradients, training behavior."""

from __future__ import annotations

import math

import numpy as np
import pytest

from relaware.embeddings import EmbeddingStore, cosine
from relaware.errors import TrainingError
from relaware.mining import ContrastivePair
from relaware.projection import (NEGATIVE_MODES, ProjectionHead, TrainConfig,
                                 apply_head, batch_loss, load_head,
                                 loss_terms, save_head, train)

# ---------------------------------------------------------------------------
# Oracles, written before the assertions that use them.
# ---------------------------------------------------------------------------


def oracle_forward(head: ProjectionHead, x) -> list[float]:
    """Per-coordinate loop evaluation of W2 tanh(W1 x + b1) + b2."""
    dim = head.dim
    hidden = [
        math.tanh(math.fsum(float(head.W1[i, j]) * float(x[j])
                            for j in range(dim)) + float(head.b1[i]))
        for i in range(dim)
    ]
    return [
        math.fsum(float(head.W2[i, j]) * hidden[j] for j in range(dim))
        + float(head.b2[i])
        for i in range(dim)
    ]


def numeric_grad(head: ProjectionHead, A, P, N, tau: float, mode: str,
                 name: str, index: tuple, h: float = 1e-5) -> float:
    """Central finite difference of the batch loss w.r.t. one parameter."""
    param = getattr(head, name)
    original = param[index]
    try:
        param[index] = original + h
        up, _ = batch_loss(head, A, P, N, tau, mode)
        param[index] = original - h
        down, _ = batch_loss(head, A, P, N, tau, mode)
    finally:
        param[index] = original
    return (up - down) / (2.0 * h)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def test_forward_matches_loop_oracle():
    head = ProjectionHead.initialize(4, seed=11)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.standard_normal(4)
        got = head.forward(x)
        want = oracle_forward(head, x)
        assert np.allclose(got, want, atol=1e-12, rtol=1e-12)


def test_forward_batch_matches_single():
    # BLAS may pick different kernels for (m, d) and (1, d) shapes, so the
    # agreement is to tolerance, not bit-exact.
    head = ProjectionHead.initialize(5, seed=3)
    rng = np.random.default_rng(1)
    X = rng.standard_normal((6, 5))
    batched = head.forward(X)
    for i in range(6):
        assert np.allclose(batched[i], head.forward(X[i]),
                           atol=1e-12, rtol=1e-12)


def test_forward_width_mismatch():
    head = ProjectionHead.initialize(4, seed=0)
    with pytest.raises(TrainingError):
        head.forward(np.ones(5))


def test_initialize_deterministic_and_bounded():
    a = ProjectionHead.initialize(8, seed=42)
    b = ProjectionHead.initialize(8, seed=42)
    c = ProjectionHead.initialize(8, seed=43)
    for name in ("W1", "b1", "W2", "b2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
        assert np.abs(getattr(a, name)).max() <= 1.0 / math.sqrt(8)
    assert not np.array_equal(a.W1, c.W1)


def test_head_shape_validation():
    with pytest.raises(TrainingError):
        ProjectionHead(W1=np.ones((3, 4)), b1=np.ones(3),
                       W2=np.ones((3, 3)), b2=np.ones(3))


# ---------------------------------------------------------------------------
# Loss values
# ---------------------------------------------------------------------------


def test_loss_symmetric_case_is_ln2():
    losses, p_pos, _ = loss_terms(np.array([0.3]), np.array([[0.3]]), 1.0)
    assert losses[0] == pytest.approx(math.log(2.0), abs=1e-9)
    assert p_pos[0] == pytest.approx(0.5, abs=1e-12)


def test_loss_separated_case_is_tiny():
    losses, _, _ = loss_terms(np.array([1.0]), np.array([[-1.0]]), 0.05)
    assert losses[0] < 1e-15


def test_loss_monotonic_in_similarities():
    base, _, _ = loss_terms(np.array([0.5]), np.array([[0.1]]), 0.5)
    better, _, _ = loss_terms(np.array([0.6]), np.array([[0.1]]), 0.5)
    worse, _, _ = loss_terms(np.array([0.5]), np.array([[0.2]]), 0.5)
    assert better[0] < base[0] < worse[0]


def test_batch_loss_symmetric_through_head():
    # Identical positive and negative vectors force s+ == s- whatever the
    # head does, so the two-term softmax gives exactly ln 2.
    head = ProjectionHead.initialize(6, seed=5)
    rng = np.random.default_rng(2)
    A = rng.standard_normal((1, 6))
    P = rng.standard_normal((1, 6))
    loss, _ = batch_loss(head, A, P, P.copy(), temperature=1.0)
    assert loss == pytest.approx(math.log(2.0), abs=1e-9)


def test_single_row_modes_agree():
    head = ProjectionHead.initialize(4, seed=9)
    rng = np.random.default_rng(3)
    A, P, N = (rng.standard_normal((1, 4)) for _ in range(3))
    loss_batch, grads_batch = batch_loss(head, A, P, N, 0.1, "in_batch")
    loss_paired, grads_paired = batch_loss(head, A, P, N, 0.1, "paired")
    assert loss_batch == pytest.approx(loss_paired, abs=1e-15)
    for name in grads_batch:
        assert np.allclose(grads_batch[name], grads_paired[name], atol=1e-15)


def test_batch_loss_shape_validation():
    head = ProjectionHead.initialize(4, seed=0)
    ones = np.ones((2, 4))
    with pytest.raises(TrainingError):
        batch_loss(head, ones, ones, np.ones((3, 4)))
    with pytest.raises(TrainingError):
        batch_loss(head, ones, ones, ones, negative_mode="sideways")


def test_zero_norm_head_output_rejected():
    dim = 4
    head = ProjectionHead(W1=np.zeros((dim, dim)), b1=np.zeros(dim),
                          W2=np.zeros((dim, dim)), b2=np.zeros(dim))
    rows = np.ones((1, dim))
    with pytest.raises(TrainingError) as err:
        batch_loss(head, rows, rows, rows)
    assert "zero-norm" in str(err.value)


# ---------------------------------------------------------------------------
# Gradient correctness
# ---------------------------------------------------------------------------


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(123)
    checked = 0
    for config_index in range(10):
        dim = int(rng.integers(3, 7))
        m = int(rng.integers(2, 6))
        tau = float(rng.uniform(0.2, 1.5))
        mode = NEGATIVE_MODES[config_index % 2]
        head = ProjectionHead.initialize(dim, seed=config_index)
        A = rng.standard_normal((m, dim))
        P = rng.standard_normal((m, dim))
        N = rng.standard_normal((m, dim))
        _, grads = batch_loss(head, A, P, N, tau, mode)
        for _ in range(8):
            name = ("W1", "b1", "W2", "b2")[int(rng.integers(0, 4))]
            param = getattr(head, name)
            index = tuple(int(rng.integers(0, s)) for s in param.shape)
            analytic = grads[name][index]
            numeric = numeric_grad(head, A, P, N, tau, mode, name, index)
            denom = max(abs(analytic), abs(numeric))
            if denom < 1e-8:
                continue
            assert abs(analytic - numeric) / denom < 1e-6, (
                f"config {config_index}, {name}{index}: "
                f"analytic {analytic} vs numeric {numeric}"
            )
            checked += 1
    assert checked >= 50


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _cluster_setup(n_per: int = 10, dim: int = 8, noise: float = 0.1,
                   seed: int = 0):
    """Two well-separated clusters plus intra/inter contrastive pairs."""
    rng = np.random.default_rng(seed)
    mu_a = np.zeros(dim)
    mu_a[0] = 1.0
    mu_b = np.zeros(dim)
    mu_b[0] = 0.5
    mu_b[1] = math.sqrt(1 - 0.25)  # 60 degrees from mu_a
    ids_a = [f"a{i:02d}" for i in range(n_per)]
    ids_b = [f"b{i:02d}" for i in range(n_per)]
    entries = {}
    cluster_of = {}
    for ids, mu, label in ((ids_a, mu_a, "A"), (ids_b, mu_b, "B")):
        for iid in ids:
            vec = mu + noise * rng.standard_normal(dim)
            for channel in ("sentence", "e1", "e2"):
                entries[(iid, channel)] = (
                    vec + 0.01 * rng.standard_normal(dim)).astype(np.float32)
            cluster_of[iid] = label
    store = EmbeddingStore(entries)
    pairs = []
    for ids, other in ((ids_a, ids_b), (ids_b, ids_a)):
        for i, anchor in enumerate(ids):
            positive = ids[(i + 1) % len(ids)]
            negative = other[i % len(other)]
            pairs.append(ContrastivePair(anchor, positive, "positive", 1.0))
            pairs.append(ContrastivePair(anchor, negative, "negative", -1.0))
    return store, pairs, cluster_of


def test_training_loss_strictly_decreases():
    store, pairs, _ = _cluster_setup()
    cfg = TrainConfig(learning_rate=1e-3, epochs=4, batch_size=8, seed=0)
    _, trace = train(pairs, store, cfg, head_init_seed=0)
    assert len(trace) == 4
    assert all(b < a for a, b in zip(trace, trace[1:]))


def test_training_zero_learning_rate_constant_trace():
    store, pairs, _ = _cluster_setup()
    cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=8, seed=0)
    _, trace = train(pairs, store, cfg, head_init_seed=0)
    assert trace[0] == trace[1] == trace[2]


def test_training_deterministic():
    store, pairs, _ = _cluster_setup()
    cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=8, seed=4)
    head_a, trace_a = train(pairs, store, cfg, head_init_seed=1)
    head_b, trace_b = train(pairs, store, cfg, head_init_seed=1)
    assert trace_a == trace_b
    for name in ("W1", "b1", "W2", "b2"):
        assert np.array_equal(getattr(head_a, name), getattr(head_b, name))


def test_training_separates_clusters():
    store, pairs, cluster_of = _cluster_setup()
    cfg = TrainConfig(learning_rate=1e-3, epochs=4, batch_size=8, seed=0)
    head, _ = train(pairs, store, cfg, head_init_seed=0)
    extended = apply_head(head, store)
    ids = extended.ids("ft_sentence")
    intra, inter = [], []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            sim = cosine(extended.get(a, "ft_sentence"),
                         extended.get(b, "ft_sentence"))
            (intra if cluster_of[a] == cluster_of[b] else inter).append(sim)
    assert np.mean(intra) > np.mean(inter)


def test_training_diverges_loudly():
    store, pairs, _ = _cluster_setup()
    cfg = TrainConfig(learning_rate=1e300, epochs=2, batch_size=8, seed=0)
    with pytest.raises(TrainingError):
        train(pairs, store, cfg, head_init_seed=0)


# ---------------------------------------------------------------------------
# Persistence and application
# ---------------------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    store, pairs, _ = _cluster_setup()
    cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=8, seed=7)
    head, trace = train(pairs, store, cfg, head_init_seed=7)
    path = tmp_path / "head.jsonl"
    save_head(head, path, cfg=cfg, trace=trace, init_seed=7)
    back, back_trace, extras = load_head(path)
    for name in ("W1", "b1", "W2", "b2"):
        assert np.array_equal(getattr(back, name), getattr(head, name))
    assert back_trace == trace
    assert extras["init_seed"] == 7
    assert extras["config"]["learning_rate"] == pytest.approx(1e-3)


def test_apply_head_adds_ft_channels():
    store, pairs, _ = _cluster_setup()
    head = ProjectionHead.initialize(8, seed=0)
    extended = apply_head(head, store)
    dims = extended.channel_dims
    assert {"ft_sentence", "ft_e1", "ft_e2"} <= set(dims)
    iid = store.ids("sentence")[0]
    want = head.forward(store.get(iid, "sentence").astype(np.float64))
    assert np.array_equal(extended.get(iid, "ft_sentence"),
                          want.astype(np.float32))
    # base channels are preserved untouched
    assert np.array_equal(extended.get(iid, "sentence"),
                          store.get(iid, "sentence"))


def test_apply_head_requires_base_channels():
    head = ProjectionHead.initialize(4, seed=0)
    store = EmbeddingStore({("a", "sentence"): np.ones(4, dtype=np.float32)})
    with pytest.raises(TrainingError) as err:
        apply_head(head, store)
    assert "e1" in str(err.value)


def test_train_config_validation():
    with pytest.raises(TrainingError):
        TrainConfig(temperature=0.0)
    with pytest.raises(TrainingError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(TrainingError):
        TrainConfig(epochs=0)
    with pytest.raises(TrainingError):
        TrainConfig(negative_mode="nope")
