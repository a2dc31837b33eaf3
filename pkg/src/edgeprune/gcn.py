"""Dense kernels for the two-layer graph convolutional encoder and its
contrastive loss, with analytic reverse-mode gradients.

The computation graph is fixed: symmetric degree normalization (self-loops
added), two convolution layers (ReLU hidden, identity output), row-cosine
NT-Xent loss over two views. Gradients are derived by hand for exactly this
graph, including the dependence of the degree normalization on adjacency
entries; adjacency entries are treated as continuous relaxations of their
{0,1} values. Everything is float64 and deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a kernel produces a non-finite intermediate."""


@dataclass
class EncoderParams:
    """Weights of the two-layer GCN encoder."""

    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self) -> None:
        self.w1 = np.ascontiguousarray(self.w1, dtype=np.float64)
        self.w2 = np.ascontiguousarray(self.w2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ValueError("weight matrices must be 2-dimensional")
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError(
                f"layer shapes disagree: w1 {self.w1.shape} vs w2 {self.w2.shape}"
            )

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w1.copy(), self.w2.copy())


def init_params(
    feature_dim: int, hidden_dim: int, embed_dim: int, rng: np.random.Generator
) -> EncoderParams:
    """Uniform initialization in ±sqrt(6 / (fan_in + fan_out)) per layer."""
    b1 = np.sqrt(6.0 / (feature_dim + hidden_dim))
    b2 = np.sqrt(6.0 / (hidden_dim + embed_dim))
    w1 = rng.uniform(-b1, b1, size=(feature_dim, hidden_dim))
    w2 = rng.uniform(-b2, b2, size=(hidden_dim, embed_dim))
    return EncoderParams(w1, w2)


def save_params(params: EncoderParams, path: str | Path, hyper: dict | None = None) -> None:
    """Checkpoint as one JSON document: dims header plus row-major flat weights."""
    doc = {
        "feature_dim": params.feature_dim,
        "hidden_dim": params.hidden_dim,
        "embed_dim": params.embed_dim,
        "hyper": hyper or {},
        "w1": params.w1.ravel().tolist(),
        "w2": params.w2.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_params(path: str | Path) -> EncoderParams:
    doc = json.loads(Path(path).read_text())
    d, h, e = doc["feature_dim"], doc["hidden_dim"], doc["embed_dim"]
    w1 = np.asarray(doc["w1"], dtype=np.float64).reshape(d, h)
    w2 = np.asarray(doc["w2"], dtype=np.float64).reshape(h, e)
    return EncoderParams(w1, w2)


class _ForwardCache(NamedTuple):
    adjacency: np.ndarray
    features: np.ndarray
    a_hat: np.ndarray
    deg: np.ndarray
    xw1: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    h1w2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


def _forward(params: EncoderParams, adjacency: np.ndarray, features: np.ndarray) -> _ForwardCache:
    if features.shape[1] != params.feature_dim:
        raise ValueError(
            f"feature dim {features.shape[1]} does not match encoder input {params.feature_dim}"
        )
    if adjacency.shape[0] != features.shape[0]:
        raise ValueError(
            f"adjacency shape {adjacency.shape} does not match features {features.shape}"
        )
    adjacency = np.asarray(adjacency, dtype=np.float64)
    a_tilde = adjacency + np.eye(adjacency.shape[0])
    deg = a_tilde.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    a_hat = a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    xw1 = features @ params.w1
    z1 = a_hat @ xw1
    h1 = np.maximum(z1, 0.0)
    h1w2 = h1 @ params.w2
    z2 = a_hat @ h1w2
    return z2, _ForwardCache(
        adjacency, features, a_hat, deg, xw1, z1, h1, h1w2, params.w1, params.w2
    )


def gcn_forward(
    params: EncoderParams, adjacency: np.ndarray, features: np.ndarray
) -> np.ndarray:
    """Embeddings of the two-layer encoder: Â·relu(Â·X·W1)·W2 with Â the
    self-loop degree normalization. Deterministic."""
    embeddings, _ = _forward(params, adjacency, features)
    return embeddings


def _backward(
    cache: _ForwardCache, d_out: np.ndarray, need_adjacency_grad: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    # Output activation is the identity, so d_out is the gradient at z2.
    d_a_hat = None
    if need_adjacency_grad:
        d_a_hat = d_out @ cache.h1w2.T
    d_h1w2 = cache.a_hat.T @ d_out
    d_w2 = cache.h1.T @ d_h1w2
    d_h1 = d_h1w2 @ cache.w2.T
    d_z1 = d_h1 * (cache.z1 > 0.0)
    if need_adjacency_grad:
        d_a_hat += d_z1 @ cache.xw1.T
    d_xw1 = cache.a_hat.T @ d_z1
    d_w1 = cache.features.T @ d_xw1

    d_adj = None
    if need_adjacency_grad:
        # Â[p,q] = Ã[p,q]·deg_p^(-1/2)·deg_q^(-1/2) with deg the row sums of
        # Ã = A + I, so each entry A[a,b] moves both Â[a,b] directly and the
        # whole row/column a through deg_a.
        d_inv_sqrt = 1.0 / np.sqrt(cache.deg)
        direct = d_a_hat * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
        weighted = d_a_hat * cache.a_hat
        deg_term = -(weighted.sum(axis=1) + weighted.sum(axis=0)) / (2.0 * cache.deg)
        d_adj = direct + deg_term[:, None]
    return d_w1, d_w2, d_adj


def _stable_rows(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(h, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    return h / safe[:, None], norms


def contrastive_loss(h1: np.ndarray, h2: np.ndarray, tau: float) -> float:
    """Symmetrized NT-Xent loss over two embedding matrices.

    Positives are same-node cross-view pairs; negatives for node i are all
    intra-view and cross-view rows j ≠ i. Similarity is row cosine, with
    zero-norm rows comparing as 0. Log-sum-exp terms are max-shifted per row.
    """
    loss, _, _ = _loss_and_embedding_grads(h1, h2, tau, need_grads=False)
    return loss


def _anchor_terms(
    s_intra: np.ndarray, s_cross: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-row loss and softmax tables for one anchor view.

    s_intra holds similarities to same-view rows (diagonal excluded from the
    negatives), s_cross to other-view rows (diagonal is the positive).
    """
    t_intra = s_intra / tau
    t_cross = s_cross / tau
    np.fill_diagonal(t_intra, -np.inf)
    shift = np.maximum(t_intra.max(axis=1), t_cross.max(axis=1))
    e_intra = np.exp(t_intra - shift[:, None])
    e_cross = np.exp(t_cross - shift[:, None])
    denom = e_intra.sum(axis=1) + e_cross.sum(axis=1)
    losses = -np.diagonal(t_cross) + shift + np.log(denom)
    return losses, e_intra, e_cross, denom


def _loss_and_embedding_grads(
    h1: np.ndarray, h2: np.ndarray, tau: float, need_grads: bool = True
) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if h1.shape != h2.shape:
        raise ValueError(f"embedding shapes differ: {h1.shape} vs {h2.shape}")
    n = h1.shape[0]
    u, r1 = _stable_rows(h1)
    v, r2 = _stable_rows(h2)
    s11 = u @ u.T
    s12 = u @ v.T
    s22 = v @ v.T

    l1, e11, e12, denom1 = _anchor_terms(s11, s12, tau)
    l2, e22, e21, denom2 = _anchor_terms(s22, s12.T, tau)
    loss = float((l1.sum() + l2.sum()) / (2.0 * n))
    if not np.isfinite(loss):
        raise NumericalError("contrastive loss is non-finite")
    if not need_grads:
        return loss, None, None

    c = 1.0 / (2.0 * n * tau)
    eye = np.eye(n)
    g11 = c * e11 / denom1[:, None]
    g12 = c * (e12 / denom1[:, None] - eye)
    g22 = c * e22 / denom2[:, None]
    g21 = c * (e21 / denom2[:, None] - eye)
    d_s12 = g12 + g21.T

    d_u = (g11 + g11.T) @ u + d_s12 @ v
    d_v = (g22 + g22.T) @ v + d_s12.T @ u

    def to_embedding(du: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
        proj = (unit * du).sum(axis=1, keepdims=True)
        safe = np.where(norms == 0.0, 1.0, norms)
        out = (du - proj * unit) / safe[:, None]
        out[norms == 0.0] = 0.0
        return out

    return loss, to_embedding(d_u, u, r1), to_embedding(d_v, v, r2)


class LossGrads(NamedTuple):
    loss: float
    grad_w1: np.ndarray
    grad_w2: np.ndarray
    adjacency_grad: np.ndarray | None


def loss_and_grads(
    params: EncoderParams,
    adjacency: np.ndarray,
    features: np.ndarray,
    views,
    tau: float,
    *,
    need_adjacency_grad: bool = True,
) -> LossGrads:
    """Loss and gradients of the contrastive loss composed with the encoder
    on a pair of views.

    ``views`` is a pair of objects carrying ``adjacency``, ``features`` and an
    optional boolean ``dropped`` mask, or None to evaluate both views on the
    unaugmented (adjacency, features). The returned adjacency gradient sums
    both views' gradients mapped back to source entries: entries whose edge
    was dropped in a view receive no contribution from that view. It is not
    symmetrized here.
    """
    if views is None:
        pairs = [(adjacency, features, None), (adjacency, features, None)]
    else:
        v1, v2 = views
        pairs = [
            (v1.adjacency, v1.features, getattr(v1, "dropped", None)),
            (v2.adjacency, v2.features, getattr(v2, "dropped", None)),
        ]

    embeddings = []
    caches = []
    for view_adj, view_feat, _ in pairs:
        emb, cache = _forward(params, view_adj, view_feat)
        if not np.all(np.isfinite(emb)):
            raise NumericalError("encoder forward produced non-finite embeddings")
        embeddings.append(emb)
        caches.append(cache)

    loss, d_h1, d_h2 = _loss_and_embedding_grads(embeddings[0], embeddings[1], tau)

    grad_w1 = np.zeros_like(params.w1)
    grad_w2 = np.zeros_like(params.w2)
    adjacency_grad = np.zeros_like(np.asarray(adjacency, dtype=np.float64)) if need_adjacency_grad else None
    for (_, _, dropped), cache, d_h in zip(pairs, caches, (d_h1, d_h2)):
        d_w1, d_w2, d_adj = _backward(cache, d_h, need_adjacency_grad)
        grad_w1 += d_w1
        grad_w2 += d_w2
        if need_adjacency_grad:
            if dropped is not None:
                d_adj = d_adj * ~dropped
            adjacency_grad += d_adj

    if not (np.all(np.isfinite(grad_w1)) and np.all(np.isfinite(grad_w2))):
        raise NumericalError("weight gradients are non-finite")
    if need_adjacency_grad and not np.all(np.isfinite(adjacency_grad)):
        raise NumericalError("adjacency gradient is non-finite")
    return LossGrads(loss, grad_w1, grad_w2, adjacency_grad)


def deterministic_loss(
    params: EncoderParams, adjacency: np.ndarray, features: np.ndarray, tau: float
) -> float:
    """Contrastive loss with both view channels set to the unaugmented graph.

    This is the reproducible evaluator used for minimum-loss tracking and for
    attack loss traces.
    """
    h = gcn_forward(params, adjacency, features)
    return contrastive_loss(h, h, tau)


@dataclass
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


@dataclass
class AdamState:
    m_w1: np.ndarray
    v_w1: np.ndarray
    m_w2: np.ndarray
    v_w2: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "AdamState":
        return cls(
            m_w1=np.zeros_like(params.w1),
            v_w1=np.zeros_like(params.w1),
            m_w2=np.zeros_like(params.w2),
            v_w2=np.zeros_like(params.w2),
        )


def adam_step(
    params: EncoderParams,
    grad_w1: np.ndarray,
    grad_w2: np.ndarray,
    state: AdamState,
    hyper: AdamHyper,
) -> tuple[EncoderParams, AdamState]:
    """One bias-corrected Adam update; pure, returns new params and state."""
    if grad_w1.shape != params.w1.shape or grad_w2.shape != params.w2.shape:
        raise ValueError("gradient shapes do not match parameters")
    t = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2

    def update(w, g, m, v):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        m_hat = m_new / (1.0 - b1**t)
        v_hat = v_new / (1.0 - b2**t)
        return w - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps), m_new, v_new

    w1, m1, v1 = update(params.w1, grad_w1, state.m_w1, state.v_w1)
    w2, m2, v2 = update(params.w2, grad_w2, state.m_w2, state.v_w2)
    return EncoderParams(w1, w2), AdamState(m1, v1, m2, v2, step=t)
