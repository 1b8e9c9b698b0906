"""Masked self-attention and the shape/relation masks of geometry-decoupled attention.

Tokens are laid out instance-major: tokens ``0..n_points-1`` belong to the first
instance, the next ``n_points`` to the second, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class AttentionParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    def __post_init__(self):
        mats = [np.array(m, dtype=float) for m in (self.wq, self.wk, self.wv)]
        if any(m.ndim != 2 for m in mats):
            raise ValidationError("projection matrices must be 2-D")
        if mats[0].shape != mats[1].shape or mats[0].shape[0] != mats[2].shape[0]:
            raise ValidationError("query/key/value projections disagree in shape")
        if not all(np.all(np.isfinite(m)) for m in mats):
            raise ValidationError("projection matrices must be finite")
        for name, m in zip(("wq", "wk", "wv"), mats):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @classmethod
    def random(cls, d_model, d_k, rng=None, scale=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = scale if scale is not None else 1.0 / np.sqrt(d_model)
        return cls(*(scale * rng.standard_normal((d_model, d_k)) for _ in range(3)))

    @classmethod
    def zeros(cls, d_model, d_k):
        return cls(*(np.zeros((d_model, d_k)) for _ in range(3)))


def instance_index(token: int, n_points: int) -> int:
    """1-based instance id of a 1-based token index."""
    if token < 1 or n_points < 1:
        raise ValidationError(f"token {token} / n_points {n_points} out of range")
    return -(-token // n_points)


def _instance_ids(n, n_points):
    if n < 1 or n_points < 1:
        raise ValidationError(f"need n >= 1 and n_points >= 1, got {n}, {n_points}")
    return np.repeat(np.arange(n), n_points)


def build_shape_mask(n: int, n_points: int) -> np.ndarray:
    ids = _instance_ids(n, n_points)
    return (ids[:, None] == ids[None, :]).astype(np.int8)


def build_relation_mask(n: int, n_points: int) -> np.ndarray:
    ids = _instance_ids(n, n_points)
    return (ids[:, None] != ids[None, :]).astype(np.int8)


@dataclass
class AttentionOutput:
    values: np.ndarray
    weights: np.ndarray
    empty_rows: np.ndarray

    @property
    def flagged(self) -> bool:
        return bool(self.empty_rows.any())


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def masked_self_attention(tokens, mask, params: AttentionParams, n_heads: int = 1,
                          mode: str = "exclude", return_weights: bool = False):
    """Scaled dot-product self-attention restricted by a binary mask.

    ``mode="exclude"`` gives masked positions exactly zero weight; each row's
    softmax only ever sees its unmasked columns, so a row's output is
    independent of tokens it cannot attend to. ``mode="hadamard"`` multiplies
    the logits by the mask before the softmax, so masked entries still receive
    weight ``exp(0)``. Rows with no unmasked entry output zeros and are
    reported in ``empty_rows``.
    """
    E = np.asarray(tokens, dtype=float)
    M = np.asarray(mask)
    n_tok = E.shape[0]
    if M.shape != (n_tok, n_tok):
        raise ValidationError(f"mask shape {M.shape} does not fit {n_tok} tokens")
    if E.ndim != 2 or E.shape[1] != params.wq.shape[0]:
        raise ValidationError(f"token dim {E.shape} does not fit projections {params.wq.shape}")
    if not np.all(np.isfinite(E)):
        raise ValidationError("tokens must be finite")
    if mode not in ("exclude", "hadamard"):
        raise ValidationError(f"unknown mask mode {mode!r}")
    d_k = params.wq.shape[1]
    if d_k % n_heads:
        raise ValidationError(f"d_k={d_k} not divisible by {n_heads} heads")
    q, k, v = E @ params.wq, E @ params.wk, E @ params.wv
    head = d_k // n_heads
    out = np.zeros((n_tok, params.wv.shape[1]))
    weights = np.zeros((n_heads, n_tok, n_tok))
    allowed = M != 0
    empty = ~allowed.any(axis=1)
    for h in range(n_heads):
        sl = slice(h * head, (h + 1) * head)
        vsl = slice(h * (v.shape[1] // n_heads), (h + 1) * (v.shape[1] // n_heads))
        for i in range(n_tok):
            if mode == "hadamard":
                cols = np.arange(n_tok)
                logits = (k[:, sl] @ q[i, sl]) / np.sqrt(head) * M[i]
            else:
                if empty[i]:
                    continue
                cols = np.flatnonzero(allowed[i])
                logits = (k[cols, sl] @ q[i, sl]) / np.sqrt(head)
            a = _softmax(logits)
            weights[h, i, cols] = a
            out[i, vsl] = a @ v[cols, vsl]
    result = AttentionOutput(out, weights, empty if mode == "exclude" else np.zeros(n_tok, bool))
    return result if return_weights else result.values


def gda_block(tokens, p_shape: AttentionParams, p_rel: AttentionParams, n: int, n_points: int,
              n_heads: int = 1):
    """Within-instance attention then cross-instance attention, each with a residual add."""
    E = np.asarray(tokens, dtype=float)
    if E.shape[0] != n * n_points:
        raise ValidationError(f"expected {n * n_points} tokens, got {E.shape[0]}")
    for p in (p_shape, p_rel):
        if p.wv.shape[1] != E.shape[1]:
            raise ValidationError("value projection must map back to the token dimension")
    mid = E + masked_self_attention(E, build_shape_mask(n, n_points), p_shape, n_heads)
    return mid + masked_self_attention(mid, build_relation_mask(n, n_points), p_rel, n_heads)
