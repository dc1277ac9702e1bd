"""Rectified-flow training target and Euler sampler on small vectors.

The straight path is ``z_t = (1 - t) z + t eps`` with constant velocity
``v = eps - z``. Sampling integrates from t=1 (noise) down to t=0 on the
uniform grid ``t_k = 1 - k/steps``, evaluating the velocity at the start of
each step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import RawForgeError
from .seeding import generator


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise RawForgeError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


@dataclass(frozen=True, eq=False)
class FlowSample:
    z: np.ndarray
    eps: np.ndarray
    t: float
    z_t: np.ndarray
    v: np.ndarray

    @classmethod
    def make(cls, z, eps, t: float) -> "FlowSample":
        z, eps = _vec(z), _vec(eps)
        return cls(z=z, eps=eps, t=float(t), z_t=forward_interpolate(z, eps, t), v=velocity_target(z, eps))


def forward_interpolate(z, eps, t: float) -> np.ndarray:
    z, eps = _vec(z), _vec(eps)
    _same_dim(z, eps)
    if not 0.0 <= t <= 1.0:
        raise RawForgeError(f"t must lie in [0, 1], got {t}")
    return (1.0 - t) * z + t * eps


def velocity_target(z, eps) -> np.ndarray:
    z, eps = _vec(z), _vec(eps)
    _same_dim(z, eps)
    return eps - z


class VelocityPredictor(Protocol):
    def __call__(self, z_t: np.ndarray, t: float, cond: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class OraclePredictor:
    """Returns the true constant velocity ``eps - z`` of one episode."""

    eps: np.ndarray
    z: np.ndarray

    def __call__(self, z_t, t, cond=None):
        return velocity_target(self.z, self.eps)


class ZeroPredictor:
    def __call__(self, z_t, t, cond=None):
        return np.zeros_like(_vec(z_t))


def featurize(z_t, t: float, cond) -> np.ndarray:
    """Predictor input: [z_t, t, cond] concatenated."""
    cond = np.zeros(0) if cond is None else _vec(cond)
    return np.concatenate([_vec(z_t), [float(t)], cond])


@dataclass(frozen=True, eq=False)
class LinearPredictor:
    """v_hat = W @ [z_t, t, cond] + bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __call__(self, z_t, t, cond=None):
        out = self.weight @ featurize(z_t, t, cond) + self.bias
        _same_dim(out, _vec(z_t))
        return out

    def __eq__(self, other):
        if not isinstance(other, LinearPredictor):
            return NotImplemented
        return np.array_equal(self.weight, other.weight) and np.array_equal(self.bias, other.bias)

    __hash__ = None


def denoise_loss(pred: VelocityPredictor, batch: Sequence[tuple[FlowSample, Optional[np.ndarray]]]) -> float:
    """Mean over the batch of ||v - v_hat(z_t, t, cond)||^2."""
    if len(batch) == 0:
        raise RawForgeError("empty batch")
    total = 0.0
    for sample, cond in batch:
        err = sample.v - _vec(pred(sample.z_t, sample.t, cond))
        total += float(err @ err)
    return total / len(batch)


def euler_sample(pred: VelocityPredictor, z1, cond=None, steps: int = 1) -> np.ndarray:
    if steps < 1:
        raise RawForgeError(f"steps must be >= 1, got {steps}")
    z = _vec(z1).copy()
    dt = 1.0 / steps
    for k in range(steps):
        t = 1.0 - k / steps
        z = z - dt * _vec(pred(z, t, cond))
    return z


def fit_linear(features: np.ndarray, targets: np.ndarray) -> LinearPredictor:
    """Least-squares fit of ``targets ~ W @ features + bias`` (rows are samples)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    design = np.hstack([x, np.ones((x.shape[0], 1))])
    if design.shape[0] < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise RawForgeError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return LinearPredictor(weight=coef[:-1].T.copy(), bias=coef[-1].copy())


def make_training_batch(pairs: Sequence[tuple[np.ndarray, np.ndarray]], samples_per_pair: int,
                        seed: int) -> list[tuple[FlowSample, np.ndarray]]:
    """Draw ``samples_per_pair`` (eps, t) per (cond, z) pair, eps ~ N(0, I), t ~ U(0, 1)."""
    rng = generator(seed)
    batch = []
    for cond, z in pairs:
        z = _vec(z)
        for _ in range(samples_per_pair):
            eps = rng.standard_normal(z.shape[0])
            t = rng.uniform(0.0, 1.0)
            batch.append((FlowSample.make(z, eps, t), _vec(cond)))
    return batch


def fit_linear_predictor(pairs: Sequence[tuple[np.ndarray, np.ndarray]], samples_per_pair: int,
                         seed: int) -> LinearPredictor:
    """Toy conditional velocity model fitted by least squares on flow samples."""
    batch = make_training_batch(pairs, samples_per_pair, seed)
    if not batch:
        raise RawForgeError("empty training set")
    features = np.stack([featurize(s.z_t, s.t, cond) for s, cond in batch])
    targets = np.stack([s.v for s, _ in batch])
    return fit_linear(features, targets)


def recovery_table(dim: int, n_pairs: int, steps_list: Sequence[int], seed: int,
                   samples_per_pair: int = 16) -> list[dict]:
    """Max recovery error of Euler sampling per step count.

    ``oracle`` uses each episode's true velocity; ``linear`` uses a predictor
    fitted on a conditional toy task where z = A @ cond.
    """
    if n_pairs < dim + 1:
        raise RawForgeError(f"the linear baseline needs at least dim + 1 = {dim + 1} pairs, got {n_pairs}")
    rng = generator(seed)
    mixing = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    conds = rng.standard_normal((n_pairs, dim))
    zs = conds @ mixing.T
    eps = rng.standard_normal((n_pairs, dim))
    linear = fit_linear_predictor(list(zip(conds, zs)), samples_per_pair, seed + 1)
    rows = []
    for steps in steps_list:
        oracle_err = max(
            float(np.max(np.abs(euler_sample(OraclePredictor(e, z), e, c, steps) - z)))
            for c, z, e in zip(conds, zs, eps)
        )
        linear_err = max(
            float(np.max(np.abs(euler_sample(linear, e, c, steps) - z)))
            for c, z, e in zip(conds, zs, eps)
        )
        rows.append({"steps": int(steps), "oracle_max_abs_error": oracle_err,
                     "linear_max_abs_error": linear_err})
    return rows
