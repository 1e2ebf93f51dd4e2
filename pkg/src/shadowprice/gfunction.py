"""Objective functions g(cash, holdings) for the static problem.

A :class:`GFunction` works on the stacked state vector ``z = (cash, y_1, ..., y_d)``.
Every g in this package is concave and increasing in each argument; the
value may be ``-inf`` on the boundary of the positive orthant (log and power
utilities at zero wealth).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

ValueFn = Callable[[NDArray[np.float64]], float]
ValueGradFn = Callable[[NDArray[np.float64]], "tuple[float, NDArray[np.float64]]"]
BatchFn = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class GFunction:
    """Concave, increasing objective on stacked states.

    Attributes:
        dim: number of risky assets d (``z`` has length d + 1).
        value: z -> g(z), may return ``-inf``.
        value_grad: optional z -> (g(z), grad g(z)); the gradient is a
            supergradient where g is not differentiable.
        batch: optional vectorised evaluator, (n, d+1) -> (n,).
    """

    dim: int
    value: ValueFn
    value_grad: Optional[ValueGradFn] = None
    batch: Optional[BatchFn] = None
    name: str = field(default="g", compare=False)

    @property
    def has_gradient(self) -> bool:
        return self.value_grad is not None

    def __call__(self, cash: float, holdings) -> float:
        z = np.empty(self.dim + 1)
        z[0] = cash
        z[1:] = holdings
        return self.value(z)

    def evaluate_many(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.batch is not None:
            return np.asarray(self.batch(states), dtype=float)
        return np.array([self.value(z) for z in states])


def expected_utility_g(utility, prices, probs=None, name: str | None = None) -> GFunction:
    """g(x, y) = sum_c p_c U(x + y . S_c) for scenario price vectors S_c.

    With a single scenario equal to the current bid this is the liquidation
    utility of the terminal period. With at least d + 1 affinely independent
    scenarios it is strictly concave.
    """
    S = np.atleast_2d(np.asarray(prices, dtype=float))
    k, d = S.shape
    p = np.full(k, 1.0 / k) if probs is None else np.asarray(probs, dtype=float)
    if p.shape != (k,):
        raise ValueError("probs must have one entry per scenario")
    A = np.hstack([np.ones((k, 1)), S])  # (k, d+1): wealth weights per scenario

    def value(z):
        w = A @ z
        u = utility.value(w)
        if np.any(np.isneginf(u)):
            return -np.inf
        return float(p @ u)

    def value_grad(z):
        w = A @ z
        u = utility.value(w)
        if np.any(np.isneginf(u)):
            return -np.inf, np.full(d + 1, np.inf)
        return float(p @ u), (p * utility.derivative(w)) @ A

    def batch(Z):
        W = Z @ A.T
        U = utility.value(W)
        with np.errstate(invalid="ignore"):
            out = U @ p
        out[np.isneginf(U).any(axis=1)] = -np.inf
        return out

    label = name or f"E[{utility.label}] over {k} scenario(s)"
    return GFunction(dim=d, value=value, value_grad=value_grad, batch=batch, name=label)


def separable_sqrt_g(dim: int) -> GFunction:
    """g(x, y) = sqrt(x) + sum_i sqrt(y_i); a strictly concave test objective."""

    def value(z):
        if np.any(z < 0):
            return -np.inf
        return float(np.sum(np.sqrt(z)))

    def value_grad(z):
        if np.any(z < 0):
            return -np.inf, np.full(dim + 1, np.inf)
        with np.errstate(divide="ignore"):
            return float(np.sum(np.sqrt(z))), 0.5 / np.sqrt(z)

    def batch(Z):
        with np.errstate(invalid="ignore"):
            out = np.sqrt(Z).sum(axis=1)
        out[(Z < 0).any(axis=1)] = -np.inf
        return out

    return GFunction(dim=dim, value=value, value_grad=value_grad, batch=batch,
                     name="sqrt-separable")
