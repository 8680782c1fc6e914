"""Dense float64 vector/matrix helpers, activations, and seeded randomness.

Everything here works on plain numpy arrays: a "vector" is a 1-D float64
array, a "matrix" is a 2-D float64 array (row-major). All computation is
done in 64-bit floats; the gradient-flow measurements downstream span many
orders of magnitude and would be corrupted by float32.

Randomness is always explicit. `make_rng` builds a PCG64 generator from an
integer seed plus an optional stream path, so identical seeds give
bit-identical draw sequences on every platform, and independent streams can
be derived for parallel work instead of sharing one generator.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Vector = np.ndarray
Matrix = np.ndarray
SeededRng = np.random.Generator


def make_rng(seed: int, *stream: int) -> SeededRng:
    """Deterministic PCG64 generator for (seed, *stream).

    The stream path lets callers derive independent sub-generators, e.g.
    one per epoch or per example, without consuming draws from a parent.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_vector(x) -> Vector:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(x) -> Matrix:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def affine(W: Matrix, x: Vector, b: Vector) -> Vector:
    """W @ x + b with explicit shape checking."""
    W = as_matrix(W)
    x = as_vector(x)
    b = as_vector(b)
    if W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0]:
        raise ValueError(
            f"affine shape mismatch: W is {W.shape}, x has length {x.shape[0]}, "
            f"b has length {b.shape[0]}"
        )
    return W @ x + b


def tanh_map(x: Vector) -> Vector:
    return np.tanh(np.asarray(x, dtype=np.float64))


def sigmoid_map(x: Vector) -> Vector:
    # 0.5*(1+tanh(x/2)) is the logistic function, stable for large |x|.
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: Vector) -> Vector:
    """Softmax with max-subtraction so huge scores cannot overflow."""
    x = as_vector(x)
    shifted = x - x.max()
    e = np.exp(shifted)
    return e / e.sum()


def l2_norm(x: Vector) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64)))


def uniform_init(rows: int, cols: int, lo: float, hi: float, rng: SeededRng) -> Matrix:
    """Matrix with i.i.d. entries uniform on [lo, hi), deterministic per rng."""
    if lo >= hi:
        raise ValueError(f"uniform_init requires lo < hi, got lo={lo}, hi={hi}")
    return rng.uniform(lo, hi, size=(rows, cols))


def finite_diff_grad(f: Callable[[Vector], float], x: Vector, h: float = 1e-5) -> Vector:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    This is the independent oracle used to check every hand-derived backward
    pass; it must stay free of any analytic-gradient code.
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    x = as_vector(x).copy()
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        orig = x[i]
        x[i] = orig + h
        f_plus = float(f(x))
        x[i] = orig - h
        f_minus = float(f(x))
        x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(
                f"finite_diff_grad: non-finite function value at coordinate {i}"
            )
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
