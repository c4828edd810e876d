"""Finite von Neumann algebras as weighted direct sums of matrix blocks.

An algebra ``M = M_{d_1} + ... + M_{d_k}`` carries the faithful trace
``tau(x) = sum_b w_b tr(x_b)``.  Elements are tuples of square complex blocks.
The coordinate space used by superoperators is the orthonormal basis of the
trace inner product ``<a, b> = tau(a* b)``: block ``b`` contributes the
row-major entries of ``sqrt(w_b) x_b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import gcd
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    DimensionZero,
    EmptyAlgebra,
    NegativeBudget,
    NonPositiveWeight,
    NotHermitian,
    NotPositive,
    ShapeMismatch,
    ValidationError,
)

HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8
DEGENERACY_GAP = 1e-9
STRICT_BUDGET_ETA = 1e-12
EXHAUSTIVE_LIMIT = 20
GRID_CAPACITY_LIMIT = 2_000_000


@dataclass(frozen=True)
class Algebra:
    dims: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.dims) == 0:
            raise EmptyAlgebra("an algebra needs at least one block")
        if len(self.dims) != len(self.weights):
            raise ValidationError("dims and weights must have equal length")
        for d in self.dims:
            if int(d) != d or d < 1:
                raise DimensionZero(f"block dimension must be a positive integer, got {d!r}")
        for w in self.weights:
            if not np.isfinite(w) or w <= 0:
                raise NonPositiveWeight(f"trace weights must be strictly positive, got {w!r}")

    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @cached_property
    def coord_dim(self) -> int:
        return sum(d * d for d in self.dims)

    @cached_property
    def tau_one(self) -> float:
        return float(sum(w * d for w, d in zip(self.weights, self.dims)))

    @cached_property
    def offsets(self) -> tuple:
        out, acc = [], 0
        for d in self.dims:
            out.append(acc)
            acc += d * d
        return tuple(out)

    @cached_property
    def _scales(self) -> np.ndarray:
        return np.concatenate([np.full(d * d, np.sqrt(w)) for d, w in zip(self.dims, self.weights)])

    def block_slice(self, b: int) -> slice:
        return slice(self.offsets[b], self.offsets[b] + self.dims[b] ** 2)

    def element(self, blocks) -> "Element":
        return Element(self, tuple(np.array(blk, dtype=np.complex128) for blk in blocks))

    def zero(self) -> "Element":
        return Element(self, tuple(np.zeros((d, d), dtype=np.complex128) for d in self.dims))

    def identity(self) -> "Element":
        return Element(self, tuple(np.eye(d, dtype=np.complex128) for d in self.dims))

    def unit(self, b: int, i: int, j: int) -> "Element":
        """Matrix unit ``e_ij`` placed in block ``b``."""
        blocks = [np.zeros((d, d), dtype=np.complex128) for d in self.dims]
        blocks[b][i, j] = 1.0
        return Element(self, tuple(blocks))

    def vec(self, x: "Element") -> np.ndarray:
        return np.concatenate([blk.reshape(-1) for blk in x.blocks]) * self._scales

    def unvec(self, v: np.ndarray) -> "Element":
        v = np.asarray(v, dtype=np.complex128) / self._scales
        return Element(self, tuple(v[self.block_slice(b)].reshape(d, d).copy()
                                   for b, d in enumerate(self.dims)))

    def basis(self):
        """Orthonormal basis of the coordinate space, in coordinate order."""
        for b, d in enumerate(self.dims):
            s = 1.0 / np.sqrt(self.weights[b])
            for i in range(d):
                for j in range(d):
                    yield s * self.unit(b, i, j)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "weights": list(self.weights)}


def make_algebra(dims: Sequence[int], weights: Sequence[float], normalize: bool = False) -> Algebra:
    """Build an algebra; with ``normalize`` the weights are rescaled so that tau(1) = 1."""
    dims = tuple(int(d) if float(d) == int(d) else d for d in dims)
    weights = tuple(float(w) for w in weights)
    alg = Algebra(dims, weights)
    if normalize:
        t = alg.tau_one
        alg = Algebra(dims, tuple(w / t for w in weights))
    return alg


@dataclass(frozen=True, eq=False)
class Element:
    algebra: Algebra
    blocks: tuple

    def __post_init__(self):
        if len(self.blocks) != self.algebra.n_blocks:
            raise ShapeMismatch(f"expected {self.algebra.n_blocks} blocks, got {len(self.blocks)}")
        for blk, d in zip(self.blocks, self.algebra.dims):
            if blk.shape != (d, d):
                raise ShapeMismatch(f"block of shape {blk.shape} does not match dimension {d}")

    def _same(self, other):
        if other.algebra != self.algebra:
            raise ShapeMismatch("elements live in different algebras")

    def __add__(self, other):
        self._same(other)
        return Element(self.algebra, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other):
        self._same(other)
        return Element(self.algebra, tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __neg__(self):
        return Element(self.algebra, tuple(-a for a in self.blocks))

    def __mul__(self, c):
        return Element(self.algebra, tuple(c * a for a in self.blocks))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Element(self.algebra, tuple(a / c for a in self.blocks))

    def __matmul__(self, other):
        self._same(other)
        return Element(self.algebra, tuple(a @ b for a, b in zip(self.blocks, other.blocks)))

    @property
    def H(self) -> "Element":
        return Element(self.algebra, tuple(a.conj().T for a in self.blocks))

    def hermitian_part(self) -> "Element":
        return 0.5 * (self + self.H)

    def hermitian_deviation(self) -> float:
        return max(float(np.max(np.abs(a - a.conj().T), initial=0.0)) for a in self.blocks)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a), initial=0.0)) for a in self.blocks)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermitian_deviation() <= tol * max(1.0, self.max_abs())

    def vec(self) -> np.ndarray:
        return self.algebra.vec(self)

    def allclose(self, other, atol=1e-10) -> bool:
        self._same(other)
        return all(np.allclose(a, b, atol=atol, rtol=0) for a, b in zip(self.blocks, other.blocks))

    def __repr__(self):
        return f"Element(dims={self.algebra.dims}, blocks={[b.tolist() for b in self.blocks]})"


class SpectralEntry(NamedTuple):
    block: int
    value: float
    projection: np.ndarray
    rank: int


@dataclass(frozen=True, eq=False)
class SpectralData:
    entries: tuple
    source: Element

    def reconstruct(self) -> Element:
        alg = self.source.algebra
        blocks = [np.zeros((d, d), dtype=np.complex128) for d in alg.dims]
        for e in self.entries:
            blocks[e.block] += e.value * e.projection
        return Element(alg, tuple(blocks))

    def projection_element(self, k: int) -> Element:
        e = self.entries[k]
        alg = self.source.algebra
        blocks = [np.zeros((d, d), dtype=np.complex128) for d in alg.dims]
        blocks[e.block] = e.projection.copy()
        return Element(alg, tuple(blocks))


@dataclass(frozen=True, eq=False)
class Projection:
    element: Element

    def __post_init__(self):
        p = self.element
        if not p.is_hermitian(1e-8) or not (p @ p).allclose(p, atol=1e-8):
            raise ValidationError("element is not an orthogonal projection")

    @property
    def trace(self) -> float:
        return trace(self.element).real


def _require_hermitian(x: Element, tol: float):
    if not x.is_hermitian(tol):
        raise NotHermitian(f"element deviates from hermitian by {x.hermitian_deviation():.3e}")


def trace(x: Element) -> complex:
    return complex(sum(w * np.trace(blk) for w, blk in zip(x.algebra.weights, x.blocks)))


def spectral_decompose(x: Element, tol: float = HERMITIAN_TOL, gap: float = DEGENERACY_GAP) -> SpectralData:
    """Eigenvalues (descending per block) with eigenprojections.

    Eigenvalues closer than ``gap`` are merged into one projection whose value
    is their mean.
    """
    _require_hermitian(x, tol)
    entries = []
    for b, blk in enumerate(x.blocks):
        lam, vecs = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        lam, vecs = lam[::-1], vecs[:, ::-1]
        start = 0
        for i in range(1, len(lam) + 1):
            if i == len(lam) or lam[i - 1] - lam[i] >= gap:
                v = vecs[:, start:i]
                entries.append(SpectralEntry(b, float(np.mean(lam[start:i])), v @ v.conj().T, i - start))
                start = i
    return SpectralData(tuple(entries), x)


def absolute(x: Element) -> Element:
    """``|x| = (x* x)^{1/2}`` computed blockwise."""
    out = []
    for blk in x.blocks:
        if np.allclose(blk, blk.conj().T, atol=HERMITIAN_TOL * max(1.0, np.max(np.abs(blk), initial=0.0)), rtol=0):
            lam, v = np.linalg.eigh(0.5 * (blk + blk.conj().T))
            out.append((v * np.abs(lam)) @ v.conj().T)
        else:
            lam, v = np.linalg.eigh(blk.conj().T @ blk)
            out.append((v * np.sqrt(np.clip(lam, 0.0, None))) @ v.conj().T)
    return Element(x.algebra, tuple(out))


def l1_norm(x: Element, method: str = "auto") -> float:
    """Trace norm ``tau(|x|)``.

    ``method="spectral"`` sums ``w_b |lambda|`` over the eigenvalues of a
    hermitian element; ``"svd"`` sums ``w_b sigma`` over singular values and
    works for any element.  ``"auto"`` picks the spectral path when ``x`` is
    hermitian.
    """
    if method == "auto":
        method = "spectral" if x.is_hermitian() else "svd"
    if method == "spectral":
        _require_hermitian(x, HERMITIAN_TOL)
        return float(sum(w * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (b + b.conj().T))))
                         for w, b in zip(x.algebra.weights, x.blocks)))
    if method == "svd":
        return float(sum(w * np.sum(np.linalg.svd(b, compute_uv=False))
                         for w, b in zip(x.algebra.weights, x.blocks)))
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class PositivityCheck:
    ok: bool
    min_eigenvalue: float
    witness: Optional[tuple] = None  # (block, eigenvalue, eigenvector) or ("not_hermitian", deviation)

    def __bool__(self):
        return self.ok


def is_positive(x: Element, tol: float = POSITIVITY_TOL, herm_tol: float = HERMITIAN_TOL) -> PositivityCheck:
    if not x.is_hermitian(herm_tol):
        return PositivityCheck(False, float("nan"), ("not_hermitian", x.hermitian_deviation()))
    worst = (None, np.inf, None)
    for b, blk in enumerate(x.blocks):
        lam, v = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        if lam[0] < worst[1]:
            worst = (b, float(lam[0]), v[:, 0])
    ok = worst[1] >= -tol
    return PositivityCheck(ok, worst[1], None if ok else worst)


def dual_positivity_check(x: Element, tol: float = POSITIVITY_TOL) -> bool:
    """Test ``tau(x p) >= 0`` over the spectral projections ``p`` of ``x``.

    Each pairing is normalized by ``tau(p)`` so the threshold is on the same
    scale as the eigenvalue test in :func:`is_positive`.
    """
    spec = spectral_decompose(x)
    for k in range(len(spec.entries)):
        p = spec.projection_element(k)
        if trace(x @ p).real / trace(p).real < -tol:
            return False
    return True


class ProjectionMass(NamedTuple):
    value: float
    projection: Projection


def _budget_slack(delta: float, alg: Algebra) -> float:
    return 64 * np.finfo(float).eps * max(1.0, delta, alg.tau_one)


def _rational_grid(weights, max_den=10_000, max_lcm=1_000_000):
    fracs = []
    for w in weights:
        f = Fraction(w).limit_denominator(max_den)
        if abs(float(f) - w) > 4 * np.finfo(float).eps * w:
            return None
        fracs.append(f)
    lcm = 1
    for f in fracs:
        lcm = lcm * f.denominator // gcd(lcm, f.denominator)
        if lcm > max_lcm:
            return None
    return lcm, [int(f * lcm) for f in fracs]


def _mass_items(y: Element):
    """Rank-one eigenpairs of ``y`` with positive eigenvalue, in (block, index) order."""
    items = []
    for b, blk in enumerate(y.blocks):
        lam, vecs = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        for i in range(len(lam) - 1, -1, -1):
            if lam[i] > 0:
                items.append((b, float(lam[i]), vecs[:, i]))
    return items


def _ranks_search(items, alg, cap):
    """Exact search over per-block ranks (top eigenvalues first within a block)."""
    by_block = [[it for it in items if it[0] == b] for b in range(alg.n_blocks)]
    best = [-1.0, None]

    def full(b):
        return alg.weights[b] * sum(it[1] for it in by_block[b])

    tails = [0.0] * (alg.n_blocks + 1)
    for b in range(alg.n_blocks - 1, -1, -1):
        tails[b] = tails[b + 1] + full(b)

    def rec(b, used, value, ranks):
        if value + tails[b] <= best[0]:
            return
        if b == alg.n_blocks:
            best[0], best[1] = value, list(ranks)
            return
        w = alg.weights[b]
        acc = [0.0]
        for it in by_block[b]:
            acc.append(acc[-1] + w * it[1])
        for k in range(len(by_block[b]), -1, -1):
            if used + w * k <= cap:
                rec(b + 1, used + w * k, value + acc[k], ranks + [k])

    rec(0, 0.0, 0.0, [])
    chosen = []
    for b, k in enumerate(best[1]):
        chosen.extend(by_block[b][:k])
    return chosen


def max_projection_mass(
    y: Element,
    delta: float,
    mode: str = "exact",
    tol: float = POSITIVITY_TOL,
) -> ProjectionMass:
    """Maximize ``tau(p y)`` over projections with ``tau(p) <= delta``.

    The optimum is attained on sums of eigenprojections of ``y``; in block
    ``b`` taking the top ``k_b`` eigenvalues costs ``w_b k_b``.  ``mode="exact"``
    solves the resulting 0/1 knapsack by enumeration (at most
    ``EXHAUSTIVE_LIMIT`` items), an integer-grid program (rational weights) or
    a per-block rank search.  ``mode="greedy"`` takes eigenvectors by
    descending eigenvalue and returns a lower bound.
    """
    if delta < 0:
        raise NegativeBudget(f"budget must be nonnegative, got {delta}")
    check = is_positive(y, tol)
    if not check:
        raise NotPositive(f"projection mass needs a positive element (min eigenvalue {check.min_eigenvalue:.3e})")
    alg = y.algebra
    cap = delta + _budget_slack(delta, alg)
    items = _mass_items(y)
    costs = np.array([alg.weights[it[0]] for it in items])
    values = np.array([alg.weights[it[0]] * it[1] for it in items])

    if mode == "greedy":
        order = sorted(range(len(items)), key=lambda k: (-items[k][1], items[k][0], k))
        chosen, used = [], 0.0
        for k in order:
            if used + costs[k] <= cap:
                chosen.append(k)
                used += costs[k]
        chosen.sort()
    elif mode == "exact":
        if costs.sum() <= cap:
            chosen = list(range(len(items)))
        elif len(items) <= EXHAUSTIVE_LIMIT:
            mask, _ = _kernels.subset_knapsack(values, costs, cap)
            chosen = [k for k in range(len(items)) if (mask >> k) & 1]
        else:
            grid = _rational_grid(alg.weights)
            capacity = None if grid is None else int(np.floor(delta * grid[0] + 1e-9))
            if grid is not None and capacity <= GRID_CAPACITY_LIMIT:
                icosts = np.array([grid[1][it[0]] for it in items], dtype=np.int64)
                sel = _kernels.grid_knapsack(values, icosts, capacity)
                chosen = [k for k in range(len(items)) if sel[k]]
            else:
                picked = {id(it) for it in _ranks_search(items, alg, cap)}
                chosen = [k for k, it in enumerate(items) if id(it) in picked]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    value = 0.0
    blocks = [np.zeros((d, d), dtype=np.complex128) for d in alg.dims]
    for k in chosen:
        b, lam, v = items[k]
        value += alg.weights[b] * lam
        blocks[b] += np.outer(v, v.conj())
    return ProjectionMass(value, Projection(Element(alg, tuple(blocks))))


# -- random elements --------------------------------------------------------

def random_element(alg: Algebra, rng: np.random.Generator) -> Element:
    return Element(alg, tuple(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                              for d in alg.dims))


def random_hermitian(alg: Algebra, rng: np.random.Generator) -> Element:
    return random_element(alg, rng).hermitian_part()


def random_positive(alg: Algebra, rng: np.random.Generator, rank: Optional[int] = None) -> Element:
    """Random positive element; ``rank`` limits the rank within each block."""
    blocks = []
    for d in alg.dims:
        r = d if rank is None else min(rank, d)
        g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
        blocks.append(g @ g.conj().T)
    return Element(alg, tuple(blocks))


def random_pure_state(alg: Algebra, rng: np.random.Generator, block: Optional[int] = None) -> Element:
    """Rank-one positive element of unit trace supported in one block."""
    if block is None:
        block = int(rng.integers(alg.n_blocks))
    d = alg.dims[block]
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    psi /= np.linalg.norm(psi)
    blocks = [np.zeros((k, k), dtype=np.complex128) for k in alg.dims]
    blocks[block] = np.outer(psi, psi.conj()) / alg.weights[block]
    return Element(alg, tuple(blocks))


def random_unitary(alg: Algebra, rng: np.random.Generator) -> Element:
    blocks = []
    for d in alg.dims:
        z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        q, r = np.linalg.qr(z)
        blocks.append(q * (np.diag(r) / np.abs(np.diag(r))))
    return Element(alg, tuple(blocks))
