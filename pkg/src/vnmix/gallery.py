"""Named maps: the truncated diagonal shift, pinching, Jordan automorphisms,
depolarizing channels and a seeded generator of random positive contractions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .algebra import Algebra, Element, make_algebra, random_unitary
from .errors import BadProbability, DimensionTooSmall, NotUnitary, ValidationError
from .superop import SuperOp, certify, from_function, from_kraus


def _unit_op(n, i, j):
    k = np.zeros((n, n), dtype=np.complex128)
    k[i, j] = 1.0
    return k


def truncated_shift(n: int):
    """Pinch to the diagonal, then move slot ``k`` to ``k+1``; the last slot is dropped.

    Lives on ``M_n`` with the unnormalized trace (weight 1).  Returns
    ``(algebra, map)``.
    """
    if n < 2:
        raise DimensionTooSmall(f"truncated shift needs n >= 2, got {n}")
    alg = make_algebra([n], [1.0])
    ops = [_unit_op(n, k + 1, k) for k in range(n - 1)]
    return alg, from_kraus(alg, ops)


def diagonal_expectation(n: int, algebra: Optional[Algebra] = None) -> SuperOp:
    """Conditional expectation onto the diagonal (pinching) of ``M_n``."""
    alg = algebra or make_algebra([n], [1.0])
    if alg.dims != (n,):
        raise ValidationError("pinching is defined on a single block of dimension n")
    return from_kraus(alg, [_unit_op(n, k, k) for k in range(n)])


def jordan_automorphism(u: Element, transpose: bool = False, tol: float = 1e-10) -> SuperOp:
    """``x -> u x u*`` or, with ``transpose``, ``x -> u x^T u*`` (blockwise transpose)."""
    for blk in u.blocks:
        if not np.allclose(blk.conj().T @ blk, np.eye(blk.shape[0]), atol=tol, rtol=0):
            raise NotUnitary("jordan_automorphism needs a unitary element")
    alg = u.algebra
    if not transpose:
        return from_kraus(alg, [u])
    op = from_function(alg, lambda x: u @ Element(alg, tuple(b.T for b in x.blocks)) @ u.H)
    return certify(op)


def depolarizing(algebra: Algebra, p: float) -> SuperOp:
    """``x -> (1-p) x + p tau(x) 1 / tau(1)`` on a single-block algebra."""
    if not 0.0 <= p <= 1.0:
        raise BadProbability(f"depolarizing probability must lie in [0, 1], got {p}")
    if algebra.n_blocks != 1:
        raise ValidationError("depolarizing is defined on a single-block algebra")
    d = algebra.dims[0]
    ops = []
    if p < 1.0:
        ops.append(np.sqrt(1.0 - p) * np.eye(d, dtype=np.complex128))
    if p > 0.0:
        ops.extend(np.sqrt(p / d) * _unit_op(d, i, j) for i in range(d) for j in range(d))
    return from_kraus(algebra, ops)


def random_positive_contraction(algebra: Algebra, seed: int, kraus_count: int = 2,
                                leak=0.0, coupled: bool = False) -> SuperOp:
    """Random Kraus map normalized so that ``T*(1) = (1 - leak) 1``.

    ``leak`` may also be a per-block sequence, giving ``T*(1)`` the value
    ``1 - leak[b]`` on block ``b``.  With ``coupled`` the Kraus operators act
    on the whole direct sum and move mass between blocks; otherwise they are
    elements of the algebra.
    """
    if kraus_count < 1:
        raise ValidationError("kraus_count must be at least 1")
    leaks = np.broadcast_to(np.asarray(leak, dtype=float), (algebra.n_blocks,))
    if np.any(leaks < 0.0) or np.any(leaks > 1.0):
        raise ValidationError(f"leak must lie in [0, 1], got {leak}")
    rng = np.random.default_rng(seed)
    total = sum(algebra.dims)
    starts = np.concatenate([[0], np.cumsum(algebra.dims)])
    ops = []
    for _ in range(kraus_count):
        if coupled:
            k = rng.standard_normal((total, total)) + 1j * rng.standard_normal((total, total))
        else:
            k = sla.block_diag(*[rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                                 for d in algebra.dims])
        ops.append(k)
    wd = np.concatenate([np.full(d, w) for d, w in zip(algebra.dims, algebra.weights)])
    s = sum(k.conj().T @ (wd[:, None] * k) for k in ops)
    fixes = []
    for b, (d, w) in enumerate(zip(algebra.dims, algebra.weights)):
        sb = s[starts[b]: starts[b + 1], starts[b]: starts[b + 1]] / w
        lam, v = np.linalg.eigh(0.5 * (sb + sb.conj().T))
        fixes.append(np.sqrt(1.0 - leaks[b]) * (v / np.sqrt(lam)) @ v.conj().T)
    r = sla.block_diag(*fixes)
    return from_kraus(algebra, [k @ r for k in ops])


# -- registry -----------------------------------------------------------------

@dataclass(frozen=True)
class GallerySpec:
    name: str
    params: dict = field(default_factory=dict)


_PARAMS = {
    "truncated_shift": {"n"},
    "diagonal_expectation": {"n", "scale"},
    "jordan_automorphism": {"unitary_seed", "transpose", "scale"},
    "depolarizing": {"p", "scale"},
    "random_positive_contraction": {"seed", "kraus_count", "leak", "coupled", "scale"},
}

NAMES = tuple(_PARAMS)


def validate_spec(spec: GallerySpec):
    if spec.name not in _PARAMS:
        raise ValidationError(f"unknown gallery construction {spec.name!r}; known: {', '.join(NAMES)}")
    extra = set(spec.params) - _PARAMS[spec.name]
    if extra:
        raise ValidationError(f"{spec.name} does not accept parameters {sorted(extra)}")


def gallery_algebra(spec: GallerySpec) -> Optional[Algebra]:
    """Algebra forced by a construction, or None when the scenario supplies it."""
    if spec.name == "truncated_shift":
        return make_algebra([int(spec.params["n"])], [1.0])
    if spec.name == "diagonal_expectation":
        return make_algebra([int(spec.params["n"])], [1.0])
    return None


def build(spec: GallerySpec, algebra: Optional[Algebra] = None, seed: Optional[int] = None) -> SuperOp:
    """Instantiate a registered construction; ``seed`` fills in missing seeds."""
    validate_spec(spec)
    p = dict(spec.params)
    name = spec.name
    if name == "truncated_shift":
        _, T = truncated_shift(int(p["n"]))
    elif name == "diagonal_expectation":
        T = diagonal_expectation(int(p["n"]))
    else:
        if algebra is None:
            raise ValidationError(f"{name} needs an algebra")
        if name == "depolarizing":
            T = depolarizing(algebra, float(p.get("p", 0.0)))
        elif name == "jordan_automorphism":
            useed = p.get("unitary_seed")
            u = algebra.identity() if useed is None else random_unitary(algebra, np.random.default_rng(int(useed)))
            T = jordan_automorphism(u, bool(p.get("transpose", False)))
        else:
            rseed = p.get("seed", seed)
            if rseed is None:
                raise ValidationError("random_positive_contraction needs a seed")
            leak = p.get("leak", 0.0)
            leak = [float(v) for v in leak] if isinstance(leak, (list, tuple)) else float(leak)
            T = random_positive_contraction(algebra, int(rseed), int(p.get("kraus_count", 2)),
                                            leak, bool(p.get("coupled", False)))
    scale = float(p.get("scale", 1.0))
    if not 0.0 < scale <= 1.0:
        raise ValidationError(f"scale must lie in (0, 1], got {scale}")
    return T.scaled(scale) if scale != 1.0 else T
