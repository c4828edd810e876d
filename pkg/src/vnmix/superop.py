"""Linear maps on the coordinate space of an algebra.

A :class:`SuperOp` stores a dense ``N x N`` matrix acting on the orthonormal
coordinates of the trace inner product, so the trace-pairing adjoint is the
conjugate transpose.  Positivity is carried by a certificate: a Kraus
representation, a sampling record, or a bare declaration.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .algebra import (
    Algebra,
    Element,
    is_positive,
    l1_norm,
    absolute,
    random_hermitian,
    random_pure_state,
)
from .errors import NotCertified, NotCertifiedPositive, ShapeMismatch, SpuriousExpansion, ValidationError

CONTRACTION_TOL = 1e-9
PERIPHERAL_TOL = 1e-8
FIXED_POINT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Kraus:
    operators: tuple  # full D x D matrices on the direct sum; block-diagonal for elements
    scale: float = 1.0


@dataclass(frozen=True)
class SampledPositive:
    n_samples: int
    tol: float


@dataclass(frozen=True)
class Declared:
    note: str = ""


Certificate = Union[Kraus, SampledPositive, Declared]


def _transpose_perm(alg: Algebra) -> np.ndarray:
    perm = np.empty(alg.coord_dim, dtype=np.int64)
    for b, d in enumerate(alg.dims):
        o = alg.offsets[b]
        idx = np.arange(d * d).reshape(d, d)
        perm[o: o + d * d] = o + idx.T.reshape(-1)
    return perm


@dataclass(frozen=True, eq=False)
class SuperOp:
    algebra: Algebra
    matrix: np.ndarray
    certificate: Certificate = field(default_factory=Declared)

    def __post_init__(self):
        n = self.algebra.coord_dim
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (n, n):
            raise ShapeMismatch(f"superoperator matrix must be {n}x{n}, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        defect = self.hermiticity_defect()
        if defect > 1e-10 * max(1.0, float(np.max(np.abs(m), initial=0.0))):
            raise ValidationError(f"map does not preserve hermiticity (defect {defect:.3e})")

    def hermiticity_defect(self) -> float:
        p = _transpose_perm(self.algebra)
        return float(np.max(np.abs(self.matrix[p][:, p].conj() - self.matrix), initial=0.0))

    def __call__(self, x: Element) -> Element:
        if x.algebra != self.algebra:
            raise ShapeMismatch("element and map live in different algebras")
        return self.algebra.unvec(self.matrix @ x.vec())

    def __matmul__(self, other: "SuperOp") -> "SuperOp":
        cert = Declared("composition")
        if not isinstance(self.certificate, Declared) and not isinstance(other.certificate, Declared):
            cert = SampledPositive(0, 0.0)  # composition of positive maps is positive
        return SuperOp(self.algebra, self.matrix @ other.matrix, cert)

    def scaled(self, c: float) -> "SuperOp":
        if c < 0:
            cert = Declared("negative scaling")
        elif isinstance(self.certificate, Kraus):
            cert = Kraus(self.certificate.operators, self.certificate.scale * c)
        else:
            cert = self.certificate
        return SuperOp(self.algebra, c * self.matrix, cert)

    def with_certificate(self, certificate: Certificate) -> "SuperOp":
        return replace(self, certificate=certificate)

    @property
    def positivity_certified(self) -> bool:
        return not isinstance(self.certificate, Declared)

    @cached_property
    def adjoint(self) -> "SuperOp":
        return adjoint_superop(self)

    @cached_property
    def contraction_bound(self) -> float:
        """Largest eigenvalue of ``T*(1)``; equals the L1 operator norm for positive maps."""
        t1 = self.adjoint(self.algebra.identity())
        return max(float(np.linalg.eigvalsh(0.5 * (b + b.conj().T))[-1]) for b in t1.blocks)

    def is_certified_contraction(self, tol: float = CONTRACTION_TOL) -> bool:
        return self.positivity_certified and self.contraction_bound <= 1.0 + tol

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, n)


def require_certified_contraction(T: SuperOp, tol: float = CONTRACTION_TOL):
    if not T.positivity_certified:
        raise NotCertified("map carries no positivity certificate")
    if T.contraction_bound > 1.0 + tol:
        raise NotCertified(f"map is not an L1 contraction (||T*(1)|| = {T.contraction_bound:.6g})")


def _weight_diag(alg: Algebra) -> np.ndarray:
    return np.concatenate([np.full(d, w) for d, w in zip(alg.dims, alg.weights)])


def _block_offsets(alg: Algebra):
    out, acc = [], 0
    for d in alg.dims:
        out.append(acc)
        acc += d
    return out


def _as_full(alg: Algebra, op) -> np.ndarray:
    total = sum(alg.dims)
    if isinstance(op, Element):
        if op.algebra != alg:
            raise ShapeMismatch("Kraus operator lives in a different algebra")
        return sla.block_diag(*op.blocks).astype(np.complex128)
    op = np.asarray(op, dtype=np.complex128)
    if op.shape != (total, total):
        raise ShapeMismatch(f"Kraus operator must be an Element or a {total}x{total} matrix, got {op.shape}")
    return op


def kraus_matrix(alg: Algebra, operators: Sequence[np.ndarray], scale: float = 1.0) -> np.ndarray:
    """Coordinate matrix of ``x -> scale * pinch(sum_i K_i x K_i*)``."""
    n = alg.coord_dim
    m = np.zeros((n, n), dtype=np.complex128)
    starts = _block_offsets(alg)
    for K in operators:
        for c, dc in enumerate(alg.dims):
            for b, db in enumerate(alg.dims):
                kcb = K[starts[c]: starts[c] + dc, starts[b]: starts[b] + db]
                if not np.any(kcb):
                    continue
                f = np.sqrt(alg.weights[c] / alg.weights[b])
                m[alg.block_slice(c), alg.block_slice(b)] += f * np.kron(kcb, kcb.conj())
    return scale * m


def kraus_apply(alg: Algebra, operators, scale: float, x: Element) -> Element:
    """Direct evaluation of a Kraus map, independent of the coordinate matrix."""
    full = sla.block_diag(*x.blocks)
    acc = sum(K @ full @ K.conj().T for K in (_as_full(alg, op) for op in operators))
    starts = _block_offsets(alg)
    return Element(alg, tuple(scale * acc[s: s + d, s: s + d] for s, d in zip(starts, alg.dims)))


def from_kraus(alg: Algebra, operators: Sequence, scale: float = 1.0) -> SuperOp:
    """``T(x) = scale * sum_i K_i x K_i*`` with a Kraus certificate.

    Operators may be elements of ``alg`` (block-diagonal) or full matrices on
    the direct sum ``C^{d_1} + ... + C^{d_k}``; in the latter case the result
    is compressed back onto the blocks.
    """
    if not 0 < scale <= 1:
        raise ValidationError(f"scale must lie in (0, 1], got {scale}")
    if len(operators) == 0:
        raise ValidationError("at least one Kraus operator is required")
    ops = tuple(_as_full(alg, K) for K in operators)
    return SuperOp(alg, kraus_matrix(alg, ops, scale), Kraus(ops, float(scale)))


def from_matrix(alg: Algebra, matrix, certificate: Optional[Certificate] = None) -> SuperOp:
    return SuperOp(alg, np.asarray(matrix, dtype=np.complex128), certificate or Declared())


def from_function(alg: Algebra, func, certificate: Optional[Certificate] = None) -> SuperOp:
    """Assemble the matrix of a linear map given as a Python callable on elements."""
    cols = [func(e).vec() for e in alg.basis()]
    return SuperOp(alg, np.column_stack(cols), certificate or Declared())


def adjoint_superop(T: SuperOp) -> SuperOp:
    """Adjoint for the pairing ``tau((T* y)* x) = tau(y* T x)``."""
    cert = T.certificate
    if isinstance(cert, Kraus):
        wd = _weight_diag(T.algebra)
        ops = tuple((K.conj().T * np.sqrt(wd)[None, :]) / np.sqrt(wd)[:, None] for K in cert.operators)
        cert = Kraus(ops, cert.scale)
    return SuperOp(T.algebra, T.matrix.conj().T, cert)


# -- positivity ---------------------------------------------------------------

class PositiveVerdict(NamedTuple):
    ok: bool
    certificate: Optional[Certificate]
    witness: Optional[Element]


def _positivity_probes(alg: Algebra, rng: np.random.Generator, n_samples: int):
    yield alg.identity()
    for b, d in enumerate(alg.dims):
        for i in range(d):
            yield alg.unit(b, i, i)
        for i in range(d):
            for j in range(i + 1, d):
                for phase in (1.0, 1j):
                    v = np.zeros(d, dtype=np.complex128)
                    v[i], v[j] = 1.0, phase
                    blocks = [np.zeros((k, k), dtype=np.complex128) for k in alg.dims]
                    blocks[b] = np.outer(v, v.conj())
                    yield Element(alg, tuple(blocks))
    for _ in range(n_samples):
        yield random_pure_state(alg, rng)


def check_positive(T: SuperOp, n_samples: int = 200, tol: float = 1e-8, seed: int = 0) -> PositiveVerdict:
    """Kraus maps pass at once; otherwise probe extreme rays and matrix-unit combinations."""
    if isinstance(T.certificate, Kraus):
        return PositiveVerdict(True, T.certificate, None)
    rng = np.random.default_rng(seed)
    for x in _positivity_probes(T.algebra, rng, n_samples):
        y = T(x)
        if not is_positive(y, tol * max(1.0, y.max_abs())):
            return PositiveVerdict(False, None, x)
    return PositiveVerdict(True, SampledPositive(n_samples, tol), None)


def certify(T: SuperOp, n_samples: int = 200, tol: float = 1e-8, seed: int = 0) -> SuperOp:
    """Return ``T`` carrying a positivity certificate, or raise."""
    verdict = check_positive(T, n_samples, tol, seed)
    if not verdict.ok:
        raise NotCertifiedPositive(f"map sends a positive element to a non-positive one: {verdict.witness!r}")
    return T.with_certificate(verdict.certificate)


# -- contraction --------------------------------------------------------------

class ContractionVerdict(NamedTuple):
    ok: bool
    bound: float
    witness: Optional[tuple]  # (block, eigenvalue, eigenvector) of T*(1)
    sampled_ok: bool
    sampled_max_ratio: float

    def __bool__(self):
        return self.ok


def sampled_l1_ratio(T: SuperOp, n_probes: int = 1000, seed: int = 0) -> float:
    """Largest ``||Tx||_1 / ||x||_1`` seen over random probes.

    Half the budget draws random pure states and hermitian elements; the
    other half perturbs the best pure state found so far.
    """
    alg = T.algebra
    rng = np.random.default_rng(seed)
    best, best_state = 0.0, None
    n_random = n_probes // 2
    for k in range(n_random):
        x = random_pure_state(alg, rng) if k % 2 == 0 else random_hermitian(alg, rng)
        r = l1_norm(T(x)) / l1_norm(x)
        if r > best:
            best = r
            if k % 2 == 0:
                best_state = x
    if best_state is None:
        return best
    b = next(i for i, blk in enumerate(best_state.blocks) if np.any(blk))
    lam, vecs = np.linalg.eigh(best_state.blocks[b])
    psi = vecs[:, -1]
    step = 0.5
    best_pure = 0.0
    for _ in range(n_probes - n_random):
        cand = psi + step * (rng.standard_normal(psi.shape) + 1j * rng.standard_normal(psi.shape))
        cand /= np.linalg.norm(cand)
        blocks = [np.zeros((d, d), dtype=np.complex128) for d in alg.dims]
        blocks[b] = np.outer(cand, cand.conj())
        x = Element(alg, tuple(blocks))
        r = l1_norm(T(x)) / l1_norm(x)
        if r > best_pure:
            best_pure, psi = r, cand
        else:
            step = max(step * 0.95, 1e-4)
    return max(best, best_pure)


def check_l1_contraction(T: SuperOp, tol: float = CONTRACTION_TOL, n_probes: int = 1000,
                         seed: int = 0) -> ContractionVerdict:
    """Decide ``||Tx||_1 <= ||x||_1`` through ``T*(1) <= 1`` and cross-check by sampling."""
    if not T.positivity_certified:
        raise NotCertifiedPositive("contraction check needs a positivity certificate")
    t1 = T.adjoint(T.algebra.identity())
    witness = None
    bound = -np.inf
    for b, blk in enumerate(t1.blocks):
        lam, vecs = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        if lam[-1] > bound:
            bound = float(lam[-1])
            if lam[-1] > 1.0 + tol:
                witness = (b, float(lam[-1]), vecs[:, -1])
    ok = bound <= 1.0 + tol
    if ok:
        witness = None
    ratio = sampled_l1_ratio(T, n_probes, seed) if n_probes else float("nan")
    return ContractionVerdict(ok, bound, witness, bool(ratio <= 1.0 + tol) if n_probes else ok, ratio)


# -- iteration ----------------------------------------------------------------

class TrajectoryPoint(NamedTuple):
    step: int
    element: Element
    norm: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    initial: Element
    points: tuple
    converged: bool

    @property
    def norms(self) -> np.ndarray:
        return np.array([p.norm for p in self.points])

    @property
    def final(self) -> Element:
        return self.points[-1].element

    @property
    def alpha(self) -> float:
        return self.points[-1].norm

    def escape_step(self, tol: float = 0.0) -> Optional[int]:
        for p in self.points:
            if p.norm <= tol:
                return p.step
        return None


def iterate(T: SuperOp, x: Element, n_max: int = 5000, stop_tol: float = 1e-12,
            window: int = 10, chunk: int = 32) -> Trajectory:
    """Orbit ``x, Tx, T^2 x, ...`` up to ``n_max`` steps.

    Stops early once ``||T^{k+1}x - T^k x||_1 < stop_tol`` holds for ``window``
    consecutive steps.
    """
    alg = T.algebra
    points = [TrajectoryPoint(0, x, l1_norm(x))]
    v = x.vec()
    quiet = 0
    converged = False
    while points[-1].step < n_max and not converged:
        steps = min(chunk, n_max - points[-1].step)
        rows = _kernels.orbit(T.matrix, v, steps)
        for r in rows[1:]:
            el = alg.unvec(r)
            diff = l1_norm(el - points[-1].element)
            points.append(TrajectoryPoint(points[-1].step + 1, el, l1_norm(el)))
            quiet = quiet + 1 if diff < stop_tol else 0
            if quiet >= window:
                converged = True
                break
        v = points[-1].element.vec()
    return Trajectory(x, tuple(points), converged)


# -- spectrum -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    clusters: tuple  # (eigenvalue, multiplicity), sorted by modulus then argument
    peripheral_projector: np.ndarray
    peripheral_values: np.ndarray
    semisimple: bool

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues), initial=0.0))

    def csv_rows(self):
        for lam, mult in self.clusters:
            yield (lam.real, lam.imag, abs(lam), mult)


def _cluster(values: np.ndarray, radius: float):
    out = []
    for lam in values:
        for k, (mu, m, members) in enumerate(out):
            if abs(lam - mu) <= radius:
                members.append(lam)
                out[k] = (np.mean(members), m + 1, members)
                break
        else:
            out.append((lam, 1, [lam]))
    return [(complex(mu), m) for mu, m, _ in out]


def riesz_projector(matrix: np.ndarray, select) -> np.ndarray:
    """Spectral projector onto the invariant subspace of eigenvalues with ``select(lam)``."""
    n = matrix.shape[0]
    _, q, k = sla.schur(matrix, output="complex", sort=select)
    _, u, k2 = sla.schur(matrix.conj().T, output="complex", sort=lambda z: select(np.conj(z)))
    if k != k2:
        raise SpuriousExpansion("left and right invariant subspaces disagree in dimension")
    if k == 0:
        return np.zeros((n, n), dtype=np.complex128)
    if k == n:
        return np.eye(n, dtype=np.complex128)
    v, w = q[:, :k], u[:, :k]
    return v @ np.linalg.solve(w.conj().T @ v, w.conj().T)


def spectrum(T: SuperOp, tol: float = PERIPHERAL_TOL, expansion_tol: float = 1e-6) -> Spectrum:
    m = T.matrix
    lam = np.linalg.eigvals(m)
    order = np.lexsort((np.angle(lam), -np.round(np.abs(lam), 12)))
    lam = lam[order]
    contraction = T.is_certified_contraction()
    if contraction and np.max(np.abs(lam), initial=0.0) > 1.0 + expansion_tol:
        raise SpuriousExpansion(f"eigenvalue of modulus {np.max(np.abs(lam)):.12g} under a contraction certificate")
    periph = lam[np.abs(lam) >= 1.0 - tol]
    proj = riesz_projector(m, lambda z: abs(z) >= 1.0 - tol)
    semisimple = True
    for mu, mult in _cluster(periph, 1e-8):
        sv = np.linalg.svd(m - mu * np.eye(m.shape[0]), compute_uv=False)
        if int(np.sum(sv <= 1e-6 * max(1.0, sv[0]))) != mult:
            semisimple = False
    return Spectrum(lam, tuple(_cluster(lam, 1e-9)), proj, periph, semisimple)


# -- fixed points -------------------------------------------------------------

def cesaro_average(T: SuperOp, x: Element, n_avg: int) -> Element:
    rows = _kernels.orbit(T.matrix, x.vec(), n_avg - 1)
    return T.algebra.unvec(rows.mean(axis=0))


def ergodic_projector(T: SuperOp, tol: float = PERIPHERAL_TOL) -> np.ndarray:
    """Limit of the Cesaro means ``(1/N) sum_{k<N} T^k`` (the projector onto ker(T - 1))."""
    return riesz_projector(T.matrix, lambda z: abs(z - 1.0) <= tol)


def fixed_point_residual(T: SuperOp, z: Element) -> float:
    return l1_norm(T(z) - z)


def positive_fixed_point(T: SuperOp, seed: Element, n_avg: int = 256,
                         tol: float = FIXED_POINT_TOL) -> Optional[Element]:
    """Nonzero positive ``z`` with ``Tz = z`` extracted from Cesaro means of ``seed``.

    The running average over ``n_avg`` steps is tried first; when its residual
    is above ``tol`` the exact Cesaro limit from the ergodic projector is used.
    Returns ``None`` when the limit vanishes or fails re-verification.
    """
    require_certified_contraction(T)
    if not is_positive(seed):
        raise ValidationError("seed of the fixed-point search must be positive")
    candidates = []
    avg = cesaro_average(T, seed, n_avg).hermitian_part()
    candidates.append(avg)
    limit = T.algebra.unvec(ergodic_projector(T) @ seed.vec()).hermitian_part()
    candidates.append(limit)
    for z in candidates:
        size = l1_norm(z)
        if size <= tol:
            continue
        if fixed_point_residual(T, z) <= tol and is_positive(z, tol * max(1.0, size)):
            return z
    return None


# -- absolute-value domination ------------------------------------------------

class DominationVerdict(NamedTuple):
    ok: bool
    worst_margin: float  # most negative eigenvalue of T(|x|) - |T(x)| seen
    max_gap: float  # largest ||T(|x|) - |T(x)|||_1 seen, 0 means equality
    witness: Optional[Element]

    def __bool__(self):
        return self.ok


def check_abs_domination(T: SuperOp, n_samples: int = 200, tol: float = 1e-8, seed: int = 0) -> DominationVerdict:
    """Sample hermitian ``x`` (unit trace norm) and test ``|T(x)| <= T(|x|)``."""
    if not T.positivity_certified:
        raise NotCertifiedPositive("domination check needs a positivity certificate")
    rng = np.random.default_rng(seed)
    worst, gap, witness = np.inf, 0.0, None
    for _ in range(n_samples):
        x = random_hermitian(T.algebra, rng)
        x = x / l1_norm(x)
        d = T(absolute(x)) - absolute(T(x))
        chk = is_positive(d.hermitian_part(), np.inf)
        gap = max(gap, l1_norm(d.hermitian_part()))
        if chk.min_eigenvalue < worst:
            worst = chk.min_eigenvalue
            if worst < -tol:
                witness = x
    return DominationVerdict(worst >= -tol, float(worst), float(gap), witness)
