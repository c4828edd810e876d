"""Mixing diagnostics for positive L1-contractions.

Everything here reduces to finite-dimensional linear algebra: weak
convergence is convergence in coordinates, the Banach-limit functional
of the decay/fixed-point argument becomes a Cesaro limit, and its normal part
is the whole functional.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .algebra import (
    STRICT_BUDGET_ETA,
    Algebra,
    Element,
    is_positive,
    l1_norm,
    max_projection_mass,
    random_hermitian,
    random_positive,
    random_pure_state,
    trace,
)
from .errors import AnalysisError, DichotomyFailure, NotPositive, ValidationError
from .superop import (
    FIXED_POINT_TOL,
    SuperOp,
    Trajectory,
    check_abs_domination,
    ergodic_projector,
    fixed_point_residual,
    iterate,
    positive_fixed_point,
    require_certified_contraction,
    spectrum,
)

MIXING_TOL = 1e-8
DECAY_TOL = 1e-9
MONOTONE_SLACK = 1e-10


def trace_zero_basis(alg: Algebra) -> list:
    """Real basis of the hermitian elements with zero trace (size ``N - 1``)."""
    out = []
    diag = []
    for b, d in enumerate(alg.dims):
        for i in range(d):
            diag.append((b, i))
            for j in range(i + 1, d):
                out.append(alg.unit(b, i, j) + alg.unit(b, j, i))
                out.append(1j * alg.unit(b, i, j) - 1j * alg.unit(b, j, i))
    for (b1, i1), (b2, i2) in zip(diag, diag[1:]):
        out.append(alg.unit(b1, i1, i1) / alg.weights[b1] - alg.unit(b2, i2, i2) / alg.weights[b2])
    return out


def _basis_matrix(alg: Algebra) -> np.ndarray:
    return np.column_stack([x.vec() for x in trace_zero_basis(alg)]) if alg.coord_dim > 1 \
        else np.zeros((alg.coord_dim, 0), dtype=np.complex128)


# -- mixing ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MixingReport:
    verdict: str  # "mixing" | "not_mixing"
    peripheral_overlap: float
    witness: Optional[Element] = None
    witness_trajectory: Optional[Trajectory] = None
    fixed_point: Optional[Element] = None

    @property
    def mixing(self) -> bool:
        return self.verdict == "mixing"


def classify_mixing(T: SuperOp, tol: float = MIXING_TOL, trajectory_steps: int = 64) -> MixingReport:
    """Mixing iff the peripheral spectral projector annihilates the trace-zero hermitian space."""
    require_certified_contraction(T)
    alg = T.algebra
    proj = spectrum(T).peripheral_projector
    overlap, best = 0.0, None
    for x in trace_zero_basis(alg):
        v = x.vec()
        r = float(np.linalg.norm(proj @ v) / np.linalg.norm(v))
        if r > overlap:
            overlap, best = r, x
    witness = best if overlap > tol else None
    fp = positive_fixed_point(T, alg.identity())
    if witness is None:
        return MixingReport("mixing", overlap, fixed_point=fp)
    traj = iterate(T, witness, n_max=trajectory_steps)
    return MixingReport("not_mixing", overlap, witness, traj, fp)


# -- rho bar ----------------------------------------------------------------------

class RhoBarEstimate(NamedTuple):
    value: float
    witness: Optional[Element]
    method: str


def _signed_part(alg: Algebra, v: np.ndarray):
    """Trace norm of the hermitian element with coordinates ``v`` and the coordinates of its sign."""
    x = alg.unvec(v)
    total = 0.0
    signs = []
    for w, blk in zip(alg.weights, x.blocks):
        lam, u = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        total += w * np.sum(np.abs(lam))
        signs.append((u * np.sign(lam)) @ u.conj().T)
    return total, Element(alg, tuple(signs)).vec()


def _coords_in(basis: np.ndarray, v: np.ndarray) -> np.ndarray:
    stacked = np.vstack([basis.real, basis.imag])
    rhs = np.concatenate([v.real, v.imag])
    return np.linalg.lstsq(stacked, rhs, rcond=None)[0]


def _pair_samples(alg: Algebra, rng: np.random.Generator, n_random: int):
    """Differences ``u - v`` of positive elements with equal trace norm."""
    diag = [(b, i) for b, d in enumerate(alg.dims) for i in range(d)]
    for (b1, i1) in diag:
        for (b2, i2) in diag:
            if (b1, i1) < (b2, i2):
                yield alg.unit(b1, i1, i1) / alg.weights[b1] - alg.unit(b2, i2, i2) / alg.weights[b2]
    for k in range(n_random):
        if k % 4 == 3:
            u, v = random_positive(alg, rng), random_positive(alg, rng)
            u, v = u / l1_norm(u), v / l1_norm(v)
        else:
            u, v = random_pure_state(alg, rng), random_pure_state(alg, rng)
        w = u - v
        if l1_norm(w) > 1e-9:
            yield w


def _rho_bar_spectral(T: SuperOp, tol: float, n_starts: int, seed: int) -> RhoBarEstimate:
    alg = T.algebra
    proj = spectrum(T).peripheral_projector
    basis = _basis_matrix(alg)
    if basis.shape[1] == 0:
        return RhoBarEstimate(0.0, None, "spectral")
    pb = proj @ basis
    overlap = max(float(np.linalg.norm(pb[:, k]) / np.linalg.norm(basis[:, k])) for k in range(basis.shape[1]))
    if overlap <= tol:
        return RhoBarEstimate(0.0, None, "spectral")

    def neg_ratio(c):
        num, s_num = _signed_part(alg, pb @ c)
        den, s_den = _signed_part(alg, basis @ c)
        g_num = np.real(pb.conj().T @ s_num)
        g_den = np.real(basis.conj().T @ s_den)
        return -num / den, -(g_num * den - num * g_den) / den ** 2

    rng = np.random.default_rng(seed)
    starts = [np.eye(basis.shape[1])[k] for k in range(basis.shape[1])]
    starts.sort(key=lambda c: neg_ratio(c)[0])
    starts = starts[: n_starts // 4]
    for w in _pair_samples(alg, rng, n_starts):
        starts.append(_coords_in(basis, w.vec()))
        if len(starts) >= n_starts:
            break
    best, best_c = 0.0, None
    for c0 in starts:
        c0 = c0 / np.max(np.abs(c0))
        res = minimize(neg_ratio, c0, jac=True, method="L-BFGS-B", options={"maxiter": 200})
        for c in (c0, res.x):
            val = -neg_ratio(c)[0]
            if np.isfinite(val) and val > best:
                best, best_c = val, c
    witness = alg.unvec(basis @ best_c).hermitian_part() if best_c is not None else None
    return RhoBarEstimate(float(min(max(best, 0.0), 1.0)), witness, "spectral")


def _rho_bar_search(T: SuperOp, n_samples: int, power: int, seed: int) -> RhoBarEstimate:
    alg = T.algebra
    tn = np.linalg.matrix_power(T.matrix, power)
    rng = np.random.default_rng(seed)
    best, best_w = 0.0, None
    for w in _pair_samples(alg, rng, n_samples):
        r = l1_norm(alg.unvec(tn @ w.vec()).hermitian_part()) / l1_norm(w)
        if r > best:
            best, best_w = r, w
    return RhoBarEstimate(float(min(max(best, 0.0), 1.0)), best_w, "search")


def rho_bar_estimate(T: SuperOp, method: str = "spectral", tol: float = MIXING_TOL, n_starts: int = 32,
                     n_samples: int = 2000, power: int = 8192, seed: int = 0) -> RhoBarEstimate:
    """Estimate ``sup lim_n ||T^n(u - v)||_1 / ||u - v||_1`` over positive ``u, v`` of equal norm.

    ``spectral``: zero when the peripheral projector misses the trace-zero
    space, else multi-start ascent of ``||P w||_1 / ||w||_1``.
    ``search``: sampling of ``u - v`` pushed through ``T^power``.
    """
    require_certified_contraction(T)
    if method == "spectral":
        return _rho_bar_spectral(T, tol, n_starts, seed)
    if method == "search":
        return _rho_bar_search(T, n_samples, power, seed)
    raise ValueError(f"unknown method {method!r}")


def rho_bar(T: SuperOp, method: str = "spectral", **params) -> float:
    return rho_bar_estimate(T, method, **params).value


class CompleteMixingReport(NamedTuple):
    verdict: str  # "completely_mixing" | "not_completely_mixing"
    rho_bar: float
    witness: Optional[Element]

    @property
    def completely_mixing(self) -> bool:
        return self.verdict == "completely_mixing"


def classify_completely_mixing(T: SuperOp, tol: float = MIXING_TOL, seed: int = 0, **params) -> CompleteMixingReport:
    est = rho_bar_estimate(T, "spectral", tol=tol, seed=seed, **params)
    if est.value <= tol:
        return CompleteMixingReport("completely_mixing", est.value, None)
    return CompleteMixingReport("not_completely_mixing", est.value, est.witness)


# -- smoothing ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SmoothingProfile:
    x: Element
    deltas: np.ndarray
    n_grid: np.ndarray
    S: np.ndarray  # S[i, j] = max over tau(p) <= deltas[j] of tau(p T^{n_grid[i]} x)
    norms: np.ndarray
    min_projection_trace: float
    strict: bool = False

    @property
    def vacuous_deltas(self) -> np.ndarray:
        """Budgets below the smallest nonzero projection trace (profile identically zero)."""
        return self.deltas[self.deltas < self.min_projection_trace]

    def csv_rows(self):
        for i, n in enumerate(self.n_grid):
            for j, d in enumerate(self.deltas):
                yield (int(n), float(d), float(self.S[i, j]))


def default_deltas(alg: Algebra, count: int = 12) -> np.ndarray:
    lo = min(alg.weights) / 4
    return np.geomspace(lo, 1.5 * alg.tau_one, count)


def smoothing_profile(T: SuperOp, x: Element, deltas: Optional[Sequence[float]] = None, n_max: int = 64,
                      strict: bool = False, eta: float = STRICT_BUDGET_ETA, mode: str = "exact") -> SmoothingProfile:
    """Table of the largest mass ``T^n x`` puts on projections of trace at most delta.

    With ``strict`` the budget is ``delta - eta`` (trace strictly below delta).
    """
    require_certified_contraction(T)
    if not is_positive(x):
        raise NotPositive("smoothing profile needs a positive element")
    alg = T.algebra
    deltas = default_deltas(alg) if deltas is None else np.asarray(deltas, dtype=float)
    rows = _kernels.orbit(T.matrix, x.vec(), n_max)
    S = np.zeros((n_max + 1, len(deltas)))
    norms = np.zeros(n_max + 1)
    for n, r in enumerate(rows):
        y = alg.unvec(r).hermitian_part()
        norms[n] = l1_norm(y)
        for j, d in enumerate(deltas):
            budget = max(d - eta, 0.0) if strict else d
            S[n, j] = max_projection_mass(y, budget, mode).value
    return SmoothingProfile(x, deltas, np.arange(n_max + 1), S, norms, float(min(alg.weights)), strict)


class SmoothingCheck(NamedTuple):
    ok: bool
    applicable: bool
    moduli: dict  # epsilon -> (delta, n0)
    violation: Optional[tuple]  # (epsilon, n)


def check_weak_convergence_smoothing(T: SuperOp, x: Element, epsilons: Sequence[float] = (0.5, 0.1, 0.01),
                                     deltas: Optional[Sequence[float]] = None, n_max: int = 200,
                                     eta: float = STRICT_BUDGET_ETA) -> SmoothingCheck:
    """If the orbit of ``x`` converges, find for each epsilon a budget and a step
    after which ``tau(p T^n x) < epsilon`` for every projection of trace below delta.
    """
    traj = iterate(T, x, n_max=n_max)
    if not traj.converged:
        return SmoothingCheck(True, False, {}, None)
    n_last = traj.points[-1].step
    prof = smoothing_profile(T, x, deltas, n_last, strict=True, eta=eta)
    order = np.argsort(prof.deltas)[::-1]
    moduli = {}
    for eps in epsilons:
        found = None
        for j in order:
            if prof.deltas[j] <= 0:
                continue
            col = prof.S[:, j]
            bad = np.nonzero(col >= eps)[0]
            n0 = 0 if len(bad) == 0 else int(bad[-1]) + 1
            if n0 <= n_last:
                found = (float(prof.deltas[j]), n0)
                break
        if found is None:
            j = order[-1]
            return SmoothingCheck(False, True, moduli, (eps, int(np.nonzero(prof.S[:, j] >= eps)[0][-1])))
        moduli[eps] = found
    return SmoothingCheck(True, True, moduli, None)


# -- dichotomy ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DichotomyResult:
    verdict: str  # "decay" | "fixed_point"
    alpha_estimate: float
    trajectory: Trajectory
    fixed_point: Optional[Element] = None
    residual: Optional[float] = None
    positivity_margin: Optional[float] = None
    alpha_source: str = "trajectory"
    smoothing_holds: bool = True  # automatic at finite dimension
    notes: tuple = field(default_factory=tuple)


def _check_monotone(traj: Trajectory):
    norms = traj.norms
    scale = max(1.0, norms[0])
    bad = np.nonzero(np.diff(norms) > MONOTONE_SLACK * scale)[0]
    if len(bad):
        raise AnalysisError(f"trajectory norm increases at step {int(bad[0]) + 1} under a contraction certificate")


def _instance(T: SuperOp, y: Element) -> dict:
    return {
        "algebra": T.algebra.to_dict(),
        "matrix_re": T.matrix.real.tolist(),
        "matrix_im": T.matrix.imag.tolist(),
        "y_blocks_re": [b.real.tolist() for b in y.blocks],
        "y_blocks_im": [b.imag.tolist() for b in y.blocks],
    }


def dichotomy(T: SuperOp, y: Element, n_max: int = 5000, decay_tol: float = DECAY_TOL,
              fixed_tol: float = FIXED_POINT_TOL, stop_tol: float = 1e-12, window: int = 10,
              n_avg: int = 256) -> DichotomyResult:
    """Either ``||T^n y||_1 -> 0`` or a nonzero positive fixed point exists; return which, with evidence."""
    require_certified_contraction(T)
    if not is_positive(y):
        raise NotPositive("dichotomy needs a positive starting element")
    if l1_norm(y) <= decay_tol:
        raise ValidationError("dichotomy needs a nonzero starting element")
    traj = iterate(T, y, n_max=n_max, stop_tol=stop_tol, window=window)
    _check_monotone(traj)
    alpha, source = traj.alpha, "trajectory"
    if not traj.converged:
        # norms of a contraction orbit converge to the norm of the peripheral component
        periph = T.algebra.unvec(spectrum(T).peripheral_projector @ y.vec()).hermitian_part()
        alpha, source = min(alpha, l1_norm(periph)), "peripheral"
    if alpha <= decay_tol:
        return DichotomyResult("decay", alpha, traj, alpha_source=source)
    z = positive_fixed_point(T, y, n_avg=n_avg, tol=fixed_tol)
    if z is None:
        raise DichotomyFailure(
            f"orbit norm stays at {alpha:.6g} but no positive fixed point was found", _instance(T, y))
    residual = fixed_point_residual(T, z)
    margin = is_positive(z, np.inf).min_eigenvalue
    notes = (f"trace of fixed point {trace(z).real:.17g}",)
    return DichotomyResult("fixed_point", alpha, traj, z, residual, margin, source, True, notes)


# -- mixing implies completely mixing -----------------------------------------------

@dataclass(frozen=True, eq=False)
class KSNReport:
    positive_contraction: bool
    h1_domination: Optional[bool]
    h2_no_fixed_point: Optional[bool]
    h3_converges: Optional[bool]
    applicable: bool
    alpha: Optional[float] = None
    decay_confirmed: Optional[bool] = None
    mixing: Optional[bool] = None
    completely_mixing: Optional[bool] = None
    implication_holds: Optional[bool] = None
    failed: tuple = ()

    @property
    def consistent(self) -> bool:
        """False only when every hypothesis holds and a conclusion fails."""
        if not self.applicable:
            return True
        return bool(self.decay_confirmed) and bool(self.implication_holds)


def verify_ksn(T: SuperOp, z: Element, n_samples: int = 200, seed: int = 0, n_max: int = 5000,
               decay_tol: float = DECAY_TOL, tol: float = MIXING_TOL) -> KSNReport:
    """Check the hypotheses of "no positive fixed point + convergent orbit => decay" and its conclusions."""
    ok = T.positivity_certified and T.is_certified_contraction()
    if not ok:
        return KSNReport(False, None, None, None, False, failed=("positive_contraction",))
    h1 = check_abs_domination(T, n_samples, seed=seed).ok
    h2 = positive_fixed_point(T, T.algebra.identity()) is None
    traj = iterate(T, z, n_max=n_max)
    h3 = traj.converged
    failed = tuple(name for name, h in (("h1_domination", h1), ("h2_no_fixed_point", h2),
                                        ("h3_converges", h3)) if not h)
    mix = classify_mixing(T, tol).mixing
    cmix = classify_completely_mixing(T, tol, seed=seed).completely_mixing
    implication = (not mix) or cmix
    if failed:
        return KSNReport(True, h1, h2, h3, False, traj.alpha, None, mix, cmix, implication, failed)
    return KSNReport(True, h1, h2, h3, True, traj.alpha, traj.alpha <= decay_tol, mix, cmix, implication)
