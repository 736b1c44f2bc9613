"""Matrix-space pushforward maps and the continuation solver.

The scale classes of positive definite matrices map to the trace-one
positive simplex two ways: via Fubini-Study integrals over the full ambient
projective space (psi0, closed form available) and via the same integrals
restricted to the embedded curve (psi).  Their affine homotopy underlies
``solve_psi``, which realises targets constructively by predictor-corrector
continuation with Newton correction in the trace gauge.

Matrix conventions: forms are linear in the first index (see ``linalg``).
In this convention the ambient-space map has closed form
psi0(B) = B^{-2} / tr(B^{-2}), its linearisation loses all transposes, and
psi(B) = B^{-1} Phi(B) B^{-1} / tr(...); in the conjugate-first convention
all matrices transpose and the classical displayed formulas with B^t are
recovered verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import ContinuationError, DimensionError, MarginError
from .geometry import AmbientModel
from .linalg import HermitianForm

TRACE_TOL = 1e-12
EIG_FLOOR = -1e-12


@dataclass(frozen=True)
class SimplexPoint:
    """Positive semi-definite hermitian matrix with unit trace."""

    form: HermitianForm

    def __post_init__(self):
        tr = float(np.real(np.trace(self.form.mat)))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {tr!r}, expected 1")
        ev = np.linalg.eigvalsh(self.form.mat)
        if ev.min() < EIG_FLOOR:
            raise ValueError(f"eigenvalue {ev.min():.3e} below PSD tolerance")

    @property
    def mat(self) -> np.ndarray:
        return self.form.mat

    @property
    def dim(self) -> int:
        return self.form.dim


@dataclass(frozen=True)
class ScaleClass:
    """Scale class of a positive definite matrix, stored at unit trace."""

    representative: HermitianForm

    def __post_init__(self):
        ev = np.linalg.eigvalsh(self.representative.mat)
        if ev.min() <= 0:
            raise ValueError("scale class representative must be positive definite")
        tr = float(np.real(np.trace(self.representative.mat)))
        if abs(tr - 1.0) > TRACE_TOL:
            object.__setattr__(
                self, "representative", self.representative.scaled(1.0 / tr)
            )

    @property
    def mat(self) -> np.ndarray:
        return self.representative.mat

    @property
    def dim(self) -> int:
        return self.representative.dim

    @classmethod
    def of(cls, m) -> "ScaleClass":
        form = m if isinstance(m, HermitianForm) else HermitianForm(m)
        return cls(form)

    def same_class(self, other: "ScaleClass", tol: float = 1e-10) -> bool:
        return bool(np.abs(self.mat - other.mat).max() <= tol)


def _as_pd_matrix(b) -> np.ndarray:
    if isinstance(b, ScaleClass):
        return b.mat
    if isinstance(b, HermitianForm):
        return b.mat
    return HermitianForm(b).mat


def _simplex(m: np.ndarray) -> SimplexPoint:
    m = 0.5 * (m + m.conj().T)
    return SimplexPoint(HermitianForm(m / np.real(np.trace(m))))


def psi0_reference(n: int) -> SimplexPoint:
    """Value of the ambient pushforward at the identity class: I/N.

    Hard-coded from unitary invariance of the Fubini-Study measure (the
    integral must commute with every unitary conjugation, hence be a
    multiple of the identity, and the trace normalisation fixes 1/N); the
    quadrature evaluation of the defining integral exists only in tests.
    """
    return SimplexPoint(HermitianForm(np.eye(n, dtype=complex) / n))


def psi0_closed(b) -> SimplexPoint:
    """Closed form of the ambient pushforward: B^{-2}/tr(B^{-2}).

    Scale-invariant: psi0(aB) = psi0(B) for a > 0.
    """
    m = _as_pd_matrix(b)
    inv = np.linalg.inv(m)
    return _simplex(inv @ inv)


def dpsi0(b, a) -> np.ndarray:
    """Linearisation of psi0 at B in the hermitian direction A.

    Evaluates - B^{-1} A P - P A B^{-1} + tr(B^{-1} A P + P A B^{-1}) P with
    P = psi0(B); the output is hermitian and traceless, and vanishes exactly
    when A is a multiple of B (the scale direction).
    """
    bm = _as_pd_matrix(b)
    am = np.asarray(a, dtype=complex)
    if am.shape != bm.shape:
        raise DimensionError("direction matrix must match B's shape")
    p = psi0_closed(bm).mat
    binv = np.linalg.inv(bm)
    core = binv @ am @ p + p @ am @ binv
    out = -core + np.real(np.trace(core)) * p
    return 0.5 * (out + out.conj().T)


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal real basis of the hermitian matrices (n^2 elements)."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1j / np.sqrt(2.0)
            e[j, i] = -1j / np.sqrt(2.0)
            basis.append(e)
    return np.array(basis)


def traceless_basis(n: int) -> np.ndarray:
    """Orthonormal real basis of traceless hermitian matrices (n^2 - 1)."""
    basis = []
    for i in range(n - 1):
        e = np.zeros((n, n), dtype=complex)
        scale = 1.0 / np.sqrt((i + 1) * (i + 2))
        for j in range(i + 1):
            e[j, j] = scale
        e[i + 1, i + 1] = -(i + 1) * scale
        basis.append(e)
    full = hermitian_basis(n)
    return np.array(basis + list(full[n:]))


def dpsi0_matrix(b) -> np.ndarray:
    """Real matrix of A -> dpsi0(B, A) on the n^2-dimensional hermitian space."""
    bm = _as_pd_matrix(b)
    n = bm.shape[0]
    basis = hermitian_basis(n)
    cols = []
    for e in basis:
        out = dpsi0(bm, e)
        cols.append(np.real(np.einsum("aij,ji->a", basis, out)))
    return np.array(cols).T


def dpsi0_kernel_dim(b, rtol: float = 1e-8) -> Tuple[int, float]:
    """Numerical kernel dimension of the linearisation, with spectral gap.

    Returns (dimension, gap) where gap is the ratio of the smallest
    retained to the largest singular value.
    """
    sv = np.linalg.svd(dpsi0_matrix(b), compute_uv=False)
    cut = rtol * sv[0]
    kept = sv[sv >= cut]
    dim = int(sv.size - kept.size)
    gap = float(kept[-1] / sv[0]) if kept.size else 0.0
    return dim, gap


def phi_matrix(ambient: AmbientModel, b) -> HermitianForm:
    """Gram of the moved homogeneous coordinates against the moved curve's
    induced Fubini-Study volume.

    The coordinate action sends the node data Z to W = B Z; the measure is
    the volume of ddbar log sum_l |W_l|^2 along the curve (total mass equal
    to the embedding degree) and the integrand is W_r conj(W_s) / |W|^2.
    Positive definite for nondegenerate embeddings.
    """
    bm = _as_pd_matrix(b)
    model = ambient.model
    if bm.shape[0] != ambient.N:
        raise DimensionError("B must act on the ambient coordinates")
    ev = np.linalg.eigvalsh(bm)
    if ev.min() <= 0:
        raise MarginError("B must be positive definite (singular B rejected)")
    w = bm @ ambient.coords
    wz = bm @ ambient.coords_dz
    p = np.einsum("iq,iq->q", w, w.conj()).real
    pz = np.einsum("iq,iq->q", wz, w.conj())
    pzz = np.einsum("iq,iq->q", wz, wz.conj()).real
    num = p * pzz - np.abs(pz) ** 2
    x2 = (1.0 + np.abs(model.nodes) ** 2) ** 2
    dens = num / p**2 * x2 / model.V
    wts = dens * model.quad_weights / p
    g = np.einsum("iq,jq,q->ij", w, w.conj(), wts)
    return HermitianForm(0.5 * (g + g.conj().T))


def psi(ambient: AmbientModel, b) -> SimplexPoint:
    """Pushforward along the embedded curve: the normalised conjugation
    B^{-1} Phi(B) B^{-1} / tr(...); scale-invariant in B."""
    bm = _as_pd_matrix(b)
    binv = np.linalg.inv(bm)
    m = binv @ phi_matrix(ambient, bm).mat @ binv
    tr = float(np.real(np.trace(m)))
    if tr <= 0:
        raise RuntimeError("internal error: pushforward trace must be positive")
    return _simplex(m)


def psi_t(ambient: AmbientModel, b, t: float) -> SimplexPoint:
    """Affine homotopy t * psi + (1 - t) * psi0 between the two pushforwards."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    bm = _as_pd_matrix(b)
    if t == 0.0:
        return psi0_closed(bm)
    if t == 1.0:
        return psi(ambient, bm)
    m = t * psi(ambient, bm).mat + (1.0 - t) * psi0_closed(bm).mat
    return _simplex(m)


@dataclass
class TraceRow:
    t: float
    residual: float
    step: float
    newton_iters: int


@dataclass
class ContinuationTrace:
    rows: List[TraceRow] = field(default_factory=list)

    def log(self, t, residual, step, iters):
        self.rows.append(TraceRow(float(t), float(residual), float(step), int(iters)))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,residual,step,newton_iters\n")
            for r in self.rows:
                fh.write(f"{r.t!r},{r.residual!r},{r.step!r},{r.newton_iters}\n")


def _newton_at_t(ambient, b, t, g, basis, tol, max_iters=25, fd_step=1e-6):
    """Newton-correct psi_t(B) = G in traceless coordinates around unit trace."""
    n = g.shape[0]

    def value(mat):
        return psi_t(ambient, mat, t).mat

    def coords(m):
        return np.real(np.einsum("aij,ji->a", basis, m))

    bm = b.copy()
    for it in range(max_iters):
        r = coords(value(bm) - g)
        rn = float(np.abs(r).max())
        if rn < tol:
            return bm, it, rn
        jac = np.empty((basis.shape[0], basis.shape[0]))
        h = fd_step * float(np.linalg.norm(bm))
        try:
            for a_idx in range(basis.shape[0]):
                bp = bm + h * basis[a_idx]
                bmn = bm - h * basis[a_idx]
                jac[:, a_idx] = coords(value(bp) - value(bmn)) / (2.0 * h)
            dv = np.linalg.solve(jac, -r)
        except (np.linalg.LinAlgError, MarginError):
            # an FD probe left the positive cone: treat as a failed step so
            # the continuation shortens and eventually reports the stall
            return None, it, rn
        # damped update keeping positive definiteness and unit trace
        norm_r = np.linalg.norm(r)
        step = 1.0
        for _ in range(10):
            cand = bm + step * np.einsum("a,aij->ij", dv, basis)
            cand = 0.5 * (cand + cand.conj().T)
            if np.linalg.eigvalsh(cand).min() > 0:
                cand = cand / np.real(np.trace(cand))
                if np.linalg.norm(coords(value(cand) - g)) < norm_r:
                    bm = cand
                    break
            step *= 0.5
        else:
            return None, it, rn
    r = coords(value(bm) - g)
    rn = float(np.abs(r).max())
    if rn < tol:
        return bm, max_iters, rn
    return None, max_iters, rn


def solve_psi(
    ambient: AmbientModel,
    g,
    steps: int = 10,
    newton_tol: float = 1e-9,
    margin: float = 1e-3,
    step_floor: float = 1e-6,
) -> Tuple[ScaleClass, ContinuationTrace]:
    """Find B with psi(B) = G by continuation from the closed-form seed.

    The seed B0 = G^{-1/2} satisfies psi0(B0) = G exactly; t then marches
    from 0 to 1 with adaptive steps (halve on Newton failure, double after
    two successes, floor ``step_floor``).  Raises ``MarginError`` when G's
    smallest eigenvalue is below ``margin`` and ``ContinuationError``
    carrying the trace when the step size underflows.  The returned B is
    certified only by its forward residual, recorded in the trace.
    """
    gm = _as_pd_matrix(g)
    tr = float(np.real(np.trace(gm)))
    if abs(tr - 1.0) > 1e-9:
        raise ValueError("target must have unit trace")
    ev = np.linalg.eigvalsh(gm)
    if ev.min() < margin:
        raise MarginError(
            f"target eigenvalue {ev.min():.3e} below margin {margin:g}; "
            "too close to the simplex boundary"
        )
    n = gm.shape[0]
    basis = traceless_basis(n)
    b = sla.sqrtm(np.linalg.inv(gm))
    b = 0.5 * (b + b.conj().T)
    b = np.real_if_close(b, tol=1e6).astype(complex)
    b = b / np.real(np.trace(b))
    trace = ContinuationTrace()
    trace.log(0.0, float(np.abs(psi0_closed(b).mat - gm).max()), 0.0, 0)
    t = 0.0
    h = 1.0 / max(steps, 1)
    successes = 0
    while t < 1.0:
        t_next = min(t + h, 1.0)
        bn, iters, resid = _newton_at_t(ambient, b, t_next, gm, basis, newton_tol)
        if bn is None:
            successes = 0
            h *= 0.5
            if h < step_floor:
                trace.log(t_next, resid, h, iters)
                raise ContinuationError(
                    f"continuation step underflow below {step_floor:g} at t={t_next:.6f} "
                    f"(residual {resid:.3e}); target may be outside the map's range",
                    trace=trace,
                )
            continue
        b = bn
        t = t_next
        trace.log(t, resid, h, iters)
        successes += 1
        if successes >= 2:
            h = min(2.0 * h, 0.25)
    return ScaleClass.of(b), trace
