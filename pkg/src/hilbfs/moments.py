"""Prescribed-moment densities and the row-measure matrix machinery.

``solve_moments`` constructs a positive density e^u dV_ref whose pairings
against the squared sections match a prescribed positive vector, with u in
the span of those same squared-section functions: the classical
maximum-entropy ansatz, N unknowns for N constraints, solved by damped
Newton on the convex dual.  The Newton Jacobian is the weighted Gram matrix
int g_i g_j e^u dV, positive definite at every iterate.

Feasibility caveat: with the monomial basis the diagonal moments are
moments of a positive measure on [0, infinity) in x = |z|^2, hence
log-convex in the index.  Spike targets (floor, ..., 1, ..., floor) with an
interior 1 and floor < 1 violate the Hankel positivity conditions of the
truncated Stieltjes problem and are not achievable by ANY positive density;
``build_lambda`` diagnoses this precisely instead of burning Newton
iterations.  A well-conditioned row family remains available through the
``probe`` mode, which localises densities where each section dominates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ConvergenceError, DimensionError, MomentInfeasibleError
from .geometry import Density, ManifoldModel
from .linalg import MatrixNorms, cholesky_lower, matrix_norms


@dataclass(frozen=True)
class MomentTarget:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise DimensionError("moment target must be a vector")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("moment target entries must be strictly positive")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


def section_squares(model: ManifoldModel, sections: Optional[np.ndarray] = None) -> np.ndarray:
    """The moment integrands g_j = |s_j|^2 * ref_weight as an N x Q array."""
    s = model.sections if sections is None else np.asarray(sections, dtype=complex)
    return (np.abs(s) ** 2) * model.ref_weight


@dataclass
class MomentSolution:
    density: Density
    achieved: np.ndarray
    coefficients: np.ndarray
    potential: np.ndarray
    residual_history: List[float]
    newton_iters: int


def hankel_margins(values: np.ndarray) -> dict:
    """Smallest eigenvalues of the two Hankel matrices of the truncated
    Stieltjes moment problem for a sequence of would-be monomial moments.
    Both must be positive for the target to be achievable by a positive
    measure in x = |z|^2."""
    m = np.asarray(values, dtype=float)
    n = m.size
    k0 = (n - 1) // 2 + 1
    h0 = np.array([[m[i + j] for j in range(k0)] for i in range(k0)])
    e0 = float(np.linalg.eigvalsh(h0).min())
    k1 = n // 2
    if k1 > 0:
        h1 = np.array([[m[i + j + 1] for j in range(k1)] for i in range(k1)])
        e1 = float(np.linalg.eigvalsh(h1).min())
    else:
        e1 = float("inf")
    return {"hankel_even": e0, "hankel_odd": e1}


def solve_moments(
    model: ManifoldModel,
    target: MomentTarget,
    tol: float = 1e-11,
    max_newton: int = 100,
    sections: Optional[np.ndarray] = None,
) -> MomentSolution:
    """Positive density e^u dV_ref with prescribed squared-section moments.

    Damped Newton with Armijo line search on the convex dual objective
    int e^u dV - <c, target>, starting from c = 0 (the reference density).
    """
    gfun = section_squares(model, sections)
    n = gfun.shape[0]
    if target.dim != n:
        raise DimensionError(f"target has {target.dim} entries, basis has {n}")
    lam = target.values
    qw = model.quad_weights
    coef = np.zeros(n)
    history: List[float] = []

    def dual_and_grad(c):
        u = c @ gfun
        if u.max() > 700.0:
            return None, None, None
        ew = np.exp(u) * qw
        moments = gfun @ ew
        objective = float(ew.sum() - c @ lam)
        return objective, moments, ew

    obj, moments, ew = dual_and_grad(coef)
    for it in range(max_newton):
        resid = float(np.abs(moments - lam).max())
        history.append(resid)
        if resid <= tol:
            u = coef @ gfun
            return MomentSolution(
                density=Density(np.exp(u) * qw),
                achieved=moments,
                coefficients=coef,
                potential=u,
                residual_history=history,
                newton_iters=it,
            )
        jac = (gfun * ew) @ gfun.T
        try:
            cholesky_lower(jac)  # convexity audit: weighted Gram must stay PD
            step = np.linalg.solve(jac, lam - moments)
        except Exception as exc:
            raise ConvergenceError(
                f"moment Newton jacobian degenerate at iteration {it} "
                f"(residual {resid:.3e}); the iterates are running to the "
                "boundary of the achievable cone",
                history,
            ) from exc
        grad = moments - lam
        slope = float(grad @ step)
        alpha = 1.0
        accepted = False
        for _ in range(60):
            cand = coef + alpha * step
            obj_c, moments_c, ew_c = dual_and_grad(cand)
            if obj_c is not None and obj_c <= obj + 1e-4 * alpha * slope:
                coef, obj, moments, ew = cand, obj_c, moments_c, ew_c
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise ConvergenceError(
                f"moment Newton line search stalled at iteration {it} "
                f"(residual {resid:.3e}); target is outside or on the boundary "
                "of the achievable moment cone",
                history,
            )
    raise ConvergenceError(
        f"moment Newton did not reach tol {tol:g} in {max_newton} iterations "
        f"(last residual {history[-1]:.3e})",
        history,
    )


@dataclass
class LambdaSystem:
    matrix: np.ndarray
    densities: List[Density]
    targets: Optional[np.ndarray]
    floor: Optional[float]
    mode: str
    norms: MatrixNorms
    inverse_norms: MatrixNorms
    max_entry: float

    def bounds_hold(self, limit: float = 2.0) -> bool:
        return self.norms.op <= limit and self.inverse_norms.op <= limit


def spike_targets(n: int, floor: float) -> np.ndarray:
    t = np.full((n, n), floor)
    np.fill_diagonal(t, 1.0)
    return t


def probe_densities(
    model: ManifoldModel,
    sections: Optional[np.ndarray] = None,
    power: int = 8,
) -> List[Density]:
    """Localised positive densities, one per section: the partition function
    of section i raised to ``power`` concentrates mass where that section
    dominates, yielding a diagonally-loaded (if not diagonally-dominant)
    moment matrix without solving any moment problem."""
    gfun = section_squares(model, sections)
    rho = gfun / gfun.sum(axis=0)
    out = []
    for i in range(gfun.shape[0]):
        w = rho[i] ** power * model.quad_weights
        m = gfun @ w
        out.append(Density(w / m.max()))
    return out


def build_lambda(
    model: ManifoldModel,
    floor: Optional[float] = None,
    tol: float = 1e-9,
    mode: str = "paper",
    sections: Optional[np.ndarray] = None,
    probe_power: int = 8,
    max_newton: int = 100,
) -> LambdaSystem:
    """Row-measure matrix: row i holds the achieved squared-section moments
    of the i-th density.

    mode "paper": each row solves the spike target (floor, ..., 1, ..., floor)
    with 1 in the i-th place (floor defaults to e^{-k}); rows whose targets
    are provably infeasible raise ``MomentInfeasibleError`` with the Hankel
    margins.  mode "probe": constructive localised densities (no targets),
    always available, max entry normalised to 1.
    """
    gfun = section_squares(model, sections)
    n = gfun.shape[0]
    if mode == "probe":
        densities = probe_densities(model, sections=sections, power=probe_power)
        lam = np.array([gfun @ d.weights for d in densities])
        targets = None
        floor_used = None
    elif mode == "paper":
        f = float(np.exp(-min(model.k, 700))) if floor is None else float(floor)
        if not 0.0 < f < 1.0:
            raise ValueError("floor must lie in (0, 1)")
        f = max(f, 1e-300)
        targets = spike_targets(n, f)
        monomial_basis = sections is None
        densities = []
        rows = []
        for i in range(n):
            if monomial_basis:
                margins = hankel_margins(targets[i])
                if min(margins.values()) <= 0.0:
                    raise MomentInfeasibleError(
                        f"row {i} target (floor {f:g}, spike at {i}) is outside "
                        "the Stieltjes moment cone of the monomial basis: "
                        f"Hankel margins {margins}; no positive density can "
                        "achieve it (diagonal moments are log-convex)",
                        row=i,
                        diagnostics=margins,
                    )
            try:
                sol = solve_moments(
                    model,
                    MomentTarget(targets[i]),
                    tol=tol,
                    max_newton=max_newton,
                    sections=sections,
                )
            except ConvergenceError as exc:
                raise MomentInfeasibleError(
                    f"row {i}: {exc}", row=i, history=exc.history
                ) from exc
            densities.append(sol.density)
            rows.append(sol.achieved)
        lam = np.array(rows)
        floor_used = f
    else:
        raise ValueError(f"unknown build_lambda mode {mode!r}")
    if np.abs(lam).max() > 1.0 + 10 * tol:
        raise RuntimeError(
            f"row-measure matrix entry {np.abs(lam).max():.6f} exceeds 1"
        )
    return LambdaSystem(
        matrix=lam,
        densities=densities,
        targets=targets,
        floor=floor_used,
        mode=mode,
        norms=matrix_norms(lam),
        inverse_norms=matrix_norms(np.linalg.inv(lam)),
        max_entry=float(np.abs(lam).max()),
    )
