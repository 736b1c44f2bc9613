"""The two protagonist maps and their composition.

hilb sends a metric on L^k to the scaled L^2 Gram matrix of the section
basis; fs_metric (in ``geometry``) sends a form back to a metric.  Their
composition has the balanced metrics as fixed points; on the reference
test-bed that is the binomial diagonal diag(1/C(dk, j)).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import numpy as np

from .errors import DefinitenessError, DimensionError, VariantError
from .geometry import (
    Density,
    ManifoldModel,
    MetricWeight,
    anticanonical_density,
    canonical_density,
    curvature_volume,
    fs_metric,
)
from .linalg import HermitianForm

FIXED = "fixed"
ANTICANONICAL = "anticanonical"
CANONICAL = "canonical"


def _gram(model: ManifoldModel, weights: np.ndarray) -> HermitianForm:
    g = np.einsum("iq,jq,q->ij", model.sections, model.sections.conj(), weights)
    g = (model.N / model.V) * 0.5 * (g + g.conj().T)
    form = HermitianForm(g)
    if not form.is_positive_definite():
        raise DefinitenessError(
            "hilb output is not positive definite; quadrature is under-resolved"
        )
    return form


def hilb(model: ManifoldModel, m: MetricWeight) -> HermitianForm:
    """(N/V) * integral of s_i conj(s_j) against the metric weight and the
    volume form of the metric's curvature."""
    vol = curvature_volume(model, m)
    return _gram(model, m.weight(model) * vol.weights)


def hilb_nu(
    model: ManifoldModel,
    m: MetricWeight,
    variant: str = FIXED,
    nu: Optional[Density] = None,
) -> HermitianForm:
    """Variant Hilbert map (N/V) * integral of s_i conj(s_j) d nu.

    fixed: d nu given and held fixed (must be strictly positive);
    anticanonical: d nu induced by the k-th root of m on the Fano test-bed;
    canonical: the opposite scaling law, general-type mock models only.
    """
    if variant == FIXED:
        if nu is None:
            raise ValueError("fixed variant requires a density")
        if np.any(nu.weights <= 0):
            raise ValueError("fixed variant requires a strictly positive density")
        dens = nu
    elif variant == ANTICANONICAL:
        dens = anticanonical_density(model, m)
    elif variant == CANONICAL:
        dens = canonical_density(model, m)
    else:
        raise VariantError(f"unknown variant {variant!r}")
    return _gram(model, m.weight(model) * dens.weights)


def exponent_for_variant(variant: str, k: int) -> Fraction:
    """Exponent applied to the solved conformal factor to produce the metric
    realising a target: 1/k, 1/(k+1), 1/(k-1) for fixed, anticanonical,
    canonical respectively."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if variant == FIXED:
        return Fraction(1, k)
    if variant == ANTICANONICAL:
        return Fraction(1, k + 1)
    if variant == CANONICAL:
        if k == 1:
            raise VariantError("canonical variant needs k >= 2 (exponent 1/(k-1))")
        return Fraction(1, k - 1)
    raise VariantError(f"unknown variant {variant!r}")


@dataclass
class IterationStep:
    index: int
    form: HermitianForm
    step_max_norm: float
    trace_defect: float


@dataclass
class IterationTrace:
    steps: List[IterationStep]
    converged: bool

    @property
    def forms(self) -> List[HermitianForm]:
        return [s.form for s in self.steps]


def _unit_det(h: HermitianForm) -> HermitianForm:
    ev = np.linalg.eigvalsh(h.mat)
    scale = float(np.exp(-np.mean(np.log(ev))))
    return h.scaled(scale)


def t_iterate(
    model: ManifoldModel,
    h0: HermitianForm,
    max_iters: int = 50,
    tol: float = 1e-10,
) -> IterationTrace:
    """Iterate H -> hilb(fs_metric(H)), logging per-step distances.

    The composition is scale-covariant, so each iterate is normalised to
    unit determinant before the distance is measured.  The trace defect
    |tr(H_r^{-1} H_{r+1}) - N| is logged at every step; convergence of the
    iteration itself is reported, never asserted.
    """
    current = _unit_det(h0)
    steps: List[IterationStep] = [IterationStep(0, current, float("nan"), float("nan"))]
    converged = False
    for r in range(1, max_iters + 1):
        try:
            nxt = hilb(model, fs_metric(model, current))
        except (DefinitenessError, DimensionError) as exc:
            raise type(exc)(f"iteration {r}: {exc}") from exc
        defect = abs(
            float(np.real(np.trace(np.linalg.solve(current.mat, nxt.mat)))) - model.N
        )
        nxt = _unit_det(nxt)
        dist = float(np.abs(nxt.mat - current.mat).max())
        steps.append(IterationStep(r, nxt, dist, defect))
        current = nxt
        if dist < tol:
            converged = True
            break
    return IterationTrace(steps=steps, converged=converged)
