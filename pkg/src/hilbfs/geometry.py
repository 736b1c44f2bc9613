"""Discretised models of the projective line with a polarising line bundle.

Geometry conventions
--------------------
* The line bundle is O(d) (``line_degree`` d, default 1) and the model holds
  its k-th power, so sections are the monomials 1, z, ..., z^(dk) in the
  affine chart and N = dk + 1.
* The reference Kahler form is ``d`` times the mass-one Fubini-Study form,
  so the total volume is V = d; in the chart,
  omega_ref = (d/pi) (1+|z|^2)^(-2) dx dy.
* Quadrature substitutes t = |z|^2/(1+|z|^2); integrals become
  (1/2pi) int_0^1 int_0^2pi ... dtheta dt, discretised by Gauss-Legendre in t
  and an equispaced trapezoid in theta.  Every pairing of two sections
  against the reference metric weight is then a polynomial in t of degree
  <= dk times a trigonometric polynomial, and the rule is exact for those.
* A metric on L^k is stored relative to the reference as rw * exp(-u) where
  rw(z) = (1+|z|^2)^(-dk) is the reference weight on the trivialising frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, lpmv

from .errors import (
    ConfigurationError,
    CurvaturePositivityError,
    DimensionError,
    MassDefectError,
    VariantError,
)
from .linalg import HermitianForm, cholesky_lower, orthonormalize_sections

CURVATURE_MASS_TOL = 1e-8


@dataclass
class Density:
    """Nonnegative weights against the model's node set."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionError("density weights must be a 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("density weights must be finite and nonnegative")
        total = w.sum()
        if not (total > 0):
            raise ValueError("density must have positive total mass")
        self.weights = w

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


@dataclass
class ManifoldModel:
    """Quadrature nodes, section values and reference metric data on P^1."""

    n: int
    k: int
    line_degree: int
    N: int
    V: float
    nodes: np.ndarray          # complex chart coordinates, length Q
    chart: str
    t: np.ndarray              # radial variable t = |z|^2/(1+|z|^2)
    theta: np.ndarray
    quad_weights: np.ndarray   # sums to V
    sections: np.ndarray       # N x Q monomial values z^j
    sections_dz: np.ndarray    # N x Q, d/dz of the rows
    ref_weight: np.ndarray     # (1+|z|^2)^(-dk)
    radial_nodes: int
    azimuthal_nodes: int
    geometry: str = "projective_line"
    canonical_base: Optional[Density] = None
    _laplacian: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def Q(self) -> int:
        return self.nodes.shape[0]

    @property
    def monomial_degree(self) -> int:
        return self.line_degree * self.k

    def laplacian(self) -> np.ndarray:
        """Dense spectral Laplace-Beltrami operator of the reference metric.

        Built from the round-sphere harmonics Y_lm sampled on the grid
        (x3 = 1 - 2t), orthonormal for the quadrature; eigenvalues are
        -4 pi l (l+1) / V.  Applying it to a gridded function performs
        analysis by quadrature, scaling, and synthesis.
        """
        if self._laplacian is None:
            Y, eigs = _sphere_basis(
                self.t, self.theta, self.radial_nodes - 1, (self.azimuthal_nodes - 1) // 2
            )
            eigs = eigs / self.V
            self._laplacian = (Y * eigs) @ (Y.T * (self.quad_weights / self.V))
        return self._laplacian


def _sphere_basis(t, theta, lmax, mmax):
    x3 = 1.0 - 2.0 * np.asarray(t)
    cols = []
    eigs = []
    for l in range(lmax + 1):
        for m in range(-min(l, mmax), min(l, mmax) + 1):
            am = abs(m)
            log_norm = 0.5 * (np.log(2 * l + 1) + gammaln(l - am + 1) - gammaln(l + am + 1))
            radial = lpmv(am, l, x3) * np.exp(log_norm)
            if m == 0:
                col = radial
            elif m > 0:
                col = math.sqrt(2.0) * radial * np.cos(m * theta)
            else:
                col = math.sqrt(2.0) * radial * np.sin(am * theta)
            cols.append(col)
            eigs.append(-4.0 * np.pi * l * (l + 1))
    return np.array(cols).T, np.array(eigs)


@dataclass
class MetricWeight:
    """Hermitian metric on L^k relative to the reference: rw * exp(-u).

    ``bergman`` metrics carry the inducing form H (so curvature is available
    in closed form); ``grid`` metrics carry the potential u at the nodes.
    """

    kind: str
    form: Optional[HermitianForm] = None
    potential_values: Optional[np.ndarray] = None

    @classmethod
    def bergman(cls, h: HermitianForm) -> "MetricWeight":
        cholesky_lower(h)  # fail fast if not PD
        return cls(kind="bergman", form=h)

    @classmethod
    def grid(cls, u: np.ndarray) -> "MetricWeight":
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("grid potential must be finite at all nodes")
        return cls(kind="grid", potential_values=u)

    @classmethod
    def reference(cls, model: ManifoldModel) -> "MetricWeight":
        return cls.grid(np.zeros(model.Q))

    def potential(self, model: ManifoldModel) -> np.ndarray:
        """u with metric = ref_weight * exp(-u); grid values or the
        Fubini-Study potential log(sum_i |s'_i|^2 * ref_weight) for bergman."""
        if self.kind == "grid":
            if self.potential_values.shape != (model.Q,):
                raise DimensionError("grid potential length does not match node count")
            return self.potential_values
        rows = orthonormalize_sections(self.form, model.sections)
        p = np.einsum("iq,iq->q", rows, rows.conj()).real
        return np.log(p * model.ref_weight)

    def weight(self, model: ManifoldModel) -> np.ndarray:
        return model.ref_weight * np.exp(-self.potential(model))

    def rescaled(self, c: float) -> "MetricWeight":
        """Metric scaled by the constant c > 0 (potential shifts by -log c)."""
        if c <= 0:
            raise ValueError("metric scale must be positive")
        if self.kind == "bergman":
            return MetricWeight.bergman(self.form.scaled(c))
        return MetricWeight.grid(self.potential_values - np.log(c))


def build_p1_model(
    k: int,
    radial_nodes: Optional[int] = None,
    azimuthal_nodes: Optional[int] = None,
    line_degree: int = 1,
) -> ManifoldModel:
    """Model of (P^1, O(d)) at power k with monomial sections.

    Default node counts 2dk+4 (radial Gauss-Legendre) and 4dk+4 (azimuthal)
    make the quadrature exact for products of two section pairings; the hard
    floors dk+1 and 2dk+1 are the single-pairing exactness thresholds.
    """
    if k < 1:
        raise ConfigurationError("k must be a positive integer")
    if line_degree < 1:
        raise ConfigurationError("line_degree must be a positive integer")
    deg = line_degree * k
    nr = radial_nodes if radial_nodes is not None else 2 * deg + 4
    na = azimuthal_nodes if azimuthal_nodes is not None else 4 * deg + 4
    if nr < deg + 1:
        raise ConfigurationError(
            f"radial_nodes={nr} below exactness threshold {deg + 1}"
        )
    if na < 2 * deg + 1:
        raise ConfigurationError(
            f"azimuthal_nodes={na} below exactness threshold {2 * deg + 1}"
        )
    x, w = np.polynomial.legendre.leggauss(nr)
    t_r = 0.5 * (x + 1.0)
    w_r = 0.5 * w
    th = 2.0 * np.pi * np.arange(na) / na
    T, TH = np.meshgrid(t_r, th, indexing="ij")
    t = T.ravel()
    theta = TH.ravel()
    V = float(line_degree)
    qw = (np.outer(w_r, np.full(na, 1.0 / na)) * V).ravel()
    r = np.sqrt(t / (1.0 - t))
    z = r * np.exp(1j * theta)
    powers = np.arange(deg + 1)
    sections = z[None, :] ** powers[:, None]
    sections_dz = np.zeros_like(sections)
    if deg >= 1:
        sections_dz[1:] = powers[1:, None] * z[None, :] ** (powers[1:, None] - 1)
    rw = (1.0 + np.abs(z) ** 2) ** (-deg)
    return ManifoldModel(
        n=1,
        k=k,
        line_degree=line_degree,
        N=deg + 1,
        V=V,
        nodes=z,
        chart="affine",
        t=t,
        theta=theta,
        quad_weights=qw,
        sections=sections,
        sections_dz=sections_dz,
        ref_weight=rw,
        radial_nodes=nr,
        azimuthal_nodes=na,
        geometry="projective_line" if line_degree == 1 else "fano_anticanonical",
    )


def build_p1_anticanonical_model(k, radial_nodes=None, azimuthal_nodes=None):
    """Test-bed for L = -K on P^1, i.e. O(2): doubled monomial degree."""
    return build_p1_model(k, radial_nodes, azimuthal_nodes, line_degree=2)


def _pairwise_sum(v: np.ndarray):
    if v.shape[0] <= 8:
        total = v[0]
        for x in v[1:]:
            total = total + x
        return total
    half = v.shape[0] // 2
    return _pairwise_sum(v[:half]) + _pairwise_sum(v[half:])


def integrate(model: ManifoldModel, pointwise, measure: Density):
    """sum(pointwise * weights) with a fixed pairwise-tree reduction order."""
    p = np.asarray(pointwise)
    if p.shape != (model.Q,) or measure.weights.shape != (model.Q,):
        raise DimensionError("integrand and measure must match the node count")
    prod = p * measure.weights
    return _pairwise_sum(prod)


def reference_density(model: ManifoldModel) -> Density:
    return Density(model.quad_weights.copy())


def fs_metric(model: ManifoldModel, h: HermitianForm) -> MetricWeight:
    """The metric with sum_i |s'_i|^2 = 1 over any H-orthonormal basis {s'_i}.

    Returned as a bergman MetricWeight; its potential is
    u = log(sum_i |s'_i|^2 * ref_weight), independent of the orthonormal
    basis chosen.
    """
    if h.dim != model.N:
        raise DimensionError(f"form has dim {h.dim}, model needs {model.N}")
    return MetricWeight.bergman(h)


def _bergman_curvature_density(model, h: HermitianForm, full_ddbar=False):
    """Density against omega_ref of the curvature of the metric induced by H.

    Writing P(z) = sum_i |s'_i(z)|^2 over H-orthonormalised rows, the metric
    weight on the L^k frame is 1/P and
        ddbar log P = (P P_zzbar - P_z P_zbar) / P^2,
    evaluated cancellation-free via the Cauchy-Binet form
        P P_zzbar - |P_z|^2 = sum_{i<j} |W_i W'_j - W_j W'_i|^2.
    The returned density divides by k (curvature of the k-th root) unless
    ``full_ddbar`` is set, and is exact polynomial data, never a finite
    difference.
    """
    L = cholesky_lower(h)
    import scipy.linalg as sla

    W = sla.solve_triangular(L, model.sections, lower=True)
    Wz = sla.solve_triangular(L, model.sections_dz, lower=True)
    P = np.einsum("iq,iq->q", W, W.conj()).real
    Pz = np.einsum("iq,iq->q", Wz, W.conj())
    Pzz = np.einsum("iq,iq->q", Wz, Wz.conj()).real
    num = P * Pzz - np.abs(Pz) ** 2
    x2 = (1.0 + np.abs(model.nodes) ** 2) ** 2
    dens = num / P**2 * x2 / model.V
    if not full_ddbar:
        dens = dens / model.k
    return dens, P


def curvature_volume(model: ManifoldModel, m: MetricWeight) -> Density:
    """Node weights of the volume form of the metric's curvature.

    Bergman metrics are handled analytically from the polynomial data; grid
    metrics use the spectral Laplacian, giving density
    1 + (Lap u)/(4 pi k).  Total mass must reproduce V to 1e-8 (a quadrature
    exactness check, not a rescaling) and the density must be positive.
    """
    if m.kind == "bergman":
        dens, _ = _bergman_curvature_density(model, m.form)
    else:
        u = m.potential(model)
        dens = 1.0 + (model.laplacian() @ u) / (4.0 * np.pi * model.k)
    worst = int(np.argmin(dens))
    if dens[worst] <= 0.0:
        raise CurvaturePositivityError(
            f"curvature density is {dens[worst]:.3e} at node {worst}: "
            "metric is not positively curved",
            node=worst,
            value=float(dens[worst]),
        )
    weights = dens * model.quad_weights
    defect = abs(weights.sum() - model.V)
    if defect > CURVATURE_MASS_TOL * model.V:
        raise MassDefectError(
            f"curvature volume mass defect {defect:.3e} exceeds "
            f"{CURVATURE_MASS_TOL:g} * V; increase node counts",
            defect=defect,
        )
    return Density(weights)


def beta_function(model: ManifoldModel, m1: MetricWeight, m2: MetricWeight) -> np.ndarray:
    """Pointwise log of the ratio of the two curvature volume densities."""
    v1 = curvature_volume(model, m1)
    v2 = curvature_volume(model, m2)
    return np.log(v1.weights) - np.log(v2.weights)


@dataclass
class AmbientModel:
    """Image data of the embedding of the model into P^(N-1) by its sections.

    ``coords`` are the homogeneous coordinates along the image (the section
    values in the trivialising frame); the ambient hermitian pairing along
    the image is coords_i * conj(coords_j) / sum_l |coords_l|^2.  The image
    has degree ``degree`` = dk, which is the total mass of the pulled-back
    ambient Fubini-Study form.
    """

    model: ManifoldModel
    coords: np.ndarray
    coords_dz: np.ndarray
    degree: int

    @property
    def N(self) -> int:
        return self.coords.shape[0]

    def pairing_trace(self) -> np.ndarray:
        s2 = np.einsum("iq,iq->q", self.coords, self.coords.conj()).real
        return np.ones_like(s2)  # sum_i |s_i|^2 / sum_l |s_l|^2

    def sum_sq(self) -> np.ndarray:
        return np.einsum("iq,iq->q", self.coords, self.coords.conj()).real


def veronese_model(model: ManifoldModel) -> AmbientModel:
    return AmbientModel(
        model=model,
        coords=model.sections,
        coords_dz=model.sections_dz,
        degree=model.monomial_degree,
    )


def anticanonical_density(model: ManifoldModel, m: MetricWeight) -> Density:
    """Volume form induced by the k-th root of ``m`` viewed as a metric on -K.

    Only available on the Fano test-bed (line_degree 2, where L = -K).
    Normalised so the reference metric gives the reference Kahler volume
    (the round metric is Einstein, so they are proportional; the constant is
    a convention).  Scales as the metric's (1/k)-th power, matching
    d nu(e^{-phi} h) = e^{-phi} d nu(h) for a metric scale on L.
    """
    if model.geometry != "fano_anticanonical":
        raise VariantError(
            "anticanonical volume forms require the Fano test-bed (L = -K)"
        )
    u = m.potential(model)
    return Density(np.exp(-u / model.k) * model.quad_weights)


def canonical_density(model: ManifoldModel, m: MetricWeight) -> Density:
    """Volume form induced by a metric on K (general-type mock models only).

    Opposite scaling law to the anticanonical one: the dual metric on -K
    defines the volume, so d nu(e^{-phi} h) = e^{+phi} d nu(h).
    """
    if model.geometry != "general_type_mock":
        raise VariantError("canonical variant requires general type")
    if model.canonical_base is None:
        raise VariantError("mock model lacks a canonical base density")
    u = m.potential(model)
    return Density(np.exp(u / model.k) * model.canonical_base.weights)


def mock_general_type_model(k: int, radial_nodes=None, azimuthal_nodes=None) -> ManifoldModel:
    """Abstract stand-in flagged general type: the P^1 grid with a declared
    canonical base density.  Used only to exercise the canonical scaling law;
    it is not a geometric general-type manifold."""
    model = build_p1_model(k, radial_nodes, azimuthal_nodes)
    model.geometry = "general_type_mock"
    model.canonical_base = Density(model.quad_weights.copy())
    return model


def dump_model_csv(model: ManifoldModel, path) -> None:
    """CSV: node index, z_re, z_im, quad_weight, ref_weight, then section
    values with re and im interleaved."""
    with open(path, "w") as fh:
        header = ["index", "z_re", "z_im", "quad_weight", "ref_weight"]
        for j in range(model.N):
            header += [f"s{j}_re", f"s{j}_im"]
        fh.write(",".join(header) + "\n")
        for q in range(model.Q):
            row = [
                str(q),
                repr(float(model.nodes[q].real)),
                repr(float(model.nodes[q].imag)),
                repr(float(model.quad_weights[q])),
                repr(float(model.ref_weight[q])),
            ]
            for j in range(model.N):
                row.append(repr(float(model.sections[j, q].real)))
                row.append(repr(float(model.sections[j, q].imag)))
            fh.write(",".join(row) + "\n")
