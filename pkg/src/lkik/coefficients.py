"""Extrapolation weights for noise-amplified circuit combinations.

Three weight families:

* **Taylor**: closed-form coefficients of the truncated Taylor expansion of
  ``(K_I K)^(-1/2)`` around the identity,
  ``a_j = (-1)^j (2M+1)!! / (2^M (2j+1) j! (M-j)!)``.
  They satisfy ``sum_j a_j = 1`` and ``sum_j a_j (2j+1)^m = 0`` for
  ``1 <= m <= M`` (exactly, in rational arithmetic).
* **Adaptive**: minimize ``int_g^1 (sum_j a_j lam^j - lam^(-1/2))^2 dlam``
  where ``g`` is calibrated from the echo survival (``g = mu^2``).  Degenerates
  to Taylor as ``g -> 1``.
* **Multivariate (MVE)**: per-layer amplification vectors for layered circuits;
  first and second order carry closed-form weights, higher orders are generated
  from the truncated total-degree expansion of ``prod_l (1+eps_l)^(-1/2)``.

Weights are exact `fractions.Fraction` where closed forms exist (orders up to
30), with a float view alongside.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre as npleg

__all__ = [
    "CoefficientSet",
    "MVEEntry",
    "CoefficientError",
    "taylor_coefficients",
    "adaptive_coefficients",
    "mve_program_coefficients",
    "general_mve_coefficients",
    "sampling_overhead",
    "runtime_cost",
    "fit_residual",
]

#: Largest order for which exact rational Taylor weights are generated.
MAX_RATIONAL_ORDER = 30

#: Gram-matrix condition number beyond which the adaptive solve switches to an
#: orthogonal-basis least-squares route.
_GRAM_COND_LIMIT = 1e14

#: ``g`` this close to 1 degenerates the fit window; return Taylor weights.
_DEGENERATE_G = 1e-3


class CoefficientError(ValueError):
    """Raised for invalid orders, windows or layer counts."""


@dataclasses.dataclass(frozen=True)
class MVEEntry:
    """One circuit in a multivariate-extrapolation combination.

    Attributes:
        weight: signed combination weight.
        amplification: odd noise-amplification factor per layer, e.g.
            ``(1, 3, 1)`` for a tripled middle layer.
    """

    weight: float
    amplification: tuple[int, ...]
    exact: Fraction | None = None


@dataclasses.dataclass
class CoefficientSet:
    """A weight set together with how it was built and its overhead bookkeeping.

    Attributes:
        scheme: ``"taylor"``, ``"adaptive"`` or ``"mve"``.
        order: extrapolation order ``M``.
        weights: float weights; for ``taylor``/``adaptive`` the entry ``j``
            multiplies the circuit amplified by the odd factor ``2j+1``; for
            ``mve`` see ``entries``.
        exact: exact rational weights where a closed form exists, else ``None``.
        g: lower edge of the adaptive fit window (``None`` unless adaptive).
        entries: for ``mve``, the per-circuit amplification vectors.
        weight_sum: recorded ``sum(weights)``.  Exactly 1 for Taylor and MVE;
            for adaptive weights it deviates by the fit residual at the window
            edge (recorded, not forced).
        gamma_linear_theory: for first-order MVE only, the alternative overhead
            figure ``1 + (L+1)/2`` quoted for the linearized scheme, which does
            not equal ``sum(|weights|) = 1 + L`` of the stated weights.  Both
            numbers are carried so the discrepancy stays visible.
    """

    scheme: str
    order: int
    weights: list[float]
    exact: list[Fraction] | None = None
    g: float | None = None
    entries: list[MVEEntry] | None = None
    weight_sum: float = 1.0
    gamma_linear_theory: float | None = None

    @property
    def gamma(self) -> float:
        """Sampling overhead ``sum(|weights|)``."""
        return float(sum(abs(w) for w in self.weights))

    def amplification_factors(self) -> list[tuple[int, ...]]:
        """Amplification vectors, one per weight entry."""
        if self.entries is not None:
            return [e.amplification for e in self.entries]
        return [(2 * j + 1,) for j in range(len(self.weights))]


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def taylor_coefficients(order: int, *, exact: bool = True) -> CoefficientSet:
    """Taylor weights ``a_j^(M)`` for the order-``M`` inverse-sqrt expansion.

    Args:
        order: extrapolation order ``M >= 0`` (rational arithmetic up to 30).
        exact: keep the `Fraction` representation alongside the float view.

    Returns:
        ``CoefficientSet(scheme="taylor")`` with ``order + 1`` weights; entry
        ``j`` multiplies the circuit with noise amplification ``2j + 1``.
    """
    if order < 0:
        raise CoefficientError(f"order must be >= 0, got {order}")
    if order > MAX_RATIONAL_ORDER:
        raise CoefficientError(
            f"order {order} exceeds the supported maximum {MAX_RATIONAL_ORDER}"
        )
    dfact = _double_factorial(2 * order + 1)
    fracs = []
    for j in range(order + 1):
        num = Fraction((-1) ** j * dfact)
        den = Fraction(2**order * (2 * j + 1) * math.factorial(j) * math.factorial(order - j))
        fracs.append(num / den)
    assert sum(fracs) == 1
    return CoefficientSet(
        scheme="taylor",
        order=order,
        weights=[float(f) for f in fracs],
        exact=fracs if exact else None,
        weight_sum=1.0,
    )


def _gauss_nodes(g: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to the interval ``[g, 1]``."""
    x, w = npleg.leggauss(n)
    half = 0.5 * (1.0 - g)
    return g + half * (x + 1.0), half * w


def fit_residual(weights: Sequence[float], g: float, *, nodes: int = 64) -> float:
    """``int_g^1 (p(lam) - lam^(-1/2))^2 dlam`` for ``p(lam) = sum_j w_j lam^j``."""
    lam, w = _gauss_nodes(g, nodes)
    p = np.zeros_like(lam)
    for j, coeff in enumerate(weights):
        p += float(coeff) * lam**j
    return float(np.sum(w * (p - lam**-0.5) ** 2))


def adaptive_coefficients(order: int, g: float) -> CoefficientSet:
    """Least-squares weights adapted to the echo-calibrated window ``[g, 1]``.

    Solves the normal equations with Gram matrix
    ``G_jk = (1 - g^(j+k+1)) / (j+k+1)`` and moment vector
    ``b_j = (1 - g^(j+1/2)) / (j+1/2)``.  For ``g >= 1 - 1e-3`` the window is
    degenerate and the Taylor weights are returned.  An ill-conditioned Gram
    matrix (condition number above 1e14) reroutes the solve through an
    orthogonal Legendre basis on ``[g, 1]``.

    Args:
        order: extrapolation order ``M >= 0``.
        g: window lower edge in ``(0, 1]``; typically ``mu**2`` from the echo.
    """
    if order < 0:
        raise CoefficientError(f"order must be >= 0, got {order}")
    if not 0.0 < g <= 1.0:
        raise CoefficientError(f"window edge g must be in (0, 1], got {g}")
    if g >= 1.0 - _DEGENERATE_G:
        taylor = taylor_coefficients(order)
        return CoefficientSet(
            scheme="adaptive",
            order=order,
            weights=taylor.weights,
            exact=taylor.exact,
            g=g,
            weight_sum=1.0,
        )
    n = order + 1
    powers = np.arange(n, dtype=float)
    jk = powers[:, None] + powers[None, :] + 1.0
    gram = (1.0 - g**jk) / jk
    moments = (1.0 - g ** (powers + 0.5)) / (powers + 0.5)
    if np.linalg.cond(gram) <= _GRAM_COND_LIMIT:
        weights = np.linalg.solve(gram, moments)
    else:
        # Orthogonal route: least squares in a Legendre basis evaluated on a
        # Gauss grid (quadrature form of the same integral), then convert back
        # to monomial coefficients.
        lam, w = _gauss_nodes(g, max(64, 4 * n))
        x = (2.0 * lam - (1.0 + g)) / (1.0 - g)  # map to [-1, 1]
        design = np.polynomial.legendre.legvander(x, order) * np.sqrt(w)[:, None]
        target = lam**-0.5 * np.sqrt(w)
        coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
        series = npleg.Legendre(coeffs, domain=[g, 1.0])
        weights = series.convert(kind=np.polynomial.Polynomial).coef
        weights = np.pad(weights, (0, n - len(weights)))
    return CoefficientSet(
        scheme="adaptive",
        order=order,
        weights=[float(v) for v in weights],
        g=g,
        weight_sum=float(np.sum(weights)),
    )


def _uniform(l: int, layers: int, value: int, pairs: tuple[int, ...] = ()) -> tuple[int, ...]:
    vec = [1] * layers
    vec[l] = value
    for p in pairs:
        vec[p] = 3
    return tuple(vec)


def mve_program_coefficients(layers: int, order: int) -> CoefficientSet:
    """Closed-form multivariate weights for layered circuits (order 1 or 2).

    Order 1 combines the base circuit (weight ``1 + L/2``) with each
    single-layer-tripled circuit (weight ``-1/2``).  Order 2 combines:

    * base circuit: ``1 + L(L+6)/8``
    * each single layer tripled: ``-(1 + L/4)``
    * each single layer quintupled: ``3/8``
    * each pair of distinct layers tripled: ``1/4``

    The weights are affine (sum to 1 exactly) and have sampling overhead
    ``1 + L`` (order 1) and ``1 + L(L+4)/2`` (order 2).

    Raises:
        CoefficientError: for ``order not in (1, 2)`` or ``layers < 1``.
    """
    if layers < 1:
        raise CoefficientError(f"layer count must be >= 1, got {layers}")
    if order not in (1, 2):
        raise CoefficientError(
            f"closed-form multivariate weights exist for orders 1 and 2, got {order}"
        )
    entries: list[MVEEntry] = []
    base = tuple([1] * layers)
    if order == 1:
        w0 = Fraction(1) + Fraction(layers, 2)
        entries.append(MVEEntry(float(w0), base, w0))
        for l in range(layers):
            entries.append(MVEEntry(-0.5, _uniform(l, layers, 3), Fraction(-1, 2)))
        gamma_linear = 1.0 + (layers + 1) / 2.0
    else:
        w0 = Fraction(1) + Fraction(layers * (layers + 6), 8)
        entries.append(MVEEntry(float(w0), base, w0))
        w3 = -(Fraction(1) + Fraction(layers, 4))
        for l in range(layers):
            entries.append(MVEEntry(float(w3), _uniform(l, layers, 3), w3))
        for l in range(layers):
            entries.append(MVEEntry(float(Fraction(3, 8)), _uniform(l, layers, 5), Fraction(3, 8)))
        for l1, l2 in itertools.combinations(range(layers), 2):
            vec = [1] * layers
            vec[l1] = 3
            vec[l2] = 3
            entries.append(MVEEntry(float(Fraction(1, 4)), tuple(vec), Fraction(1, 4)))
        gamma_linear = None
    exact = [e.exact for e in entries]
    assert sum(exact) == 1
    return CoefficientSet(
        scheme="mve",
        order=order,
        weights=[e.weight for e in entries],
        exact=exact,
        entries=entries,
        weight_sum=1.0,
        gamma_linear_theory=gamma_linear,
    )


def _inv_sqrt_series(max_order: int) -> list[Fraction]:
    """Coefficients ``c_k`` of ``(1+eps)^(-1/2) = sum_k c_k eps^k``."""
    coeffs = [Fraction(1)]
    for k in range(1, max_order + 1):
        coeffs.append(coeffs[-1] * Fraction(-(2 * k - 1), 2 * k))
    return coeffs


def general_mve_coefficients(layers: int, order: int) -> CoefficientSet:
    """Multivariate weights at arbitrary order via series expansion.

    Expands ``prod_l (1 + eps_l)^(-1/2)`` to total degree ``order`` and
    re-expresses every ``eps_l^k = (x_l - 1)^k`` in products of odd-amplified
    layer circuits ``x_l^j``.  Reproduces :func:`mve_program_coefficients`
    exactly at orders 1 and 2; used for overhead accounting at higher orders.
    """
    if layers < 1:
        raise CoefficientError(f"layer count must be >= 1, got {layers}")
    if order < 0:
        raise CoefficientError(f"order must be >= 0, got {order}")
    series = _inv_sqrt_series(order)
    weights: dict[tuple[int, ...], Fraction] = {}
    degrees = range(order + 1)
    for kvec in itertools.product(degrees, repeat=layers):
        if sum(kvec) > order:
            continue
        coeff = Fraction(1)
        for k in kvec:
            coeff *= series[k]
        # Expand prod_l (x_l - 1)^(k_l) over exponent vectors j <= k.
        for jvec in itertools.product(*(range(k + 1) for k in kvec)):
            term = coeff
            for k, j in zip(kvec, jvec):
                term *= Fraction(math.comb(k, j) * (-1) ** (k - j))
            key = tuple(2 * j + 1 for j in jvec)
            weights[key] = weights.get(key, Fraction(0)) + term
    entries = [
        MVEEntry(float(w), amp, w)
        for amp, w in sorted(weights.items())
        if w != 0
    ]
    assert sum(e.exact for e in entries) == 1
    return CoefficientSet(
        scheme="mve",
        order=order,
        weights=[e.weight for e in entries],
        exact=[e.exact for e in entries],
        entries=entries,
        weight_sum=1.0,
    )


def sampling_overhead(weights: Sequence[float]) -> tuple[float, float]:
    """``(gamma, gamma**2)`` with ``gamma = sum(|w_i|)``.

    ``gamma**2`` is the shot-count multiplier for a fixed target variance.
    """
    gamma = float(sum(abs(float(w)) for w in weights))
    return gamma, gamma * gamma


def runtime_cost(weights: Sequence[float], depths: Sequence[float]) -> dict[str, float]:
    """Sampling-plus-depth runtime cost of a weighted circuit combination.

    ``cost = gamma^2 * mean_depth`` with
    ``mean_depth = sum(|w_i| d_i) / gamma``, where ``d_i`` is the depth of
    circuit ``i`` relative to the unamplified circuit.

    Returns:
        dict with keys ``gamma``, ``gamma_sq``, ``mean_depth``, ``cost``.
    """
    if len(weights) != len(depths):
        raise CoefficientError(
            f"got {len(weights)} weights but {len(depths)} depths"
        )
    gamma, gamma_sq = sampling_overhead(weights)
    if gamma == 0.0:
        raise CoefficientError("all-zero weight set has no defined cost")
    mean_depth = float(
        sum(abs(float(w)) * float(d) for w, d in zip(weights, depths)) / gamma
    )
    return {
        "gamma": gamma,
        "gamma_sq": gamma_sq,
        "mean_depth": mean_depth,
        "cost": gamma_sq * mean_depth,
    }
