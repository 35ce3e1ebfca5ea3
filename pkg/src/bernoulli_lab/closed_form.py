"""Homogeneous global solutions of the two-phase problem in the half-plane.

Coordinates are ``x = (x1, x2)`` with the domain ``{x1 > 0}`` and the fixed
boundary ``{x1 = 0}``.  The two degree-one homogeneous solutions are

    v_S = a+ (-g x1 + x2)^+ - a- (-g x1 + x2)^-
    v_L = a+ ( g x1 + x2)^+ - a- ( g x1 + x2)^-

with ``g = sqrt(Lambda / (a+^2 - a-^2) - 1)``.  Everything here is exact
arithmetic on these formulas and serves as the oracle layer for the rest of
the package.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    BadConeParam,
    DegenerateData,
    GammaAbsent,
    NonPositiveLambda,
    OnFreeBoundary,
    TwoPhaseOrderError,
)

NO_FREE_BOUNDARY = "no-free-boundary"
DEGENERATE_TANGENTIAL = "degenerate-tangential"
BALANCED_PHASES = "balanced-phases"

_EQ_RTOL = 1e-14


@dataclass(frozen=True)
class ProblemSpec:
    """Problem constants plus the derived ``Lambda``, ``gamma`` and ``theta``.

    Build instances with :func:`derive_params`; it validates the input and
    fills the derived fields.  ``gamma`` and ``theta`` are ``None`` when the
    constants admit no homogeneous free boundary.
    """

    alpha_plus: float
    alpha_minus: float
    lambda_plus: float
    lambda_minus: float
    g_coeff: float = 0.0
    g_exponent: float = 0.5
    Lambda: float = float("nan")
    gamma: Optional[float] = None
    theta: Optional[float] = None
    flags: frozenset = field(default_factory=frozenset)

    @property
    def has_gamma(self) -> bool:
        return self.gamma is not None

    @property
    def no_free_boundary(self) -> bool:
        return NO_FREE_BOUNDARY in self.flags

    @property
    def one_phase(self) -> bool:
        return self.alpha_minus == 0.0

    def require_gamma(self) -> float:
        if self.gamma is None:
            raise GammaAbsent(
                f"gamma undefined for Lambda={self.Lambda!r}, "
                f"alpha+={self.alpha_plus!r}, alpha-={self.alpha_minus!r}"
            )
        return self.gamma

    def pi_datum(self, x2):
        """Unperturbed datum ``a+ x2^+ - a- x2^-`` on the fixed boundary."""
        x2 = np.asarray(x2, dtype=float)
        return self.alpha_plus * np.maximum(x2, 0.0) + self.alpha_minus * np.minimum(x2, 0.0)

    def g(self, x):
        """Perturbation ``C |x|^(1+kappa)`` at points ``x`` of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        if self.g_coeff == 0.0:
            return np.zeros(x.shape[:-1])
        r = np.hypot(x[..., 0], x[..., 1])
        return self.g_coeff * r ** (1.0 + self.g_exponent)

    def laplacian_g(self, r):
        """``Delta g = C (1+kappa)^2 |x|^(kappa-1)`` in two dimensions."""
        r = np.asarray(r, dtype=float)
        k = self.g_exponent
        return self.g_coeff * (1.0 + k) ** 2 * r ** (k - 1.0)

    def with_g(self, g_coeff: float, g_exponent: Optional[float] = None) -> "ProblemSpec":
        return derive_params(
            self.alpha_plus,
            self.alpha_minus,
            self.lambda_plus,
            self.lambda_minus,
            g_coeff,
            self.g_exponent if g_exponent is None else g_exponent,
        )

    def as_dict(self) -> dict:
        return {
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "g_coeff": self.g_coeff,
            "g_exponent": self.g_exponent,
            "Lambda": self.Lambda,
            "gamma": self.gamma,
            "theta": self.theta,
            "flags": sorted(self.flags),
        }


def derive_params(
    alpha_plus: float,
    alpha_minus: float,
    lambda_plus: float,
    lambda_minus: float = 0.0,
    g_coeff: float = 0.0,
    g_exponent: float = 0.5,
) -> ProblemSpec:
    """Validate the constants and compute ``Lambda``, ``gamma``, ``theta``.

    Raises
    ------
    NonPositiveLambda
        if ``lambda_plus <= lambda_minus``.
    DegenerateData
        if both ``alpha`` vanish (or any constant is negative).
    TwoPhaseOrderError
        if ``alpha_minus > alpha_plus``.
    """
    ap, am = float(alpha_plus), float(alpha_minus)
    lp, lm = float(lambda_plus), float(lambda_minus)
    if lm < 0.0 or not lp > lm:
        raise NonPositiveLambda(f"need lambda_plus > lambda_minus >= 0, got {lp!r}, {lm!r}")
    if ap < 0.0 or am < 0.0 or ap + am <= 0.0:
        raise DegenerateData(f"need alpha_plus, alpha_minus >= 0 with positive sum, got {ap!r}, {am!r}")
    if am > ap:
        raise TwoPhaseOrderError(f"alpha_minus={am!r} exceeds alpha_plus={ap!r}")
    if g_coeff < 0.0 or g_exponent <= 0.0:
        raise ValueError("g needs g_coeff >= 0 and g_exponent > 0")

    Lam = lp * lp - lm * lm
    diff = ap * ap - am * am
    flags = set()
    gamma = theta = None
    if diff == 0.0:
        # both rays collapse onto the fixed boundary
        flags.add(BALANCED_PHASES)
    elif abs(Lam - diff) <= _EQ_RTOL * diff:
        gamma, theta = 0.0, math.pi / 2
        flags.update((DEGENERATE_TANGENTIAL, NO_FREE_BOUNDARY))
    elif Lam < diff:
        flags.add(NO_FREE_BOUNDARY)
    else:
        gamma = math.sqrt(Lam / diff - 1.0)
        theta = math.atan2(1.0, gamma)
    return ProblemSpec(ap, am, lp, lm, float(g_coeff), float(g_exponent), Lam, gamma, theta, frozenset(flags))


class Variant(str, enum.Enum):
    SMALL = "small"
    LARGE = "large"


@dataclass(frozen=True)
class GlobalSolution:
    variant: Variant
    spec: ProblemSpec

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def sign(self) -> float:
        # coefficient of gamma*x1 in the linear argument
        return -1.0 if self.variant is Variant.SMALL else 1.0

    def __call__(self, x):
        return eval_global(self, x)


def _linear_arg(sol: GlobalSolution, x):
    gam = sol.spec.require_gamma()
    x = np.asarray(x, dtype=float)
    a = sol.sign * gam * x[..., 0]
    s = a + x[..., 1]
    # points on the ray up to rounding of gamma are put exactly on it
    return np.where(np.abs(s) <= 8 * np.finfo(float).eps * (np.abs(a) + np.abs(x[..., 1])), 0.0, s)


def eval_global(sol: GlobalSolution, x):
    """Exact value of ``v_S`` or ``v_L`` at ``x`` (shape (2,) or (N, 2))."""
    s = _linear_arg(sol, x)
    sp = sol.spec
    val = sp.alpha_plus * np.maximum(s, 0.0) + sp.alpha_minus * np.minimum(s, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def grad_global(sol: GlobalSolution, x, side: Optional[str] = None) -> np.ndarray:
    """Gradient of the active linear piece at a single point ``x``.

    On the free-boundary ray the gradient jumps; pass ``side='+'`` or
    ``side='-'`` to select the positive or negative phase there.
    """
    s = float(_linear_arg(sol, x))
    if s == 0.0 and side is None:
        raise OnFreeBoundary(f"point {tuple(np.asarray(x))} lies on the free-boundary ray")
    positive = s > 0.0 if side is None else side == "+"
    a = sol.spec.alpha_plus if positive else sol.spec.alpha_minus
    return a * np.array([sol.sign * sol.spec.gamma, 1.0])


def jump_defect(spec: ProblemSpec) -> float:
    """``| |grad v+|^2 - |grad v-|^2 - Lambda |`` for the homogeneous solutions."""
    gam = spec.require_gamma()
    f = 1.0 + gam * gam
    return abs(spec.alpha_plus ** 2 * f - spec.alpha_minus ** 2 * f - spec.Lambda)


def free_boundary_ray(sol: GlobalSolution):
    """Unit direction of the zero ray and its touch angle with ``{x1 = 0}``."""
    gam = sol.spec.require_gamma()
    d = np.array([1.0, -sol.sign * gam])
    return d / np.hypot(d[0], d[1]), sol.spec.theta


def ray_polar_angle(sol: GlobalSolution) -> float:
    """Polar angle of the zero ray measured from the positive x2-axis."""
    d, _ = free_boundary_ray(sol)
    return math.atan2(d[0], d[1])


def weiss_closed_form(sol: GlobalSolution) -> float:
    """Weiss energy ``W(1, v, 0)`` of a homogeneous solution.

    For degree-one homogeneous ``v`` the Dirichlet integral and the sphere
    term cancel on the arc, leaving the flat-boundary flux
    ``int v (-dv/dx1) dx2`` over ``-1 < x2 < 1`` plus ``Lambda`` times the
    area of the positivity sector.
    """
    sp = sol.spec
    sp.require_gamma()
    # on the fixed boundary v = a x2 on each half, and dv/dx1 is the x1
    # component of the active gradient
    dpos = grad_global(sol, (0.0, 1.0), side="+")[0]
    dneg = grad_global(sol, (0.0, -1.0), side="-")[0]
    # int_0^1 a+ x2 (-dpos) dx2  +  int_{-1}^0 a- x2 (-dneg) dx2
    flux = -0.5 * sp.alpha_plus * dpos + 0.5 * sp.alpha_minus * dneg
    # positivity set is the sector between the x2-axis and the ray
    sector = ray_polar_angle(sol)
    return float(flux + sp.Lambda * 0.5 * sector)


def weiss_gap_closed_form(spec: ProblemSpec) -> float:
    """``W(1, v_S) - W(1, v_L)``."""
    return weiss_closed_form(GlobalSolution(Variant.SMALL, spec)) - weiss_closed_form(
        GlobalSolution(Variant.LARGE, spec)
    )


class ConeKind(str, enum.Enum):
    NT = "nt"
    SIGMA_PLUS = "sigma_plus"
    SIGMA_MINUS = "sigma_minus"


@dataclass(frozen=True)
class Cone:
    """Non-tangential cone ``K_delta`` or touch cones ``K_sigma^+/-``.

    ``param`` is ``delta`` for NT cones and ``sigma`` (a number or a
    modulus ``r -> sigma(r)``) for the sigma cones, which also need ``gamma``.
    """

    kind: ConeKind
    param: Union[float, Callable[[float], float]]
    apex: tuple = (0.0, 0.0)
    gamma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ConeKind(self.kind))
        if self.kind is ConeKind.NT:
            if not self.param > 0:
                raise BadConeParam(f"delta must be positive, got {self.param!r}")
        else:
            if self.gamma is None:
                raise BadConeParam("sigma cones need gamma")
            if not callable(self.param):
                _check_sigma(float(self.param), self.gamma)


def _check_sigma(sigma, gamma):
    if not 0.0 < sigma < gamma:
        raise BadConeParam(f"need 0 < sigma < gamma, got sigma={sigma!r}, gamma={gamma!r}")


def cone_contains(cone: Cone, x) -> bool:
    """Strict membership of a single point in the cone."""
    x1, x2 = float(x[0]) - cone.apex[0], float(x[1]) - cone.apex[1]
    if cone.kind is ConeKind.NT:
        return x1 > cone.param * abs(x2)
    sigma = cone.param(math.hypot(x1, x2)) if callable(cone.param) else float(cone.param)
    _check_sigma(sigma, cone.gamma)
    if cone.kind is ConeKind.SIGMA_MINUS:
        x2 = -x2
    return x1 > 0.0 and x2 > 0.0 and x2 / (cone.gamma + sigma) < x1 < x2 / (cone.gamma - sigma)
