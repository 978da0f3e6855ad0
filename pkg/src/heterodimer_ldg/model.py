"""Continuous model: coefficients, entropy transforms, reaction terms.

The two concentrations are represented through entropy variables
``p = u_p(w_p)`` (bounded, logistic transform) and ``q = u_q(w_q)``
(positive, exponential transform), which enforce the physical bounds
structurally at every solver state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .ldg_ops import DiffusionTensor

W_OVERFLOW_GUARD = 700.0


class TransformOverflowError(FloatingPointError):
    """Raised when the unbounded transform would overflow (solver divergence)."""


# ---------------------------------------------------------------------------
# transforms and entropy densities


def u_p(w, E_p: float):
    """Bounded transform: maps any real w into (0, E_p)."""
    return E_p * expit(np.asarray(w, dtype=float))


def u_p_complement(w, E_p: float):
    """E_p - u_p(w), evaluated without cancellation."""
    return E_p * expit(-np.asarray(w, dtype=float))


def u_q(w, E_q: float):
    """Unbounded transform: maps w into (0, inf). Guarded against overflow."""
    w = np.asarray(w, dtype=float)
    if np.any(np.abs(w) > W_OVERFLOW_GUARD):
        raise TransformOverflowError(
            f"|w_q| exceeded the overflow guard {W_OVERFLOW_GUARD:g}"
        )
    return E_q * np.exp(w)


def u_p_prime(w, E_p: float):
    """d/dw of u_p; equals 1 / s_p''(u_p(w))."""
    w = np.asarray(w, dtype=float)
    return E_p * expit(w) * expit(-w)


def u_q_prime(w, E_q: float):
    return u_q(w, E_q)


def sp2_of_w(w, E_p: float):
    """s_p''(u_p(w)) evaluated stably from w."""
    return 1.0 / u_p_prime(w, E_p)


def sq2_of_w(w, E_q: float):
    """s_q''(u_q(w)) = exp(-w)/E_q."""
    w = np.asarray(w, dtype=float)
    if np.any(np.abs(w) > W_OVERFLOW_GUARD):
        raise TransformOverflowError(
            f"|w_q| exceeded the overflow guard {W_OVERFLOW_GUARD:g}"
        )
    return np.exp(-w) / E_q


def s_p(p, E_p: float):
    """Logistic entropy density, shifted to be nonnegative."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= E_p):
        raise ValueError("s_p is defined on the open interval (0, E_p)")
    shift = max(E_p * math.log(2.0 / E_p), 0.0)
    return p * np.log(p) + (E_p - p) * np.log(E_p - p) + shift


def s_p_prime(p, E_p: float, complement=None):
    """s_p'(p) = log(p / (E_p - p)); pass the complement for a stable ratio."""
    p = np.asarray(p, dtype=float)
    comp = (E_p - p) if complement is None else np.asarray(complement, dtype=float)
    if np.any(p <= 0) or np.any(comp <= 0):
        raise ValueError("s_p' is defined on the open interval (0, E_p)")
    return np.log(p) - np.log(comp)


def s_p_second(p, E_p: float):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= E_p):
        raise ValueError("s_p'' is defined on the open interval (0, E_p)")
    return 1.0 / (p * (1.0 - p / E_p))


def s_q(q, E_q: float):
    """Boltzmann-type entropy density, nonnegative with minimum at q = E_q."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("s_q is defined for q > 0")
    return q * (np.log(q / E_q) - 1.0) + E_q


def s_q_prime(q, E_q: float):
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("s_q' is defined for q > 0")
    return np.log(q / E_q)


def s_q_second(q, E_q: float):
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("s_q'' is defined for q > 0")
    return 1.0 / q


def s_p_of_w(w, E_p: float):
    """s_p(u_p(w)) evaluated stably from w (log1p-based, no saturation)."""
    w = np.asarray(w, dtype=float)
    # log sigma(w) = -log(1 + e^{-w})
    log_sig = -np.logaddexp(0.0, -w)
    log_sig_m = -np.logaddexp(0.0, w)
    sig = expit(w)
    sig_m = expit(-w)
    shift = max(E_p * math.log(2.0 / E_p), 0.0)
    logE = math.log(E_p)
    return E_p * (sig * (logE + log_sig) + sig_m * (logE + log_sig_m)) + shift


def s_q_of_w(w, E_q: float):
    """s_q(u_q(w)) = E_q (e^w (w - 1) + 1)."""
    w = np.asarray(w, dtype=float)
    return E_q * (np.exp(w) * (w - 1.0) + 1.0)


@dataclass(frozen=True)
class EntropyPair:
    """Entropy density / transform pair for one species."""

    scale: float  # transform scale E
    kind: str  # "bounded" (p-type) | "unbounded" (q-type)

    def u(self, w):
        return u_p(w, self.scale) if self.kind == "bounded" else u_q(w, self.scale)

    def u_prime(self, w):
        return (
            u_p_prime(w, self.scale)
            if self.kind == "bounded"
            else u_q_prime(w, self.scale)
        )

    def s(self, value):
        return s_p(value, self.scale) if self.kind == "bounded" else s_q(value, self.scale)

    def s_prime(self, value):
        return (
            s_p_prime(value, self.scale)
            if self.kind == "bounded"
            else s_q_prime(value, self.scale)
        )

    def s_second(self, value):
        return (
            s_p_second(value, self.scale)
            if self.kind == "bounded"
            else s_q_second(value, self.scale)
        )

    def s_second_of_w(self, w):
        return sp2_of_w(w, self.scale) if self.kind == "bounded" else sq2_of_w(w, self.scale)

    def s_second_dw(self, w):
        """d/dw of s''(u(w))."""
        w = np.asarray(w, dtype=float)
        if self.kind == "bounded":
            return np.tanh(0.5 * w) * sp2_of_w(w, self.scale)
        return -sq2_of_w(w, self.scale)

    def s_of_w(self, w):
        return s_p_of_w(w, self.scale) if self.kind == "bounded" else s_q_of_w(w, self.scale)


# ---------------------------------------------------------------------------
# problem coefficients


@dataclass
class ProblemCoefficients:
    """Reaction rates, diffusion tensor and derived constants.

    ``transform_scale_p/q`` override the natural equilibrium scales in the
    change of variables (used by manufactured-solution runs, where the source
    terms break the equilibrium structure).
    """

    lambda_p: float
    lambda_q: float
    mu_pq: float
    kappa_p: float
    D: DiffusionTensor
    transform_scale_p: Optional[float] = None
    transform_scale_q: Optional[float] = None
    source_p: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    source_q: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        for name in ("lambda_p", "lambda_q", "mu_pq", "kappa_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"rate {name} must be positive")
        if self.transform_scale_p is None and self.transform_scale_q is None:
            if self.upsilon_pq <= 0:
                raise ValueError(
                    "kappa_p*mu_pq - lambda_p*lambda_q must be positive unless "
                    "transform scales are overridden"
                )

    @property
    def upsilon_pq(self) -> float:
        return self.kappa_p * self.mu_pq - self.lambda_p * self.lambda_q

    @property
    def equilibrium_p(self) -> float:
        """Unstable-equilibrium p level kappa_p / lambda_p."""
        return self.kappa_p / self.lambda_p

    @property
    def equilibrium_q(self) -> float:
        """Stable-equilibrium q level Upsilon / (lambda_q mu_pq)."""
        return self.upsilon_pq / (self.lambda_q * self.mu_pq)

    @property
    def E_p(self) -> float:
        """Transform scale of the bounded species."""
        return (
            self.transform_scale_p
            if self.transform_scale_p is not None
            else self.equilibrium_p
        )

    @property
    def E_q(self) -> float:
        return (
            self.transform_scale_q
            if self.transform_scale_q is not None
            else self.equilibrium_q
        )

    @property
    def has_sources(self) -> bool:
        return self.source_p is not None or self.source_q is not None

    def entropy_pair(self, kind: str) -> EntropyPair:
        if kind == "p":
            return EntropyPair(self.E_p, "bounded")
        if kind == "q":
            return EntropyPair(self.E_q, "unbounded")
        raise ValueError(f"unknown species {kind!r}")


def reaction(p, q, coeffs: ProblemCoefficients):
    """Reaction terms (f_p, f_q) of the conversion system."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    f_p = -p * (coeffs.lambda_p + coeffs.mu_pq * q) + coeffs.kappa_p
    f_q = -q * (coeffs.lambda_q - coeffs.mu_pq * p)
    return f_p, f_q


def reaction_jacobian(p, q, coeffs: ProblemCoefficients):
    """Pointwise partial derivatives ((df_p/dp, df_p/dq), (df_q/dp, df_q/dq))."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dfp_dp = -(coeffs.lambda_p + coeffs.mu_pq * q)
    dfp_dq = -coeffs.mu_pq * p
    dfq_dp = coeffs.mu_pq * q
    dfq_dq = -(coeffs.lambda_q - coeffs.mu_pq * p)
    return (dfp_dp, dfp_dq), (dfq_dp, dfq_dq)


def reaction_bound_constant(coeffs: ProblemCoefficients) -> float:
    """Constant C_f bounding f_p s_p' + f_q s_q' by C_f (E_q + s_q(q))."""
    if coeffs.upsilon_pq <= 0:
        raise ValueError("the reaction bound requires kappa_p*mu_pq > lambda_p*lambda_q")
    Ep = coeffs.equilibrium_p
    Eq = coeffs.equilibrium_q
    return (
        (1.0 + math.log(2.0))
        / math.log(2.0)
        * Ep
        * (coeffs.lambda_p / Eq + 2.0 * coeffs.mu_pq)
    )


def reaction_bound_residual(p, q, coeffs: ProblemCoefficients):
    """Pointwise residual C_f (E_q + s_q(q)) - (f_p s_p' + f_q s_q') >= 0."""
    Cf = reaction_bound_constant(coeffs)
    Ep = coeffs.equilibrium_p
    Eq = coeffs.equilibrium_q
    f_p, f_q = reaction(p, q, coeffs)
    lhs = f_p * s_p_prime(p, Ep) + f_q * s_q_prime(q, Eq)
    return Cf * (Eq + s_q(q, Eq)) - lhs


def node_focus_classifier(coeffs: ProblemCoefficients) -> str:
    """Classify the stable equilibrium as 'node' or 'focus'."""
    if coeffs.upsilon_pq <= 0:
        raise ValueError("classification requires a stable equilibrium (Upsilon > 0)")
    lp, lq, mu, kp = coeffs.lambda_p, coeffs.lambda_q, coeffs.mu_pq, coeffs.kappa_p
    disc = 4.0 * lp * lq**3 - 4.0 * kp * lq**2 * mu + kp**2 * mu**2
    return "node" if disc >= 0.0 else "focus"


# ---------------------------------------------------------------------------
# traveling wave


@dataclass(frozen=True)
class TravelingWave:
    """Closed-form tanh front connecting the two equilibria.

    Exists for lambda_q = lambda_p, Upsilon > 0 and isotropic diffusion
    d = (kappa_p mu_pq - lambda_p^2) / (24 lambda_p); speed v = 10 d.
    """

    lambda_p: float
    mu_pq: float
    kappa_p: float

    @property
    def diffusion(self) -> float:
        return (self.kappa_p * self.mu_pq - self.lambda_p**2) / (24.0 * self.lambda_p)

    @property
    def speed(self) -> float:
        return 10.0 * self.diffusion

    def profile(self, xi):
        xi = np.asarray(xi, dtype=float)
        lp, mu, kp = self.lambda_p, self.mu_pq, self.kappa_p
        th = np.tanh(xi)
        denom = 4.0 * lp * mu
        psi_p = (lp**2 + 3.0 * kp * mu + (lp**2 - kp * mu) * (th**2 - 2.0 * th)) / denom
        psi_q = -(lp**2 - kp * mu) / denom * (1.0 - th) ** 2
        return psi_p, psi_q

    def profile_derivative(self, xi):
        xi = np.asarray(xi, dtype=float)
        lp, mu, kp = self.lambda_p, self.mu_pq, self.kappa_p
        th = np.tanh(xi)
        sech2 = 1.0 / np.cosh(xi) ** 2
        denom = 4.0 * lp * mu
        dpsi_p = (lp**2 - kp * mu) * sech2 * (2.0 * th - 2.0) / denom
        dpsi_q = -(lp**2 - kp * mu) / denom * 2.0 * (1.0 - th) * (-sech2)
        return dpsi_p, dpsi_q

    def ode_residual(self, xi):
        """Residual of the wave ODE system at xi (finite differences avoided)."""
        xi = np.asarray(xi, dtype=float)
        d, v = self.diffusion, self.speed
        lp, mu, kp = self.lambda_p, self.mu_pq, self.kappa_p
        h = 1e-5
        pp, qq = self.profile(xi)
        dp, dq = self.profile_derivative(xi)
        dp_m, dq_m = self.profile_derivative(xi - h)
        dp_p, dq_p = self.profile_derivative(xi + h)
        d2p = (dp_p - dp_m) / (2.0 * h)
        d2q = (dq_p - dq_m) / (2.0 * h)
        res_p = d * d2p + v * dp - lp * pp - mu * pp * qq + kp
        res_q = d * d2q + v * dq - lp * qq + mu * pp * qq
        return res_p, res_q


def traveling_wave_exact(coeffs: ProblemCoefficients, x, t: float):
    """Exact traveling-wave state (p, q, grad p, grad q) at points ``x``.

    ``x`` is an (N, 2) coordinate array; the wave moves in the x-direction.
    """
    if not math.isclose(coeffs.lambda_q, coeffs.lambda_p, rel_tol=1e-12):
        raise ValueError("the closed-form wave requires lambda_q = lambda_p")
    if coeffs.upsilon_pq <= 0:
        raise ValueError("the closed-form wave requires kappa_p*mu_pq > lambda_p^2")
    wave = TravelingWave(coeffs.lambda_p, coeffs.mu_pq, coeffs.kappa_p)
    dval = wave.diffusion
    sample = coeffs.D.evaluate(np.zeros((1, 2)))[0]
    if not (
        math.isclose(sample[0, 0], dval, rel_tol=1e-10)
        and math.isclose(sample[1, 1], dval, rel_tol=1e-10)
        and abs(sample[0, 1]) < 1e-14
    ):
        raise ValueError(
            f"the wave requires isotropic diffusion D = {dval:g} I; "
            "got an incompatible tensor"
        )
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = x[:, 0] - wave.speed * t
    p, q = wave.profile(xi)
    dp, dq = wave.profile_derivative(xi)
    zeros = np.zeros_like(dp)
    grad_p = np.column_stack([dp, zeros])
    grad_q = np.column_stack([dq, zeros])
    return p, q, grad_p, grad_q


# ---------------------------------------------------------------------------
# initial data and manufactured solutions


@dataclass
class InitialData:
    """Pointwise initial concentrations with admissibility checking."""

    p0: Callable[[np.ndarray], np.ndarray]
    q0: Callable[[np.ndarray], np.ndarray]

    def validate(self, coeffs: ProblemCoefficients, points: np.ndarray):
        p = np.asarray(self.p0(points), dtype=float)
        q = np.asarray(self.q0(points), dtype=float)
        Ep = coeffs.E_p
        tol = 1e-12 * max(Ep, 1.0)
        if np.any(p < -tol) or np.any(p > Ep + tol):
            raise ValueError("initial p_0 violates 0 <= p_0 <= E_p")
        if np.any(q < -tol):
            raise ValueError("initial q_0 violates q_0 >= 0")


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution with compensating sources for convergence studies."""

    coeffs: ProblemCoefficients
    exact_p: Callable[[np.ndarray, float], np.ndarray]
    exact_q: Callable[[np.ndarray, float], np.ndarray]
    exact_grad_p: Callable[[np.ndarray, float], np.ndarray]
    exact_grad_q: Callable[[np.ndarray, float], np.ndarray]
    initial: InitialData


def make_separable_linear_case(D: DiffusionTensor) -> ManufacturedCase:
    """Manufactured solution p = q = (cos(2 pi x) cos(2 pi y) + 2)/4 * (1 - t).

    Both transform scales are overridden to 1; the additive sources are
    derived by substituting the exact solution into the strong equations
    (isotropic unit diffusion).
    """
    lam_p = lam_q = 1.0
    mu = 0.5
    kap = 1.0
    two_pi = 2.0 * math.pi

    def phi(x):
        return 0.25 * (np.cos(two_pi * x[:, 0]) * np.cos(two_pi * x[:, 1]) + 2.0)

    def lap_phi(x):
        return -2.0 * math.pi**2 * np.cos(two_pi * x[:, 0]) * np.cos(two_pi * x[:, 1])

    def exact(x, t):
        return phi(x) * (1.0 - t)

    def exact_grad(x, t):
        gx = -0.25 * two_pi * np.sin(two_pi * x[:, 0]) * np.cos(two_pi * x[:, 1])
        gy = -0.25 * two_pi * np.cos(two_pi * x[:, 0]) * np.sin(two_pi * x[:, 1])
        return (1.0 - t) * np.column_stack([gx, gy])

    def g_p(x, t):
        pv = exact(x, t)
        qv = pv
        return -phi(x) - (1.0 - t) * lap_phi(x) + pv * (lam_p + mu * qv) - kap

    def g_q(x, t):
        pv = exact(x, t)
        qv = pv
        return -phi(x) - (1.0 - t) * lap_phi(x) + qv * (lam_q - mu * pv)

    coeffs = ProblemCoefficients(
        lambda_p=lam_p,
        lambda_q=lam_q,
        mu_pq=mu,
        kappa_p=kap,
        D=D,
        transform_scale_p=1.0,
        transform_scale_q=1.0,
        source_p=g_p,
        source_q=g_q,
    )
    initial = InitialData(p0=lambda x: exact(x, 0.0), q0=lambda x: exact(x, 0.0))
    return ManufacturedCase(coeffs, exact, exact, exact_grad, exact_grad, initial)
