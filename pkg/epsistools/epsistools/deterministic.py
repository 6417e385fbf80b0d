import math
from dataclasses import dataclass

import numpy as np

from epsistools.chain import ModelParams, derived
from epsistools.errors import DomainError


@dataclass(frozen=True)
class EnvelopeParams:
    """
    Constants of the perturbed logistic equation bounding the mean from below.

    The lower envelope solves dz/dt = −λ(z − c2)(z − c3), whose roots are
    c2 = −δ/(2λ) (attracting) and c3 = −J/λ + δ/(2λ), with c1 = J − δ = λ(c2 − c3).

    Attributes
    ----------
    `delta` : float
        Perturbation rate, 0 ≤ delta < J.
    `c1` : float
        Decay rate of the perturbed equation.
    `c2` : float
        Attracting fixed point, ≤ 0.
    `c3` : float
        Repelling fixed point, < 0.
    """

    delta: float
    c1: float
    c2: float
    c3: float

    @classmethod
    def from_delta(cls, params: ModelParams, delta: float) -> "EnvelopeParams":
        J = derived(params).J
        if not 0 <= delta < J:
            raise DomainError(f"delta must lie in [0, J={J:.6g}), got {delta}")
        return cls(
            delta=float(delta),
            c1=J - delta,
            c2=-delta / (2.0 * params.lam),
            c3=-J / params.lam + delta / (2.0 * params.lam),
        )


def drift(params: ModelParams, x):
    """Right-hand side of the deterministic equation, λx(1−x) + ε(1−x) − μx."""
    x = np.asarray(x, dtype=float)
    return params.lam * x * (1.0 - x) + params.epsilon * (1.0 - x) - params.mu * x


def _logistic_flow(rate: float, scale: float, stable: float, unstable: float, y0, t):
    # explicit solution of dy/dt = −scale·(y − stable)(y − unstable) with e^{−rate·t}
    # factored out; rate = scale·(stable − unstable)
    decay = np.exp(-rate * np.asarray(t, dtype=float))
    y0 = np.asarray(y0, dtype=float)
    numerator = (rate / scale) * (y0 - stable) * decay
    denominator = (y0 - unstable) - (y0 - stable) * decay
    return stable + numerator / denominator


def ode_solution(params: ModelParams, alpha, t):
    """
    Explicit solution x(t) of dx/dt = λx(1−x) + ε(1−x) − μx with x(0) = alpha.

    Parameters
    ----------
    params : ModelParams
        The chain (N is ignored).
    alpha : float | numpy.ndarray
        Initial proportion(s) in [0, 1].
    t : float | numpy.ndarray
        Time(s), non-negative; broadcast against `alpha`.

    Returns
    -------
    float | numpy.ndarray
        x(t) in [0, 1]; equal to x⋆ once the correction underflows.

    Examples
    --------
    >>> params = ModelParams(1.0, 2.0, 0.5, 100)
    >>> ode_solution(params, 0.3, 0.0)
    0.3
    """
    alpha_arr = np.asarray(alpha, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(alpha_arr < 0) or np.any(alpha_arr > 1) or np.any(np.isnan(alpha_arr)):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise DomainError(f"t must be non-negative, got {t}")
    d = derived(params)
    x = _logistic_flow(d.J, params.lam, d.x_star, d.x1_star, alpha_arr, t_arr)
    x = np.clip(x, 0.0, 1.0)
    return float(x) if x.ndim == 0 else x


def decay_bound(params: ModelParams, y0, t):
    """
    Exponential bound on the distance of the deterministic solution to x⋆,
    |x(t) − x⋆| ≤ 2J/(J − (λ−μ−ε)) · |y0| · e^{−tJ}, with y0 = alpha − x⋆.

    Returns
    -------
    float | numpy.ndarray
        The bound.
    """
    d = derived(params)
    y0_arr = np.asarray(y0, dtype=float)
    # tolerance absorbs the rounding of alpha − x⋆
    slack = 1e-12
    if np.any(y0_arr < -d.x_star - slack) or np.any(y0_arr > 1.0 - d.x_star + slack):
        raise DomainError(
            f"y0 must lie in [−x⋆, 1−x⋆] = [{-d.x_star:.6g}, {1 - d.x_star:.6g}], got {y0}"
        )
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError(f"t must be non-negative, got {t}")
    a = params.lam - params.mu - params.epsilon
    bound = 2.0 * d.J / (d.J - a) * np.abs(y0_arr) * np.exp(-t_arr * d.J)
    return float(bound) if bound.ndim == 0 else bound


def mean_envelope(params: ModelParams, y0, delta: float, t):
    """
    Lower and upper envelopes of the centred mean E X_N(t)/N − x⋆.

    The upper envelope is the unperturbed solution y(t) = x(t) − x⋆; the lower
    envelope z(t) solves dz/dt = −λz² − Jz − δ(2J−δ)/(4λ).

    Parameters
    ----------
    params : ModelParams
        The chain.
    y0 : float | numpy.ndarray
        Initial centred proportion; the lower branch needs y0 > c3.
    delta : float
        Perturbation rate in [0, J).
    t : float | numpy.ndarray
        Time(s).

    Returns
    -------
    tuple
        (lower, upper).
    """
    envelope = EnvelopeParams.from_delta(params, delta)
    y0_arr = np.asarray(y0, dtype=float)
    if np.any(y0_arr <= envelope.c3):
        raise DomainError(
            f"y0 must exceed c3 = {envelope.c3:.6g} (not biologically viable), got {y0}"
        )
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError(f"t must be non-negative, got {t}")
    d = derived(params)
    upper = _logistic_flow(d.J, params.lam, 0.0, -d.J / params.lam, y0_arr, t_arr)
    lower = _logistic_flow(
        envelope.c1, params.lam, envelope.c2, envelope.c3, y0_arr, t_arr
    )
    if upper.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def envelope_delta(params: ModelParams, N: int, c_star: float, h: float) -> float:
    """
    Perturbation rate δ with δ(2J − δ)/(4λ) = C*·N^{−(1−h)}.

    The variance constant C* has no explicit value; it is a configuration input.
    """
    if not 0 < h < 1:
        raise DomainError(f"h must lie in (0, 1), got {h}")
    if c_star < 0:
        raise DomainError(f"c_star must be non-negative, got {c_star}")
    J = derived(params).J
    kappa = c_star * N ** (-(1.0 - h))
    discriminant = J * J - 4.0 * params.lam * kappa
    if discriminant <= 0:
        raise DomainError(
            f"C*·N^(−(1−h)) = {kappa:.6g} too large for a real envelope at N={N}"
        )
    return J - math.sqrt(discriminant)
