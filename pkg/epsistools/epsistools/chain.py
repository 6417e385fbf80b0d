import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import diags

from epsistools.errors import DomainError


class ModelParams:
    """
    Defining constants of the logistic SIS chain with self-infection on the
    complete graph with `N` individuals.

    Attributes
    ----------
    `lam` : float
        Infection contact rate (per unit time).
    `mu` : float
        Recovery rate (per unit time).
    `epsilon` : float
        Self-infection rate per susceptible (per unit time).
    `N` : int
        Population size.

    Methods
    -------
    `with_population`
        Copy of the parameters with another population size.
    `as_dict`
        Plain dictionary of the four constants.
    """

    def __init__(self, lam: float, mu: float, epsilon: float, N: int):
        """
        Instantiates the attributes for the ModelParams object.

        Parameters
        ----------
        `lam` : float
            Sets the infection contact rate, strictly positive.
        `mu` : float
            Sets the recovery rate, strictly positive.
        `epsilon` : float
            Sets the self-infection rate, strictly positive.
        `N` : int
            Sets the population size, at least 1.
        """
        self.lam = lam
        self.mu = mu
        self.epsilon = epsilon
        self.N = N

    @staticmethod
    def _positive_rate(name: str, value: float) -> float:
        value = float(value)
        if not math.isfinite(value) or value <= 0:
            raise DomainError(f"{name} must be a finite rate above 0, got {value}")
        return value

    @property
    def lam(self) -> float:
        """
        The 'lam' property. Get or set the infection contact rate.

        Returns
        -------
        float
            The infection contact rate.
        """
        return self._lam

    @lam.setter
    def lam(self, value: float):
        self._lam = self._positive_rate("lambda", value)

    @property
    def mu(self) -> float:
        """
        The 'mu' property. Get or set the recovery rate.

        Returns
        -------
        float
            The recovery rate.
        """
        return self._mu

    @mu.setter
    def mu(self, value: float):
        self._mu = self._positive_rate("mu", value)

    @property
    def epsilon(self) -> float:
        """
        The 'epsilon' property. Get or set the self-infection rate. The chain
        with epsilon equal to 0 is the classical SIS model and is excluded.

        Returns
        -------
        float
            The self-infection rate.
        """
        return self._epsilon

    @epsilon.setter
    def epsilon(self, value: float):
        self._epsilon = self._positive_rate("epsilon", value)

    @property
    def N(self) -> int:
        """
        The 'N' property. Get or set the population size.

        Returns
        -------
        int
            The population size.
        """
        return self._N

    @N.setter
    def N(self, value: int):
        if isinstance(value, bool) or int(value) != value or value < 1:
            raise DomainError(f"N must be an integer of at least 1, got {value}")
        self._N = int(value)

    def with_population(self, N: int) -> "ModelParams":
        return ModelParams(self.lam, self.mu, self.epsilon, N)

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "epsilon": self.epsilon, "N": self.N}

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __hash__(self) -> int:
        return hash((self.lam, self.mu, self.epsilon, self.N))

    def __repr__(self) -> str:
        return (
            f"ModelParams(lam={self.lam!r}, mu={self.mu!r}, "
            f"epsilon={self.epsilon!r}, N={self.N!r})"
        )


@dataclass(frozen=True)
class DerivedQuantities:
    """Closed-form constants of the chain: rate J, fixed points, cutoff time."""

    J: float
    x_star: float
    x1_star: float
    t_N: float
    k: float


@dataclass(frozen=True)
class GeneratorRow:
    """Non-zero entries of one row of the tridiagonal generator."""

    down: float
    up: float
    diag: float


def _checked_states(params: ModelParams, x) -> np.ndarray:
    states = np.asarray(x)
    if states.dtype.kind not in "iu":
        if not np.all(np.isfinite(states)) or np.any(states != np.floor(states)):
            raise DomainError(f"states must be integers, got {x}")
        states = states.astype(np.int64)
    if np.any(states < 0) or np.any(states > params.N):
        raise DomainError(f"x={x} outside {{0..{params.N}}}")
    return states


def birth_rate(params: ModelParams, x):
    """
    Rate of the transition x -> x+1, λx(1−x/N) + ε(N−x).

    Parameters
    ----------
    params : ModelParams
        The chain.
    x : int | numpy.ndarray
        State(s) in {0..N}.

    Returns
    -------
    float | numpy.ndarray
        The infection rate, zero exactly at x = N.

    Examples
    --------
    >>> birth_rate(ModelParams(1.0, 2.0, 0.5, 100), 50)
    50.0
    """
    states = _checked_states(params, x).astype(float)
    # x/N formed first so that large N never overflows
    fraction = states / params.N
    rate = params.lam * states * (1.0 - fraction) + params.epsilon * (params.N - states)
    return float(rate) if rate.ndim == 0 else rate


def death_rate(params: ModelParams, x):
    """
    Rate of the transition x -> x−1, μx.

    Examples
    --------
    >>> death_rate(ModelParams(1.0, 2.0, 0.5, 100), 75)
    150.0
    """
    states = _checked_states(params, x).astype(float)
    rate = params.mu * states
    return float(rate) if rate.ndim == 0 else rate


def derived(params: ModelParams) -> DerivedQuantities:
    """
    Closed-form constants used throughout the package.

    J = sqrt((λ−μ−ε)² + 4λε), x⋆ and x1⋆ the two roots of
    λx(1−x) + ε(1−x) − μx, t_N = log(N)/(2J) and k = (λ+μ+ε)/(2J).

    Returns
    -------
    DerivedQuantities
        The derived constants.

    Examples
    --------
    >>> d = derived(ModelParams(1.0, 2.0, 0.5, 1000))
    >>> round(d.J, 6), round(d.x_star, 6), round(d.t_N, 6)
    (2.061553, 0.280776, 1.675377)
    """
    a = params.lam - params.mu - params.epsilon
    J = math.sqrt(a * a + 4.0 * params.lam * params.epsilon)
    # product of the roots is −ε/λ; use it to avoid cancellation
    if a >= 0:
        x_star = (a + J) / (2.0 * params.lam)
        x1_star = -2.0 * params.epsilon / (a + J)
    else:
        x_star = 2.0 * params.epsilon / (J - a)
        x1_star = (a - J) / (2.0 * params.lam)
    return DerivedQuantities(
        J=J,
        x_star=x_star,
        x1_star=x1_star,
        t_N=math.log(params.N) / (2.0 * J),
        k=(params.lam + params.mu + params.epsilon) / (2.0 * J),
    )


def generator_row(params: ModelParams, x: int) -> GeneratorRow:
    """
    Row x of the generator: (down, up, diag) with diag = −(down + up).

    Examples
    --------
    >>> generator_row(ModelParams(1.0, 2.0, 0.5, 100), 50)
    GeneratorRow(down=100.0, up=50.0, diag=-150.0)
    """
    down = death_rate(params, x)
    up = birth_rate(params, x)
    return GeneratorRow(down=down, up=up, diag=-(down + up))


def generator_bands(params: ModelParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    All generator rows at once.

    Returns
    -------
    tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]
        `down`, `up` and `diag` arrays of length N+1 indexed by state.
    """
    states = np.arange(params.N + 1)
    down = death_rate(params, states)
    up = birth_rate(params, states)
    return down, up, -(down + up)


def generator_matrix(params: ModelParams):
    """Sparse tridiagonal generator Q (scipy.sparse, CSR)."""
    down, up, diag = generator_bands(params)
    return diags([down[1:], diag, up[:-1]], [-1, 0, 1], format="csr")


def uniformization_rate(params: ModelParams) -> float:
    """q = (λ+μ+ε)N, an upper bound of every total jump rate."""
    return (params.lam + params.mu + params.epsilon) * params.N


def min_total_rate(params: ModelParams) -> float:
    """(μ∧ε)N, a lower bound of every total jump rate."""
    return min(params.mu, params.epsilon) * params.N


def c3_constant(params: ModelParams) -> float:
    """C₃ = (J/λ · x⋆/|x1⋆|) ∨ (1−x⋆), the deterministic burn-in constant."""
    d = derived(params)
    return max(d.J / params.lam * d.x_star / abs(d.x1_star), 1.0 - d.x_star)
