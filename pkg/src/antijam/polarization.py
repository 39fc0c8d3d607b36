"""Polarization states of one and two photons and analyzer projections.

Basis ordering is fixed as (H, V) for one photon and (HH, HV, VH, VV) for
two photons, with H the first basis vector.  Analyzer angles are in radians
and reduced to [0, pi) because a linear polarizer has period pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CorruptedStateError, InvalidArgumentError, InvalidStateError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = -1e-10
IMAG_TOL = 1e-10

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

KET_H = np.array([1, 0], dtype=complex)
KET_V = np.array([0, 1], dtype=complex)


def normalize_angle(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"angle must be finite, got {theta!r}")
    reduced = math.fmod(theta, math.pi)
    if reduced < 0:
        reduced += math.pi
    # fmod can return pi itself for inputs a hair below a multiple of pi
    return 0.0 if reduced >= math.pi else reduced


def analyzer_vector(theta: float) -> np.ndarray:
    """Real unit vector (cos theta, sin theta) passed by a polarizer at `theta`."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"analyzer angle must be finite, got {theta!r}")
    return np.array([math.cos(theta), math.sin(theta)])


@dataclass(frozen=True)
class PureQubit:
    """cos(alpha)|H> + exp(i beta) sin(alpha)|V>."""

    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise InvalidArgumentError("alpha and beta must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array(
            [math.cos(self.alpha), np.exp(1j * self.beta) * math.sin(self.alpha)]
        )

    def density(self) -> "PolarizationState":
        v = self.vector
        return PolarizationState(np.outer(v, v.conj()))


def _check_density(rho: np.ndarray) -> None:
    dim = rho.shape[0]
    if rho.ndim != 2 or rho.shape[1] != dim or dim < 2 or dim & (dim - 1):
        raise InvalidStateError(f"density matrix must be 2^n x 2^n, got shape {rho.shape}")
    herm_err = np.max(np.abs(rho - rho.conj().T))
    if herm_err > HERMITIAN_TOL:
        raise InvalidStateError(f"density matrix not Hermitian (max deviation {herm_err:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise InvalidStateError(f"density matrix trace is {tr.real:.15g}, expected 1")
    lam_min = np.linalg.eigvalsh(rho).min()
    if lam_min < EIGEN_TOL:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lam_min:.3g}")


class PolarizationState:
    """Immutable density matrix of n photons' polarization (dimension 2**n)."""

    __slots__ = ("_rho",)

    def __init__(self, rho, validate: bool = True):
        rho = np.array(rho, dtype=complex)
        if validate:
            _check_density(rho)
        rho.flags.writeable = False
        self._rho = rho

    @property
    def rho(self) -> np.ndarray:
        return self._rho

    @property
    def n_photons(self) -> int:
        return self._rho.shape[0].bit_length() - 1

    def purity(self) -> float:
        return float(np.real(np.trace(self._rho @ self._rho)))

    def __repr__(self):
        return f"{type(self).__name__}(n_photons={self.n_photons})"

    def __eq__(self, other):
        if not isinstance(other, PolarizationState):
            return NotImplemented
        return self._rho.shape == other._rho.shape and np.array_equal(self._rho, other._rho)

    __hash__ = None


class TwoPhotonState(PolarizationState):
    """A 4x4 two-photon polarization density matrix."""

    __slots__ = ()

    def __init__(self, rho, validate: bool = True):
        super().__init__(rho, validate=validate)
        if self._rho.shape != (4, 4):
            raise InvalidStateError(f"two-photon state must be 4x4, got {self._rho.shape}")


def as_state(state) -> PolarizationState:
    if isinstance(state, PolarizationState):
        return state
    if isinstance(state, PureQubit):
        return state.density()
    return PolarizationState(state)


@dataclass(frozen=True)
class AnalyzerConfig:
    """Polarizer angles, one per photon, reduced to [0, pi)."""

    thetas: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(normalize_angle(t) for t in self.thetas))
        if not self.thetas:
            raise InvalidArgumentError("analyzer configuration needs at least one angle")

    @property
    def arity(self) -> int:
        return len(self.thetas)

    def product_vector(self) -> np.ndarray:
        vec = np.ones(1)
        for t in self.thetas:
            vec = np.kron(vec, analyzer_vector(t))
        return vec


def detection_probability(state, config: AnalyzerConfig | Sequence[float]) -> float:
    """Probability that every photon passes its analyzer.

    Computes <a(t1)...a(tn)| rho |a(t1)...a(tn)> for the product of analyzer
    vectors and returns it clamped to [0, 1].
    """
    state = as_state(state)
    if not isinstance(config, AnalyzerConfig):
        config = AnalyzerConfig(tuple(config))
    if config.arity != state.n_photons:
        raise InvalidArgumentError(
            f"{config.arity} analyzer angle(s) for a {state.n_photons}-photon state"
        )
    vec = config.product_vector()
    value = vec @ state.rho @ vec
    if abs(value.imag) >= IMAG_TOL:
        raise CorruptedStateError(f"detection amplitude has imaginary part {value.imag:.3g}")
    return min(max(float(value.real), 0.0), 1.0)


def two_photon_probability_grid(state, theta1, theta2) -> np.ndarray:
    """Vectorized coincidence probability of a two-photon state.

    `theta1` and `theta2` broadcast against each other; the result has the
    broadcast shape.  Used by the optimizer where looping over
    `detection_probability` would be too slow.
    """
    rho = as_state(state).rho
    if rho.shape != (4, 4):
        raise InvalidArgumentError("grid evaluation needs a two-photon state")
    t1, t2 = np.broadcast_arrays(np.asarray(theta1, float), np.asarray(theta2, float))
    c1, s1, c2, s2 = np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)
    vec = np.stack([c1 * c2, c1 * s2, s1 * c2, s1 * s2], axis=-1)
    value = np.einsum("...i,ij,...j->...", vec, rho, vec)
    if value.size and np.max(np.abs(value.imag)) >= IMAG_TOL:
        raise CorruptedStateError("detection amplitude has a non-negligible imaginary part")
    return np.clip(value.real, 0.0, 1.0)


BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")
# sign of (mu_x, mu_y, mu_z) in each Bell-basis eigenvalue 1/4 + sx mu_x + sy mu_y + sz mu_z
_BELL_SIGNS = np.array([[1, -1, 1], [-1, 1, 1], [1, 1, -1], [-1, -1, -1]], dtype=float)


@dataclass(frozen=True)
class BellDiagonalParams:
    """Correlation coefficients of 1/4 I + sum_k mu_k sigma_k (x) sigma_k."""

    mu_x: float
    mu_y: float
    mu_z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_x, self.mu_y, self.mu_z], dtype=float)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues on the Bell states, ordered as BELL_LABELS."""
        return 0.25 + _BELL_SIGNS @ self.as_array()

    def is_physical(self, tol: float = EIGEN_TOL) -> bool:
        return bool(np.all(self.eigenvalues() >= tol))


def bell_eigenvalues(mu: np.ndarray) -> np.ndarray:
    """Bell-basis eigenvalues for an (..., 3) array of correlation triples."""
    return 0.25 + np.asarray(mu, float) @ _BELL_SIGNS.T


def bell_diagonal_state(params: BellDiagonalParams) -> TwoPhotonState:
    lam = params.eigenvalues()
    worst = int(np.argmin(lam))
    if lam[worst] < EIGEN_TOL:
        raise InvalidStateError(
            f"Bell-diagonal parameters {params} give eigenvalue {lam[worst]:.6g} "
            f"on the {BELL_LABELS[worst]} Bell state"
        )
    rho = np.eye(4, dtype=complex) / 4
    for mu, sigma in zip(params.as_array(), PAULIS):
        rho = rho + mu * np.kron(sigma, sigma)
    return TwoPhotonState(rho)


def coincidence_probability_bd(params: BellDiagonalParams | np.ndarray, theta1, theta2):
    """Closed-form coincidence probability for a Bell-diagonal state.

    1/4 + mu_x sin(2 t1) sin(2 t2) + mu_z cos(2 t1) cos(2 t2); mu_y drops out
    for real analyzer vectors.  Accepts scalars or broadcastable arrays; a
    raw array of shape (..., 3) may be passed in place of `params`.
    """
    if isinstance(params, BellDiagonalParams):
        mu_x, mu_z = params.mu_x, params.mu_z
    else:
        mu = np.asarray(params, float)
        mu_x, mu_z = mu[..., 0], mu[..., 2]
    t1 = np.asarray(theta1, float)
    t2 = np.asarray(theta2, float)
    value = (
        0.25
        + mu_x * np.sin(2 * t1) * np.sin(2 * t2)
        + mu_z * np.cos(2 * t1) * np.cos(2 * t2)
    )
    return float(value) if np.ndim(value) == 0 else value


def mix(legit, intruder, r: float) -> PolarizationState:
    """(1 - r) legit + r intruder."""
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise InvalidArgumentError(f"mixing fraction must be in [0, 1], got {r}")
    legit, intruder = as_state(legit), as_state(intruder)
    if legit.rho.shape != intruder.rho.shape:
        raise InvalidArgumentError("cannot mix states of different photon number")
    cls = TwoPhotonState if legit.rho.shape == (4, 4) else PolarizationState
    if r == 0.0:
        return legit
    if r == 1.0:
        return intruder
    return cls((1 - r) * legit.rho + r * intruder.rho)


def _projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def canonical_states() -> dict[str, TwoPhotonState]:
    """The two entangled and two classically correlated reference states.

    psi1 = (|HH> + |VV>)/sqrt2, psi2 = (|HH> - |VV>)/sqrt2,
    omega1 = (|HH><HH| + |VV><VV|)/2, omega2 = (|DD><DD| + |AA><AA|)/2.
    """
    hh = np.kron(KET_H, KET_H)
    vv = np.kron(KET_V, KET_V)
    d = (KET_H + KET_V) / math.sqrt(2)
    a = (KET_H - KET_V) / math.sqrt(2)
    return {
        "psi1": TwoPhotonState(_projector((hh + vv) / math.sqrt(2))),
        "psi2": TwoPhotonState(_projector((hh - vv) / math.sqrt(2))),
        "omega1": TwoPhotonState((_projector(hh) + _projector(vv)) / 2),
        "omega2": TwoPhotonState((_projector(np.kron(d, d)) + _projector(np.kron(a, a))) / 2),
    }


# Correlation triples obtained from Tr(rho sigma_k (x) sigma_k)/4.  For the two
# entangled states mu_y has the opposite sign to the commonly quoted values;
# coincidence probabilities do not depend on mu_y.
CANONICAL_PARAMS = {
    "psi1": BellDiagonalParams(0.25, -0.25, 0.25),
    "psi2": BellDiagonalParams(-0.25, 0.25, 0.25),
    "omega1": BellDiagonalParams(0.0, 0.0, 0.25),
    "omega2": BellDiagonalParams(0.25, 0.0, 0.0),
}


class Correlations(NamedTuple):
    mu_x: float
    mu_y: float
    mu_z: float
    local_a: float
    local_b: float
    off_diagonal: float

    @property
    def params(self) -> BellDiagonalParams:
        return BellDiagonalParams(self.mu_x, self.mu_y, self.mu_z)


def extract_correlations(state) -> Correlations:
    """Diagonal correlation coefficients plus residual magnitudes.

    `local_a`/`local_b` are the Bloch-vector lengths of the two photons and
    `off_diagonal` the norm of the cross correlations Tr(rho s_k (x) s_l),
    k != l.  All residuals vanish on the Bell-diagonal class.
    """
    rho = as_state(state).rho
    if rho.shape != (4, 4):
        raise InvalidArgumentError("correlation extraction needs a two-photon state")

    def expect(op):
        return float(np.real(np.trace(rho @ op)))

    corr = np.array([[expect(np.kron(sk, sl)) for sl in PAULIS] for sk in PAULIS])
    bloch_a = [expect(np.kron(s, IDENTITY)) for s in PAULIS]
    bloch_b = [expect(np.kron(IDENTITY, s)) for s in PAULIS]
    off = corr - np.diag(np.diag(corr))
    return Correlations(
        corr[0, 0] / 4,
        corr[1, 1] / 4,
        corr[2, 2] / 4,
        float(np.linalg.norm(bloch_a)),
        float(np.linalg.norm(bloch_b)),
        float(np.linalg.norm(off)),
    )


def reduced_state(state, keep: int = 0) -> PolarizationState:
    """Single-photon marginal of a two-photon state (keep=0 first, 1 second)."""
    rho = as_state(state).rho
    if rho.shape != (4, 4):
        raise InvalidArgumentError("partial trace needs a two-photon state")
    t = rho.reshape(2, 2, 2, 2)
    if keep == 0:
        red = np.einsum("ijkj->ik", t)
    elif keep == 1:
        red = np.einsum("ijil->jl", t)
    else:
        raise InvalidArgumentError(f"keep must be 0 or 1, got {keep}")
    return PolarizationState(red)
