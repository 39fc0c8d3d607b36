"""Jamming detection: visibilities, the likelihood-ratio test, and the
worst-case (max over analyzers, min over intruders) separation statistic.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import erfc

from . import polarization as pol
from .errors import (
    DegenerateChannelError,
    InfeasibleLevelError,
    InvalidArgumentError,
    UndefinedThresholdError,
)

PROB_SLACK = 1e-12
# probabilities below this are treated as exact zeros in the grid search
ZERO_SNAP = 1e-14


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian visibility noise with standard deviation `sigma` over `trials` samples."""

    sigma: float = 0.1
    trials: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidArgumentError(f"trials must be a positive integer, got {self.trials}")


@dataclass(frozen=True)
class TestParams:
    """Likelihood threshold and prior probability of jamming."""

    __test__ = False  # not a pytest class

    lam: float = 1.0
    prior: float = 0.5

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.prior < 1:
            raise InvalidArgumentError(f"prior must lie in (0, 1), got {self.prior}")


class Verdict(str, enum.Enum):
    NO_INTRUSION = "no-intrusion"
    INTRUSION = "intrusion"


@dataclass(frozen=True)
class DetectionReport:
    v_expected: float
    v_observed: float
    d: float
    verdict: Verdict
    p_detect: float
    p_false_alarm: float
    threshold: float = math.nan

    def as_dict(self) -> dict:
        return {
            "v_expected": self.v_expected,
            "v_observed": self.v_observed,
            "d": self.d,
            "verdict": self.verdict.value,
            "p_detect": self.p_detect,
            "p_false_alarm": self.p_false_alarm,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class JammingScenario:
    rho1: pol.PolarizationState
    rho2: pol.PolarizationState
    rho_e: pol.PolarizationState
    r: float
    config: pol.AnalyzerConfig

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise InvalidArgumentError(f"intercept fraction must be in [0, 1], got {self.r}")
        for name in ("rho1", "rho2", "rho_e"):
            object.__setattr__(self, name, pol.as_state(getattr(self, name)))
        if not isinstance(self.config, pol.AnalyzerConfig):
            object.__setattr__(self, "config", pol.AnalyzerConfig(tuple(self.config)))

    def probabilities(self) -> tuple[float, float, float]:
        """Clean detection probabilities (P1, P2) and the intruder's PE."""
        return tuple(
            pol.detection_probability(s, self.config) for s in (self.rho1, self.rho2, self.rho_e)
        )

    def jammed_probabilities(self) -> tuple[float, float]:
        p1, p2, pe = self.probabilities()
        return (1 - self.r) * p1 + self.r * pe, (1 - self.r) * p2 + self.r * pe


def _check_prob(p: float, name: str) -> float:
    p = float(p)
    if not (-PROB_SLACK <= p <= 1 + PROB_SLACK):
        raise InvalidArgumentError(f"{name} must be a probability, got {p}")
    return min(max(p, 0.0), 1.0)


def visibility(p1: float, p2: float) -> float:
    """|p1 - p2| / (p1 + p2), defined as 0 when both vanish."""
    p1 = _check_prob(p1, "p1")
    p2 = _check_prob(p2, "p2")
    total = p1 + p2
    if total == 0:
        return 0.0
    return abs(p1 - p2) / total


def _visibility_array(p1, p2):
    total = p1 + p2
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, np.abs(p1 - p2) / safe, 0.0)


def jammed_visibility_single_photon(v_clean: float, r: float, overlap: float) -> float:
    """Visibility left after a fraction `r` of single photons is replaced.

    `overlap` is <a(theta)|rho_E|a(theta)>.  Valid for the orthogonal pair
    |H>, |V>, whose clean probabilities sum to one; the intruder adds
    r * overlap to each of the two jammed probabilities, hence the factor 2.
    """
    if not 0.0 <= r <= 1.0:
        raise InvalidArgumentError(f"intercept fraction must be in [0, 1], got {r}")
    overlap = _check_prob(overlap, "overlap")
    denom = 1 - r + 2 * r * overlap
    if denom <= 0:
        raise DegenerateChannelError("no light reaches the analyzer (r = 1, orthogonal intruder)")
    return (1 - r) * v_clean / denom


def d_statistic(v0: float, v1: float, noise: NoiseModel) -> float:
    """sqrt(M) (v1 - v0) / sigma, sign preserved."""
    return math.sqrt(noise.trials) * (v1 - v0) / noise.sigma


def _log_lambda_over_d(d: float, params: TestParams) -> float:
    log_lam = math.log(params.lam)
    if log_lam == 0.0:
        return 0.0
    if d == 0:
        return math.copysign(math.inf, log_lam)
    return log_lam / d


def gaussian_tail(x: float) -> float:
    """Q(x) = P(Z > x) for a standard normal Z."""
    return 0.5 * float(erfc(x / math.sqrt(2.0)))


def decide(observations: Sequence[float], noise: NoiseModel, params: TestParams, d: float) -> Verdict:
    """Log-likelihood ratio test between zero mean (H0) and mean d (H1).

    `observations` are visibility samples measured relative to the no-jamming
    mean and oriented so that jamming pushes them positive (for a visibility
    drop, pass expected minus observed).  H0 is accepted iff the normalized sum
    is strictly below ln(lambda)/d + d/2; equality goes to H1.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.size == 0:
        raise InvalidArgumentError("decide needs at least one observation")
    if d == 0 and params.lam != 1.0:
        raise UndefinedThresholdError("ln(lambda)/d is undefined for d = 0 and lambda != 1")
    threshold = _log_lambda_over_d(d, params) + d / 2
    total = float(np.sum(obs / (noise.sigma * math.sqrt(noise.trials))))
    return Verdict.NO_INTRUSION if total < threshold else Verdict.INTRUSION


def detection_probability(d: float, params: TestParams = TestParams()) -> float:
    """Probability of correctly accepting H1 at separation d."""
    if d < 0:
        raise InvalidArgumentError(f"d must be non-negative, got {d}")
    if math.isinf(d):
        return 1.0
    return gaussian_tail(_log_lambda_over_d(d, params) - d / 2)


def false_alarm_probability(d: float, params: TestParams = TestParams()) -> float:
    """Probability of accepting H1 when there is no jamming."""
    if d < 0:
        raise InvalidArgumentError(f"d must be non-negative, got {d}")
    if math.isinf(d):
        return 0.0
    return gaussian_tail(_log_lambda_over_d(d, params) + d / 2)


def jamming_level(scenario: JammingScenario) -> float:
    """Largest visibility between a legitimate image and its jammed version."""
    p1, p2, _ = scenario.probabilities()
    q1, q2 = scenario.jammed_probabilities()
    return max(visibility(p1, q1), visibility(p2, q2))


def evaluate_d_fixed(scenario: JammingScenario, noise: NoiseModel) -> float:
    """Visibility drop caused by the scenario, in units of sigma / sqrt(M)."""
    p1, p2, _ = scenario.probabilities()
    q1, q2 = scenario.jammed_probabilities()
    return d_statistic(visibility(q1, q2), visibility(p1, p2), noise)


# --------------------------------------------------------------------------
# worst-case search


@dataclass(frozen=True)
class SearchSettings:
    """Resolution and tolerances of the max-min search.

    The intruder's Bell-diagonal parameters are gridded with `mu_points` per
    axis (points outside the physical tetrahedron dropped), analyzer angles
    with `theta_points` per axis over [0, pi).  With a target level the
    intercept fraction is solved exactly at the lower edge of the
    `level_band`; without one it is gridded with `r_points` on [0, r_max].
    """

    theta_points: int = 33
    mu_points: int = 17
    r_points: int = 33
    level_band: float = 0.01
    r_max: float = 1.0
    refine: bool = True
    tol: float = 1e-6
    max_iter: int = 400
    intruder_angle_points: int = 33
    threads: int = 1

    def __post_init__(self):
        if min(self.theta_points, self.mu_points, self.intruder_angle_points) < 8:
            raise InvalidArgumentError("grid resolutions must be at least 8 per axis")
        if self.r_points < 2:
            raise InvalidArgumentError("r_points must be at least 2")
        if not 0.0 <= self.r_max <= 1.0:
            raise InvalidArgumentError("r_max must lie in [0, 1]")
        if self.level_band < 0:
            raise InvalidArgumentError("level_band must be non-negative")

    def mu_grid(self) -> np.ndarray:
        axis = np.linspace(-0.25, 0.25, self.mu_points)
        mu = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
        keep = np.all(pol.bell_eigenvalues(mu) >= pol.EIGEN_TOL, axis=1)
        return mu[keep]

    def theta_axis(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.theta_points, endpoint=False)


class InnerResult(NamedTuple):
    delta_v: float
    intruder: pol.BellDiagonalParams | None
    r: float
    level: float


@dataclass(frozen=True)
class WorstCaseResult:
    d: float
    thetas: tuple[float, float]
    intruder: pol.BellDiagonalParams
    r: float
    level: float
    delta_v: float
    v_clean: float
    v_jammed: float
    grid_d: float
    settings: SearchSettings = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "theta1": self.thetas[0],
            "theta2": self.thetas[1],
            "mu_x": self.intruder.mu_x,
            "mu_y": self.intruder.mu_y,
            "mu_z": self.intruder.mu_z,
            "r": self.r,
            "level": self.level,
            "delta_v": self.delta_v,
            "v_clean": self.v_clean,
            "v_jammed": self.v_jammed,
            "grid_d": self.grid_d,
        }


def _snap(p):
    p = np.asarray(p, dtype=float)
    return np.where(np.abs(p) < ZERO_SNAP, 0.0, p)


def _band(target: float, search: SearchSettings) -> tuple[float, float]:
    return max(target - search.level_band, 0.0), min(target + search.level_band, 1.0)


def _constrained_r(p1, p2, pe, lo, hi, r_max):
    """Smallest intercept fraction whose jamming level enters [lo, hi].

    Each branch's visibility V(P_j, P_j') grows monotonically with r, so the
    first r reaching `lo` is solved in closed form per branch.  A branch with
    P_j = 0 < PE jumps straight to level 1 for any r > 0; r = 0 stands for
    that limit and is only admissible if hi >= 1.  Returns (r, level) with
    r = inf where infeasible.
    """
    if lo <= 0.0:
        zeros = np.zeros(np.broadcast(p1, p2, pe).shape)
        return zeros, zeros
    r = np.full(np.broadcast(p1, p2, pe).shape, np.inf)
    for pj in (p1, p2):
        den = np.abs(pj - pe) - lo * (pe - pj)
        ok = (pj > 0) & (den > 0)
        rj = np.where(ok, 2 * pj * lo / np.where(ok, den, 1.0), np.inf)
        r = np.minimum(r, rj)
    level = np.full(r.shape, lo)
    jump = ((p1 == 0) | (p2 == 0)) & (pe > 0)
    if hi >= 1.0:
        r = np.where(jump, 0.0, r)
        level = np.where(jump, 1.0, level)
    else:
        r = np.where(jump, np.inf, r)
    r = np.where(r <= r_max, r, np.inf)
    return r, level


def _jammed_drop(p1, p2, pe, r):
    v0 = _visibility_array(p1, p2)
    q1 = (1 - r) * p1 + r * pe
    q2 = (1 - r) * p2 + r * pe
    return v0 - _visibility_array(q1, q2)


def _inner_grid(p1, p2, pe, target, search):
    """Inner minimum over the gridded intruder family.

    p1, p2 have shape (T,), pe has shape (T, K).  Returns per-theta minimum
    drop, argmin index over K, r and level at the argmin.
    """
    p1 = p1[:, None]
    p2 = p2[:, None]
    if target is None:
        best = np.full(pe.shape, np.inf)
        best_r = np.zeros(pe.shape)
        for r in np.linspace(0.0, search.r_max, search.r_points):
            dv = _jammed_drop(p1, p2, pe, r)
            better = dv < best
            best = np.where(better, dv, best)
            best_r = np.where(better, r, best_r)
        level = np.maximum(
            _visibility_array(p1, (1 - best_r) * p1 + best_r * pe),
            _visibility_array(p2, (1 - best_r) * p2 + best_r * pe),
        )
    else:
        lo, hi = _band(target, search)
        best_r, level = _constrained_r(p1, p2, pe, lo, hi, search.r_max)
        finite = np.isfinite(best_r)
        best = np.where(finite, _jammed_drop(p1, p2, pe, np.where(finite, best_r, 0.0)), np.inf)
    k = np.argmin(best, axis=1)
    rows = np.arange(best.shape[0])
    return best[rows, k], k, best_r[rows, k], level[rows, k]


def _legit_probs(rho1, rho2, t1, t2):
    return (
        _snap(pol.two_photon_probability_grid(rho1, t1, t2)),
        _snap(pol.two_photon_probability_grid(rho2, t1, t2)),
    )


def _intruder_probs(mu, t1, t2):
    return _snap(pol.coincidence_probability_bd(mu[None, :, :], np.asarray(t1)[:, None], np.asarray(t2)[:, None]))


def _scalar_drop(p1, p2, pe, target, search):
    """Float-only twin of `_inner_grid` for a single intruder candidate."""
    p1, p2, pe = (0.0 if abs(x) < ZERO_SNAP else x for x in (p1, p2, pe))
    if target is None:
        rs = np.linspace(0.0, search.r_max, search.r_points)
        return float(np.min(_jammed_drop(p1, p2, pe, rs)))
    lo, hi = _band(target, search)
    if lo <= 0.0:
        return 0.0
    if (p1 == 0 or p2 == 0) and pe > 0:
        if hi < 1.0:
            return math.inf
        r = 0.0
    else:
        r = math.inf
        for pj in (p1, p2):
            den = abs(pj - pe) - lo * (pe - pj)
            if pj > 0 and den > 0:
                r = min(r, 2 * pj * lo / den)
    if r > search.r_max:
        return math.inf
    total = p1 + p2
    v0 = abs(p1 - p2) / total if total > 0 else 0.0
    q1 = (1 - r) * p1 + r * pe
    q2 = (1 - r) * p2 + r * pe
    qt = q1 + q2
    return v0 - (abs(q1 - q2) / qt if qt > 0 else 0.0)


def _refine_intruder(rho1, rho2, thetas, target, search, start_mu, start_value):
    """Nelder-Mead polish of the intruder parameters at fixed analyzers."""
    t1, t2 = thetas
    p1, p2 = (float(x[0]) for x in _legit_probs(rho1, rho2, np.array([t1]), np.array([t2])))
    sx = math.sin(2 * t1) * math.sin(2 * t2)
    cz = math.cos(2 * t1) * math.cos(2 * t2)

    def objective(mu):
        lam_min = min(0.25 + mu[0] - mu[1] + mu[2], 0.25 - mu[0] + mu[1] + mu[2],
                      0.25 + mu[0] + mu[1] - mu[2], 0.25 - mu[0] - mu[1] - mu[2])
        if lam_min < pol.EIGEN_TOL:
            return 10.0 - lam_min
        value = _scalar_drop(p1, p2, 0.25 + mu[0] * sx + mu[2] * cz, target, search)
        return value if math.isfinite(value) else 10.0

    res = minimize(
        objective,
        np.asarray(start_mu, float),
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": search.tol * 1e-3, "maxiter": search.max_iter,
                 "initial_simplex": _simplex(start_mu, 0.02)},
    )
    if res.fun < start_value and pol.bell_eigenvalues(res.x).min() >= pol.EIGEN_TOL:
        return res.x, float(res.fun)
    return np.asarray(start_mu, float), start_value


def _simplex(x0, step):
    x0 = np.asarray(x0, float)
    pts = [x0]
    for i in range(x0.size):
        p = x0.copy()
        p[i] += step if p[i] <= 0 else -step
        pts.append(p)
    return np.array(pts)


def inner_min(rho1, rho2, thetas, target_level: float | None, search: SearchSettings = SearchSettings()) -> InnerResult:
    """Intruder's best response at fixed analyzer angles.

    Minimizes the visibility drop over Bell-diagonal intruder states and
    intercept fractions, subject to the jamming-level band when
    `target_level` is given.  Returns delta_v = inf (intruder None) when the
    level cannot be reached at these angles.
    """
    mu = search.mu_grid()
    t1 = np.array([pol.normalize_angle(thetas[0])])
    t2 = np.array([pol.normalize_angle(thetas[1])])
    p1, p2 = _legit_probs(rho1, rho2, t1, t2)
    value, k, r, level = _inner_grid(p1, p2, _intruder_probs(mu, t1, t2), target_level, search)
    if not np.isfinite(value[0]):
        return InnerResult(math.inf, None, math.nan, math.nan)
    best_mu, best_value = mu[k[0]], float(value[0])
    if search.refine and best_value > 0:
        best_mu, best_value = _refine_intruder(
            rho1, rho2, (t1[0], t2[0]), target_level, search, best_mu, best_value
        )
    pe = _intruder_probs(best_mu[None, :], t1, t2)
    _, _, r, level = _inner_grid(p1, p2, pe, target_level, search)
    return InnerResult(best_value, pol.BellDiagonalParams(*map(float, best_mu)), float(r[0]), float(level[0]))


def _grid_stage(rho1, rho2, target, search):
    axis = search.theta_axis()
    mu = search.mu_grid()

    def row(i):
        t1 = np.full(axis.size, axis[i])
        p1, p2 = _legit_probs(rho1, rho2, t1, axis)
        return _inner_grid(p1, p2, _intruder_probs(mu, t1, axis), target, search)

    n = axis.size
    if search.threads and search.threads > 1:
        with ThreadPoolExecutor(max_workers=search.threads) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    value = np.stack([r_[0] for r_ in rows])
    kidx = np.stack([r_[1] for r_ in rows])
    # infeasible analyzer settings cannot host a scenario at this level
    value = np.where(np.isfinite(value), value, -np.inf)
    return axis, mu, value, kidx


def worst_case_d(
    rho1,
    rho2,
    target_level: float | None,
    noise: NoiseModel = NoiseModel(),
    search: SearchSettings = SearchSettings(),
) -> WorstCaseResult:
    """max over analyzer angles of min over intruders of the visibility drop, over sigma.

    The intruder family is every Bell-diagonal state combined with an
    intercept fraction in [0, r_max].  With `target_level` the intruder must
    keep the jamming level within `search.level_band` of it.  Coarse grid
    first, then Nelder-Mead on the analyzer angles (each evaluation solving a
    refined inner problem).  Deterministic: ties resolve to the first grid
    index in row-major order.
    """
    rho1, rho2 = pol.as_state(rho1), pol.as_state(rho2)
    if target_level is not None and not 0.0 <= target_level <= 1.0:
        raise InvalidArgumentError(f"target level must lie in [0, 1], got {target_level}")
    axis, mu, value, kidx = _grid_stage(rho1, rho2, target_level, search)
    if not np.isfinite(value).any():
        raise InfeasibleLevelError(f"no intruder reaches jamming level {target_level}")
    flat = int(np.argmax(value))
    i, j = divmod(flat, axis.size)
    best_theta = (float(axis[i]), float(axis[j]))
    grid_value = float(value[i, j])

    if search.refine and grid_value > 0:
        def neg_inner(t):
            res = inner_min(rho1, rho2, t, target_level, search)
            return -res.delta_v if math.isfinite(res.delta_v) else 10.0

        start_inner = inner_min(rho1, rho2, best_theta, target_level, search)
        step = math.pi / search.theta_points
        res = minimize(
            neg_inner,
            np.array(best_theta),
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": search.tol, "maxiter": search.max_iter,
                     "initial_simplex": np.array([best_theta,
                                                  (best_theta[0] + step, best_theta[1]),
                                                  (best_theta[0], best_theta[1] + step)])},
        )
        cand = (pol.normalize_angle(res.x[0]), pol.normalize_angle(res.x[1]))
        cand_inner = inner_min(rho1, rho2, cand, target_level, search)
        if math.isfinite(cand_inner.delta_v) and cand_inner.delta_v > start_inner.delta_v:
            best_theta, inner = cand, cand_inner
        else:
            inner = start_inner
    else:
        inner = inner_min(rho1, rho2, best_theta, target_level, search)

    cfg = pol.AnalyzerConfig(best_theta)
    p1 = pol.detection_probability(rho1, cfg)
    p2 = pol.detection_probability(rho2, cfg)
    pe = pol.coincidence_probability_bd(inner.intruder, *best_theta)
    r = inner.r
    v_clean = visibility(p1, p2)
    v_jammed = visibility((1 - r) * p1 + r * pe, (1 - r) * p2 + r * pe)
    delta = max(inner.delta_v, 0.0)
    return WorstCaseResult(
        d=math.sqrt(noise.trials) * delta / noise.sigma,
        thetas=best_theta,
        intruder=inner.intruder,
        r=r,
        level=inner.level,
        delta_v=delta,
        v_clean=v_clean,
        v_jammed=v_jammed,
        grid_d=math.sqrt(noise.trials) * max(grid_value, 0.0) / noise.sigma,
        settings=search,
    )


class CurvePoint(NamedTuple):
    level: float
    d: float | None
    p_detect: float | None
    p_false_alarm: float | None
    note: str = ""


def detection_curve(
    pair,
    levels: Sequence[float],
    noise: NoiseModel = NoiseModel(),
    search: SearchSettings = SearchSettings(),
    params: TestParams = TestParams(),
) -> list[CurvePoint]:
    """Worst-case detection and false-alarm probability at each jamming level."""
    levels = [float(x) for x in levels]
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise InvalidArgumentError("levels must be sorted")
    if any(not 0.0 <= x <= 1.0 for x in levels):
        raise InvalidArgumentError("levels must lie in [0, 1]")
    rho1, rho2 = pair
    out = []
    for level in levels:
        try:
            res = worst_case_d(rho1, rho2, level, noise, search)
        except InfeasibleLevelError as exc:
            out.append(CurvePoint(level, None, None, None, str(exc)))
            continue
        out.append(CurvePoint(level, res.d, detection_probability(res.d, params),
                              false_alarm_probability(res.d, params)))
    return out


# --------------------------------------------------------------------------
# single-photon example: |H>, |V> imaging against a pure-state intruder


class SinglePhotonResult(NamedTuple):
    d: float
    theta: float
    alpha: float
    beta: float
    delta_v: float
    r: float


def _single_photon_drop(theta, r, alpha, beta):
    v_clean = abs(math.cos(2 * theta))
    overlap = abs(math.cos(theta) * math.cos(alpha) + np.exp(1j * beta) * math.sin(theta) * math.sin(alpha)) ** 2
    return v_clean - jammed_visibility_single_photon(v_clean, r, min(overlap, 1.0))


def single_photon_inner_min(theta: float, r: float, search: SearchSettings = SearchSettings()):
    """Intruder's best pure state against |H>/|V> imaging at analyzer `theta`.

    Returns (delta_v, alpha, beta).
    """
    n = search.intruder_angle_points
    alphas = np.linspace(0.0, math.pi, n, endpoint=False)
    betas = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    A, B = np.meshgrid(alphas, betas, indexing="ij")
    c, s = math.cos(theta), math.sin(theta)
    overlap = np.abs(c * np.cos(A) + np.exp(1j * B) * s * np.sin(A)) ** 2
    v_clean = abs(math.cos(2 * theta))
    with np.errstate(divide="ignore", invalid="ignore"):
        drop = v_clean - (1 - r) * v_clean / (1 - r + 2 * r * overlap)
    drop = np.where(np.isfinite(drop), drop, np.inf)
    i, j = np.unravel_index(int(np.argmin(drop)), drop.shape)
    best = (float(A[i, j]), float(B[i, j]), float(drop[i, j]))
    if search.refine and best[2] > 0:
        res = minimize(
            lambda x: _single_photon_drop(theta, r, x[0], x[1]),
            np.array(best[:2]),
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": search.max_iter},
        )
        if res.fun < best[2]:
            best = (float(res.x[0]), float(res.x[1]), float(res.fun))
    return best[2], best[0], best[1]


def worst_case_d_single_photon(r: float, noise: NoiseModel = NoiseModel(),
                               search: SearchSettings = SearchSettings()) -> SinglePhotonResult:
    """Worst-case separation for |H>/|V> imaging; the intruder always nulls it."""
    if not 0.0 <= r < 1.0:
        raise InvalidArgumentError(f"single-photon search needs r in [0, 1), got {r}")
    best = None
    for theta in search.theta_axis():
        dv, alpha, beta = single_photon_inner_min(theta, r, search)
        if best is None or dv > best.delta_v:
            best = SinglePhotonResult(0.0, float(theta), alpha, beta, dv, r)
    d = math.sqrt(noise.trials) * max(best.delta_v, 0.0) / noise.sigma
    return best._replace(d=d)
