"""Monte Carlo scenarios for accelerated failure time data.

Data follow ``log T = X beta + sigma * eps`` with an AR(1) Gaussian design.
Censoring is one of: none, ``C ~ Un(0, tau)`` with ``tau`` calibrated to a
target rate, ``C ~ Un(0, b)``, or ``log C = X beta + Un(0, width)``.
Uniform censoring lives on the raw time scale unless ``log_scale`` is set;
the covariate-shifted mechanism lives on the log-time scale.

Every replicate draws from its own ``SeedSequence(seed, spawn_key=(index,))``
stream, so replicates are independent and individually reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Union

import numpy as np

from .survdata import SurvivalDataset

log = logging.getLogger(__name__)

BASE_BETA = np.array([3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0])
CLUSTER_DIM = 20
MAX_RESAMPLES = 100
PILOT_SIZE = 20000
# spawn key reserved for the tau calibration pilot sample
_PILOT_KEY = 2**31 - 1


class ScenarioError(ValueError):
    pass


# --------------------------------------------------------------------------
# scenario description


@dataclass(frozen=True)
class FixedKappa:
    kappa: float


@dataclass(frozen=True)
class FixedSigma:
    sigma: float


@dataclass(frozen=True)
class Cluster:
    h: int
    r2_target: float = 0.75
    symmetric: bool = False

    def __post_init__(self):
        if not 1 <= self.h <= 4:
            raise ScenarioError("cluster h must lie in 1..4")
        if not 0 < self.r2_target < 1:
            raise ScenarioError("r2_target must lie in (0, 1)")


BetaRule = Union[FixedKappa, FixedSigma, Cluster]


@dataclass(frozen=True)
class Normal:
    pass


@dataclass(frozen=True)
class ExtremeValue:
    pass


@dataclass(frozen=True)
class ContaminatedNormal:
    p: float = 0.2
    df: float = 3.0


@dataclass(frozen=True)
class StudentT:
    df: float


ErrorLaw = Union[Normal, ExtremeValue, ContaminatedNormal, StudentT]


@dataclass(frozen=True)
class NoCensoring:
    pass


@dataclass(frozen=True)
class UniformTau:
    target_rate: float = 0.25


@dataclass(frozen=True)
class Uniform:
    b: float
    log_scale: bool = False


@dataclass(frozen=True)
class CovariateShift:
    width: float = 2.0


Censoring = Union[NoCensoring, UniformTau, Uniform, CovariateShift]


@dataclass(frozen=True)
class SimulationScenario:
    n: int = 60
    d: int = 8
    ar_rho: float = 0.5
    beta_rule: BetaRule = FixedKappa(1.0)
    error: ErrorLaw = Normal()
    censoring: Censoring = NoCensoring()
    replicates: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ScenarioError("n must be at least 2")
        if not abs(self.ar_rho) < 1:
            raise ScenarioError("ar_rho must satisfy |rho| < 1")
        if self.replicates < 1:
            raise ScenarioError("replicates must be positive")
        if isinstance(self.beta_rule, Cluster):
            if self.d < 17:
                raise ScenarioError("cluster coefficients need d >= 17")
        elif self.d != BASE_BETA.size:
            raise ScenarioError(f"fixed coefficient rules need d = {BASE_BETA.size}")
        if isinstance(self.censoring, UniformTau) and not 0 < self.censoring.target_rate < 1:
            raise ScenarioError("target_rate must lie in (0, 1)")
        if isinstance(self.error, ContaminatedNormal) and not 0 <= self.error.p <= 1:
            raise ScenarioError("contamination probability must lie in [0, 1]")

    @property
    def sigma(self) -> float:
        """Error scale: the swept value for FixedSigma, 1 otherwise."""
        return self.beta_rule.sigma if isinstance(self.beta_rule, FixedSigma) else 1.0


@dataclass
class GeneratedReplicate:
    dataset: SurvivalDataset
    true_beta: np.ndarray
    true_covariance: np.ndarray
    realized_censoring_rate: float
    resamples: int = 0


# --------------------------------------------------------------------------
# generators


def ar1_covariance(d: int, rho: float) -> np.ndarray:
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gen_ar1_covariates(n: int, d: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Rows i.i.d. N(0, Sigma) with ``Sigma_jk = rho^|j-k|``."""
    if not abs(rho) < 1:
        raise ScenarioError("AR(1) correlation must satisfy |rho| < 1")
    try:
        L = np.linalg.cholesky(ar1_covariance(d, rho))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ScenarioError(f"AR(1) covariance not positive definite: {exc}") from exc
    return rng.standard_normal((n, d)) @ L.T


def make_beta(rule: BetaRule, d: int, rho: float = 0.5, sigma: float = 1.0) -> np.ndarray:
    if isinstance(rule, FixedKappa):
        _need_base_dim(d)
        return BASE_BETA * rule.kappa
    if isinstance(rule, FixedSigma):
        _need_base_dim(d)
        return BASE_BETA.copy()
    beta = cluster_initial_beta(rule.h, d, rule.symmetric)
    quad = float(beta @ ar1_covariance(d, rho) @ beta)
    r2 = rule.r2_target
    return beta * sigma * math.sqrt(r2 / (1 - r2) / quad)


def cluster_initial_beta(h: int, d: int = CLUSTER_DIM, symmetric: bool = False) -> np.ndarray:
    """Two clusters centred on 1-based positions 4 and 13, value ``(h-k)^2`` for ``|k| < h``."""
    beta = np.zeros(d)
    for k in range(-(h - 1), h):
        value = float((h - abs(k)) ** 2 if symmetric else (h - k) ** 2)
        for centre in (4, 13):
            pos = centre + k - 1
            if not 0 <= pos < d:
                raise ScenarioError(f"cluster index {pos + 1} out of range for d={d}")
            beta[pos] = value
    return beta


def _need_base_dim(d):
    if d != BASE_BETA.size:
        raise ScenarioError(f"index out of range: rule needs d = {BASE_BETA.size}, got {d}")


def theoretical_r2(beta, cov, sigma: float = 1.0) -> float:
    q = float(beta @ cov @ beta)
    return q / (q + sigma**2)


def gen_errors(law: ErrorLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(law, Normal):
        return rng.standard_normal(n)
    if isinstance(law, ExtremeValue):
        # log of a unit exponential: minimum Gumbel, mean -0.5772
        return np.log(rng.standard_exponential(n))
    if isinstance(law, StudentT):
        if law.df < 1:
            raise ScenarioError("t degrees of freedom must be at least 1")
        return rng.standard_t(law.df, n)
    contaminated = rng.random(n) < law.p
    z = rng.standard_normal(n)
    t = rng.standard_t(law.df, n)
    return np.where(contaminated, t, z)


def replicate_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    key = (index,) if attempt == 0 else (index, attempt)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _draw_log_times(scenario: SimulationScenario, beta, rng):
    X = gen_ar1_covariates(scenario.n, scenario.d, scenario.ar_rho, rng)
    eps = gen_errors(scenario.error, scenario.n, rng)
    return X, X @ beta + scenario.sigma * eps


def _censor(scenario: SimulationScenario, X, beta, log_t, rng, tau):
    """Return ``(log U, status)``."""
    cens = scenario.censoring
    n = log_t.size
    if isinstance(cens, NoCensoring):
        return log_t, np.ones(n, dtype=int)
    if isinstance(cens, CovariateShift):
        log_c = X @ beta + cens.width * rng.random(n)
    else:
        upper = tau if isinstance(cens, UniformTau) else cens.b
        c = upper * (1.0 - rng.random(n))  # in (0, upper]
        if isinstance(cens, Uniform) and cens.log_scale:
            log_c = c
        else:
            log_c = np.log(c)
    status = (log_t <= log_c).astype(int)
    return np.minimum(log_t, log_c), status


def gen_replicate(scenario: SimulationScenario, replicate_index: int, tau: float | None = None
                  ) -> GeneratedReplicate:
    """Draw replicate ``replicate_index``; an all-censored draw is redrawn."""
    cov = ar1_covariance(scenario.d, scenario.ar_rho)
    beta = make_beta(scenario.beta_rule, scenario.d, scenario.ar_rho, scenario.sigma)
    if isinstance(scenario.censoring, UniformTau) and tau is None:
        tau = calibrate_tau(scenario, scenario.censoring.target_rate)
    for attempt in range(MAX_RESAMPLES + 1):
        rng = replicate_rng(scenario.seed, replicate_index, attempt)
        X, log_t = _draw_log_times(scenario, beta, rng)
        log_u, status = _censor(scenario, X, beta, log_t, rng, tau)
        if status.any():
            break
        log.warning("replicate %d attempt %d fully censored; redrawing", replicate_index, attempt)
    else:
        raise ScenarioError(
            f"replicate {replicate_index}: every one of {MAX_RESAMPLES + 1} draws was fully censored"
        )
    time = np.exp(log_u)
    if not np.all((time > 0) & np.isfinite(time)):
        raise ScenarioError(f"replicate {replicate_index}: log-times outside the float range")
    data = SurvivalDataset(time, status, X, tuple(f"x{j + 1}" for j in range(scenario.d)))
    return GeneratedReplicate(data, beta, cov, float(1 - status.mean()), attempt)


def _pilot_event_times(scenario: SimulationScenario, m: int = PILOT_SIZE) -> np.ndarray:
    beta = make_beta(scenario.beta_rule, scenario.d, scenario.ar_rho, scenario.sigma)
    rng = replicate_rng(scenario.seed, _PILOT_KEY)
    pilot = replace(scenario, n=m)
    _, log_t = _draw_log_times(pilot, beta, rng)
    return np.exp(log_t)


def uniform_censoring_rate(t_pilot, tau: float) -> float:
    """Monte Carlo estimate of ``P(C < T)`` for ``C ~ Un(0, tau)``: mean of ``min(T/tau, 1)``."""
    return float(np.mean(np.minimum(t_pilot / tau, 1.0)))


def calibrate_tau(scenario: SimulationScenario, target_rate: float, tol: float = 1e-3,
                  pilot: np.ndarray | None = None) -> float:
    """Bisection (in ``log tau``) for the uniform upper bound giving ``target_rate`` censoring."""
    if not 0 < target_rate < 1:
        raise ScenarioError("target_rate must lie in (0, 1)")
    t = _pilot_event_times(scenario) if pilot is None else np.asarray(pilot, dtype=float)
    lo = hi = float(np.median(t))
    for _ in range(200):
        if uniform_censoring_rate(t, lo) > target_rate:
            break
        lo /= 2
    for _ in range(200):
        if uniform_censoring_rate(t, hi) < target_rate:
            break
        hi *= 2
    if not (uniform_censoring_rate(t, lo) > target_rate > uniform_censoring_rate(t, hi)):
        raise ScenarioError(f"cannot bracket tau for censoring rate {target_rate}")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        rate = uniform_censoring_rate(t, mid)
        if abs(rate - target_rate) <= tol:
            return mid
        if rate > target_rate:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def prepare(scenario: SimulationScenario):
    """Per-scenario constants shared by all replicates (currently just tau)."""
    if isinstance(scenario.censoring, UniformTau):
        return calibrate_tau(scenario, scenario.censoring.target_rate)
    return None


# --------------------------------------------------------------------------
# presets and scenario files


@dataclass
class ScenarioPoint:
    parameter: str
    value: float
    scenario: SimulationScenario


@dataclass
class Study:
    name: str
    points: list
    losses: tuple = ("gehan", "coxph")
    notes: str = ""


def preset(name: str, replicates: int = 100, seed: int = 0, error: ErrorLaw | None = None,
           n: int | None = None) -> Study:
    """Named experiment grids.

    fig3
        uncensored, ``kappa`` in {1/4, 1/2, 3/4, 1}; losses l2, gehan, coxph.
    fig4
        cluster rule ``h`` in 1..4, R^2 = 3/4, d = 20, 25% uniform censoring.
    fig5
        ``sigma`` in {0.5, 1, 1.5, 2} with ``C ~ Un(0, 5)``; losses ipw-l2, gehan.
    fig6
        ``t_r`` errors, r in {1, 3, 5, 10, 15, 20}, ``log C = X beta + Un(0, 2)``.
    """
    common = dict(replicates=replicates, seed=seed)
    if name == "fig3":
        law = error or Normal()
        pts = [
            ScenarioPoint("kappa", k, SimulationScenario(
                n=n or 60, d=8, beta_rule=FixedKappa(k), error=law, **common))
            for k in (0.25, 0.5, 0.75, 1.0)
        ]
        return Study(name, pts, ("l2", "gehan", "coxph"))
    if name == "fig4":
        pts = [
            ScenarioPoint("h", h, SimulationScenario(
                n=n or 100, d=CLUSTER_DIM, beta_rule=Cluster(h, 0.75), error=error or Normal(),
                censoring=UniformTau(0.25), **common))
            for h in (1, 2, 3, 4)
        ]
        return Study(name, pts, ("gehan", "coxph"))
    if name == "fig5":
        law = error or Normal()
        pts = [
            ScenarioPoint("sigma", s, SimulationScenario(
                n=n or 60, d=8, beta_rule=FixedSigma(s), error=law,
                censoring=Uniform(5.0), **common))
            for s in (0.5, 1.0, 1.5, 2.0)
        ]
        return Study(name, pts, ("ipw-l2", "gehan"))
    if name == "fig6":
        pts = [
            ScenarioPoint("df", r, SimulationScenario(
                n=n or 60, d=8, beta_rule=FixedSigma(1.0), error=StudentT(r),
                censoring=CovariateShift(2.0), **common))
            for r in (1, 3, 5, 10, 15, 20)
        ]
        return Study(name, pts, ("ipw-l2", "gehan"))
    raise ScenarioError(f"unknown preset '{name}' (expected fig3, fig4, fig5 or fig6)")


PRESETS = ("fig3", "fig4", "fig5", "fig6")

_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_scenario_text(text: str) -> tuple[SimulationScenario, tuple]:
    """Parse a ``key=value`` scenario document.

    Recognised keys: n, d, ar_rho, replicates, seed, losses (comma list),
    beta_rule (fixed_kappa | fixed_sigma | cluster) with kappa / sigma /
    h, r2, symmetric; error (normal | extreme_value | contaminated |
    student_t) with p, df; censoring (none | uniform_tau | uniform |
    covariate_shift) with target_rate / b, log_scale / width.
    """
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in kv:
            raise ScenarioError(f"line {lineno}: duplicate key '{key}'")
        kv[key] = value

    used: set[str] = set()

    def get(key, conv, default=None):
        used.add(key)
        if key not in kv:
            if default is None:
                raise ScenarioError(f"missing key '{key}'")
            return default
        try:
            if conv is bool:
                return _BOOL[kv[key].lower()]
            return conv(kv[key])
        except (ValueError, KeyError):
            raise ScenarioError(f"bad value for '{key}': {kv[key]!r}") from None

    rule_name = get("beta_rule", str, "fixed_kappa")
    if rule_name == "fixed_kappa":
        rule = FixedKappa(get("kappa", float, 1.0))
    elif rule_name == "fixed_sigma":
        rule = FixedSigma(get("sigma", float, 1.0))
    elif rule_name == "cluster":
        rule = Cluster(get("h", int), get("r2", float, 0.75), get("symmetric", bool, False))
    else:
        raise ScenarioError(f"unknown beta_rule '{rule_name}'")

    err_name = get("error", str, "normal")
    if err_name == "normal":
        law = Normal()
    elif err_name == "extreme_value":
        law = ExtremeValue()
    elif err_name == "contaminated":
        law = ContaminatedNormal(get("p", float, 0.2), get("df", float, 3.0))
    elif err_name == "student_t":
        law = StudentT(get("df", float))
    else:
        raise ScenarioError(f"unknown error '{err_name}'")

    cens_name = get("censoring", str, "none")
    if cens_name == "none":
        cens = NoCensoring()
    elif cens_name == "uniform_tau":
        cens = UniformTau(get("target_rate", float, 0.25))
    elif cens_name == "uniform":
        cens = Uniform(get("b", float), get("log_scale", bool, False))
    elif cens_name == "covariate_shift":
        cens = CovariateShift(get("width", float, 2.0))
    else:
        raise ScenarioError(f"unknown censoring '{cens_name}'")

    default_d = CLUSTER_DIM if isinstance(rule, Cluster) else BASE_BETA.size
    scenario = SimulationScenario(
        n=get("n", int, 60), d=get("d", int, default_d), ar_rho=get("ar_rho", float, 0.5),
        beta_rule=rule, error=law, censoring=cens,
        replicates=get("replicates", int, 100), seed=get("seed", int, 0),
    )
    losses = tuple(s.strip() for s in get("losses", str, "gehan,coxph").split(",") if s.strip())
    unknown = set(kv) - used
    if unknown:
        raise ScenarioError(f"unknown or inapplicable keys: {', '.join(sorted(unknown))}")
    return scenario, losses


def load_scenario(path) -> Study:
    scenario, losses = parse_scenario_text(Path(path).read_text(encoding="utf-8"))
    return Study(Path(path).stem, [ScenarioPoint("scenario", 0.0, scenario)], losses)


def scenario_to_text(scenario: SimulationScenario, losses=()) -> str:
    lines = [f"n={scenario.n}", f"d={scenario.d}", f"ar_rho={scenario.ar_rho!r}",
             f"replicates={scenario.replicates}", f"seed={scenario.seed}"]
    rule = scenario.beta_rule
    if isinstance(rule, FixedKappa):
        lines += ["beta_rule=fixed_kappa", f"kappa={rule.kappa!r}"]
    elif isinstance(rule, FixedSigma):
        lines += ["beta_rule=fixed_sigma", f"sigma={rule.sigma!r}"]
    else:
        lines += ["beta_rule=cluster", f"h={rule.h}", f"r2={rule.r2_target!r}",
                  f"symmetric={str(rule.symmetric).lower()}"]
    law = scenario.error
    names = {Normal: "normal", ExtremeValue: "extreme_value",
             ContaminatedNormal: "contaminated", StudentT: "student_t"}
    lines.append(f"error={names[type(law)]}")
    lines += [f"{f.name}={getattr(law, f.name)!r}" for f in fields(law)]
    cens = scenario.censoring
    cnames = {NoCensoring: "none", UniformTau: "uniform_tau", Uniform: "uniform",
              CovariateShift: "covariate_shift"}
    lines.append(f"censoring={cnames[type(cens)]}")
    for f in fields(cens):
        v = getattr(cens, f.name)
        lines.append(f"{f.name}={str(v).lower() if isinstance(v, bool) else repr(v)}")
    if losses:
        lines.append("losses=" + ",".join(losses))
    return "\n".join(lines) + "\n"
