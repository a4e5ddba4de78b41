"""Random-walk Metropolis-Hastings-within-Gibbs posterior sampling.

One sweep updates every beta coordinate with a Gaussian random walk, every
Bernstein weight, every family frailty, and the frailty precision phi with
log-normal random walks. Log-normal proposals are asymmetric; the Hastings
correction reduces to the ratio of proposed to current value, which is
applied inside :func:`mh_step`.

Posterior draws retain the full parameter state plus the data log-likelihood
at each draw so that the deviance information criterion can be computed
afterwards without touching the sampler again.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO, Union

import numpy as np

from mpcpen.intensity import COVARIATE_SETS, TERM_LABELS, ModelParams, covariate_terms
from mpcpen.likelihood import AscertainmentConfig, LikelihoodEvaluator
from mpcpen.pedigree import FamilySet

_LOG_2PI = math.log(2.0 * math.pi)

#: Floor used when a density with shape < 1 is requested at exactly zero.
_POSITIVE_FLOOR = 1e-300


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the vague priors."""

    beta_prior_sd: float = 100.0
    gamma_prior_shape: float = 0.01
    gamma_prior_rate: float = 0.01
    phi_prior_shape: float = 0.01
    phi_prior_rate: float = 0.01

    def __post_init__(self):
        for name in (
            "beta_prior_sd",
            "gamma_prior_shape",
            "gamma_prior_rate",
            "phi_prior_shape",
            "phi_prior_rate",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ChainConfig:
    """Length, proposal scales and model structure of one MCMC run."""

    iterations: int = 100_000
    burn_in: int = 5_000
    thinning: int = 1
    seed: int = 0
    frailty_mode: bool = True
    covariate_set: str = "M4"
    m_degree: int = 5
    step_beta: float = 0.1
    step_gamma: float = 0.3
    step_phi: float = 0.3
    step_xi: float = 0.3
    event_policy: str = "truncate"

    def __post_init__(self):
        if self.iterations <= 0 or self.burn_in < 0 or self.thinning <= 0:
            raise ValueError("iterations, burn_in, thinning must be positive")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if (self.iterations - self.burn_in) % self.thinning != 0:
            raise ValueError("iterations - burn_in must be divisible by thinning")
        covariate_terms(self.covariate_set)

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning


def _normal_logpdf(x: float, sd: float) -> float:
    return -0.5 * _LOG_2PI - math.log(sd) - 0.5 * (x / sd) ** 2


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    x = max(x, _POSITIVE_FLOOR)
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def log_prior(params: ModelParams, cfg: PriorConfig) -> float:
    """Joint log prior density of (beta, gamma[, phi])."""
    ll = sum(_normal_logpdf(b, cfg.beta_prior_sd) for b in params.beta)
    ll += sum(_gamma_logpdf(g, cfg.gamma_prior_shape, cfg.gamma_prior_rate) for g in params.gamma)
    if params.phi is not None:
        ll += _gamma_logpdf(params.phi, cfg.phi_prior_shape, cfg.phi_prior_rate)
    return ll


def lognormal_adjustment(old: float, proposed: float) -> float:
    """Hastings correction for a log-normal random walk: proposed / old."""
    if old <= 0 or proposed <= 0:
        raise ValueError("log-normal adjustment needs positive values")
    return proposed / old


def phi_log_posterior(phi: float, frailties: np.ndarray, cfg: PriorConfig) -> float:
    """Unnormalized log posterior of the frailty precision given the frailties.

    Product of Gamma(phi, phi) densities over the family frailties times the
    Gamma(nu_a, nu_b) prior.
    """
    if phi <= 0:
        raise ValueError("phi must be positive")
    xi = np.asarray(frailties, dtype=float)
    n_fam = xi.shape[0]
    return (
        (n_fam * phi + cfg.phi_prior_shape - 1.0) * math.log(phi)
        - cfg.phi_prior_rate * phi
        + (phi - 1.0) * float(np.log(xi).sum())
        - phi * float(xi.sum())
        - n_fam * math.lgamma(phi)
    )


def mh_accept(rng: np.random.Generator, log_ratio: float) -> bool:
    """Metropolis accept/reject with acceptance probability min(1, e^log_ratio)."""
    if math.isnan(log_ratio):
        return False
    if log_ratio >= 0.0:
        return True
    return rng.random() < math.exp(log_ratio)


def mh_step(
    value: float,
    current_logpost: float,
    log_target: Callable[[float], float],
    rng: np.random.Generator,
    step: float,
    positive: bool = False,
) -> tuple[float, float, bool]:
    """One random-walk MH update of a scalar.

    Gaussian increments on the real line; log-normal increments (with the
    proposed/current Hastings adjustment) when ``positive``. Returns
    ``(value, log target at value, accepted)``.
    """
    z = rng.standard_normal()
    if positive:
        proposed = value * math.exp(step * z)
        log_adj = math.log(lognormal_adjustment(value, proposed))
    else:
        proposed = value + step * z
        log_adj = 0.0
    proposed_logpost = log_target(proposed)
    if mh_accept(rng, proposed_logpost - current_logpost + log_adj):
        return proposed, proposed_logpost, True
    return value, current_logpost, False


@dataclass
class PosteriorSamples:
    """Retained MCMC draws plus metadata needed to reuse them downstream."""

    beta: np.ndarray
    gamma: np.ndarray
    phi: Optional[np.ndarray]
    xi: Optional[np.ndarray]
    loglik: np.ndarray
    covariate_set: str
    m_degree: int
    t_max: float
    psi_a: float
    correction_enabled: bool
    event_policy: str
    seed: int
    acceptance: dict[str, float] = field(default_factory=dict)
    family_ids: list[str] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    @property
    def frailty_mode(self) -> bool:
        return self.phi is not None

    @property
    def term_labels(self) -> list[str]:
        return [TERM_LABELS[t] for t in covariate_terms(self.covariate_set)]

    def params_at(self, draw: int) -> ModelParams:
        return ModelParams(
            beta=self.beta[draw],
            gamma=self.gamma[draw],
            phi=float(self.phi[draw]) if self.phi is not None else None,
            m_degree=self.m_degree,
            covariate_set=self.covariate_set,
            t_max=self.t_max,
        )

    def posterior_mean_params(self) -> ModelParams:
        return ModelParams(
            beta=self.beta.mean(axis=0),
            gamma=self.gamma.mean(axis=0),
            phi=float(self.phi.mean()) if self.phi is not None else None,
            m_degree=self.m_degree,
            covariate_set=self.covariate_set,
            t_max=self.t_max,
        )

    def column_names(self) -> list[str]:
        cols = [f"beta_{lbl}" for lbl in self.term_labels]
        cols += [f"gamma_{m}" for m in range(1, self.m_degree + 1)]
        if self.phi is not None:
            cols.append("phi")
        if self.xi is not None:
            cols += [f"xi_{i}" for i in range(self.xi.shape[1])]
        cols.append("loglik")
        return cols

    def to_csv(self, stream: TextIO) -> None:
        """One row per retained draw; column layout from :meth:`column_names`."""
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.column_names())
        blocks = [self.beta, self.gamma]
        if self.phi is not None:
            blocks.append(self.phi[:, None])
        if self.xi is not None:
            blocks.append(self.xi)
        blocks.append(self.loglik[:, None])
        data = np.hstack(blocks)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(
        cls,
        stream: TextIO,
        t_max: float = 100.0,
        psi_a: float = 0.0006,
        correction_enabled: bool = True,
        event_policy: str = "truncate",
        seed: int = 0,
    ) -> "PosteriorSamples":
        """Rebuild samples from the CSV layout written by :meth:`to_csv`."""
        reader = csv.reader(stream)
        header = next(reader)
        beta_cols = [c for c in header if c.startswith("beta_")]
        gamma_cols = [c for c in header if c.startswith("gamma_")]
        xi_cols = [c for c in header if c.startswith("xi_")]
        has_phi = "phi" in header
        if "loglik" not in header:
            raise ValueError("posterior CSV is missing the loglik column")
        labels = [c[len("beta_"):] for c in beta_cols]
        label_to_term = {v: k for k, v in TERM_LABELS.items()}
        try:
            terms = tuple(label_to_term[lbl] for lbl in labels)
        except KeyError as exc:
            raise ValueError(f"unknown beta column label {exc}") from None
        matches = [name for name, t in COVARIATE_SETS.items() if t == terms]
        if not matches:
            raise ValueError(f"beta columns {labels} match no known covariate set")
        data = np.array([[float(v) for v in row] for row in reader])
        if data.size == 0:
            raise ValueError("posterior CSV has no draws")
        col = {name: i for i, name in enumerate(header)}
        return cls(
            beta=data[:, [col[c] for c in beta_cols]],
            gamma=data[:, [col[c] for c in gamma_cols]],
            phi=data[:, col["phi"]] if has_phi else None,
            xi=data[:, [col[c] for c in xi_cols]] if xi_cols else None,
            loglik=data[:, col["loglik"]],
            covariate_set=matches[0],
            m_degree=len(gamma_cols),
            t_max=t_max,
            psi_a=psi_a,
            correction_enabled=correction_enabled,
            event_policy=event_policy,
            seed=seed,
        )

    def summary(self) -> dict[str, dict[str, float]]:
        """Median, sd and central 95% interval for every scalar parameter."""
        out: dict[str, dict[str, float]] = {}

        def describe(name: str, draws: np.ndarray) -> None:
            lo, med, hi = np.quantile(draws, [0.025, 0.5, 0.975])
            out[name] = {
                "median": float(med),
                "sd": float(draws.std(ddof=1)) if draws.shape[0] > 1 else 0.0,
                "q2.5": float(lo),
                "q97.5": float(hi),
            }

        for j, lbl in enumerate(self.term_labels):
            describe(f"beta_{lbl}", self.beta[:, j])
        for m in range(self.m_degree):
            describe(f"gamma_{m + 1}", self.gamma[:, m])
        describe("baseline_mean_per_year", self.gamma.sum(axis=1) / self.t_max)
        if self.phi is not None:
            describe("phi", self.phi)
        return out


def _check_finite_start(per_family: np.ndarray, family_ids: list[str]) -> None:
    bad = np.nonzero(~np.isfinite(per_family))[0]
    if bad.size:
        names = [family_ids[i] for i in bad[:10]]
        raise ValueError(
            f"non-finite initial log-likelihood for families {names}; "
            "check event histories against the model support"
        )


def run_chain(
    fs: FamilySet,
    cfg: ChainConfig,
    priors: PriorConfig = PriorConfig(),
    ascertainment: AscertainmentConfig = AscertainmentConfig(),
) -> PosteriorSamples:
    """Run the full Gibbs sweep and return retained draws.

    Deterministic given ``cfg.seed``. Initialization: beta = 0, gamma = 1/M,
    phi = 1, xi = 1.
    """
    ev = LikelihoodEvaluator(
        fs, cfg.covariate_set, cfg.m_degree, ascertainment, cfg.event_policy
    )
    rng = np.random.default_rng(cfg.seed)
    n_terms = ev.n_terms
    m_deg = cfg.m_degree
    n_fam = ev.n_families

    beta = np.zeros(n_terms)
    gamma = np.full(m_deg, 1.0 / m_deg)
    phi = 1.0
    xi = np.ones(n_fam)

    cache = ev.prepare(beta, gamma)
    data_ll, per_family = ev.total_loglik(cache, xi)
    _check_finite_start(per_family, ev.family_ids)

    n_draws = cfg.n_draws
    draws_beta = np.empty((n_draws, n_terms))
    draws_gamma = np.empty((n_draws, m_deg))
    draws_phi = np.empty(n_draws) if cfg.frailty_mode else None
    draws_xi = np.empty((n_draws, n_fam)) if cfg.frailty_mode else None
    draws_ll = np.empty(n_draws)

    proposals = {"beta": 0, "gamma": 0, "xi": 0, "phi": 0}
    accepts = {"beta": 0, "gamma": 0, "xi": 0, "phi": 0}

    sd_b = priors.beta_prior_sd
    keep = 0
    for it in range(cfg.iterations):
        for j in range(n_terms):
            proposals["beta"] += 1
            prop = beta.copy()
            prop[j] += cfg.step_beta * rng.standard_normal()
            prop_cache = ev.prepare(prop, gamma)
            prop_ll, prop_pf = ev.total_loglik(prop_cache, xi)
            log_ratio = (
                prop_ll
                - data_ll
                + _normal_logpdf(prop[j], sd_b)
                - _normal_logpdf(beta[j], sd_b)
            )
            if mh_accept(rng, log_ratio):
                beta, cache, data_ll, per_family = prop, prop_cache, prop_ll, prop_pf
                accepts["beta"] += 1

        for m in range(m_deg):
            proposals["gamma"] += 1
            prop = gamma.copy()
            prop[m] = gamma[m] * math.exp(cfg.step_gamma * rng.standard_normal())
            prop_cache = ev.prepare(beta, prop)
            prop_ll, prop_pf = ev.total_loglik(prop_cache, xi)
            log_ratio = (
                prop_ll
                - data_ll
                + _gamma_logpdf(prop[m], priors.gamma_prior_shape, priors.gamma_prior_rate)
                - _gamma_logpdf(gamma[m], priors.gamma_prior_shape, priors.gamma_prior_rate)
                + math.log(prop[m] / gamma[m])
            )
            if mh_accept(rng, log_ratio):
                gamma, cache, data_ll, per_family = prop, prop_cache, prop_ll, prop_pf
                accepts["gamma"] += 1

        if cfg.frailty_mode:
            for i in range(n_fam):
                proposals["xi"] += 1
                prop_xi = xi[i] * math.exp(cfg.step_xi * rng.standard_normal())
                prop_fam_ll = ev.family_loglik(cache, i, prop_xi)
                log_ratio = (
                    prop_fam_ll
                    - per_family[i]
                    + (phi - 1.0) * (math.log(prop_xi) - math.log(xi[i]))
                    - phi * (prop_xi - xi[i])
                    + math.log(prop_xi / xi[i])
                )
                if mh_accept(rng, log_ratio):
                    data_ll += prop_fam_ll - per_family[i]
                    per_family[i] = prop_fam_ll
                    xi[i] = prop_xi
                    accepts["xi"] += 1

            proposals["phi"] += 1
            phi, _, acc = mh_step(
                phi,
                phi_log_posterior(phi, xi, priors),
                lambda p: phi_log_posterior(p, xi, priors),
                rng,
                cfg.step_phi,
                positive=True,
            )
            accepts["phi"] += acc

        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            draws_beta[keep] = beta
            draws_gamma[keep] = gamma
            if cfg.frailty_mode:
                draws_phi[keep] = phi
                draws_xi[keep] = xi
            draws_ll[keep] = data_ll
            keep += 1

    acceptance = {
        k: (accepts[k] / proposals[k]) if proposals[k] else float("nan") for k in proposals
    }
    return PosteriorSamples(
        beta=draws_beta,
        gamma=draws_gamma,
        phi=draws_phi,
        xi=draws_xi,
        loglik=draws_ll,
        covariate_set=cfg.covariate_set,
        m_degree=cfg.m_degree,
        t_max=fs.t_max,
        psi_a=ascertainment.psi_a,
        correction_enabled=ascertainment.correction_enabled,
        event_policy=cfg.event_policy,
        seed=cfg.seed,
        acceptance=acceptance,
        family_ids=ev.family_ids,
    )


def dic(samples: PosteriorSamples, fs: FamilySet) -> float:
    """Deviance information criterion from stored per-draw log-likelihoods.

    DIC = mean deviance + p_D, with p_D = mean deviance - deviance at the
    posterior means of all parameters (frailties included in frailty mode).
    """
    if samples.n_draws == 0:
        raise ValueError("empty posterior sample")
    ev = LikelihoodEvaluator(
        fs,
        samples.covariate_set,
        samples.m_degree,
        AscertainmentConfig(samples.psi_a, samples.correction_enabled),
        samples.event_policy,
    )
    mean_dev = float(-2.0 * samples.loglik.mean())
    cache = ev.prepare(samples.beta.mean(axis=0), samples.gamma.mean(axis=0))
    xi_hat = samples.xi.mean(axis=0) if samples.xi is not None else np.ones(ev.n_families)
    ll_hat, _ = ev.total_loglik(cache, xi_hat)
    p_d = mean_dev - (-2.0 * ll_hat)
    return mean_dev + p_d


def effective_sample_size(draws: np.ndarray) -> float:
    """ESS via the initial positive sequence of autocorrelation pair sums."""
    x = np.asarray(draws, dtype=float)
    n = x.shape[0]
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / var
    s = 0.0
    for k in range(1, n // 2):
        pair = rho[2 * k - 1] + rho[2 * k]
        if pair < 0:
            break
        s += pair
    return float(n / (1.0 + 2.0 * s))


def mcse(draws: np.ndarray) -> float:
    """Monte-Carlo standard error of the mean of a chain."""
    x = np.asarray(draws, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(effective_sample_size(x)))


def split_rhat(draws: np.ndarray) -> float:
    """Potential scale reduction factor from the two halves of one chain."""
    x = np.asarray(draws, dtype=float)
    n = (x.shape[0] // 2) * 2
    if n < 4:
        return float("nan")
    halves = x[:n].reshape(2, n // 2)
    w = halves.var(axis=1, ddof=1).mean()
    b = (n // 2) * halves.mean(axis=1).var(ddof=1)
    if w == 0.0:
        return 1.0
    var_plus = (n // 2 - 1) / (n // 2) * w + b / (n // 2)
    return float(math.sqrt(var_plus / w))
