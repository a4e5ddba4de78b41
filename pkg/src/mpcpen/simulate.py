"""Synthetic ascertained family data for testing and calibration studies.

Families follow a fixed three-generation template around a proband who is
rejection-sampled until at least one primary cancer is observed before
censoring, mimicking recruitment through affected cases. Carrier statuses
propagate from the proband outward (one carrier parent, siblings and
offspring carriers with probability one half, non-blood members wildtype),
gap times are exponential with the carrier/history log-linear rate, and a
share of non-proband genotypes is masked afterwards.

Gap times act directly as ages in years; draws landing beyond the time
horizon are clipped to it. See ``docs/simulation_template.md`` for the
pedigree wiring.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from mpcpen.pedigree import Family, FamilySet, Individual

#: Members of the template besides the sibling branches: the proband's
#: parents, the proband and spouse, and the proband's two children.
_CORE_SIZE = 14
_N_SIBLINGS = 4


@dataclass(frozen=True)
class SimConfig:
    """Generator settings; defaults reproduce the calibration-study scenario."""

    n_families: int = 100
    family_size: int = 30
    proband_carrier_prob: float = 0.001
    beta1: float = 6.0
    beta2: float = 1.0
    baseline_rate: float = 0.0005
    phi: float = 1.0
    censor_rate: float = 0.5
    genotype_missing_frac: float = 0.7
    seed: int = 0
    t_max: float = 100.0

    def __post_init__(self):
        for name in ("proband_carrier_prob", "genotype_missing_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("baseline_rate", "phi", "censor_rate", "t_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_families <= 0:
            raise ValueError("n_families must be positive")
        if self.family_size < _CORE_SIZE:
            raise ValueError(f"family_size must be at least {_CORE_SIZE}")


@dataclass(frozen=True)
class MemberGaps:
    """Raw simulation outcome for one member before conversion to ages."""

    w1: float
    w2: float
    observed1: bool
    observed2: bool
    censor_age: float

    @property
    def onsets(self) -> tuple[float, ...]:
        if self.observed2:
            return (self.w1, self.w1 + self.w2)
        if self.observed1:
            return (self.w1,)
        return ()


def simulate_member_gaps(
    g: int, xi: float, cfg: SimConfig, rng: np.random.Generator
) -> MemberGaps:
    """Draw the first two gap times and censoring for one member.

    W1 and W2 are exponential with rates xi*lambda0*exp(beta1*g) and
    xi*lambda0*exp(beta1*g + beta2); censoring is exponential with rate
    ``censor_rate`` and truncated at the time horizon.
    """
    if g not in (0, 1):
        raise ValueError("g must be 0 or 1")
    if xi <= 0:
        raise ValueError("xi must be positive")
    rate1 = xi * cfg.baseline_rate * np.exp(cfg.beta1 * g)
    rate2 = xi * cfg.baseline_rate * np.exp(cfg.beta1 * g + cfg.beta2)
    w1 = rng.exponential(1.0 / rate1)
    w2 = rng.exponential(1.0 / rate2)
    censor = min(rng.exponential(1.0 / cfg.censor_rate), cfg.t_max)
    observed1 = w1 <= censor
    observed2 = observed1 and (w1 + w2 <= censor)
    return MemberGaps(w1=w1, w2=w2, observed1=observed1, observed2=observed2, censor_age=censor)


@dataclass(frozen=True)
class _Role:
    """Template slot: identity, parent slots, and how carrier status is set."""

    id: str
    father: Optional[str]
    mother: Optional[str]
    kind: str  # parent | proband | spouse | proband_child | sibling | sibling_spouse | sibling_child
    branch: Optional[str] = None  # sibling id for that branch's children


def _template_roles(family_size: int) -> list[_Role]:
    roles = [
        _Role("f", None, None, "parent"),
        _Role("m", None, None, "parent"),
        _Role("p", "f", "m", "proband"),
        _Role("sp", None, None, "spouse"),
        _Role("pc1", "p", "sp", "proband_child"),
        _Role("pc2", "p", "sp", "proband_child"),
    ]
    for i in range(1, _N_SIBLINGS + 1):
        roles.append(_Role(f"s{i}", "f", "m", "sibling"))
        roles.append(_Role(f"ss{i}", None, None, "sibling_spouse"))
    extra = family_size - _CORE_SIZE
    base, rem = divmod(extra, _N_SIBLINGS)
    for i in range(1, _N_SIBLINGS + 1):
        count = base + (1 if i <= rem else 0)
        for j in range(1, count + 1):
            # Sibling branches are wired sibling=father, spouse=mother; the
            # sexes assigned later match.
            roles.append(_Role(f"sc{i}_{j}", f"s{i}", f"ss{i}", "sibling_child", branch=f"s{i}"))
    return roles


def _assign_genotypes(
    roles: list[_Role], proband_carrier: bool, rng: np.random.Generator
) -> dict[str, int]:
    """Carrier statuses propagated outward from the proband."""
    g = {r.id: 0 for r in roles}
    g["p"] = int(proband_carrier)
    if not proband_carrier:
        return g
    carrier_parent = "f" if rng.random() < 0.5 else "m"
    g[carrier_parent] = 1
    for r in roles:
        if r.kind in ("sibling", "proband_child"):
            g[r.id] = int(rng.random() < 0.5)
    for r in roles:
        if r.kind == "sibling_child":
            g[r.id] = int(rng.random() < 0.5) if g[r.branch] == 1 else 0
    return g


def simulate_family(
    cfg: SimConfig, rng: np.random.Generator, family_id: str = "F0001"
) -> tuple[Family, dict]:
    """One ascertained family plus its truth record (frailty, genotypes).

    The proband's genotype, the family frailty and the proband's event data
    are redrawn together until the proband has an observed cancer, so the
    retained families carry the ascertainment enrichment in both carrier
    status and frailty.
    """
    for _ in range(1_000_000):
        xi = rng.gamma(cfg.phi, 1.0 / cfg.phi)
        proband_carrier = rng.random() < cfg.proband_carrier_prob
        proband_gaps = simulate_member_gaps(int(proband_carrier), xi, cfg, rng)
        if proband_gaps.onsets:
            break
    else:  # pragma: no cover
        raise RuntimeError("proband rejection sampling failed to terminate")

    roles = _template_roles(cfg.family_size)
    genotypes = _assign_genotypes(roles, proband_carrier, rng)

    sexes = {"f": 1, "m": 0, "p": int(rng.random() < 0.5)}
    sexes["sp"] = 1 - sexes["p"]
    for i in range(1, _N_SIBLINGS + 1):
        sexes[f"s{i}"] = 1
        sexes[f"ss{i}"] = 0
    for r in roles:
        if r.id not in sexes:
            sexes[r.id] = int(rng.random() < 0.5)

    members = []
    for r in roles:
        if r.id == "p":
            gaps = proband_gaps
        else:
            gaps = simulate_member_gaps(genotypes[r.id], xi, cfg, rng)
        onsets = tuple(t for t in gaps.onsets if t <= cfg.t_max)
        if r.id == "p":
            observed: Optional[int] = genotypes[r.id]
        elif rng.random() < cfg.genotype_missing_frac:
            observed = None
        else:
            observed = genotypes[r.id]
        father, mother = r.father, r.mother
        if father is not None and sexes[father] != 1:
            father, mother = mother, father
        members.append(
            Individual(
                id=r.id,
                father_id=father,
                mother_id=mother,
                sex=sexes[r.id],
                genotype_obs=observed,
                onset_ages=onsets,
                censor_age=gaps.censor_age,
                is_proband=r.id == "p",
            )
        )
    truth = {
        "family_id": family_id,
        "xi": float(xi),
        "genotypes": {r.id: genotypes[r.id] for r in roles},
    }
    return Family(family_id=family_id, members=tuple(members)), truth


def simulate_dataset(cfg: SimConfig) -> tuple[FamilySet, dict]:
    """Generate ``cfg.n_families`` independent families plus the truth record.

    Each family gets its own RNG stream spawned from the master seed, so the
    output is reproducible and families may be generated in parallel.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_families)
    families = []
    truths = []
    for i, ss in enumerate(streams):
        fam, truth = simulate_family(
            cfg, np.random.default_rng(ss), family_id=f"F{i + 1:04d}"
        )
        families.append(fam)
        truths.append(truth)
    truth = {
        "config": asdict(cfg),
        "true_params": {
            "beta1": cfg.beta1,
            "beta2": cfg.beta2,
            "baseline_rate": cfg.baseline_rate,
            "phi": cfg.phi,
        },
        "families": truths,
    }
    return FamilySet(families=tuple(families), t_max=cfg.t_max), truth
