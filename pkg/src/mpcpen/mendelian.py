"""Genotype probability machinery for single-locus autosomal inheritance.

Provides Hardy-Weinberg founder priors, Mendelian transmission, and the
recursive peeling evaluation of the familywise likelihood: the joint
probability of every member's event history and the observed carrier
statuses, marginalized over missing genotypes. A direct enumeration over
genotype configurations is kept alongside as the test oracle.

Internally genotypes live in the three-state allele space (aa / Aa / AA);
phenotype likelihoods only ever depend on the carrier collapse (Aa and AA
behave identically), but three states are required for correct transmission
weights.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Mapping, Optional

import numpy as np

from mpcpen import _peelkernel
from mpcpen._peelkernel import (
    NEG_INF,
    P_CHILD,
    P_ZERO,
    ROOT,
    V_ACC,
    V_FROM_P_F,
    V_FROM_P_M,
    V_FROM_PAIR,
    V_LOAD,
    V_PRIOR,
)
from mpcpen.pedigree import Family, Individual

#: Mutated-allele population frequency for TP53 in Western populations.
DEFAULT_ALLELE_FREQ = 0.0006

#: Enumeration guard for the brute-force oracle.
MAX_BRUTE_CONFIGS = 3 ** 12


class Genotype(IntEnum):
    """Single-locus genotype; ``HET`` and ``HOM`` are both carriers."""

    WILDTYPE = 0  # aa
    HET = 1       # Aa
    HOM = 2       # AA

    @property
    def carrier(self) -> int:
        return 0 if self is Genotype.WILDTYPE else 1


@dataclass(frozen=True)
class GenotypeDist:
    """Probability distribution over the three genotypes."""

    probs: tuple[float, float, float]

    def __post_init__(self):
        if any(p < 0 for p in self.probs):
            raise ValueError("genotype probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("genotype probabilities must sum to 1")

    def __getitem__(self, g: Genotype) -> float:
        return self.probs[int(g)]

    @property
    def pr_carrier(self) -> float:
        return self.probs[1] + self.probs[2]


def founder_prior(psi_a: float) -> GenotypeDist:
    """Hardy-Weinberg genotype distribution implied by allele frequency ``psi_a``."""
    if not 0.0 <= psi_a <= 1.0:
        raise ValueError(f"allele frequency {psi_a} outside [0, 1]")
    q = 1.0 - psi_a
    return GenotypeDist((q * q, 2.0 * psi_a * q, psi_a * psi_a))


#: P(transmit mutant allele | parent genotype), indexed by Genotype.
_TRANSMIT_A = (0.0, 0.5, 1.0)


def transmission_prob(child: Genotype, father: Genotype, mother: Genotype) -> float:
    """Mendelian probability of the child genotype given both parents."""
    pf = _TRANSMIT_A[int(father)]
    pm = _TRANSMIT_A[int(mother)]
    return (
        (1.0 - pf) * (1.0 - pm),
        pf * (1.0 - pm) + (1.0 - pf) * pm,
        pf * pm,
    )[int(child)]


def transmission_matrix() -> np.ndarray:
    """(father, mother, child) transmission tensor."""
    t = np.empty((3, 3, 3))
    for gf, gm, gc in itertools.product(range(3), repeat=3):
        t[gf, gm, gc] = transmission_prob(Genotype(gc), Genotype(gf), Genotype(gm))
    return t


_LOG_T = None


def _log_transmission() -> np.ndarray:
    global _LOG_T
    if _LOG_T is None:
        with np.errstate(divide="ignore"):
            _LOG_T = np.log(transmission_matrix())
    return _LOG_T


def log_founder_prior(psi_a: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(founder_prior(psi_a).probs))


def genotype_support(genotype_obs: Optional[int]) -> tuple[int, ...]:
    """Genotype states consistent with a carrier-level observation."""
    if genotype_obs is None:
        return (0, 1, 2)
    if genotype_obs == 0:
        return (0,)
    if genotype_obs == 1:
        return (1, 2)
    raise ValueError(f"genotype observation {genotype_obs} outside {{0, 1, None}}")


#: Log-domain support masks indexed by observation code (0, 1, missing).
OBS_MASK = {
    0: np.array([0.0, NEG_INF, NEG_INF]),
    1: np.array([NEG_INF, 0.0, 0.0]),
    None: np.zeros(3),
}


@dataclass(frozen=True)
class PeelProgram:
    """Compiled peeling instructions for one family.

    ``instrs`` reference member rows by position in ``Family.members``; the
    executor adds a row offset so programs can run against a matrix stacked
    across families.
    """

    instrs: np.ndarray
    n_v: int
    n_p: int
    n_members: int


def compile_peeling(fam: Family) -> PeelProgram:
    """Build the peeling program for a loop-free family.

    The recursion roots each connected component at the proband when
    present, then alternates between collecting an individual's full table
    (own likelihood, founder prior, and messages from adjacent nuclear
    families) and computing the message a nuclear family sends to its
    connector. Raises ``ValueError`` when a loop is encountered.
    """
    members = fam.members
    row = {m.id: i for i, m in enumerate(members)}
    nfs = fam.nuclear_families()
    adjacency: dict[str, list[int]] = {m.id: [] for m in members}
    for k, (father, mother, children) in enumerate(nfs):
        if father == mother:
            raise ValueError(f"family {fam.family_id}: individual {father} is both parents")
        adjacency[father].append(k)
        adjacency[mother].append(k)
        for child in children:
            adjacency[child].append(k)

    instrs: list[tuple[int, int, int, int, int]] = []
    counters = {"v": 0, "p": 0}
    seen_ind: set[str] = set()
    seen_nf: set[int] = set()

    def new_slot(kind: str) -> int:
        slot = counters[kind]
        counters[kind] = slot + 1
        return slot

    def collect(mid: str, from_nf: Optional[int]) -> int:
        if mid in seen_ind:
            raise ValueError(
                f"family {fam.family_id}: pedigree loop detected at individual {mid}"
            )
        seen_ind.add(mid)
        v = new_slot("v")
        instrs.append((V_LOAD, v, row[mid], 0, 0))
        if fam.member(mid).is_founder:
            instrs.append((V_PRIOR, v, 0, 0, 0))
        for k in adjacency[mid]:
            if k == from_nf:
                continue
            mv = factor_message(k, mid)
            instrs.append((V_ACC, v, mv, 0, 0))
        return v

    def factor_message(k: int, to_mid: str) -> int:
        if k in seen_nf:
            raise ValueError(f"family {fam.family_id}: pedigree loop detected")
        seen_nf.add(k)
        father, mother, children = nfs[k]
        p = new_slot("p")
        instrs.append((P_ZERO, p, 0, 0, 0))
        for child in children:
            if child == to_mid:
                continue
            cv = collect(child, k)
            instrs.append((P_CHILD, p, cv, 0, 0))
        out = new_slot("v")
        if to_mid == father:
            mv = collect(mother, k)
            instrs.append((V_FROM_P_F, out, p, mv, 0))
        elif to_mid == mother:
            fv = collect(father, k)
            instrs.append((V_FROM_P_M, out, p, fv, 0))
        else:
            fv = collect(father, k)
            mv = collect(mother, k)
            instrs.append((V_FROM_PAIR, out, p, fv, mv))
        return out

    roots = sorted(range(len(members)), key=lambda i: not members[i].is_proband)
    for i in roots:
        mid = members[i].id
        if mid in seen_ind:
            continue
        v = collect(mid, None)
        instrs.append((ROOT, v, 0, 0, 0))

    return PeelProgram(
        instrs=np.asarray(instrs, dtype=np.int64).reshape(-1, 5),
        n_v=counters["v"],
        n_p=max(counters["p"], 1),
        n_members=len(members),
    )


def execute_program(program: PeelProgram, pen3: np.ndarray, psi_a: float) -> float:
    """Run a compiled program against a (n_members, 3) log-likelihood table."""
    V, P = _peelkernel.workspaces(program.n_v, program.n_p)
    return _peelkernel.run_program(
        program.instrs,
        0,
        program.instrs.shape[0],
        0,
        np.ascontiguousarray(pen3, dtype=np.float64),
        _log_transmission(),
        log_founder_prior(psi_a),
        V,
        P,
    )


MemberLoglik = Callable[[Individual, Genotype], float]


def _resolve_observed(
    fam: Family, observed: Optional[Mapping[str, Optional[int]]]
) -> dict[str, Optional[int]]:
    obs = {m.id: m.genotype_obs for m in fam.members}
    if observed is not None:
        for mid, value in observed.items():
            if mid not in obs:
                raise KeyError(f"unknown member id {mid}")
            obs[mid] = value
    return obs


def build_pen3(
    fam: Family,
    member_loglik: Optional[MemberLoglik],
    observed: Optional[Mapping[str, Optional[int]]] = None,
) -> np.ndarray:
    """Member-by-genotype log-likelihood table with observation masks applied.

    ``member_loglik=None`` gives constant likelihood 1, which turns the peel
    into the marginal probability of the observed genotypes.
    """
    obs = _resolve_observed(fam, observed)
    pen3 = np.full((len(fam.members), 3), NEG_INF)
    for i, m in enumerate(fam.members):
        for g in genotype_support(obs[m.id]):
            pen3[i, g] = 0.0 if member_loglik is None else member_loglik(m, Genotype(g))
    return pen3


def peel_family(
    fam: Family,
    member_loglik: Optional[MemberLoglik],
    observed: Optional[Mapping[str, Optional[int]]] = None,
    psi_a: float = DEFAULT_ALLELE_FREQ,
) -> float:
    """Log of Pr(all member histories, observed genotypes).

    Missing genotypes are summed out with Mendelian weights; observed carrier
    statuses restrict each member's genotype support. Runs in time linear in
    family size. Returns ``-inf`` only when the data are impossible.
    """
    program = compile_peeling(fam)
    pen3 = build_pen3(fam, member_loglik, observed)
    return execute_program(program, pen3, psi_a)


def brute_force_family_loglik(
    fam: Family,
    member_loglik: Optional[MemberLoglik],
    observed: Optional[Mapping[str, Optional[int]]] = None,
    psi_a: float = DEFAULT_ALLELE_FREQ,
) -> float:
    """Enumeration oracle for :func:`peel_family`.

    Sums the joint probability over every genotype configuration consistent
    with the observations. Guarded to at most ``MAX_BRUTE_CONFIGS``
    configurations.
    """
    obs = _resolve_observed(fam, observed)
    members = fam.members
    supports = [genotype_support(obs[m.id]) for m in members]
    n_configs = 1
    for s in supports:
        n_configs *= len(s)
        if n_configs > MAX_BRUTE_CONFIGS:
            raise ValueError(
                f"family {fam.family_id} too large for enumeration "
                f"(> {MAX_BRUTE_CONFIGS} genotype configurations)"
            )

    row = {m.id: i for i, m in enumerate(members)}
    pen3 = build_pen3(fam, member_loglik, observed)
    log_prior = log_founder_prior(psi_a)
    log_t = _log_transmission()

    configs = np.array(list(itertools.product(*supports)), dtype=np.intp)
    logp = np.zeros(configs.shape[0])
    for i, m in enumerate(members):
        gi = configs[:, i]
        logp += pen3[i, gi]
        if m.is_founder:
            logp += log_prior[gi]
        else:
            gf = configs[:, row[m.father_id]]
            gm = configs[:, row[m.mother_id]]
            logp += log_t[gf, gm, gi]
    finite = logp > NEG_INF
    if not finite.any():
        return NEG_INF
    m = logp[finite].max()
    return m + np.log(np.exp(logp[finite] - m).sum())


def conditional_family_loglik(
    fam: Family,
    member_loglik: Optional[MemberLoglik],
    observed: Optional[Mapping[str, Optional[int]]] = None,
    psi_a: float = DEFAULT_ALLELE_FREQ,
) -> float:
    """Log of Pr(member histories | observed genotypes).

    Computed as the peeled joint minus the genotype marginal, which depends
    only on the allele frequency. Raises when the observed genotypes are
    Mendelian-impossible under the pedigree.
    """
    program = compile_peeling(fam)
    joint = execute_program(program, build_pen3(fam, member_loglik, observed), psi_a)
    marginal = execute_program(program, build_pen3(fam, None, observed), psi_a)
    if marginal == NEG_INF:
        raise ValueError(
            f"family {fam.family_id}: observed genotypes impossible under the pedigree"
        )
    return joint - marginal
