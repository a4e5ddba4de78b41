"""Pedigree data model, flat-CSV parsing, and structural validation.

Families are stored as plain immutable records: each member carries its
parent links, sex, a tri-state genotype observation (carrier / wildtype /
missing), the ordered ages at which primary cancers were diagnosed, and a
censoring age. Ages are kept in years; model code normalizes them onto
[0, 1] with :func:`normalize_age`.

The on-disk format is a flat CSV (one row per individual) rather than the
classic PED layout, because PED has no columns for recurrent event times.
See ``docs/pedigree_format.md`` for the column map.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

#: CSV column order for :func:`parse_pedigree` / :func:`serialize_pedigree`.
CSV_COLUMNS = (
    "family_id",
    "individual_id",
    "father_id",
    "mother_id",
    "sex",
    "genotype",
    "proband",
    "onset_ages",
    "censor_age",
)

#: Marker used in the CSV for "no parent in this pedigree".
FOUNDER_MARK = "0"


class PedigreeFormatError(ValueError):
    """Raised for malformed pedigree input; carries the offending line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Individual:
    """One pedigree member with recurrent-event history.

    ``father_id``/``mother_id`` are ``None`` for founders (both or neither).
    ``genotype_obs`` is 1 (carrier), 0 (wildtype) or ``None`` (untested).
    ``onset_ages`` holds the strictly increasing ages at diagnosis of each
    primary cancer; ``censor_age`` is the age at loss to follow-up.
    """

    id: str
    father_id: Optional[str]
    mother_id: Optional[str]
    sex: int
    genotype_obs: Optional[int]
    onset_ages: tuple[float, ...]
    censor_age: float
    is_proband: bool = False

    def __post_init__(self):
        if (self.father_id is None) != (self.mother_id is None):
            raise ValueError(f"individual {self.id}: either both parents or neither")
        if self.sex not in (0, 1):
            raise ValueError(f"individual {self.id}: sex must be 0 or 1")
        if self.genotype_obs not in (None, 0, 1):
            raise ValueError(f"individual {self.id}: genotype must be 0, 1 or missing")
        ages = self.onset_ages
        if any(a < 0 for a in ages):
            raise ValueError(f"individual {self.id}: negative onset age")
        if any(b <= a for a, b in zip(ages, ages[1:])):
            raise ValueError(f"individual {self.id}: onset ages not strictly increasing")
        if self.censor_age < 0:
            raise ValueError(f"individual {self.id}: negative censor age")
        if ages and self.censor_age < ages[-1]:
            raise ValueError(
                f"individual {self.id}: censor age {self.censor_age} precedes "
                f"last onset {ages[-1]}"
            )
        if self.is_proband and not ages:
            raise ValueError(f"individual {self.id}: proband must have at least one onset")

    @property
    def is_founder(self) -> bool:
        return self.father_id is None

    @property
    def n_events(self) -> int:
        return len(self.onset_ages)


@dataclass(frozen=True)
class Family:
    """A pedigree: members plus the structure implied by their parent links."""

    family_id: str
    members: tuple[Individual, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {m.id: m for m in self.members})

    def member(self, member_id: str) -> Individual:
        return self._by_id[member_id]

    def has_member(self, member_id: str) -> bool:
        return member_id in self._by_id

    @property
    def proband(self) -> Individual:
        """The unique proband; raises if there is not exactly one."""
        probands = [m for m in self.members if m.is_proband]
        if len(probands) != 1:
            raise ValueError(
                f"family {self.family_id}: expected exactly one proband, "
                f"found {len(probands)}"
            )
        return probands[0]

    def nuclear_families(self) -> list[tuple[str, str, tuple[str, ...]]]:
        """Group children by (father_id, mother_id); returns (father, mother, children)."""
        sibs: dict[tuple[str, str], list[str]] = {}
        for m in self.members:
            if m.father_id is not None:
                sibs.setdefault((m.father_id, m.mother_id), []).append(m.id)
        return [(f, mo, tuple(ch)) for (f, mo), ch in sibs.items()]


@dataclass(frozen=True)
class FamilySet:
    """A collection of families sharing one time horizon ``t_max`` (years)."""

    families: tuple[Family, ...]
    t_max: float = 100.0

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        seen = set()
        for fam in self.families:
            if fam.family_id in seen:
                raise ValueError(f"duplicate family id {fam.family_id}")
            seen.add(fam.family_id)
            for m in fam.members:
                top = max((m.censor_age,) + m.onset_ages)
                if top > self.t_max:
                    raise ValueError(
                        f"family {fam.family_id}, individual {m.id}: age {top} "
                        f"exceeds t_max {self.t_max}"
                    )

    def __len__(self) -> int:
        return len(self.families)

    def __iter__(self):
        return iter(self.families)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    """Structural findings for one family; empty ⇔ usable for peeling."""

    family_id: str
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str) -> None:
        self.violations.append(Violation(code, message))


def normalize_age(age: float, t_max: float) -> float:
    """Map an age in years onto the unit interval used by the intensity model."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if age < 0 or age > t_max:
        raise ValueError(f"age {age} outside [0, {t_max}]")
    return age / t_max


def _parse_onsets(cell: str, line: int) -> tuple[float, ...]:
    cell = cell.strip()
    if not cell:
        return ()
    try:
        ages = tuple(float(tok) for tok in cell.split(";"))
    except ValueError:
        raise PedigreeFormatError(f"bad onset list {cell!r}", line) from None
    return ages


def _parse_genotype(cell: str, line: int) -> Optional[int]:
    cell = cell.strip()
    if cell in ("", "NA", "na", "Na"):
        return None
    if cell == "0":
        return 0
    if cell == "1":
        return 1
    raise PedigreeFormatError(f"genotype code {cell!r} outside {{0,1,NA}}", line)


def _parse_binary(cell: str, what: str, line: int) -> int:
    cell = cell.strip()
    if cell == "0":
        return 0
    if cell == "1":
        return 1
    raise PedigreeFormatError(f"{what} code {cell!r} outside {{0,1}}", line)


def parse_pedigree(source: TextIO, t_max: float = 100.0) -> FamilySet:
    """Read the flat pedigree CSV into a :class:`FamilySet`.

    Raises :class:`PedigreeFormatError` (with line number) on malformed rows,
    duplicate individual ids, unknown parent references, or out-of-domain
    codes. Structural problems that need the whole family (loops, proband
    count) are left to :func:`validate_family`.
    """
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise PedigreeFormatError("empty input, header row required") from None
    header = [h.strip() for h in header]
    if header != list(CSV_COLUMNS):
        raise PedigreeFormatError(
            f"header {header} does not match required columns {list(CSV_COLUMNS)}", 1
        )

    rows_by_family: dict[str, list[Individual]] = {}
    seen_ids: dict[str, set[str]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(CSV_COLUMNS):
            raise PedigreeFormatError(
                f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line_no
            )
        fid, iid, father, mother, sex, geno, proband, onsets, censor = (
            cell.strip() for cell in row
        )
        if not fid or not iid:
            raise PedigreeFormatError("empty family or individual id", line_no)
        father_id = None if father == FOUNDER_MARK else father
        mother_id = None if mother == FOUNDER_MARK else mother
        try:
            censor_age = float(censor)
        except ValueError:
            raise PedigreeFormatError(f"bad censor age {censor!r}", line_no) from None
        try:
            ind = Individual(
                id=iid,
                father_id=father_id,
                mother_id=mother_id,
                sex=_parse_binary(sex, "sex", line_no),
                genotype_obs=_parse_genotype(geno, line_no),
                onset_ages=_parse_onsets(onsets, line_no),
                censor_age=censor_age,
                is_proband=bool(_parse_binary(proband, "proband", line_no)),
            )
        except ValueError as exc:
            raise PedigreeFormatError(str(exc), line_no) from None
        fam_ids = seen_ids.setdefault(fid, set())
        if iid in fam_ids:
            raise PedigreeFormatError(f"duplicate individual id {iid} in family {fid}", line_no)
        fam_ids.add(iid)
        rows_by_family.setdefault(fid, []).append(ind)

    families = []
    for fid, members in rows_by_family.items():
        ids = {m.id for m in members}
        for m in members:
            for pid in (m.father_id, m.mother_id):
                if pid is not None and pid not in ids:
                    raise PedigreeFormatError(
                        f"family {fid}: individual {m.id} references unknown parent {pid}"
                    )
        families.append(Family(family_id=fid, members=tuple(members)))
    return FamilySet(families=tuple(families), t_max=t_max)


def _format_float(x: float) -> str:
    return repr(float(x))


def serialize_pedigree(fs: FamilySet, stream: TextIO) -> None:
    """Write a FamilySet in the flat CSV format (inverse of :func:`parse_pedigree`)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for fam in fs.families:
        for m in fam.members:
            writer.writerow(
                [
                    fam.family_id,
                    m.id,
                    m.father_id if m.father_id is not None else FOUNDER_MARK,
                    m.mother_id if m.mother_id is not None else FOUNDER_MARK,
                    str(m.sex),
                    "NA" if m.genotype_obs is None else str(m.genotype_obs),
                    "1" if m.is_proband else "0",
                    ";".join(_format_float(a) for a in m.onset_ages),
                    _format_float(m.censor_age),
                ]
            )


def _ancestry_cycle_members(fam: Family) -> list[str]:
    """Ids of members that appear in a parent-link cycle."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {m.id: WHITE for m in fam.members}
    in_cycle: list[str] = []

    def visit(mid: str, stack: list[str]) -> bool:
        color[mid] = GREY
        stack.append(mid)
        m = fam.member(mid)
        for pid in (m.father_id, m.mother_id):
            if pid is None or not fam.has_member(pid):
                continue
            if color[pid] == GREY:
                in_cycle.extend(stack[stack.index(pid):])
                return True
            if color[pid] == WHITE and visit(pid, stack):
                return True
        stack.pop()
        color[mid] = BLACK
        return False

    for m in fam.members:
        if color[m.id] == WHITE and visit(m.id, []):
            break
    return in_cycle


def _has_pedigree_loop(fam: Family) -> bool:
    """True when the individual / nuclear-family bipartite graph has a cycle.

    Marriage and inbreeding loops both show up as cycles here, which is
    exactly the class of structures the peeling recursion cannot handle.
    """
    parent: dict[object, object] = {}

    def find(x):
        root = x
        while parent[root] is not root:
            root = parent[root]
        while parent[x] is not root:
            parent[x], x = root, parent[x]
        return root

    def union(a, b) -> bool:
        ra, rb = find(a), find(b)
        if ra is rb:
            return False
        parent[ra] = rb
        return True

    for m in fam.members:
        parent[m.id] = m.id
    for k, (father, mother, children) in enumerate(fam.nuclear_families()):
        node = ("nf", k)
        parent[node] = node
        for mid in {father, mother, *children}:
            if mid not in parent:  # unresolved parent ref, reported separately
                parent[mid] = mid
            if not union(node, mid):
                return True
        # A member serving as both parent and child of one nuclear family is
        # a degenerate loop that the set-dedup above would hide.
        if father in children or mother in children:
            return True
    return False


def validate_family(fam: Family) -> ValidationReport:
    """Check one family for the structures the likelihood machinery assumes.

    Violations are report entries, never exceptions; an empty report means
    the family can be peeled.
    """
    report = ValidationReport(family_id=fam.family_id)
    ids = {m.id for m in fam.members}
    if len(ids) != len(fam.members):
        report.add("duplicate_id", "duplicate individual ids")

    n_probands = sum(1 for m in fam.members if m.is_proband)
    if n_probands == 0:
        report.add("missing_proband", "family has no proband")
    elif n_probands > 1:
        report.add("multiple_probands", f"family has {n_probands} probands")

    for m in fam.members:
        for role, pid in (("father", m.father_id), ("mother", m.mother_id)):
            if pid is not None and pid not in ids:
                report.add(
                    "unknown_parent",
                    f"individual {m.id} references unknown {role} {pid}",
                )
        if m.father_id is not None and m.mother_id is not None:
            fa = fam.member(m.father_id) if fam.has_member(m.father_id) else None
            mo = fam.member(m.mother_id) if fam.has_member(m.mother_id) else None
            if fa is not None and fa.sex != 1:
                report.add("parent_sex", f"father {m.father_id} of {m.id} is not male")
            if mo is not None and mo.sex != 0:
                report.add("parent_sex", f"mother {m.mother_id} of {m.id} is not female")

    cyclic = _ancestry_cycle_members(fam)
    if cyclic:
        report.add("ancestry_cycle", f"members {sorted(set(cyclic))} form an ancestry cycle")
    elif _has_pedigree_loop(fam):
        report.add("pedigree_loop", "marriage or inbreeding loop; peeling requires loop-free pedigrees")
    return report


def validate_familyset(fs: FamilySet) -> list[ValidationReport]:
    """Validate every family; returns one report per family, in input order."""
    return [validate_family(fam) for fam in fs.families]
