"""SMILES vocabulary, tokenizer, molecular graphs and native descriptors.

The validity model is deliberately permissive: it enforces syntax (balanced
branches, paired ring closures, legal bracket atoms) and a valence table
(C:4, N:3, O:2, F:1, charge-adjusted), counting aromatic bonds as 1.5 each
with an all-single Kekule fallback for ring junctions and heteroaromatics.
It never rejects a molecule a stricter chemistry kit would accept, but may
accept strings such a kit would reject, so validity rates read as upper
bounds.

Six descriptors are computed natively (MW, HBA, HBD, nRot, nRing, nHet);
TPSA, logP and stereocenter counts require a full chemistry kit and are only
ever ingested from property files.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import QmolgenError, TokenizationError, ValidationError

PAD, SOS, EOS = "<PAD>", "<SOS>", "<EOS>"
SPECIAL_TOKENS = (PAD, SOS, EOS)

# the 33-entry vocabulary used for QM9-style corpora: 30 chemical tokens
# (sorted) followed by the specials
QM9_CHEMICAL_TOKENS = (
    "#", "(", ")", "-", "1", "2", "3", "4", "5", "=", "C", "F", "N", "O",
    "[C-]", "[CH-]", "[N+]", "[N-]", "[NH+]", "[NH2+]", "[NH3+]", "[O-]",
    "[c-]", "[cH-]", "[n-]", "[nH+]", "[nH]", "c", "n", "o",
)

ALL_PROPERTIES = ("MW", "HBA", "HBD", "nRot", "nRing", "nHet", "TPSA", "logP", "Stereo")
NATIVE_DESCRIPTORS = ("MW", "HBA", "HBD", "nRot", "nRing", "nHet")
INGESTED_ONLY_DESCRIPTORS = ("TPSA", "logP", "Stereo")

# primitive segmentation used when deriving a vocabulary from a corpus
_SEGMENT_RE = re.compile(r"\[[^\]]*\]|Cl|Br|.")

_ATOMIC_WEIGHTS = {
    "H": 1.008, "B": 10.81, "C": 12.011, "N": 14.007, "O": 15.999,
    "F": 18.998, "P": 30.974, "S": 32.06, "Cl": 35.45, "Br": 79.904, "I": 126.904,
}
# neutral maximum valences; charges shift these by their sign
_VALENCE = {
    "H": 1, "B": 3, "C": 4, "N": 3, "O": 2, "F": 1,
    "P": 5, "S": 6, "Cl": 1, "Br": 1, "I": 1,
}
# single-valence table for implicit hydrogen filling on organic-subset atoms
_IMPLICIT_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "F": 1, "P": 3, "S": 2, "Cl": 1, "Br": 1, "I": 1}

_ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")

_BRACKET_RE = re.compile(
    r"\[(?P<iso>\d+)?(?P<sym>[A-Za-z][a-z]?)(?P<chiral>@{1,2})?"
    r"(?P<h>H\d*)?(?P<charge>\+\d+|-\d+|\++|-+)?(?::\d+)?\]"
)


class SmilesError(QmolgenError):
    """A string is not parseable as SMILES."""


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Ordered chemical tokens followed by PAD, SOS, EOS."""

    def __init__(self, chemical_tokens):
        chem = list(chemical_tokens)
        if len(set(chem)) != len(chem):
            raise ValidationError("duplicate chemical tokens")
        for t in chem:
            if not t or t in SPECIAL_TOKENS:
                raise ValidationError(f"illegal chemical token {t!r}")
        self.chemical_tokens = tuple(chem)
        self.tokens = self.chemical_tokens + SPECIAL_TOKENS
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        # longest-first ordering drives the greedy matcher
        self._by_length = sorted(self.chemical_tokens, key=len, reverse=True)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def sos_id(self) -> int:
        return self._ids[SOS]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    def id_of(self, token: str) -> int:
        return self._ids[token]

    def is_special(self, token_id: int) -> bool:
        return token_id >= len(self.chemical_tokens)

    def matches_qm9(self) -> bool:
        return self.chemical_tokens == QM9_CHEMICAL_TOKENS

    @classmethod
    def from_corpus(cls, smiles_iterable) -> "Vocabulary":
        """Collect primitive segments from a corpus, sorted for stable ids."""
        seen: set[str] = set()
        for s in smiles_iterable:
            seen.update(_SEGMENT_RE.findall(s))
        return cls(sorted(seen))

    @classmethod
    def qm9(cls) -> "Vocabulary":
        return cls(QM9_CHEMICAL_TOKENS)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.tokens:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.strip()]
        if len(tokens) < 4 or tuple(tokens[-3:]) != SPECIAL_TOKENS:
            raise ValidationError(f"{path}: not a vocabulary file (missing specials)")
        return cls(tokens[:-3])


def tokenize(smiles: str, vocab: Vocabulary) -> list[int]:
    """Greedy longest-match tokenization; no SOS/EOS are added here."""
    ids = []
    pos = 0
    while pos < len(smiles):
        for tok in vocab._by_length:
            if smiles.startswith(tok, pos):
                ids.append(vocab.id_of(tok))
                pos += len(tok)
                break
        else:
            raise TokenizationError(
                f"no vocabulary token matches {smiles!r} at offset {pos}", offset=pos
            )
    return ids


def detokenize(ids, vocab: Vocabulary) -> str:
    """Inverse of tokenize; special ids must already be stripped."""
    out = []
    for i in ids:
        if not 0 <= int(i) < vocab.size:
            raise ValidationError(f"token id {i} out of range")
        if vocab.is_special(int(i)):
            raise ValidationError(f"special token {vocab.tokens[int(i)]} in detokenize input")
        out.append(vocab.tokens[int(i)])
    return "".join(out)


# ---------------------------------------------------------------------------
# parsing


@dataclass
class Atom:
    element: str
    aromatic: bool = False
    charge: int = 0
    explicit_h: int | None = None  # None: implicit by valence (organic subset)


@dataclass
class Bond:
    a: int
    b: int
    order: float  # 1, 2, 3 or 1.5


@dataclass
class MolGraph:
    atoms: list[Atom]
    bonds: list[Bond]

    def neighbors(self, idx: int):
        for bond in self.bonds:
            if bond.a == idx:
                yield bond.b, bond
            elif bond.b == idx:
                yield bond.a, bond

    @property
    def num_fragments(self) -> int:
        return _component_count(self)


_BOND_CHARS = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5, "/": 1.0, "\\": 1.0}


def _parse_bracket(text: str, pos: int) -> tuple[Atom, int]:
    m = _BRACKET_RE.match(text, pos)
    if not m:
        raise SmilesError(f"malformed bracket atom at offset {pos}")
    sym = m.group("sym")
    aromatic = sym in _AROMATIC_ORGANIC
    element = sym.capitalize() if aromatic else sym
    if element not in _ATOMIC_WEIGHTS:
        raise SmilesError(f"unsupported element {sym!r} at offset {pos}")
    hcount = 0
    if m.group("h"):
        digits = m.group("h")[1:]
        hcount = int(digits) if digits else 1
    charge = 0
    chg = m.group("charge")
    if chg:
        if chg in ("+", "++", "+++"):
            charge = len(chg)
        elif chg in ("-", "--", "---"):
            charge = -len(chg)
        else:
            charge = int(chg)
    atom = Atom(element=element, aromatic=aromatic, charge=charge, explicit_h=hcount)
    return atom, m.end()


def parse(smiles: str) -> MolGraph:
    """Build a molecular graph; raises SmilesError on any syntax problem."""
    if not smiles:
        raise SmilesError("empty SMILES")
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    bond_keys: set[tuple[int, int]] = set()
    prev: int | None = None
    pending: float | None = None
    stack: list[int] = []
    ring_open: dict[str, tuple[int, float | None]] = {}
    dangling_dot = False
    pos = 0

    def add_bond(a: int, b: int, order: float | None) -> None:
        if a == b:
            raise SmilesError(f"atom {a} bonded to itself")
        key = (min(a, b), max(a, b))
        if key in bond_keys:
            raise SmilesError(f"duplicate bond between atoms {a} and {b}")
        if order is None:
            order = 1.5 if atoms[a].aromatic and atoms[b].aromatic else 1.0
        bond_keys.add(key)
        bonds.append(Bond(a, b, order))

    def attach(idx: int) -> None:
        nonlocal prev, pending, dangling_dot
        dangling_dot = False
        if prev is not None:
            add_bond(prev, idx, pending)
        elif pending is not None:
            raise SmilesError(f"dangling bond symbol before atom {idx}")
        pending = None
        prev = idx

    while pos < len(smiles):
        c = smiles[pos]
        if c in _BOND_CHARS:
            if pending is not None:
                raise SmilesError(f"two bond symbols in a row at offset {pos}")
            pending = _BOND_CHARS[c]
            pos += 1
        elif c == "(":
            if prev is None:
                raise SmilesError(f"branch with no preceding atom at offset {pos}")
            stack.append(prev)
            pos += 1
        elif c == ")":
            if not stack:
                raise SmilesError(f"unmatched ')' at offset {pos}")
            if pending is not None:
                raise SmilesError(f"dangling bond symbol at offset {pos}")
            prev = stack.pop()
            pos += 1
        elif c == ".":
            if pending is not None:
                raise SmilesError(f"bond symbol before '.' at offset {pos}")
            if prev is None:
                raise SmilesError(f"'.' must follow an atom (offset {pos})")
            prev = None
            dangling_dot = True
            pos += 1
        elif c.isdigit() or c == "%":
            if c == "%":
                if pos + 2 >= len(smiles) or not smiles[pos + 1 : pos + 3].isdigit():
                    raise SmilesError(f"malformed %nn ring closure at offset {pos}")
                digit = smiles[pos + 1 : pos + 3]
                pos += 3
            else:
                digit = c
                pos += 1
            if prev is None:
                raise SmilesError("ring closure with no preceding atom")
            if digit in ring_open:
                other, other_order = ring_open.pop(digit)
                order = pending if pending is not None else other_order
                if (
                    pending is not None
                    and other_order is not None
                    and pending != other_order
                ):
                    raise SmilesError(f"conflicting orders on ring closure {digit}")
                add_bond(other, prev, order)
                pending = None
            else:
                ring_open[digit] = (prev, pending)
                pending = None
        elif c == "[":
            atom, pos = _parse_bracket(smiles, pos)
            atoms.append(atom)
            attach(len(atoms) - 1)
        else:
            matched = None
            for sym in _ORGANIC_SUBSET:
                if smiles.startswith(sym, pos):
                    matched = Atom(element=sym)
                    pos += len(sym)
                    break
            if matched is None and c in _AROMATIC_ORGANIC:
                matched = Atom(element=c.capitalize(), aromatic=True)
                pos += 1
            if matched is None:
                raise SmilesError(f"unexpected character {c!r} at offset {pos}")
            atoms.append(matched)
            attach(len(atoms) - 1)

    if not atoms:
        raise SmilesError("no atoms")
    if stack:
        raise SmilesError("unclosed branch")
    if ring_open:
        raise SmilesError(f"unclosed ring closures: {sorted(ring_open)}")
    if pending is not None:
        raise SmilesError("trailing bond symbol")
    if dangling_dot:
        raise SmilesError("trailing '.'")
    return MolGraph(atoms, bonds)


# ---------------------------------------------------------------------------
# graph analysis


def _component_count(graph: MolGraph) -> int:
    n = len(graph.atoms)
    seen = [False] * n
    adj: list[list[int]] = [[] for _ in range(n)]
    for bond in graph.bonds:
        adj[bond.a].append(bond.b)
        adj[bond.b].append(bond.a)
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        queue = [start]
        seen[start] = True
        while queue:
            cur = queue.pop()
            for nxt in adj[cur]:
                if not seen[nxt]:
                    seen[nxt] = True
                    queue.append(nxt)
    return count


def ring_bond_flags(graph: MolGraph) -> list[bool]:
    """True for every bond that lies on a cycle (removal keeps ends connected)."""
    flags = []
    for skip, bond in enumerate(graph.bonds):
        adj: list[list[int]] = [[] for _ in range(len(graph.atoms))]
        for k, other in enumerate(graph.bonds):
            if k != skip:
                adj[other.a].append(other.b)
                adj[other.b].append(other.a)
        seen = {bond.a}
        queue = [bond.a]
        found = False
        while queue and not found:
            cur = queue.pop()
            for nxt in adj[cur]:
                if nxt == bond.b:
                    found = True
                    break
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        flags.append(found)
    return flags


def _bond_order_sum(graph: MolGraph, idx: int, aromatic_as: float) -> float:
    total = 0.0
    for _, bond in graph.neighbors(idx):
        total += aromatic_as if bond.order == 1.5 else bond.order
    return total


def _max_valence(atom: Atom) -> float:
    return max(0.0, _VALENCE[atom.element] + atom.charge)


def implicit_hydrogens(graph: MolGraph) -> list[int]:
    """Hydrogens implied on organic-subset atoms (bracket atoms carry none)."""
    out = []
    for idx, atom in enumerate(graph.atoms):
        if atom.explicit_h is not None:
            out.append(0)
            continue
        cap = _IMPLICIT_VALENCE[atom.element]
        used = math.ceil(_bond_order_sum(graph, idx, aromatic_as=1.5) - 1e-9)
        out.append(max(0, cap - used))
    return out


# ---------------------------------------------------------------------------
# validity


@dataclass
class ValidityResult:
    valid: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.valid


def check_validity(smiles: str) -> ValidityResult:
    """Syntax plus valence-table check; see the module docstring for scope."""
    try:
        graph = parse(smiles)
    except SmilesError as exc:
        return ValidityResult(False, str(exc))

    ring_flags = ring_bond_flags(graph)
    on_ring = [False] * len(graph.atoms)
    for bond, flag in zip(graph.bonds, ring_flags):
        if flag:
            on_ring[bond.a] = True
            on_ring[bond.b] = True

    for idx, atom in enumerate(graph.atoms):
        if atom.aromatic and not on_ring[idx]:
            return ValidityResult(False, f"aromatic atom {idx} outside any ring")
        cap = _max_valence(atom)
        explicit_h = atom.explicit_h or 0
        strict = _bond_order_sum(graph, idx, aromatic_as=1.5) + explicit_h
        if strict <= cap + 1e-9:
            continue
        # Kekule fallback: a valid Kekule assignment can turn every aromatic
        # bond into a single bond at this atom (junctions, pyrrole-type N)
        relaxed = _bond_order_sum(graph, idx, aromatic_as=1.0) + explicit_h
        if relaxed <= cap + 1e-9:
            continue
        return ValidityResult(
            False,
            f"valence {strict:g} exceeds cap {cap:g} on atom {idx} ({atom.element})",
        )
    return ValidityResult(True)


# ---------------------------------------------------------------------------
# descriptors


def descriptors(smiles: str) -> dict[str, float]:
    """The six natively computable properties of one molecule.

    TPSA/logP/Stereo are not computable here and are deliberately absent
    from the result.
    """
    graph = parse(smiles)
    imp_h = implicit_hydrogens(graph)
    ring_flags = ring_bond_flags(graph)

    total_h = sum(imp_h) + sum(a.explicit_h or 0 for a in graph.atoms)
    mw = sum(_ATOMIC_WEIGHTS[a.element] for a in graph.atoms) + 1.008 * total_h

    heavy = [a.element != "H" for a in graph.atoms]
    heavy_degree = [0] * len(graph.atoms)
    for bond in graph.bonds:
        if heavy[bond.b]:
            heavy_degree[bond.a] += 1
        if heavy[bond.a]:
            heavy_degree[bond.b] += 1

    hba = sum(1 for a in graph.atoms if a.element in ("N", "O"))
    hbd = sum(
        1
        for idx, a in enumerate(graph.atoms)
        if a.element in ("N", "O") and (imp_h[idx] + (a.explicit_h or 0)) > 0
    )
    n_rot = sum(
        1
        for bond, in_ring in zip(graph.bonds, ring_flags)
        if bond.order == 1.0
        and not in_ring
        and heavy[bond.a]
        and heavy[bond.b]
        and heavy_degree[bond.a] >= 2
        and heavy_degree[bond.b] >= 2
    )
    n_ring = len(graph.bonds) - len(graph.atoms) + _component_count(graph)
    n_het = sum(1 for a in graph.atoms if a.element not in ("C", "H"))

    return {
        "MW": float(mw),
        "HBA": float(hba),
        "HBD": float(hbd),
        "nRot": float(n_rot),
        "nRing": float(n_ring),
        "nHet": float(n_het),
    }


# ---------------------------------------------------------------------------
# generation metrics


@dataclass
class GenerationMetrics:
    total: int
    valid: int
    unique_valid: int
    novel: int
    validity: float  # percentages on 0..100
    uniqueness: float
    validity_x_uniqueness: float
    novelty: float
    degenerate_uniqueness: bool = False
    degenerate_novelty: bool = False


def generation_metrics(samples, training_smiles) -> GenerationMetrics:
    """Validity / uniqueness / novelty of generated strings.

    ``samples`` entries may be None for outputs that could not be rendered
    into a string at all; those count as invalid. Uniqueness is measured
    over valid samples, novelty over unique valid samples against the
    training set.
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("no samples to score")
    training_set = set(training_smiles)
    valid = [s for s in samples if s is not None and check_validity(s).valid]
    unique = sorted(set(valid))
    novel = [s for s in unique if s not in training_set]

    total = len(samples)
    v, u, nov = len(valid), len(unique), len(novel)
    return GenerationMetrics(
        total=total,
        valid=v,
        unique_valid=u,
        novel=nov,
        validity=100.0 * v / total,
        uniqueness=100.0 * u / v if v else 0.0,
        validity_x_uniqueness=100.0 * u / total,
        novelty=100.0 * nov / u if u else 0.0,
        degenerate_uniqueness=v == 0,
        degenerate_novelty=u == 0,
    )
