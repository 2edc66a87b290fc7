"""Small-molecule corpus synthesis for demos, tests and desk-scale training.

Molecules are built as random valence-respecting graphs over C/N/O/F (plus a
curated list of aromatic, charged and cage structures) and serialized to
SMILES with a depth-first writer, so every emitted string parses back to the
source graph and passes validity checking by construction. Properties are the
six native descriptors plus deterministic surrogate TPSA/logP/Stereo columns.
"""

from __future__ import annotations

import csv

import numpy as np

from .data import CSV_HEADER, split_indices
from .errors import InvariantError, ValidationError
from .rng import rng_for
from .smiles import descriptors

_ELEMENTS = ("C", "N", "O", "F")
_CAPACITY = {"C": 4, "N": 3, "O": 2, "F": 1}
_ELEMENT_P = (0.66, 0.14, 0.14, 0.06)
_BOND_CHAR = {1: "", 2: "=", 3: "#"}

# Hand-picked molecules that exercise every vocabulary token: aromatics with
# a single-pass Kekule fallback, the charged bracket atoms, explicit single
# bonds and the fused cage topologies that need ring-closure digits up to 5.
CURATED_SMILES = (
    "C",
    "CC",
    "C-C",
    "CCO",
    "CCN",
    "COC",
    "CNC",
    "CN(C)C",
    "OO",
    "NN",
    "C=O",
    "C=C",
    "C#C",
    "C#N",
    "CC#N",
    "N#CC#N",
    "CC(=O)O",
    "NCC(=O)O",
    "CC(N)C(=O)O",
    "NC(=O)N",
    "CC(=O)NC",
    "OCC(O)CO",
    "FC(F)F",
    "FCC(F)CF",
    "CC(C)(C)O",
    "C1CC1",
    "C1OC1",
    "C1CCC1",
    "C1CCCC1",
    "C1CCCCC1",
    "C1CCOC1",
    "C1CCNC1",
    "OC1CCCC1",
    "FC1CCC1",
    "C1CC2CCC1C2",
    "C1CC12CC2",
    "C1=CC=CC1",
    "C1=CC=CC=C1",
    "C12C3C1C23",
    "C12C3C4C1C5C2C3C45",
    "c1ccccc1",
    "Cc1ccccc1",
    "Oc1ccccc1",
    "Nc1ccccc1",
    "c1ccncc1",
    "c1cncnc1",
    "c1ccoc1",
    "c1cnoc1",
    "c1cc[nH]c1",
    "c1ccc2ccoc2c1",
    "O=[N+]([O-])C",
    "O=[N+]([O-])c1ccoc1",
    "CN=[N+]=[N-]",
    "[C-]#[N+]C",
    "[CH-]=[N+](C)C",
    "[NH3+]CC(=O)[O-]",
    "C[NH2+]CC(=O)[O-]",
    "C[NH+](C)CC(=O)[O-]",
    "c1cc[nH+]cc1C(=O)[O-]",
    "c1n[n-]nn1",
    "[cH-]1cccc1",
    "C[c-]1cccc1",
)


def graph_to_smiles(elements: list[str], bonds: dict[tuple[int, int], int]) -> str:
    """Serialize a connected molecular graph depth-first from atom 0.

    ``bonds`` maps (lo, hi) atom-index pairs to integer orders 1..3. Ring
    closures reuse freed digits but never exceed 5 concurrently open, which
    keeps the output inside the 33-token vocabulary.
    """
    n = len(elements)
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for (a, b), order in bonds.items():
        if not (0 <= a < b < n) or order not in (1, 2, 3):
            raise ValidationError(f"bad bond ({a}, {b}) order {order}")
        adj[a].append(b)
        adj[b].append(a)

    parent: dict[int, int | None] = {0: None}
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    rank: dict[int, int] = {}
    ring_edges: list[tuple[int, int]] = []

    def dfs(u: int) -> None:
        rank[u] = len(rank)
        for v in sorted(adj[u]):
            if v not in rank:
                parent[v] = u
                children[u].append(v)
                dfs(v)
            elif parent[u] != v:
                edge = (min(u, v), max(u, v))
                if edge not in ring_edges:
                    ring_edges.append(edge)

    dfs(0)
    if len(rank) != n:
        raise ValidationError("graph is not connected")

    def bond_order(a: int, b: int) -> int:
        return bonds[(min(a, b), max(a, b))]

    # digit bookkeeping: assign on the first-visited endpoint, free on close
    ring_at: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for a, b in ring_edges:
        first, second = (a, b) if rank[a] < rank[b] else (b, a)
        ring_at[first].append((second, bond_order(a, b)))
        ring_at[second].append((first, bond_order(a, b)))
    digit_of: dict[frozenset, int] = {}
    free_digits = [1, 2, 3, 4, 5]
    out: list[str] = []

    def emit(u: int) -> None:
        out.append(elements[u])
        closes = [(w, o) for w, o in ring_at[u] if frozenset((u, w)) in digit_of]
        opens = [(w, o) for w, o in ring_at[u] if frozenset((u, w)) not in digit_of]
        for w, _ in sorted(closes, key=lambda p: rank[p[0]]):
            out.append(str(digit_of.pop(frozenset((u, w)))))
        for w, order in sorted(opens, key=lambda p: rank[p[0]]):
            if not free_digits:
                raise InvariantError("more than 5 concurrent ring closures")
            digit = free_digits.pop(0)
            digit_of[frozenset((u, w))] = digit
            out.append(_BOND_CHAR[order] + str(digit))

        kids = children[u]
        for idx, v in enumerate(kids):
            bc = _BOND_CHAR[bond_order(u, v)]
            if idx < len(kids) - 1:
                out.append("(" + bc)
                emit(v)
                out.append(")")
            else:
                out.append(bc)
                emit(v)

    emit(0)
    return "".join(out)


def random_molecule(rng: np.random.Generator, min_heavy: int = 3, max_heavy: int = 9) -> str:
    """One random valence-correct aliphatic molecule as SMILES."""
    if not 1 <= min_heavy <= max_heavy:
        raise ValidationError("need 1 <= min_heavy <= max_heavy")
    n = int(rng.integers(min_heavy, max_heavy + 1))
    elements: list[str] = []
    free: list[int] = []
    bonds: dict[tuple[int, int], int] = {}

    def add_atom() -> None:
        elem = _ELEMENTS[rng.choice(len(_ELEMENTS), p=_ELEMENT_P)]
        elements.append(elem)
        free.append(_CAPACITY[elem])

    add_atom()
    for i in range(1, n):
        parents = [j for j in range(i) if free[j] >= 1]
        if not parents:
            break
        parent = parents[int(rng.integers(len(parents)))]
        add_atom()
        order = 1
        max_order = min(free[parent], free[i], 3)
        roll = rng.random()
        if max_order >= 3 and roll < 0.05:
            order = 3
        elif max_order >= 2 and roll < 0.22:
            order = 2
        bonds[(parent, i)] = order
        free[parent] -= order
        free[i] -= order

    for _ in range(int(rng.integers(0, 3))):
        open_atoms = [j for j in range(len(elements)) if free[j] >= 1]
        candidates = [
            (a, b)
            for ai, a in enumerate(open_atoms)
            for b in open_atoms[ai + 1 :]
            if (a, b) not in bonds
        ]
        if not candidates:
            break
        a, b = candidates[int(rng.integers(len(candidates)))]
        bonds[(a, b)] = 1
        free[a] -= 1
        free[b] -= 1

    return graph_to_smiles(elements, bonds)


def synthetic_corpus(n: int, seed: int, include_curated: bool = True) -> list[str]:
    """n unique molecules: the curated list first, then random fills."""
    if n < 1:
        raise ValidationError("corpus size must be positive")
    out: list[str] = []
    seen: set[str] = set()
    if include_curated:
        for smi in CURATED_SMILES:
            if len(out) == n:
                return out
            if smi not in seen:
                seen.add(smi)
                out.append(smi)
    attempt = 0
    while len(out) < n:
        if attempt > 200 * n:
            raise InvariantError(f"could not assemble {n} unique molecules")
        smi = random_molecule(rng_for(seed, "synthetic_molecule", attempt))
        attempt += 1
        if smi not in seen:
            seen.add(smi)
            out.append(smi)
    return out


def corpus_properties(smiles_list: list[str], seed: int) -> np.ndarray:
    """(N, 9) property matrix: native descriptors plus surrogate columns.

    TPSA and logP are deterministic descriptor-driven surrogates with seeded
    jitter; Stereo is a small seeded count. They stand in for columns the
    native descriptor set cannot compute.
    """
    rows = []
    for i, smi in enumerate(smiles_list):
        d = descriptors(smi)
        rng = rng_for(seed, "surrogate_props", i)
        tpsa = max(0.0, 20.3 * d["HBA"] + 2.3 * d["HBD"] + rng.normal(0.0, 2.5))
        logp = 0.019 * d["MW"] - 0.74 * (d["HBA"] + d["HBD"]) + rng.normal(0.0, 0.3) + 0.5
        stereo = float(rng.integers(0, 3))
        rows.append(
            [d["MW"], d["HBA"], d["HBD"], d["nRot"], d["nRing"], d["nHet"], tpsa, logp, stereo]
        )
    return np.array(rows, dtype=np.float64)


def write_corpus_csv(path, smiles_list: list[str], properties: np.ndarray) -> None:
    properties = np.asarray(properties, dtype=np.float64)
    if properties.shape != (len(smiles_list), len(CSV_HEADER) - 1):
        raise ValidationError(
            f"properties shape {properties.shape} does not match {len(smiles_list)} molecules"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for smi, row in zip(smiles_list, properties):
            writer.writerow([smi] + [repr(float(v)) for v in row])


def calibrated_corpus_csv(path, n: int, seed: int, target_train_means) -> list[str]:
    """Write a corpus whose TRAIN-split property means hit exact targets.

    Every column is shifted by one constant so that, after the seeded split
    that ``ingest`` will apply with the same ``seed``, the training rows
    average exactly to ``target_train_means``.
    """
    target = np.asarray(target_train_means, dtype=np.float64)
    if target.shape != (len(CSV_HEADER) - 1,):
        raise ValidationError(f"need {len(CSV_HEADER) - 1} target means, got {target.shape}")
    smiles_list = synthetic_corpus(n, seed)
    props = corpus_properties(smiles_list, seed)
    train_idx, _ = split_indices(n, seed)
    props += target - props[train_idx].mean(axis=0)
    write_corpus_csv(path, smiles_list, props)
    return smiles_list
