"""
SMILES parsing into annotated molecular graphs.

Supports the organic subset, bracket atoms (isotope, charge, explicit H),
bond symbols, branches, ring closures (digits and %nn) and lowercase
aromatic atoms. Stereo markers are accepted and discarded with a warning.
Aromaticity is read from the notation; there is no Hueckel perception.
"""
import enum
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from shared.errors import (
    NonRingAromatic,
    SmilesSyntaxError,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownElement,
    ValenceOverflow,
)
from shared.log import get_logger

logger = get_logger("SmilesParser")

_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce "
    "Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn"
).split()
ATOMIC_NUMBER: Dict[str, int] = {sym: z for z, sym in enumerate(_SYMBOLS, start=1)}
SYMBOL: Dict[int, str] = {z: sym for sym, z in ATOMIC_NUMBER.items()}

# Allowed valences for implicit-hydrogen filling of unbracketed atoms
VALENCES: Dict[int, Tuple[int, ...]] = {
    5: (3,),          # B
    6: (4,),          # C
    7: (3, 5),        # N
    8: (2,),          # O
    9: (1,),          # F
    15: (3, 5),       # P
    16: (2, 4, 6),    # S
    17: (1,),         # Cl
    35: (1,),         # Br
    53: (1,),         # I
}

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_SUBSET = ("b", "c", "n", "o", "p", "s")
AROMATIC_BRACKET = ("se", "as", "b", "c", "n", "o", "p", "s")
# Aromatic atoms that donate one electron to the pi system (one implicit double bond)
_PI_DONORS = {5, 6, 7, 15}


class BondOrder(str, enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def valence(self) -> int:
        return {"single": 1, "double": 2, "triple": 3, "aromatic": 1}[self.value]

    @property
    def symbol(self) -> str:
        return {"single": "-", "double": "=", "triple": "#", "aromatic": ":"}[self.value]


class Hybridization(str, enum.Enum):
    SP = "sp"
    SP2 = "sp2"
    SP3 = "sp3"
    OTHER = "other"


_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC}


@dataclass(frozen=True)
class Atom:
    element: int
    formal_charge: int = 0
    explicit_h: Optional[int] = None  # None means implicit
    aromatic: bool = False
    in_ring: bool = False
    degree: int = 0
    implicit_h: int = 0
    hybridization: Hybridization = Hybridization.OTHER
    bracket: bool = False

    @property
    def symbol(self) -> str:
        return SYMBOL.get(self.element, "*")

    @property
    def total_h(self) -> int:
        return self.implicit_h + (self.explicit_h or 0)


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: BondOrder = BondOrder.SINGLE
    conjugated: bool = False
    in_ring: bool = False

    @property
    def endpoints(self) -> Tuple[int, int]:
        return (self.begin, self.end)

    def other(self, atom: int) -> int:
        return self.end if atom == self.begin else self.begin


@dataclass(frozen=True)
class MolecularGraph:
    """Undirected simple graph of atoms and bonds parsed from SMILES."""

    atoms: Tuple[Atom, ...]
    bonds: Tuple[Bond, ...]
    canonical_source: str = ""
    adjacency: Tuple[Tuple[int, ...], ...] = field(default=(), compare=False)

    def __post_init__(self):
        n = len(self.atoms)
        incident: List[List[int]] = [[] for _ in range(n)]
        seen = set()
        for idx, bond in enumerate(self.bonds):
            a, b = bond.begin, bond.end
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ValueError(f"bond {idx} has invalid endpoints {bond.endpoints}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate bond between atoms {key}")
            seen.add(key)
            incident[a].append(idx)
            incident[b].append(idx)
        computed = tuple(tuple(lst) for lst in incident)
        if self.adjacency and self.adjacency != computed:
            raise ValueError("adjacency lists disagree with the bond list")
        object.__setattr__(self, "adjacency", computed)
        for i, atom in enumerate(self.atoms):
            if atom.degree != len(computed[i]):
                raise ValueError(f"atom {i} degree {atom.degree} != {len(computed[i])} incident bonds")

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def num_bonds(self) -> int:
        return len(self.bonds)

    def neighbors(self, atom: int) -> List[Tuple[int, Bond]]:
        """(neighbor index, bond) pairs for one atom"""
        return [(self.bonds[b].other(atom), self.bonds[b]) for b in self.adjacency[atom]]


# --- tokenizer --------------------------------------------------------------

class TokenType(enum.Enum):
    """Possible SMILES token types"""
    ATOM = 1
    BOND = 2
    BRANCH_START = 3
    BRANCH_END = 4
    RING_NUM = 5
    STEREO_BOND = 6
    DOT = 7


def _tokenize(smiles: str) -> Iterator[Tuple[TokenType, str, int]]:
    """Yield (type, text, offset) tokens"""
    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]
        if ch == "[":
            close = smiles.find("]", i)
            if close < 0:
                raise SmilesSyntaxError("unterminated bracket atom", i, smiles)
            yield TokenType.ATOM, smiles[i:close + 1], i
            i = close + 1
        elif smiles.startswith(("Cl", "Br"), i):
            yield TokenType.ATOM, smiles[i:i + 2], i
            i += 2
        elif ch in ORGANIC_SUBSET or ch in AROMATIC_SUBSET:
            yield TokenType.ATOM, ch, i
            i += 1
        elif ch in _BOND_SYMBOLS:
            yield TokenType.BOND, ch, i
            i += 1
        elif ch in "/\\":
            yield TokenType.STEREO_BOND, ch, i
            i += 1
        elif ch == "(":
            yield TokenType.BRANCH_START, ch, i
            i += 1
        elif ch == ")":
            yield TokenType.BRANCH_END, ch, i
            i += 1
        elif ch == ".":
            yield TokenType.DOT, ch, i
            i += 1
        elif ch == "%":
            digits = smiles[i + 1:i + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise SmilesSyntaxError("ring number after % must have two digits", i, smiles)
            yield TokenType.RING_NUM, digits, i
            i += 3
        elif ch.isdigit():
            yield TokenType.RING_NUM, ch, i
            i += 1
        elif ch == "$":
            raise SmilesSyntaxError("quadruple bonds are not supported", i, smiles)
        else:
            raise UnknownElement(f"unknown element {ch!r}", i, smiles)


@dataclass
class _AtomSpec:
    element: int
    aromatic: bool
    bracket: bool
    charge: int = 0
    hcount: Optional[int] = None
    offset: int = 0


def _parse_bracket(token: str, offset: int, smiles: str) -> _AtomSpec:
    body = token[1:-1]
    pos = 0
    while pos < len(body) and body[pos].isdigit():
        pos += 1  # isotope, ignored
    symbol = None
    aromatic = False
    for candidate in AROMATIC_BRACKET:
        if body.startswith(candidate, pos):
            symbol, aromatic = candidate.capitalize(), True
            break
    if symbol is None:
        two = body[pos:pos + 2]
        if len(two) == 2 and two in ATOMIC_NUMBER:
            symbol = two
        elif body[pos:pos + 1] in ATOMIC_NUMBER:
            symbol = body[pos:pos + 1]
    if symbol is None:
        raise UnknownElement(f"unknown element in {token!r}", offset + 1 + pos, smiles)
    pos += len(symbol)

    if body.startswith("@", pos):
        warnings.warn(f"tetrahedral stereo in {token!r} is discarded", stacklevel=3)
        logger.warning(f"Discarding chirality marker in {token}")
        while body.startswith("@", pos):
            pos += 1
        while pos < len(body) and (body[pos].isalpha() and body[pos] != "H" or body[pos].isdigit()):
            pos += 1  # @TH1, @SP2 and friends

    hcount = 0
    if body.startswith("H", pos):
        pos += 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        hcount = int(digits) if digits else 1

    charge = 0
    if pos < len(body) and body[pos] in "+-":
        sign_char = body[pos]
        sign = 1 if sign_char == "+" else -1
        run = 0
        while pos < len(body) and body[pos] == sign_char:
            run += 1
            pos += 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        charge = sign * (int(digits) if digits else run)

    if body.startswith(":", pos):
        pos = len(body)  # atom class, ignored
    if pos != len(body):
        raise SmilesSyntaxError(f"unexpected {body[pos:]!r} in bracket atom", offset + 1 + pos, smiles)

    return _AtomSpec(ATOMIC_NUMBER[symbol], aromatic, True, charge, hcount, offset)


def _parse_atom(token: str, offset: int, smiles: str) -> _AtomSpec:
    if token.startswith("["):
        return _parse_bracket(token, offset, smiles)
    if token in AROMATIC_SUBSET:
        return _AtomSpec(ATOMIC_NUMBER[token.capitalize()], True, False, offset=offset)
    return _AtomSpec(ATOMIC_NUMBER[token], False, False, offset=offset)


# --- parser -----------------------------------------------------------------

def parse_smiles(text: str) -> MolecularGraph:
    """
    Parse a SMILES string into a fully annotated molecular graph.

    Rings, implicit hydrogens and hybridization are resolved before returning.
    Raises a SmilesError subclass carrying the offending character offset.
    """
    if not text or not text.isascii():
        raise SmilesSyntaxError("SMILES must be non-empty ASCII", 0, text)

    specs: List[_AtomSpec] = []
    edges: List[Tuple[int, int, Optional[BondOrder]]] = []
    edge_keys = set()
    anchor: Optional[int] = None
    pending_bond: Optional[BondOrder] = None
    pending_offset = 0
    branches: List[Tuple[Optional[int], int]] = []
    ring_open: Dict[str, Tuple[int, Optional[BondOrder], int]] = {}
    stereo_warned = False

    def add_edge(a: int, b: int, order: Optional[BondOrder], offset: int):
        key = (min(a, b), max(a, b))
        if a == b:
            raise SmilesSyntaxError("ring bond from an atom to itself", offset, text)
        if key in edge_keys:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}", offset, text)
        edge_keys.add(key)
        edges.append((a, b, order))

    for ttype, token, offset in _tokenize(text):
        if ttype == TokenType.ATOM:
            spec = _parse_atom(token, offset, text)
            specs.append(spec)
            idx = len(specs) - 1
            if anchor is not None:
                add_edge(anchor, idx, pending_bond, offset)
            elif pending_bond is not None:
                raise SmilesSyntaxError("bond symbol without a preceding atom", pending_offset, text)
            pending_bond = None
            anchor = idx
        elif ttype in (TokenType.BOND, TokenType.STEREO_BOND):
            if ttype == TokenType.STEREO_BOND:
                if not stereo_warned:
                    warnings.warn(f"E/Z stereo marker {token!r} is discarded", stacklevel=2)
                    logger.warning(f"Discarding stereo bond markers in {text}")
                    stereo_warned = True
                order = BondOrder.SINGLE
            else:
                order = _BOND_SYMBOLS[token]
            if pending_bond is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", offset, text)
            pending_bond, pending_offset = order, offset
        elif ttype == TokenType.BRANCH_START:
            if anchor is None:
                raise SmilesSyntaxError("branch before any atom", offset, text)
            branches.append((anchor, offset))
        elif ttype == TokenType.BRANCH_END:
            if not branches:
                raise UnbalancedParenthesis("unmatched ')'", offset, text)
            if pending_bond is not None:
                raise SmilesSyntaxError("dangling bond symbol", pending_offset, text)
            anchor, _ = branches.pop()
        elif ttype == TokenType.DOT:
            if pending_bond is not None:
                raise SmilesSyntaxError("dangling bond symbol", pending_offset, text)
            anchor = None
        elif ttype == TokenType.RING_NUM:
            if anchor is None:
                raise SmilesSyntaxError("ring number before any atom", offset, text)
            if token in ring_open:
                partner, order, open_offset = ring_open.pop(token)
                if order is not None and pending_bond is not None and order != pending_bond:
                    raise SmilesSyntaxError(f"conflicting bond orders for ring {token}", offset, text)
                add_edge(anchor, partner, pending_bond or order, offset)
            else:
                ring_open[token] = (anchor, pending_bond, offset)
            pending_bond = None

    if branches:
        raise UnbalancedParenthesis("unclosed '('", branches[-1][1], text)
    if ring_open:
        first = min(ring_open.values(), key=lambda item: item[2])
        raise UnclosedRingBond("ring bond never closed", first[2], text)
    if pending_bond is not None:
        raise SmilesSyntaxError("dangling bond symbol", pending_offset, text)

    bonds = []
    for a, b, order in edges:
        both_aromatic = specs[a].aromatic and specs[b].aromatic
        if order is None or (order == BondOrder.AROMATIC and not both_aromatic):
            order = BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE
        bonds.append(Bond(a, b, order))

    graph = _build_graph(specs, bonds, text)
    graph = perceive_rings(graph)
    # aromatic atoms joined outside a ring (biaryl links) share a single bond
    graph = MolecularGraph(graph.atoms, tuple(
        replace(b, order=BondOrder.SINGLE) if b.order == BondOrder.AROMATIC and not b.in_ring else b
        for b in graph.bonds
    ), graph.canonical_source)
    for i, atom in enumerate(graph.atoms):
        if atom.aromatic and not atom.in_ring:
            raise NonRingAromatic("aromatic atom outside any ring", specs[i].offset, text)
    graph = assign_hybridization(graph)
    return _assign_conjugation(graph)


def _implicit_hydrogens(spec: _AtomSpec, incident: Sequence[Bond], text: str) -> int:
    if spec.bracket:
        return 0
    valences = VALENCES.get(spec.element)
    if valences is None:
        return 0
    aromatic_bonds = sum(1 for b in incident if b.order == BondOrder.AROMATIC)
    used = sum(b.order.valence for b in incident)
    has_double = any(b.order == BondOrder.DOUBLE for b in incident)
    if spec.aromatic and aromatic_bonds and spec.element in _PI_DONORS and not has_double:
        used += 1
    for valence in valences:
        if used <= valence:
            return valence - used
    raise ValenceOverflow(
        f"{SYMBOL[spec.element]} has bond order sum {used} above maximum valence {valences[-1]}",
        spec.offset, text,
    )


def _build_graph(specs: List[_AtomSpec], bonds: List[Bond], text: str) -> MolecularGraph:
    incident: List[List[Bond]] = [[] for _ in specs]
    for bond in bonds:
        incident[bond.begin].append(bond)
        incident[bond.end].append(bond)
    atoms = []
    for spec, inc in zip(specs, incident):
        atoms.append(Atom(
            element=spec.element,
            formal_charge=spec.charge,
            explicit_h=spec.hcount if spec.bracket else None,
            aromatic=spec.aromatic,
            degree=len(inc),
            implicit_h=_implicit_hydrogens(spec, inc, text),
            bracket=spec.bracket,
        ))
    return MolecularGraph(tuple(atoms), tuple(bonds), canonical_source=text)


# --- ring perception --------------------------------------------------------

def ring_basis(graph: MolecularGraph) -> List[List[int]]:
    """
    Fundamental cycle basis as lists of bond indices.

    Built from a BFS spanning forest: every non-tree bond closes exactly one
    basis cycle through the tree path between its endpoints.
    """
    n = graph.num_atoms
    parent: List[Optional[int]] = [None] * n
    parent_bond: List[Optional[int]] = [None] * n
    depth = [-1] * n
    tree_bonds = set()
    for root in range(n):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for b in graph.adjacency[u]:
                v = graph.bonds[b].other(u)
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    parent[v] = u
                    parent_bond[v] = b
                    tree_bonds.add(b)
                    queue.append(v)

    cycles = []
    for b, bond in enumerate(graph.bonds):
        if b in tree_bonds:
            continue
        u, v = bond.begin, bond.end
        path = [b]
        while u != v:
            if depth[u] >= depth[v]:
                path.append(parent_bond[u])
                u = parent[u]
            else:
                path.append(parent_bond[v])
                v = parent[v]
        cycles.append(path)
    return cycles


def perceive_rings(graph: MolecularGraph) -> MolecularGraph:
    """Flag every atom and bond lying on a cycle (union of a cycle basis)."""
    ring_bonds = set()
    for cycle in ring_basis(graph):
        ring_bonds.update(cycle)
    ring_atoms = set()
    for b in ring_bonds:
        ring_atoms.update(graph.bonds[b].endpoints)
    atoms = tuple(replace(a, in_ring=i in ring_atoms) for i, a in enumerate(graph.atoms))
    bonds = tuple(replace(bd, in_ring=i in ring_bonds) for i, bd in enumerate(graph.bonds))
    return MolecularGraph(atoms, bonds, graph.canonical_source)


# --- hybridization and conjugation -----------------------------------------

def assign_hybridization(graph: MolecularGraph) -> MolecularGraph:
    """
    sp for a triple bond or two double bonds, sp2 for one double bond or
    aromatic membership, sp3 for saturated atoms with at least one
    connection, other for isolated atoms and hydrogen.
    """
    atoms = []
    for i, atom in enumerate(graph.atoms):
        orders = [graph.bonds[b].order for b in graph.adjacency[i]]
        doubles = orders.count(BondOrder.DOUBLE)
        triples = orders.count(BondOrder.TRIPLE)
        if triples or doubles >= 2:
            hyb = Hybridization.SP
        elif doubles == 1 or atom.aromatic:
            hyb = Hybridization.SP2
        elif atom.element != 1 and atom.degree + atom.total_h > 0:
            hyb = Hybridization.SP3
        else:
            hyb = Hybridization.OTHER
        atoms.append(replace(atom, hybridization=hyb))
    return MolecularGraph(tuple(atoms), graph.bonds, graph.canonical_source)


def _assign_conjugation(graph: MolecularGraph) -> MolecularGraph:
    # A bond is conjugated when it is aromatic, or it is a multiple bond
    # sharing an atom with another multiple/aromatic bond, or it is a single
    # bond joining two atoms that both carry a multiple/aromatic bond.
    unsaturated = [False] * graph.num_atoms
    for bond in graph.bonds:
        if bond.order != BondOrder.SINGLE:
            unsaturated[bond.begin] = unsaturated[bond.end] = True
    bonds = []
    for idx, bond in enumerate(graph.bonds):
        if bond.order == BondOrder.AROMATIC:
            conj = True
        elif bond.order == BondOrder.SINGLE:
            conj = unsaturated[bond.begin] and unsaturated[bond.end]
        else:
            conj = any(
                graph.bonds[other].order != BondOrder.SINGLE
                for atom in bond.endpoints
                for other in graph.adjacency[atom]
                if other != idx
            )
        bonds.append(replace(bond, conjugated=conj))
    return MolecularGraph(graph.atoms, tuple(bonds), graph.canonical_source)
