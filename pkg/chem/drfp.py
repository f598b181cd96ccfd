"""
Differential reaction fingerprints.

Each molecule contributes the set of its circular atom environments at radii
0..r. A reaction fingerprint hashes every environment whose occurrence count
differs between the reactant and product sides into a fixed-width bit vector.
"""
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from chem.smiles import MolecularGraph, parse_smiles
from shared.errors import SmilesSyntaxError, WidthMismatch

DEFAULT_RADIUS = 3
DEFAULT_WIDTH = 2048

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 bytes of ``text``"""
    value = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK64
    return value


@dataclass(frozen=True)
class Fingerprint:
    """Binary fingerprint of fixed width"""

    bits: np.ndarray
    width: int = DEFAULT_WIDTH
    radius: int = DEFAULT_RADIUS

    def __post_init__(self):
        if self.width <= 0 or self.width & (self.width - 1):
            raise ValueError(f"fingerprint width must be a power of two, got {self.width}")
        if self.bits.shape != (self.width,):
            raise WidthMismatch(self.width, int(self.bits.size), "fingerprint")

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    def as_float(self, dtype=np.float64) -> np.ndarray:
        return self.bits.astype(dtype)

    def to_hex(self) -> str:
        """Big-endian hex rendering, bit 0 is the most significant bit of the first nibble"""
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, width: Optional[int] = None, radius: int = DEFAULT_RADIUS) -> "Fingerprint":
        raw = np.frombuffer(bytes.fromhex(text.strip()), dtype=np.uint8)
        bits = np.unpackbits(raw)
        width = width or bits.size
        if bits.size != width:
            raise WidthMismatch(width, int(bits.size), "hex fingerprint")
        return cls(bits.astype(np.uint8), width, radius)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.width == other.width and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.width, self.to_hex()))


def atom_invariant(graph: MolecularGraph, index: int) -> str:
    atom = graph.atoms[index]
    return (
        f"{atom.symbol};D{atom.degree};H{atom.total_h};"
        f"{atom.formal_charge:+d};R{int(atom.in_ring)};a{int(atom.aromatic)}"
    )


def _environment(graph: MolecularGraph, root: int, radius: int, parent: Optional[int]) -> str:
    label = atom_invariant(graph, root)
    if radius == 0:
        return label
    branches = sorted(
        bond.order.symbol + _environment(graph, nbr, radius - 1, root)
        for nbr, bond in graph.neighbors(root)
        if nbr != parent
    )
    return f"{label}({','.join(branches)})" if branches else label


def circular_substructures(graph: MolecularGraph, radius: int = DEFAULT_RADIUS) -> FrozenSet[str]:
    """
    Canonical keys of every atom-centred environment at radii 0..radius.

    An environment key unfolds the neighbourhood as a rooted tree and
    encodes children in sorted order, so symmetric atoms give equal keys.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    keys = set()
    for atom in range(graph.num_atoms):
        for r in range(radius + 1):
            keys.add(f"r{r}:" + _environment(graph, atom, r, None))
    return frozenset(keys)


class SubstructureCache:
    """Thread-safe memo of per-molecule substructure sets keyed by (SMILES, radius)"""

    def __init__(self):
        self._lock = threading.Lock()
        self._store: Dict[Tuple[str, int], FrozenSet[str]] = {}

    def get(self, smiles: str, radius: int) -> FrozenSet[str]:
        key = (smiles, radius)
        with self._lock:
            cached = self._store.get(key)
        if cached is not None:
            return cached
        keys = circular_substructures(parse_smiles(smiles), radius)
        with self._lock:
            self._store.setdefault(key, keys)
        return keys

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)


substructure_cache = SubstructureCache()


def differential_keys(
    reactant_smiles: Sequence[str],
    product_smiles: Sequence[str],
    radius: int = DEFAULT_RADIUS,
    cache: Optional[SubstructureCache] = None,
) -> List[str]:
    """Keys whose per-molecule occurrence counts differ between the two sides, sorted"""
    cache = cache or substructure_cache
    left: Counter = Counter()
    right: Counter = Counter()
    for smiles in reactant_smiles:
        left.update(cache.get(smiles, radius))
    for smiles in product_smiles:
        right.update(cache.get(smiles, radius))
    return sorted(k for k in set(left) | set(right) if left[k] != right[k])


def drfp_fingerprint(
    reactant_smiles: Sequence[str],
    product_smiles: Sequence[str],
    radius: int = DEFAULT_RADIUS,
    width: int = DEFAULT_WIDTH,
    cache: Optional[SubstructureCache] = None,
) -> Fingerprint:
    """
    Hash the differential substructures of a reaction into ``width`` bits.

    Args:
        reactant_smiles: Molecules on the left-hand side
        product_smiles: Molecules on the right-hand side
        radius: Largest environment radius
        width: Number of bits (power of two)

    Returns:
        Fingerprint with bit ``fnv1a_64(key) % width`` set for each differing key
    """
    bits = np.zeros(width, dtype=np.uint8)
    for key in differential_keys(reactant_smiles, product_smiles, radius, cache):
        bits[fnv1a_64(key) % width] = 1
    return Fingerprint(bits, width, radius)


def split_reaction(rxn_smiles: str) -> Tuple[List[str], List[str]]:
    """Split ``A.B>agents>C`` or ``A.B>>C`` into reactant and product molecule lists"""
    parts = rxn_smiles.strip().split(">")
    if len(parts) != 3:
        raise SmilesSyntaxError("reaction SMILES must contain exactly two '>' separators", 0, rxn_smiles)
    reactants, _, products = parts
    return _molecules(reactants), _molecules(products)


def _molecules(side: str) -> List[str]:
    return [m for m in side.split(".") if m]


def reaction_fingerprints(reactions: Iterable[Tuple[Sequence[str], Sequence[str]]],
                          radius: int = DEFAULT_RADIUS,
                          width: int = DEFAULT_WIDTH) -> List[Fingerprint]:
    return [drfp_fingerprint(r, p, radius, width) for r, p in reactions]
