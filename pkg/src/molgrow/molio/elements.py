"""Element tables: the categorical set, valence rules, hybridization labels."""

from __future__ import annotations

# fixed 12-way categorical set; anything unlisted featurizes as "other"
ELEMENTS: tuple[str, ...] = ("C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B", "Si", "other")

# organic subset: atoms writable bare in SMILES; everything else needs brackets
ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_OK = {"b", "c", "n", "o", "p", "s"}

# lowest standard valence: used to assign implicit hydrogens
DEFAULT_VALENCE = {
    "C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1, "Br": 1, "I": 1,
    "P": 3, "B": 3, "Si": 4,
}

# maximum bonded valence accepted by validation (hypervalent S and P allowed)
MAX_VALENCE = {
    "C": 4, "N": 3, "O": 2, "S": 6, "F": 1, "Cl": 1, "Br": 1, "I": 1,
    "P": 5, "B": 3, "Si": 4,
}

HYBRIDIZATIONS: tuple[str, ...] = ("s", "sp", "sp2", "sp3", "sp3d", "sp3d2", "other")

BOND_ORDERS: tuple[str, ...] = ("single", "double", "triple", "aromatic")
ORDER_VALUE = {"single": 1, "double": 2, "triple": 3, "aromatic": 1}


def allowed_valence(element: str, formal_charge: int) -> int | None:
    """Maximum bonded valence for an element/charge pair; None = unchecked.

    Charge shifts capacity in the usual directions: cationic N/P/O/S gain a
    slot, anionic ones lose one; charged carbon loses a slot either way;
    anionic boron gains one. Elements outside the table are not checked.
    """
    base = MAX_VALENCE.get(element)
    if base is None:
        return None
    if element in ("N", "P", "O", "S"):
        return max(0, base + formal_charge)
    if element == "C":
        return max(0, base - abs(formal_charge))
    if element == "B":
        return max(0, base - formal_charge)
    return base


def pi_increment(element: str, aromatic: bool, sigma_degree: int, explicit_h: int) -> int:
    """Ring-system bond-order credit for aromatic atoms.

    Carbon and boron in an aromatic ring always contribute one shared double
    bond; nitrogen/phosphorus only in the two-connected, H-free arrangement
    (the lone pair stays in the ring plane). Oxygen, sulfur and H-bearing
    nitrogen donate a lone pair instead and get no credit.
    """
    if not aromatic:
        return 0
    if element in ("C", "B"):
        return 1
    if element in ("N", "P") and sigma_degree == 2 and explicit_h == 0:
        return 1
    return 0


def implied_hydrogens(
    element: str, aromatic: bool, bond_order_sum: int, sigma_degree: int
) -> int:
    """Hydrogen count a bare (bracket-free) SMILES atom would receive.

    ``bond_order_sum`` counts aromatic bonds as one; the aromatic system's
    extra half-bonds enter through the pi credit.
    """
    base = DEFAULT_VALENCE.get(element)
    if base is None:
        return 0
    pi = pi_increment(element, aromatic, sigma_degree, explicit_h=0)
    return max(0, base - bond_order_sum - pi)


def hybridization_label(
    element: str, aromatic: bool, pi_orders: int, heavy_degree: int, n_hydrogens: int
) -> str:
    """Rule-table hybridization from bond orders and neighbour count."""
    partners = heavy_degree + n_hydrogens
    if partners == 0:
        return "s"
    if aromatic:
        return "sp2"
    if pi_orders >= 2:
        return "sp"
    if pi_orders == 1:
        return "sp2"
    if partners <= 4:
        return "sp3"
    if partners == 5:
        return "sp3d"
    if partners == 6:
        return "sp3d2"
    return "other"
