"""Generator for the 256-entry cube triangulation tables.

The full tables are expanded from 15 hand-authored base cases, one per
equivalence class of corner configurations under the 24 cube rotations
plus inside/outside complement.  Rotated copies keep their winding;
complemented copies reverse it so triangle orientation stays consistent
with the inside/outside classification.

The expansion output is frozen into ``_mc_tables.py`` (a checked-in
artifact); regenerating and comparing against the frozen copy is part
of the test suite.

Cube numbering: corner 0 at the cell origin, corners 0-3 counter
clockwise around the bottom face (+x first), corners 4-7 stacked above
them.  Edge k connects EDGE_CORNERS[k].
"""
from __future__ import annotations

import numpy as np

CORNER_OFFSETS = (
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
)

EDGE_CORNERS = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

# Triangulations of the 15 class representatives, as triples of edge
# indices.  Winding is counter-clockwise seen from the outside (the
# side classified below the threshold).
BASE_CASES = {
    0: [],
    1: [(0, 8, 3)],
    3: [(1, 8, 3), (9, 8, 1)],
    5: [(0, 8, 3), (1, 2, 10)],
    7: [(2, 8, 3), (2, 10, 8), (10, 9, 8)],
    15: [(9, 8, 10), (10, 8, 11)],
    20: [(1, 2, 10), (8, 4, 7)],
    21: [(3, 4, 7), (3, 0, 4), (1, 2, 10)],
    23: [(2, 10, 9), (2, 9, 7), (2, 7, 3), (7, 9, 4)],
    26: [(9, 0, 1), (8, 4, 7), (2, 3, 11)],
    27: [(4, 7, 11), (9, 4, 11), (9, 11, 2), (9, 2, 1)],
    29: [(1, 11, 10), (1, 4, 11), (1, 0, 4), (7, 11, 4)],
    30: [(4, 7, 8), (9, 0, 11), (9, 11, 10), (11, 0, 3)],
    60: [(9, 5, 8), (8, 5, 7), (10, 1, 3), (10, 3, 11)],
    90: [(0, 1, 9), (4, 7, 8), (2, 3, 11), (5, 10, 6)],
}


def _perm_from_rotation(rot):
    pos = {c: i for i, c in enumerate(CORNER_OFFSETS)}
    return tuple(pos[rot(c)] for c in CORNER_OFFSETS)


def rotation_perms() -> list[tuple[int, ...]]:
    """The 24 proper rotations of the cube as corner permutations."""

    def rot_z(c):
        x, y, z = c
        return (1 - y, x, z)

    def rot_x(c):
        x, y, z = c
        return (x, 1 - z, y)

    gens = [_perm_from_rotation(rot_z), _perm_from_rotation(rot_x)]
    perms = {tuple(range(8))}
    frontier = list(perms)
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = tuple(g[p[i]] for i in range(8))
                if q not in perms:
                    perms.add(q)
                    nxt.append(q)
        frontier = nxt
    assert len(perms) == 24
    return sorted(perms)


def _edge_lookup():
    return {frozenset(c): i for i, c in enumerate(EDGE_CORNERS)}


def apply_perm_to_mask(mask: int, perm) -> int:
    out = 0
    for i in range(8):
        if mask >> i & 1:
            out |= 1 << perm[i]
    return out


def crossed_edge_mask(config: int) -> int:
    """Bit e set iff edge e has one inside and one outside corner."""
    out = 0
    for e, (a, b) in enumerate(EDGE_CORNERS):
        if (config >> a & 1) != (config >> b & 1):
            out |= 1 << e
    return out


def generate_tables() -> tuple[np.ndarray, np.ndarray]:
    """Expand the base cases into (edge_table[256], tri_table[256, 16]).

    edge_table holds the crossed-edge bitmask, derived directly from the
    corner classification.  tri_table rows list up to five triangles as
    edge indices, padded with -1.
    """
    perms = rotation_perms()
    lookup = _edge_lookup()
    edge_map = {}
    for p in perms:
        edge_map[p] = tuple(
            lookup[frozenset((p[a], p[b]))] for a, b in EDGE_CORNERS
        )

    tris_by_mask: dict[int, list[tuple[int, int, int]]] = {}
    reps = sorted(BASE_CASES)
    # rotations first so masks reachable without complement keep the
    # authored diagonal choices; complements fill in the rest
    for rep in reps:
        for p in perms:
            mask = apply_perm_to_mask(rep, p)
            if mask not in tris_by_mask:
                em = edge_map[p]
                tris_by_mask[mask] = [
                    (em[a], em[b], em[c]) for a, b, c in BASE_CASES[rep]
                ]
    for rep in reps:
        for p in perms:
            mask = 255 ^ apply_perm_to_mask(rep, p)
            if mask not in tris_by_mask:
                em = edge_map[p]
                tris_by_mask[mask] = [
                    (em[a], em[c], em[b]) for a, b, c in BASE_CASES[rep]
                ]
    assert len(tris_by_mask) == 256

    edge_table = np.zeros(256, dtype=np.int32)
    tri_table = np.full((256, 16), -1, dtype=np.int8)
    for mask in range(256):
        edge_table[mask] = crossed_edge_mask(mask)
        tris = tris_by_mask[mask]
        assert len(tris) <= 5
        flat = [e for tri in tris for e in tri]
        tri_table[mask, : len(flat)] = flat
        used = set(flat)
        crossed = {e for e in range(12) if edge_table[mask] >> e & 1}
        assert used == crossed, f"mask {mask}: uses {used}, crossed {crossed}"
    return edge_table, tri_table


def freeze_tables(path) -> None:
    """Write the generated tables as the importable artifact module."""
    edge_table, tri_table = generate_tables()
    lines = [
        '"""Frozen cube triangulation tables.',
        "",
        "Generated by mc_tablegen.freeze_tables; do not edit by hand.",
        '"""',
        "import numpy as np",
        "",
        "EDGE_TABLE = np.array([",
    ]
    for i in range(0, 256, 16):
        row = ", ".join(f"0x{v:03x}" for v in edge_table[i : i + 16])
        lines.append(f"    {row},")
    lines.append("], dtype=np.int32)")
    lines.append("")
    lines.append("TRI_TABLE = np.array([")
    for row in tri_table:
        body = ", ".join(f"{v:d}" for v in row)
        lines.append(f"    [{body}],")
    lines.append("], dtype=np.int8)")
    lines.append("")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))


if __name__ == "__main__":
    import pathlib

    freeze_tables(pathlib.Path(__file__).with_name("_mc_tables.py"))
