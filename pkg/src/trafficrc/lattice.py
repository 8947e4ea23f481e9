"""Lattice road network: junctions, directed links, and turn tables."""

from __future__ import annotations

import json

import numpy as np

__all__ = [
    "N", "E", "S", "W", "DIR_NAMES",
    "Network", "TurnTable",
    "build_lattice", "assign_turn_table", "axis_partition",
    "save_network", "load_network",
]

# Travel directions, clockwise from north; x grows east, y grows north.
N, E, S, W = 0, 1, 2, 3
DX = (0, 1, 0, -1)
DY = (1, 0, -1, 0)
DIR_NAMES = ("N", "E", "S", "W")

_WEIGHT_TOL = 1e-12


class Network:
    """Directed road lattice.

    Junctions are indexed row-major, ``j = y * n + x`` with x growing east and
    y growing north. Links are directed (two per physical road segment) and
    enumerated in canonical order: source junction ascending, outgoing
    direction in N, E, S, W order. Instances are immutable after construction
    and safe to share between concurrent simulations.
    """

    def __init__(self, n, link_from, link_to, link_dir, length):
        self.n = int(n)
        self.n_junctions = self.n * self.n
        self.link_from = link_from
        self.link_to = link_to
        self.link_dir = link_dir
        self.length = length
        self.n_links = int(link_from.size)
        self.jx = np.arange(self.n_junctions, dtype=np.int64) % self.n
        self.jy = np.arange(self.n_junctions, dtype=np.int64) // self.n
        # a link occupies the NS signal axis iff it travels north or south
        self.link_axis_ns = (link_dir == N) | (link_dir == S)

        self.out_by_dir = np.full((self.n_junctions, 4), -1, dtype=np.int64)
        for l in range(self.n_links):
            self.out_by_dir[link_from[l], link_dir[l]] = l
        self.reverse = np.array(
            [self.out_by_dir[link_to[l], (link_dir[l] + 2) % 4]
             for l in range(self.n_links)],
            dtype=np.int64,
        )
        self.in_links = [np.flatnonzero(link_to == j)
                         for j in range(self.n_junctions)]
        self.out_links = [np.flatnonzero(link_from == j)
                          for j in range(self.n_junctions)]
        self._index = {(int(link_from[l]), int(link_to[l])): l
                       for l in range(self.n_links)}

    def junction_id(self, x, y):
        """Row-major junction id for grid coordinates (x east, y north)."""
        if not (0 <= x < self.n and 0 <= y < self.n):
            raise ValueError(f"coordinates ({x}, {y}) outside {self.n}x{self.n} grid")
        return y * self.n + x

    def link_index(self, from_j, to_j):
        """Canonical index of the directed link from_j -> to_j."""
        try:
            return self._index[(int(from_j), int(to_j))]
        except KeyError:
            raise ValueError(f"no link {from_j} -> {to_j}") from None


def build_lattice(n, link_length=1.0):
    """Build the n x n lattice with its 4n(n-1) directed links.

    link_length may be a positive scalar, a sequence of per-link lengths in
    canonical order, or a mapping {(from_id, to_id): length}.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    frm, to, dr = [], [], []
    for j in range(n * n):
        x, y = j % n, j // n
        for d in (N, E, S, W):
            nx, ny = x + DX[d], y + DY[d]
            if 0 <= nx < n and 0 <= ny < n:
                frm.append(j)
                to.append(ny * n + nx)
                dr.append(d)
    link_from = np.asarray(frm, dtype=np.int64)
    link_to = np.asarray(to, dtype=np.int64)
    link_dir = np.asarray(dr, dtype=np.int64)
    n_links = link_from.size

    if isinstance(link_length, dict):
        try:
            length = np.array(
                [link_length[(int(a), int(b))] for a, b in zip(link_from, link_to)],
                dtype=float,
            )
        except KeyError as exc:
            raise ValueError(f"link_length mapping is missing link {exc}") from None
    elif np.isscalar(link_length):
        length = np.full(n_links, float(link_length))
    else:
        length = np.asarray(link_length, dtype=float)
        if length.shape != (n_links,):
            raise ValueError(
                f"link_length sequence must have length {n_links}, got {length.shape}")
        length = length.copy()
    if n_links and not np.all(length > 0):
        raise ValueError("link lengths must be positive")
    return Network(n, link_from, link_to, link_dir, length)


class TurnTable:
    """Split weights from each incoming link onto outgoing links.

    Row l holds the outgoing link ids (idx, padded with -1) and weights (wgt)
    for traffic leaving link l at its destination junction; cnt[l] gives the
    number of valid entries. Every row sums to 1.
    """

    def __init__(self, idx, wgt, cnt):
        self.idx = idx
        self.wgt = wgt
        self.cnt = cnt
        self._matrix = None

    @property
    def n_links(self):
        return int(self.idx.shape[0])

    def row(self, link):
        c = self.cnt[link]
        return self.idx[link, :c], self.wgt[link, :c]

    def matrix(self):
        """Dense redistribution matrix M with M[src, dst] = split weight."""
        if self._matrix is None:
            m = np.zeros((self.n_links, self.n_links))
            for l in range(self.n_links):
                ids, w = self.row(l)
                m[l, ids] = w
            self._matrix = m
        return self._matrix


def assign_turn_table(net, w, rng=None, permute=True):
    """Assign (right, left, straight) weights to every incoming link.

    w = (w_r, w_l, w_s) must be nonnegative and sum to 1. With permute=True
    (the default) each incoming link receives a random permutation of the
    three weights onto its (right, left, straight) outgoing links; with
    permute=False the identity assignment is used. The reverse link (U-turn)
    gets weight 0 whenever any other outgoing link exists; weights of missing
    boundary directions are redistributed proportionally over the remaining
    non-reverse links (equally, when those all carry weight 0).
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (3,):
        raise ValueError("turn weights must be a 3-vector (right, left, straight)")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > _WEIGHT_TOL:
        raise ValueError("turn weights must be nonnegative and sum to 1")
    if permute and rng is None:
        raise ValueError("permute=True requires an rng")

    n_links = net.n_links
    idx = np.full((n_links, 3), -1, dtype=np.int64)
    wgt = np.zeros((n_links, 3))
    cnt = np.zeros(n_links, dtype=np.int64)
    for l in range(n_links):
        j = net.link_to[l]
        d = net.link_dir[l]
        rel = ((d + 1) % 4, (d + 3) % 4, d)  # right, left, straight
        assigned = w[rng.permutation(3)] if permute else w
        targets = net.out_by_dir[j, rel]
        have = targets >= 0
        k = int(have.sum())
        if k == 0:
            # dead end: only the reverse link remains (never on a lattice, n >= 2)
            idx[l, 0] = net.reverse[l]
            wgt[l, 0] = 1.0
            cnt[l] = 1
            continue
        present = assigned[have]
        s = float(present.sum())
        vals = present / s if s > 0 else np.full(k, 1.0 / k)
        vals = vals / vals.sum()
        idx[l, :k] = targets[have]
        wgt[l, :k] = vals
        cnt[l] = k
    return TurnTable(idx, wgt, cnt)


def axis_partition(net, junction):
    """Incoming links of a junction split into (north-south, east-west) axes."""
    if not (0 <= junction < net.n_junctions):
        raise ValueError(f"junction {junction} out of range")
    ins = net.in_links[junction]
    ns = ins[net.link_axis_ns[ins]]
    return ns, ins[~net.link_axis_ns[ins]]


def save_network(path, net, table=None):
    """Write the network (and optionally its turn table) as JSON.

    Schema: {"n": int, "links": [{"from", "to", "length"}],
    "turns": [{"junction", "in", "out", "weight"}]} where "in"/"out" are
    canonical link indices into the links array.
    """
    data = {
        "n": net.n,
        "links": [
            {"from": int(net.link_from[l]), "to": int(net.link_to[l]),
             "length": float(net.length[l])}
            for l in range(net.n_links)
        ],
    }
    if table is not None:
        turns = []
        for l in range(net.n_links):
            ids, wv = table.row(l)
            for o, x in zip(ids, wv):
                turns.append({"junction": int(net.link_to[l]), "in": int(l),
                              "out": int(o), "weight": float(x)})
        data["turns"] = turns
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_network(path):
    """Read a network written by save_network. Returns (net, table or None)."""
    with open(path) as fh:
        data = json.load(fh)
    n = data["n"]
    links = data["links"]
    lengths = [entry["length"] for entry in links]
    net = build_lattice(n, lengths if lengths else 1.0)
    if len(links) != net.n_links:
        raise ValueError(f"expected {net.n_links} links for n={n}, file has {len(links)}")
    for l, entry in enumerate(links):
        if entry["from"] != int(net.link_from[l]) or entry["to"] != int(net.link_to[l]):
            raise ValueError(f"links[{l}] does not match canonical enumeration")
    if "turns" not in data:
        return net, None
    idx = np.full((net.n_links, 3), -1, dtype=np.int64)
    wgt = np.zeros((net.n_links, 3))
    cnt = np.zeros(net.n_links, dtype=np.int64)
    for entry in data["turns"]:
        l = entry["in"]
        if net.link_to[l] != entry["junction"]:
            raise ValueError(f"turn entry for link {l} names the wrong junction")
        c = cnt[l]
        if c >= 3:
            raise ValueError(f"more than 3 turn entries for link {l}")
        idx[l, c] = entry["out"]
        wgt[l, c] = entry["weight"]
        cnt[l] = c + 1
    sums = np.array([wgt[l, :cnt[l]].sum() for l in range(net.n_links)])
    if net.n_links and np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("turn rows must sum to 1")
    return net, TurnTable(idx, wgt, cnt)
