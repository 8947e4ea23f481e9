"""Multi-agent traffic: optimal-velocity car following under signal control."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .density import ReservoirSnapshot, _run_trajectory
from .signals import link_go, reservoir_observables

__all__ = [
    "OVParams", "ov_velocity", "AgentState", "init_agents",
    "agent_link_densities", "AgentSim",
]


@dataclass(frozen=True)
class OVParams:
    """Optimal-velocity dynamics parameters.

    dt is the Euler substep; one reservoir step spans one time unit, so
    round(1/dt) substeps run per sampled step. d_min is the hard minimum
    spacing, horizon the headway cap used when nothing is ahead.
    """
    a: float = 1.0
    v_scale: float = 2.0
    c: float = 2.0
    w: float = 1.0
    dt: float = 0.1
    d_min: float = 0.1
    horizon: float = 1e3

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.d_min < 0:
            raise ValueError("d_min must be nonnegative")
        if self.v_scale < 0:
            raise ValueError("v_scale must be nonnegative")
        if self.w <= 0:
            raise ValueError("w must be positive")
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def substeps(self):
        """Euler substeps per reservoir step (one time unit)."""
        return max(1, int(round(1.0 / self.dt)))

    @property
    def v_sup(self):
        """Supremum of the optimal-velocity function."""
        return 0.5 * self.v_scale * (1.0 + math.tanh(self.c / self.w))


def ov_velocity(h, params):
    """Optimal speed V(h) = (v_scale/2) [tanh((h-c)/w) + tanh(c/w)].

    V(0) = 0, V is nondecreasing and saturates at v_sup. Headways must be
    nonnegative.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("headway must be nonnegative")
    half = 0.5 * params.v_scale
    return half * (np.tanh((h - params.c) / params.w) + np.tanh(params.c / params.w))


class AgentState:
    """Flat agent arrays, kept sorted by (link id, position ascending).

    next_link[i] is the outgoing link agent i will take at the end of its
    current link, pre-drawn at link entry.
    """

    def __init__(self, link, x, v, next_link):
        self.link = np.asarray(link, dtype=np.int64).copy()
        self.x = np.asarray(x, dtype=float).copy()
        self.v = np.asarray(v, dtype=float).copy()
        self.next_link = np.asarray(next_link, dtype=np.int64).copy()
        if not (self.link.shape == self.x.shape == self.v.shape
                == self.next_link.shape):
            raise ValueError("agent arrays must share one shape")
        self.sort()

    @property
    def count(self):
        return self.link.size

    def sort(self):
        order = np.lexsort((self.x, self.link))
        self.link = self.link[order]
        self.x = self.x[order]
        self.v = self.v[order]
        self.next_link = self.next_link[order]

    def copy(self):
        return AgentState(self.link, self.x, self.v, self.next_link)


class _TurnSampler:
    """Inverse-CDF turn draws from a TurnTable (one uniform per draw)."""

    def __init__(self, table):
        self.idx = table.idx
        self.cnt = table.cnt
        self.cum = np.cumsum(table.wgt, axis=1)

    def draw(self, link, rng):
        c = int(self.cnt[link])
        k = int(np.searchsorted(self.cum[link, :c], rng.random(), side="right"))
        if k >= c:
            k = c - 1
        return int(self.idx[link, k])


def init_agents(net, table, rng, per_link=10, params=None):
    """Evenly spaced standing agents on every link, routes pre-drawn.

    per_link is a count applied to all links or a per-link sequence. Spacing
    must respect d_min: (count+1) slots must fit in the link length.
    """
    params = params or OVParams()
    if np.isscalar(per_link):
        counts = np.full(net.n_links, int(per_link), dtype=np.int64)
    else:
        counts = np.asarray(per_link, dtype=np.int64)
        if counts.shape != (net.n_links,):
            raise ValueError("per_link sequence must have one entry per link")
    if np.any(counts < 0):
        raise ValueError("agent counts must be nonnegative")
    links, xs = [], []
    for l in range(net.n_links):
        c = int(counts[l])
        if c == 0:
            continue
        length = net.length[l]
        if length / (c + 1) < params.d_min:
            raise ValueError(
                f"link {l}: {c} agents cannot keep spacing d_min={params.d_min}")
        links.append(np.full(c, l, dtype=np.int64))
        xs.append(length * (np.arange(c) + 1.0) / (c + 1))
    if not links:
        empty = np.empty(0, dtype=np.int64)
        return AgentState(empty, np.empty(0), np.empty(0), empty)
    link = np.concatenate(links)
    x = np.concatenate(xs)
    sampler = _TurnSampler(table)
    nxt = np.array([sampler.draw(l, rng) for l in link], dtype=np.int64)
    return AgentState(link, x, np.zeros_like(x), nxt)


def agent_link_densities(state, net):
    """Per-link densities: agent count / link length."""
    counts = np.bincount(state.link, minlength=net.n_links)
    return counts / net.length


class AgentSim:
    """Steps the multi-agent model; emits reservoir snapshots.

    Each reservoir step takes the snapshot (agent-count densities, junction
    inflow sums, phase observables), holds the signal state fixed while the
    Euler substeps run, then advances the phases. A red light acts as a
    stationary obstacle at the stop line; a leader crossing on green moves to
    its pre-drawn outgoing link at x - L with velocity kept, and is blocked
    at the line when the target link has no room at its upstream end.
    """

    def __init__(self, net, table, bank, state, params, rng):
        if bank.n_junctions != net.n_junctions:
            raise ValueError("phase bank size does not match the network")
        if table.n_links != net.n_links:
            raise ValueError("turn table size does not match the network")
        self.net = net
        self.table = table
        self.bank = bank
        self.state = state
        self.params = params
        self.rng = rng
        self.t = 0
        self.min_gap = math.inf
        self._sampler = _TurnSampler(table)
        self._tanh_c = math.tanh(params.c / params.w)

    def step(self, u_ext=None):
        """Advance one reservoir step; returns the pre-movement snapshot."""
        st = self.state
        net = self.net
        k = agent_link_densities(st, net)
        u = np.bincount(net.link_to, weights=k, minlength=net.n_junctions)
        x1, x2 = reservoir_observables(u, self.bank.theta)
        snap = ReservoirSnapshot(self.t, u, x1, x2, k)
        red = ~link_go(self.bank, net)
        for _ in range(self.params.substeps):
            self._substep(red)
        self.bank.step(self.t, u_ext)
        self.t += 1
        return snap

    def run(self, steps, inputs=None):
        return _run_trajectory(self, steps, inputs)

    def _substep(self, red):
        st = self.state
        p = self.params
        n = st.count
        if n == 0:
            return
        xs, vs, ls, nxt = st.x, st.v, st.link, st.next_link
        # rear-most occupant per link: the first agent of each sorted segment
        seg_start = np.empty(n, dtype=bool)
        seg_start[0] = True
        seg_start[1:] = ls[1:] != ls[:-1]
        rear = np.full(self.net.n_links, np.inf)
        starts = np.flatnonzero(seg_start)
        rear[ls[starts]] = xs[starts]
        lead = np.empty(n, dtype=bool)
        lead[-1] = True
        lead[:-1] = ls[1:] != ls[:-1]
        extra = np.zeros(n)
        green_lead = lead & ~red[ls]
        if green_lead.any():
            ahead = rear[nxt[green_lead]]
            extra[green_lead] = np.where(np.isfinite(ahead), ahead, p.horizon)
        kernels.agents_substep(xs, vs, ls, extra, self.net.length, red,
                               p.a, 0.5 * p.v_scale, p.c, p.w, self._tanh_c,
                               p.dt, p.d_min)
        self._transfers(red)
        st = self.state
        if st.count > 1:
            same = st.link[1:] == st.link[:-1]
            if same.any():
                gap = (st.x[1:] - st.x[:-1])[same].min()
                if gap < self.min_gap:
                    self.min_gap = float(gap)

    def _transfers(self, red):
        st = self.state
        lens = self.net.length
        p = self.params
        while True:
            ls, xs = st.link, st.x
            n = st.count
            lead = np.empty(n, dtype=bool)
            lead[-1] = True
            lead[:-1] = ls[1:] != ls[:-1]
            cross = lead & ~red[ls] & (xs > lens[ls])
            hits = np.flatnonzero(cross)
            if hits.size == 0:
                return
            i = int(hits[0])
            src = int(ls[i])
            tgt = int(st.next_link[i])
            overshoot = xs[i] - lens[src]
            on_tgt = np.flatnonzero(ls == tgt)
            if on_tgt.size == 0:
                pos = overshoot
            else:
                rear = float(xs[on_tgt[0]])
                if rear - p.d_min < 0.0:
                    # no room at the upstream end: wait at the stop line, and
                    # push the follower chain back so spacing stays >= d_min
                    st.x[i] = lens[src]
                    st.v[i] = 0.0
                    j = i - 1
                    while j >= 0 and ls[j] == src \
                            and st.x[j] > st.x[j + 1] - p.d_min:
                        st.x[j] = st.x[j + 1] - p.d_min
                        j -= 1
                    continue
                pos = min(overshoot, rear - p.d_min)
            st.link[i] = tgt
            st.x[i] = pos
            st.next_link[i] = self._sampler.draw(tgt, self.rng)
            st.sort()
