"""
Boykov-Kolmogorov augmenting-path max-flow / min-cut.

Two search trees grow from the terminals; when they touch, flow is pushed
along the connecting path and the orphaned subtrees are re-adopted. Arcs are
stored in pairs (``a``, ``a ^ 1``) so the reverse arc is found by flipping the
last bit.

Usage::

    net = FlowNetwork(2)
    net.add_tweights(0, 3.0, 0.0)
    net.add_edge(0, 1, 1.0, 0.0)
    net.add_tweights(1, 0.0, 3.0)
    cut = net.max_flow()      # cut.flow_value == 1.0
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

EPS = 1e-12

_TERMINAL = -1
_ORPHAN = -2
_FREE = -3


@dataclass(frozen=True)
class CutResult:
    flow_value: float
    side: np.ndarray  # True = source side


class FlowNetwork:
    """
    s-t network over ``node_count`` inner nodes.

    Terminal capacities accumulate; a large finite constant (see
    :meth:`infinite_capacity`) stands in for hard constraints.
    A network is solved at most once.
    """

    def __init__(self, node_count: int):
        self.node_count = int(node_count)
        self._cs = [0.0] * self.node_count
        self._ct = [0.0] * self.node_count
        self._tail: list[int] = []
        self._head: list[int] = []
        self._cap: list[float] = []
        self._solved = False
        self._result = None
        self._residual = None
        self._tr = None

    # -- construction -------------------------------------------------------

    def add_tweights(self, i: int, cap_source: float, cap_sink: float) -> None:
        if cap_source < 0 or cap_sink < 0:
            raise ValueError("terminal capacities must be nonnegative")
        self._cs[i] += float(cap_source)
        self._ct[i] += float(cap_sink)

    def add_tweights_array(self, cap_source, cap_sink) -> None:
        cs = np.asarray(cap_source, dtype=float)
        ct = np.asarray(cap_sink, dtype=float)
        if cs.shape != (self.node_count,) or ct.shape != (self.node_count,):
            raise ValueError("terminal capacity arrays must have one entry per node")
        if np.any(cs < 0) or np.any(ct < 0):
            raise ValueError("terminal capacities must be nonnegative")
        self._cs = (np.asarray(self._cs) + cs).tolist()
        self._ct = (np.asarray(self._ct) + ct).tolist()

    def add_edge(self, i: int, j: int, cap: float, rev_cap: float = 0.0) -> None:
        if cap < 0 or rev_cap < 0:
            raise ValueError("arc capacities must be nonnegative")
        if i == j:
            raise ValueError("self loops are not allowed")
        self._tail += [i, j]
        self._head += [j, i]
        self._cap += [float(cap), float(rev_cap)]

    def add_edges(self, i, j, cap, rev_cap) -> None:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        cap = np.broadcast_to(np.asarray(cap, dtype=float), i.shape)
        rev_cap = np.broadcast_to(np.asarray(rev_cap, dtype=float), i.shape)
        if np.any(cap < 0) or np.any(rev_cap < 0):
            raise ValueError("arc capacities must be nonnegative")
        if np.any(i == j):
            raise ValueError("self loops are not allowed")
        self._tail += np.stack([i, j], axis=1).ravel().tolist()
        self._head += np.stack([j, i], axis=1).ravel().tolist()
        self._cap += np.stack([cap, rev_cap], axis=1).ravel().tolist()

    def finite_capacity_sum(self) -> float:
        return float(sum(self._cs) + sum(self._ct) + sum(self._cap))

    @staticmethod
    def infinite_capacity(finite_total: float) -> float:
        """Sentinel strictly larger than any cut made of finite arcs."""
        return 2.0 * finite_total + 1.0

    @property
    def arcs(self):
        """``(tail, head, capacity)`` arrays over all stored arcs."""
        return (
            np.asarray(self._tail, dtype=np.int64),
            np.asarray(self._head, dtype=np.int64),
            np.asarray(self._cap, dtype=float),
        )

    # -- solve ---------------------------------------------------------------

    def max_flow(self) -> CutResult:
        if self._solved:
            return self._result
        n = self.node_count
        head = self._head
        r = list(self._cap)
        out = [[] for _ in range(n)]
        for a, t in enumerate(self._tail):
            out[t].append(a)

        flow = 0.0
        tr = [0.0] * n
        for i in range(n):
            cs, ct = self._cs[i], self._ct[i]
            flow += min(cs, ct)
            tr[i] = cs - ct

        parent = [_FREE] * n
        sink = [False] * n
        ts = [0] * n
        dist = [0] * n
        active = deque()
        in_active = [False] * n
        for i in range(n):
            if tr[i] > EPS:
                parent[i] = _TERMINAL
                sink[i] = False
                dist[i] = 1
                active.append(i)
                in_active[i] = True
            elif tr[i] < -EPS:
                parent[i] = _TERMINAL
                sink[i] = True
                dist[i] = 1
                active.append(i)
                in_active[i] = True

        time = 0
        orphans = deque()

        while True:
            # growth: find an arc from the source tree into the sink tree
            bridge = -1
            while active:
                i = active[0]
                if parent[i] == _FREE:
                    active.popleft()
                    in_active[i] = False
                    continue
                if not sink[i]:
                    for a in out[i]:
                        if r[a] > EPS:
                            j = head[a]
                            if parent[j] == _FREE:
                                sink[j] = False
                                parent[j] = a ^ 1
                                ts[j] = ts[i]
                                dist[j] = dist[i] + 1
                                if not in_active[j]:
                                    active.append(j)
                                    in_active[j] = True
                            elif sink[j]:
                                bridge = a
                                break
                            elif ts[j] <= ts[i] and dist[j] > dist[i]:
                                parent[j] = a ^ 1
                                ts[j] = ts[i]
                                dist[j] = dist[i] + 1
                else:
                    for a in out[i]:
                        if r[a ^ 1] > EPS:
                            j = head[a]
                            if parent[j] == _FREE:
                                sink[j] = True
                                parent[j] = a ^ 1
                                ts[j] = ts[i]
                                dist[j] = dist[i] + 1
                                if not in_active[j]:
                                    active.append(j)
                                    in_active[j] = True
                            elif not sink[j]:
                                bridge = a ^ 1
                                break
                            elif ts[j] <= ts[i] and dist[j] > dist[i]:
                                parent[j] = a ^ 1
                                ts[j] = ts[i]
                                dist[j] = dist[i] + 1
                if bridge >= 0:
                    break
                active.popleft()
                in_active[i] = False

            if bridge < 0:
                break
            time += 1

            # augment along source-root .. tail(bridge) -> head(bridge) .. sink-root
            s_node = head[bridge ^ 1]
            t_node = head[bridge]
            bottleneck = r[bridge]
            k = s_node
            while parent[k] != _TERMINAL:
                a = parent[k] ^ 1
                if r[a] < bottleneck:
                    bottleneck = r[a]
                k = head[parent[k]]
            if tr[k] < bottleneck:
                bottleneck = tr[k]
            k = t_node
            while parent[k] != _TERMINAL:
                a = parent[k]
                if r[a] < bottleneck:
                    bottleneck = r[a]
                k = head[a]
            if -tr[k] < bottleneck:
                bottleneck = -tr[k]

            r[bridge] -= bottleneck
            r[bridge ^ 1] += bottleneck
            k = s_node
            while parent[k] != _TERMINAL:
                pa = parent[k]
                r[pa ^ 1] -= bottleneck
                r[pa] += bottleneck
                nxt = head[pa]
                if r[pa ^ 1] <= EPS:
                    parent[k] = _ORPHAN
                    orphans.appendleft(k)
                k = nxt
            tr[k] -= bottleneck
            if tr[k] <= EPS:
                parent[k] = _ORPHAN
                orphans.appendleft(k)
            k = t_node
            while parent[k] != _TERMINAL:
                pa = parent[k]
                r[pa] -= bottleneck
                r[pa ^ 1] += bottleneck
                nxt = head[pa]
                if r[pa] <= EPS:
                    parent[k] = _ORPHAN
                    orphans.appendleft(k)
                k = nxt
            tr[k] += bottleneck
            if tr[k] >= -EPS:
                parent[k] = _ORPHAN
                orphans.appendleft(k)
            flow += bottleneck

            # adoption
            while orphans:
                i = orphans.popleft()
                is_sink = sink[i]
                best_arc = _FREE
                best_d = None
                for a0 in out[i]:
                    # candidate parent j must be able to carry flow toward i
                    # (source tree) or receive it from i (sink tree)
                    cap_ok = r[a0] > EPS if is_sink else r[a0 ^ 1] > EPS
                    if not cap_ok:
                        continue
                    j = head[a0]
                    if sink[j] != is_sink or parent[j] == _FREE:
                        continue
                    # walk to the root to check j's origin
                    d = 0
                    k = j
                    while True:
                        if ts[k] == time:
                            d += dist[k]
                            break
                        pk = parent[k]
                        d += 1
                        if pk == _TERMINAL:
                            ts[k] = time
                            dist[k] = 1
                            break
                        if pk == _ORPHAN or pk == _FREE:
                            d = None
                            break
                        k = head[pk]
                    if d is None:
                        continue
                    if best_d is None or d < best_d:
                        best_arc = a0
                        best_d = d
                    # stamp the path so later walks stop early
                    k = j
                    dd = d
                    while ts[k] != time:
                        ts[k] = time
                        dist[k] = dd
                        dd -= 1
                        k = head[parent[k]]
                if best_arc != _FREE:
                    parent[i] = best_arc
                    ts[i] = time
                    dist[i] = best_d + 1
                    continue
                # no valid parent: free i, wake neighbours, orphan its children
                parent[i] = _FREE
                for a0 in out[i]:
                    j = head[a0]
                    if sink[j] != is_sink or parent[j] == _FREE:
                        continue
                    pj = parent[j]
                    cap_ok = r[a0] > EPS if is_sink else r[a0 ^ 1] > EPS
                    if cap_ok and not in_active[j]:
                        active.append(j)
                        in_active[j] = True
                    if pj >= 0 and head[pj] == i:
                        parent[j] = _ORPHAN
                        orphans.append(j)

        side = np.array(
            [parent[i] != _FREE and not sink[i] for i in range(n)], dtype=bool
        )
        self._residual = r
        self._tr = tr
        self._solved = True
        self._result = CutResult(flow_value=flow, side=side)
        return self._result

    # -- diagnostics ---------------------------------------------------------

    def cut_capacity(self, side) -> float:
        """Capacity of the s-t cut whose source side is ``side``."""
        side = np.asarray(side, dtype=bool)
        cs = np.asarray(self._cs)
        ct = np.asarray(self._ct)
        total = cs[~side].sum() + ct[side].sum()
        tail, head, cap = self.arcs
        if len(cap):
            total += cap[side[tail] & ~side[head]].sum()
        return float(total)

    def arc_flows(self) -> np.ndarray:
        """Flow on each stored arc after solving (negative = reverse)."""
        if not self._solved:
            raise RuntimeError("network has not been solved")
        cap = np.asarray(self._cap)
        return cap - np.asarray(self._residual)

    def conservation_defect(self) -> float:
        """Largest violation of flow conservation at an inner node."""
        if not self._solved:
            raise RuntimeError("network has not been solved")
        tail, _, _ = self.arcs
        f = self.arc_flows()
        # within a pair f[a] == -f[a ^ 1]: each side books its own outflow
        net_out = np.zeros(self.node_count)
        even = np.arange(0, len(f), 2)
        np.add.at(net_out, tail[even], f[even])
        np.add.at(net_out, tail[even + 1], f[even + 1])
        terminal_in = np.asarray(self._cs) - np.asarray(self._ct) - np.asarray(self._tr)
        return float(np.max(np.abs(net_out - terminal_in), initial=0.0))
