"""Time-dependent least-cost paths on the arc graph."""
from __future__ import annotations

import heapq

import numpy as np


class NoPathError(RuntimeError):
    pass


class PathFinder:
    """Label-setting shortest paths where arc costs depend on the entry interval.

    ``arc_times`` has shape ``(n_arcs, n_intervals)``; an arc entered at time ``t``
    costs ``arc_times[a, interval_of(t)]`` (times past the horizon use the last
    interval).
    """

    def __init__(self, network, interval_duration: float, n_intervals: int):
        self.n_nodes = len(network.nodes)
        self.heads = [a.to_node for a in network.arcs]
        self.tails = [a.from_node for a in network.arcs]
        self.adjacency = [[] for _ in range(self.n_nodes)]
        for arc in network.arcs:
            self.adjacency[arc.from_node].append(arc.id)
        self.interval_duration = interval_duration
        self.n_intervals = n_intervals

    def _interval(self, t: float) -> int:
        k = int(t // self.interval_duration)
        return k if k < self.n_intervals else self.n_intervals - 1

    def tree(self, origin, departure, arc_times, multipliers=None, target=None):
        """Earliest-arrival labels and predecessor arcs from ``origin``."""
        arrival = [np.inf] * self.n_nodes
        pred = [-1] * self.n_nodes
        arrival[origin] = departure
        heap = [(departure, origin)]
        done = [False] * self.n_nodes
        heads, adjacency, interval = self.heads, self.adjacency, self._interval
        while heap:
            t, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == target:
                break
            k = interval(t)
            for a in adjacency[u]:
                cost = arc_times[a][k]
                if multipliers is not None:
                    cost *= multipliers[a]
                v = heads[a]
                if t + cost < arrival[v]:
                    arrival[v] = t + cost
                    pred[v] = a
                    heapq.heappush(heap, (t + cost, v))
        return arrival, pred

    def _trace(self, pred, origin, destination):
        path = []
        v = destination
        while v != origin:
            a = pred[v]
            if a < 0:
                raise NoPathError(f"no path from {origin} to {destination}")
            path.append(a)
            v = self.tails[a]
        return tuple(reversed(path))

    def path_cost(self, path, departure, arc_times) -> float:
        """Travel time of ``path`` when departing at ``departure``."""
        t = departure
        for a in path:
            t += arc_times[a][self._interval(t)]
        return t - departure

    def least_cost_paths_from(self, origin, destinations, departure, arc_times):
        """One least-cost path per destination from a single tree."""
        arrival, pred = self.tree(origin, departure, arc_times)
        out = {}
        for d in destinations:
            if not np.isfinite(arrival[d]):
                raise NoPathError(f"no path from {origin} to {d}")
            out[d] = self._trace(pred, origin, d)
        return out

    def k_paths(self, origin, destination, departure, arc_times, k=3, penalty=1.5, max_rounds=None):
        """Up to ``k`` loop-free alternatives, found by penalising used arcs.

        Returns a list of ``(cost, path)`` sorted by unpenalised cost.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        multipliers = [1.0] * len(self.heads)
        found = {}
        for _ in range(max_rounds or 3 * k):
            arrival, pred = self.tree(origin, departure, arc_times, multipliers, target=destination)
            if not np.isfinite(arrival[destination]):
                raise NoPathError(f"no path from {origin} to {destination}")
            path = self._trace(pred, origin, destination)
            if path not in found:
                found[path] = self.path_cost(path, departure, arc_times)
                if len(found) == k:
                    break
            for a in path:
                multipliers[a] *= penalty
        ranked = sorted(found.items(), key=lambda item: (item[1], item[0]))
        return [(cost, path) for path, cost in ranked]


def time_dependent_shortest_paths(network, od_pair, departure, arc_times, k, interval_duration):
    """Up to ``k`` least-cost paths ``(cost, arc-id tuple)`` for one OD pair."""
    arc_times = np.asarray(arc_times, dtype=float)
    if arc_times.ndim == 1:
        arc_times = arc_times[:, None]
    finder = PathFinder(network, interval_duration, arc_times.shape[1])
    return finder.k_paths(od_pair[0], od_pair[1], departure, arc_times.tolist(), k=k)
