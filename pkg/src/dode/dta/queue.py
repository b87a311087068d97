"""Event-driven mesoscopic queue model.

Every arc is a FIFO queue. A vehicle may leave an arc once it has spent the
free-flow traversal time on it, it is at the head of the queue, the arc's
outflow headway has elapsed since the previous exit, and the next arc on its
path has storage room (otherwise it waits: spillback). Vehicles waiting to
depart are held at their origin until the first arc has room.

Two engines share these exact event semantics: a pure-Python reference and a
numba kernel. Events are ordered by ``(time, sequence number)`` in both, so
they produce identical traces.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

SATURATION_FLOW = 1800.0  # veh/h/lane
VEHICLE_LENGTH = 7.5  # m of storage per vehicle
_EPS = 1e-9


@dataclass
class Trace:
    """Per-(vehicle, arc) entry/exit times of one simulation run.

    ``exit_time`` is NaN for traversals still in progress when the run was
    flushed; ``arrival`` is NaN (and ``flushed`` True) for vehicles that never
    reached their destination.
    """

    vehicle: np.ndarray
    arc: np.ndarray
    entry_time: np.ndarray
    exit_time: np.ndarray
    departure: np.ndarray
    arrival: np.ndarray
    flushed: np.ndarray

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z.astype(np.int64), z.astype(np.int64), z, z, z, z, z.astype(bool))

    def __len__(self):
        return len(self.vehicle)


def arc_parameters(network, saturation_flow=SATURATION_FLOW, vehicle_length=VEHICLE_LENGTH):
    """Free-flow times, exit headways (s) and storage capacities (veh) per arc."""
    fft = np.array([a.free_flow_time for a in network.arcs], dtype=float)
    headway = np.array([3600.0 / (a.lanes * saturation_flow) for a in network.arcs], dtype=float)
    storage = np.array([max(1, int(a.lanes * a.length / vehicle_length)) for a in network.arcs], dtype=np.int64)
    return fft, headway, storage


def simulate_once(network, departures, paths, *, saturation_flow=SATURATION_FLOW,
                  vehicle_length=VEHICLE_LENGTH, stop_time=np.inf, params=None, engine="auto") -> Trace:
    """Run one simulation.

    Parameters
    ----------
    network : Network
    departures : sequence of float
        Departure time per vehicle.
    paths : sequence of tuple of int
        Arc ids travelled by each vehicle, in order.
    stop_time : float
        Vehicles still in the network at this time are flushed and flagged.
    params : tuple, optional
        Precomputed :func:`arc_parameters` output.
    engine : {"auto", "numba", "python"}
    """
    n_veh = len(departures)
    if n_veh == 0:
        return Trace.empty()
    fft, headway, storage = params if params is not None else arc_parameters(network, saturation_flow, vehicle_length)
    departures = np.asarray(departures, dtype=float)
    if engine == "python" or (engine == "auto" and numba is None):
        return _simulate_python(departures, paths, fft, headway, storage, stop_time)
    if numba is None:
        raise RuntimeError("numba engine requested but numba is not installed")
    lengths = np.fromiter((len(p) for p in paths), dtype=np.int64, count=n_veh)
    if np.any(lengths == 0):
        raise ValueError("every vehicle needs a nonempty path")
    ptr = np.zeros(n_veh + 1, dtype=np.int64)
    np.cumsum(lengths, out=ptr[1:])
    flat = np.fromiter((a for p in paths for a in p), dtype=np.int64, count=int(ptr[-1]))
    veh, arc, entry, exit_, arrival = _kernel(departures, ptr, flat, fft, headway, storage, float(stop_time))
    return Trace(veh, arc, entry, exit_, departures, arrival, np.isnan(arrival))


def _simulate_python(departures, paths, fft, headway, storage, stop_time) -> Trace:
    n_veh = len(departures)
    n_arcs = len(fft)
    fft, headway, storage = fft.tolist(), headway.tolist(), storage.tolist()

    queues = [deque() for _ in range(n_arcs)]
    sources = [deque() for _ in range(n_arcs)]
    occupancy = [0] * n_arcs
    last_exit = [-np.inf] * n_arcs
    waiting = [[] for _ in range(n_arcs)]

    position = [0] * n_veh
    entered = [0.0] * n_veh
    record = [-1] * n_veh
    arrival = [np.nan] * n_veh
    tr_vehicle, tr_arc, tr_entry, tr_exit = [], [], [], []

    # event codes: a < n_arcs releases the head of arc a; n_arcs + b inserts waiting
    # departures into arc b; 2 * n_arcs + v is the departure of vehicle v
    heap = [(float(departures[v]), v, 2 * n_arcs + v) for v in range(n_veh)]
    heapq.heapify(heap)
    seq = n_veh
    push, pop = heapq.heappush, heapq.heappop

    def enter(v, b, t):
        nonlocal seq
        entered[v] = t
        record[v] = len(tr_vehicle)
        tr_vehicle.append(v)
        tr_arc.append(b)
        tr_entry.append(t)
        tr_exit.append(np.nan)
        queues[b].append(v)
        occupancy[b] += 1
        if len(queues[b]) == 1:
            push(heap, (t + fft[b], seq, b))
            seq += 1

    while heap:
        t, _, code = pop(heap)
        if t > stop_time:
            break
        if code >= 2 * n_arcs:
            v = code - 2 * n_arcs
            b = paths[v][0]
            if not sources[b] and occupancy[b] < storage[b]:
                enter(v, b, t)
            else:
                sources[b].append(v)
                if n_arcs + b not in waiting[b]:
                    waiting[b].append(n_arcs + b)
        elif code >= n_arcs:
            b = code - n_arcs
            src = sources[b]
            while src and occupancy[b] < storage[b]:
                enter(src.popleft(), b, t)
            if src and code not in waiting[b]:
                waiting[b].append(code)
        else:
            a = code
            q = queues[a]
            if not q:
                continue
            v = q[0]
            ready = max(entered[v] + fft[a], last_exit[a] + headway[a])
            if ready > t + _EPS:
                push(heap, (ready, seq, a))
                seq += 1
                continue
            path = paths[v]
            nxt = position[v] + 1
            if nxt < len(path) and occupancy[path[nxt]] >= storage[path[nxt]]:
                if a not in waiting[path[nxt]]:
                    waiting[path[nxt]].append(a)
                continue
            q.popleft()
            occupancy[a] -= 1
            last_exit[a] = t
            tr_exit[record[v]] = t
            if nxt < len(path):
                position[v] = nxt
                enter(v, path[nxt], t)
            else:
                arrival[v] = t
            if q:
                push(heap, (max(entered[q[0]] + fft[a], t + headway[a]), seq, a))
                seq += 1
            for blocked in waiting[a]:
                push(heap, (t, seq, blocked))
                seq += 1
            waiting[a].clear()

    arrival = np.array(arrival)
    return Trace(np.array(tr_vehicle, dtype=np.int64), np.array(tr_arc, dtype=np.int64),
                 np.array(tr_entry, dtype=float), np.array(tr_exit, dtype=float),
                 np.asarray(departures, dtype=float), arrival, np.isnan(arrival))


def _njit(fn):
    return numba.njit(cache=True)(fn) if numba is not None else fn


@_njit
def _heap_less(ht, hs, i, j):
    return ht[i] < ht[j] or (ht[i] == ht[j] and hs[i] < hs[j])


@_njit
def _heap_swap(ht, hs, hc, i, j):
    ht[i], ht[j] = ht[j], ht[i]
    hs[i], hs[j] = hs[j], hs[i]
    hc[i], hc[j] = hc[j], hc[i]


@_njit
def _heap_push(ht, hs, hc, size, t, s, c):
    i = size
    ht[i] = t
    hs[i] = s
    hc[i] = c
    while i > 0:
        parent = (i - 1) // 2
        if _heap_less(ht, hs, i, parent):
            _heap_swap(ht, hs, hc, i, parent)
            i = parent
        else:
            break
    return size + 1


@_njit
def _heap_pop(ht, hs, hc, size):
    size -= 1
    _heap_swap(ht, hs, hc, 0, size)
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and _heap_less(ht, hs, left + 1, left):
            child = left + 1
        if _heap_less(ht, hs, child, i):
            _heap_swap(ht, hs, hc, child, i)
            i = child
        else:
            break
    return size


@_njit
def _kernel(departures, ptr, flat, fft, headway, storage, stop_time):
    n_veh = departures.shape[0]
    n_arcs = fft.shape[0]
    n_codes = 2 * n_arcs

    # per-arc FIFO ring buffers sized by storage
    qoff = np.zeros(n_arcs + 1, dtype=np.int64)
    for a in range(n_arcs):
        qoff[a + 1] = qoff[a] + storage[a]
    qbuf = np.empty(qoff[n_arcs], dtype=np.int64)
    qhead = np.zeros(n_arcs, dtype=np.int64)
    qlen = np.zeros(n_arcs, dtype=np.int64)
    last_exit = np.full(n_arcs, -np.inf)

    # origin queues as linked lists
    src_head = np.full(n_arcs, -1, dtype=np.int64)
    src_tail = np.full(n_arcs, -1, dtype=np.int64)
    src_next = np.full(n_veh, -1, dtype=np.int64)

    # codes blocked on space in an arc, as linked lists
    wait_head = np.full(n_arcs, -1, dtype=np.int64)
    wait_tail = np.full(n_arcs, -1, dtype=np.int64)
    wait_next = np.full(n_codes, -1, dtype=np.int64)
    wait_on = np.full(n_codes, -1, dtype=np.int64)

    position = np.zeros(n_veh, dtype=np.int64)
    entered = np.zeros(n_veh, dtype=np.float64)
    record = np.full(n_veh, -1, dtype=np.int64)
    arrival = np.full(n_veh, np.nan)

    cap_tr = int(ptr[n_veh])
    tr_vehicle = np.empty(cap_tr, dtype=np.int64)
    tr_arc = np.empty(cap_tr, dtype=np.int64)
    tr_entry = np.empty(cap_tr, dtype=np.float64)
    tr_exit = np.full(cap_tr, np.nan)
    n_tr = 0

    cap = n_veh + 4 * n_codes + 16
    ht = np.empty(cap, dtype=np.float64)
    hs = np.empty(cap, dtype=np.int64)
    hc = np.empty(cap, dtype=np.int64)
    size = 0
    for v in range(n_veh):
        size = _heap_push(ht, hs, hc, size, departures[v], v, 2 * n_arcs + v)
    seq = n_veh

    while size > 0:
        t = ht[0]
        code = hc[0]
        size = _heap_pop(ht, hs, hc, size)
        if t > stop_time:
            break
        if size + 2 * n_codes + 4 >= cap:
            cap *= 2
            ht2 = np.empty(cap, dtype=np.float64)
            hs2 = np.empty(cap, dtype=np.int64)
            hc2 = np.empty(cap, dtype=np.int64)
            ht2[:size] = ht[:size]
            hs2[:size] = hs[:size]
            hc2[:size] = hc[:size]
            ht, hs, hc = ht2, hs2, hc2

        if code >= 2 * n_arcs:
            v = code - 2 * n_arcs
            b = flat[ptr[v]]
            if src_head[b] < 0 and qlen[b] < storage[b]:
                enter_v = v
            else:
                enter_v = -1
                if src_tail[b] < 0:
                    src_head[b] = v
                else:
                    src_next[src_tail[b]] = v
                src_tail[b] = v
                c = n_arcs + b
                if wait_on[c] != b:
                    wait_on[c] = b
                    wait_next[c] = -1
                    if wait_tail[b] < 0:
                        wait_head[b] = c
                    else:
                        wait_next[wait_tail[b]] = c
                    wait_tail[b] = c
            if enter_v >= 0:
                entered[v] = t
                record[v] = n_tr
                tr_vehicle[n_tr] = v
                tr_arc[n_tr] = b
                tr_entry[n_tr] = t
                n_tr += 1
                qbuf[qoff[b] + (qhead[b] + qlen[b]) % storage[b]] = v
                qlen[b] += 1
                if qlen[b] == 1:
                    size = _heap_push(ht, hs, hc, size, t + fft[b], seq, b)
                    seq += 1
        elif code >= n_arcs:
            b = code - n_arcs
            while src_head[b] >= 0 and qlen[b] < storage[b]:
                v = src_head[b]
                src_head[b] = src_next[v]
                if src_head[b] < 0:
                    src_tail[b] = -1
                entered[v] = t
                record[v] = n_tr
                tr_vehicle[n_tr] = v
                tr_arc[n_tr] = b
                tr_entry[n_tr] = t
                n_tr += 1
                qbuf[qoff[b] + (qhead[b] + qlen[b]) % storage[b]] = v
                qlen[b] += 1
                if qlen[b] == 1:
                    size = _heap_push(ht, hs, hc, size, t + fft[b], seq, b)
                    seq += 1
            if src_head[b] >= 0 and wait_on[code] != b:
                wait_on[code] = b
                wait_next[code] = -1
                if wait_tail[b] < 0:
                    wait_head[b] = code
                else:
                    wait_next[wait_tail[b]] = code
                wait_tail[b] = code
        else:
            a = code
            if qlen[a] == 0:
                continue
            v = qbuf[qoff[a] + qhead[a]]
            ready = entered[v] + fft[a]
            gap = last_exit[a] + headway[a]
            if gap > ready:
                ready = gap
            if ready > t + 1e-9:
                size = _heap_push(ht, hs, hc, size, ready, seq, a)
                seq += 1
                continue
            nxt = position[v] + 1
            has_next = ptr[v] + nxt < ptr[v + 1]
            if has_next:
                b = flat[ptr[v] + nxt]
                if qlen[b] >= storage[b]:
                    if wait_on[a] != b:
                        wait_on[a] = b
                        wait_next[a] = -1
                        if wait_tail[b] < 0:
                            wait_head[b] = a
                        else:
                            wait_next[wait_tail[b]] = a
                        wait_tail[b] = a
                    continue
            qhead[a] = (qhead[a] + 1) % storage[a]
            qlen[a] -= 1
            last_exit[a] = t
            tr_exit[record[v]] = t
            if has_next:
                position[v] = nxt
                entered[v] = t
                record[v] = n_tr
                tr_vehicle[n_tr] = v
                tr_arc[n_tr] = b
                tr_entry[n_tr] = t
                n_tr += 1
                qbuf[qoff[b] + (qhead[b] + qlen[b]) % storage[b]] = v
                qlen[b] += 1
                if qlen[b] == 1:
                    size = _heap_push(ht, hs, hc, size, t + fft[b], seq, b)
                    seq += 1
            else:
                arrival[v] = t
            if qlen[a] > 0:
                w = qbuf[qoff[a] + qhead[a]]
                nt = entered[w] + fft[a]
                if t + headway[a] > nt:
                    nt = t + headway[a]
                size = _heap_push(ht, hs, hc, size, nt, seq, a)
                seq += 1
            c = wait_head[a]
            while c >= 0:
                size = _heap_push(ht, hs, hc, size, t, seq, c)
                seq += 1
                nc = wait_next[c]
                wait_on[c] = -1
                wait_next[c] = -1
                c = nc
            wait_head[a] = -1
            wait_tail[a] = -1

    return tr_vehicle[:n_tr], tr_arc[:n_tr], tr_entry[:n_tr], tr_exit[:n_tr], arrival
