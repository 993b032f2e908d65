"""Shared scenario builders and independent oracles for the test suite.

Everything here is deliberately naive: brute force over full cross products,
textbook Floyd-Warshall, deep-copied simulation branching. The point is to
check the optimized implementations against code too simple to be wrong.
"""

from __future__ import annotations

import copy
import itertools

import numpy as np

from fairpool.city import CityGraph, Location, build_city
from fairpool.demand import RequestBatch, RideRequest
from fairpool.fleet import DriverState, FleetState, advance_fleet, apply_matching
from fairpool.matching import DelayConstraints, enumerate_feasible


def line_city(minutes: list[float], delta: float = 5.0, num_neighborhoods: int = 1,
              seed: int = 0) -> CityGraph:
    """Path graph 0-1-...-n with the given consecutive edge times (minutes)."""
    n = len(minutes) + 1
    locations = [Location(id=i, lat=float(i), lon=0.0) for i in range(n)]
    edges = []
    for i, m in enumerate(minutes):
        edges.append((i, i + 1, float(m)))
        edges.append((i + 1, i, float(m)))
    return build_city(locations, edges, delta, num_neighborhoods, seed)


def star_city(arm_minutes: list[float], delta: float = 5.0, num_neighborhoods: int = 1,
              seed: int = 0) -> CityGraph:
    """Hub location 0 with one leaf per arm; arm i connects 0 and i+1."""
    locations = [Location(id=0, lat=0.0, lon=0.0)]
    edges = []
    for i, m in enumerate(arm_minutes):
        angle = 2 * np.pi * i / len(arm_minutes)
        locations.append(Location(id=i + 1, lat=float(np.cos(angle)), lon=float(np.sin(angle))))
        edges.append((0, i + 1, float(m)))
        edges.append((i + 1, 0, float(m)))
    return build_city(locations, edges, delta, num_neighborhoods, seed)


def place_fleet(graph: CityGraph, locs: list[int], capacity: int = 4) -> FleetState:
    """Fleet with drivers pinned to specific start locations."""
    drivers = [
        DriverState(driver_id=i, capacity=capacity, loc=loc) for i, loc in enumerate(locs)
    ]
    return FleetState(drivers=drivers, clock=0.0)


def floyd_warshall(n: int, edges: list[tuple[int, int, float]]) -> np.ndarray:
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for src, dst, w in edges:
        dist[src, dst] = min(dist[src, dst], w)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i, k] + dist[k, j] < dist[i, j]:
                    dist[i, j] = dist[i, k] + dist[k, j]
    return dist


def brute_force_assignment(
    weights: list[list[float]], request_ids: list[list[tuple[int, ...]]]
) -> tuple[float, tuple[int, ...]]:
    """Exhaustive maximum over the full per-driver action cross product.

    Accumulates weights in driver index order (matching the solver's fold) and
    breaks ties toward the smallest per-driver (sorted request ids, index)
    sequence, so results are comparable float-for-float.
    """
    n = len(weights)
    best_total = float("-inf")
    best_key: tuple | None = None
    best_choice: tuple[int, ...] | None = None
    for combo in itertools.product(*[range(len(w)) for w in weights]):
        used: set[int] = set()
        ok = True
        for i, j in enumerate(combo):
            ids = request_ids[i][j]
            if any(rid in used for rid in ids):
                ok = False
                break
            used.update(ids)
        if not ok:
            continue
        total = 0.0
        for i, j in enumerate(combo):
            total += weights[i][j]
        key = tuple((request_ids[i][j], j) for i, j in enumerate(combo))
        if total > best_total or (total == best_total and key < best_key):
            best_total = total
            best_key = key
            best_choice = combo
    assert best_choice is not None, "instance admitted no assignment at all"
    return best_total, best_choice


def exhaustive_episode_incomes(
    graph: CityGraph,
    batches: list[RequestBatch],
    fleet: FleetState,
    constraints: DelayConstraints = DelayConstraints(),
    epoch_len_seconds: float = 60.0,
) -> list[tuple[tuple[tuple[int, ...], ...], float]]:
    """Every reachable sequence of per-epoch actions with its final income.

    Branches over the full cross product of feasible joint assignments at each
    epoch by deep-copying the fleet, so it is only usable on toy scenarios.
    Returns (per-epoch chosen request-id tuples, total income) pairs.
    """
    outcomes: list[tuple[tuple[tuple[int, ...], ...], float]] = []

    def joint_assignments(state: FleetState, batch: RequestBatch):
        per_driver = [
            enumerate_feasible(graph, d, batch.requests, state.clock, constraints)
            for d in state.drivers
        ]
        for combo in itertools.product(*[range(len(a)) for a in per_driver]):
            used: set[int] = set()
            ok = True
            for di, j in enumerate(combo):
                ids = per_driver[di][j].request_ids
                if any(rid in used for rid in ids):
                    ok = False
                    break
                used.update(ids)
            if ok:
                yield {
                    state.drivers[di].driver_id: per_driver[di][combo[di]]
                    for di in range(len(per_driver))
                }

    def walk(state: FleetState, k: int, trail: tuple[tuple[int, ...], ...]) -> None:
        if k == len(batches):
            outcomes.append((trail, sum(d.income for d in state.drivers)))
            return
        batch = batches[k]
        window_end = (batch.epoch_index + 1) * epoch_len_seconds
        if window_end > state.clock:
            advance_fleet(state, window_end - state.clock)
        for assignment in joint_assignments(state, batch):
            branch = copy.deepcopy(state)
            apply_matching(branch, assignment, graph)
            step = tuple(
                rid
                for d in sorted(assignment)
                for rid in assignment[d].request_ids
            )
            walk(branch, k + 1, trail + (step,))

    walk(copy.deepcopy(fleet), 0, ())
    return outcomes


def random_game(rng: np.random.Generator, n: int) -> dict[frozenset[int], float]:
    """Random superadditive-leaning coalition table over drivers 0..n-1."""
    base = rng.uniform(1.0, 10.0, size=n)
    synergy = rng.uniform(0.0, 2.0, size=(n, n))
    table: dict[frozenset[int], float] = {frozenset(): 0.0}
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        value = float(sum(base[i] for i in members))
        for a, b in itertools.combinations(members, 2):
            value += float(synergy[a, b])
        table[frozenset(members)] = value
    return table


def balanced_instance(
    rng: np.random.Generator, n: int, positive: bool = False
) -> tuple[list[float], list[float]]:
    """Nonnegative integer-valued (pi, v) with float-exact equal sums.

    Integer totals keep every sum exact in doubles, which is what lets the
    endpoint identities of the payout formula be checked with ==. With
    positive=True every v_i is at least 1 so ratios q_i/v_i are defined.
    """
    pi = [float(x) for x in rng.integers(1, 21, size=n)]
    total = int(sum(pi))
    if positive:
        spread = rng.multinomial(total - n, [1.0 / n] * n)
        v = [float(x + 1) for x in spread]
    else:
        v = [float(x) for x in rng.multinomial(total, [1.0 / n] * n)]
    return pi, v
