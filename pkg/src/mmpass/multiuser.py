"""Three-stage multi-user optimization.

1. Geometry-guided grouping: users attach to their nearest waveguide,
   are sorted along it and paired with their neighbor; leftovers are
   pooled and matched exhaustively under the pairwise squared-distance
   metric, then a deterministic 2-opt sweep removes any crossing pairs
   the greedy construction left behind.
2. Element-to-group assignment: interference-free pair rates feed a
   rectangular assignment problem (Hungarian via
   scipy.optimize.linear_sum_assignment on a zero-padded square
   matrix); spare elements join groups one at a time by exact marginal
   gain, with interference recomputed after every placement.
3. Precoding: with the sparse per-element splits W_p frozen, the
   mode-domain mixer G is optimized by fractional programming
   (quadratic transform, closed-form auxiliary updates, a KKT linear
   solve and bisection on the power multiplier).

Single-mode ("-SM") schemes reuse the pair structure but serve one
user per element per time slot on the fundamental mode, with rates
scaled by the slot count.  Receive polarization policies: "PA" matches
the incident field exactly, "PI" fixes the near-vertical transverse
axis of the user's own frame, "DP" picks the best of 18 uniformly
spaced codebook angles.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import channel
from .geometry import Orientation, spherical_basis
from .placement import (LinkModel, _split_from_gains, optimal_orientation,
                        solve_single_user, two_user_shared_position)
from .polarization import codebook_angles, user_arrival_basis
from .radiation import (_local_angles, aperture_constant, pattern_factor,
                        polarization_components)
from .scenario import Scenario
from .waveguide import PaPlacement, coupling_length


@dataclass(frozen=True)
class Scheme:
    name: str
    num_modes: int
    rx_policy: str  # matched | fixed | codebook


_SCHEMES = {
    "pa-mm": Scheme("PA-MM", 2, "matched"),
    "pi-mm": Scheme("PI-MM", 2, "fixed"),
    "dp-mm": Scheme("DP-MM", 2, "codebook"),
    "pa-sm": Scheme("PA-SM", 1, "matched"),
    "pi-sm": Scheme("PI-SM", 1, "fixed"),
}


def parse_scheme(name: str) -> Scheme:
    key = name.strip().lower().replace("pass", "").replace("_", "-")
    key = key.replace("mmp", "mm").replace("smp", "sm")
    if key not in _SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; expected one of "
                         f"{sorted(s.name for s in _SCHEMES.values())}")
    return _SCHEMES[key]


# ---------------------------------------------------------------------------
# stage 1: grouping

@dataclass
class UserGrouping:
    groups: list[tuple[int, ...]]
    cost: float


def grouping_cost(users: np.ndarray, groups) -> float:
    """Sum of pairwise squared (x, y) distances inside each group."""
    total = 0.0
    for g in groups:
        for a, b in itertools.combinations(g, 2):
            total += float(np.sum((users[a, :2] - users[b, :2]) ** 2))
    return total


def _pool_pairings(pool):
    """All perfect matchings of an even pool (small by construction)."""
    pool = list(pool)
    if not pool:
        yield []
        return
    first, rest = pool[0], pool[1:]
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pool_pairings(remaining):
            yield [(first, partner)] + tail


def _two_opt(users, pairs, singles):
    """Deterministic local improvement: re-pair across group pairs and
    swap pair members with singletons while the metric decreases."""
    pairs = [tuple(p) for p in pairs]
    improved = True
    sweeps = 0
    while improved and sweeps < 50:
        improved = False
        sweeps += 1
        for i in range(len(pairs)):
            for j in range(i + 1, len(pairs)):
                (a1, b1), (a2, b2) = pairs[i], pairs[j]
                current = (grouping_cost(users, [pairs[i]])
                           + grouping_cost(users, [pairs[j]]))
                for alt in (((a1, a2), (b1, b2)), ((a1, b2), (b1, a2))):
                    cost = grouping_cost(users, list(alt))
                    if cost < current - 1e-12:
                        pairs[i], pairs[j] = alt
                        current = cost
                        improved = True
        for i in range(len(pairs)):
            for s in range(len(singles)):
                a, b = pairs[i]
                current = grouping_cost(users, [pairs[i]])
                for alt_pair, alt_single in (((a, singles[s]), b),
                                             ((b, singles[s]), a)):
                    cost = grouping_cost(users, [alt_pair])
                    if cost < current - 1e-12:
                        pairs[i], singles[s] = alt_pair, alt_single
                        current = cost
                        improved = True
    return pairs, singles


def _exact_pairing(users, ids):
    """Minimum-cost perfect matching by enumeration (small id sets)."""
    best = min(_pool_pairings(ids), key=lambda m: grouping_cost(users, m))
    return [tuple(int(v) for v in p) for p in best]


def group_users(users, waveguide_ys, q: int = 2) -> UserGrouping:
    """Partition users into groups of size ``q`` (1 or 2).

    q = 1 returns singletons ordered waveguide-major along x.  q = 2
    pairs x-adjacent users within each waveguide cluster; odd cluster
    leftovers are pooled and matched exhaustively, and one user stays
    single when K is odd.  Up to eight users the pairing is solved
    exactly (pairwise swap refinement cannot realize the three-cycle
    exchanges that small instances sometimes need).
    """
    users = np.atleast_2d(np.asarray(users, dtype=float))
    ys = np.asarray(waveguide_ys, dtype=float)
    if q not in (1, 2):
        raise ValueError("group size must be 1 or 2")
    nearest = np.argmin(np.abs(users[:, 1][:, None] - ys[None, :]), axis=1)
    clusters = [sorted(np.nonzero(nearest == m)[0],
                       key=lambda k: (users[k, 0], k))
                for m in range(len(ys))]
    if q == 1:
        groups = [(int(k),) for cl in clusters for k in cl]
        return UserGrouping(groups=groups, cost=0.0)
    k_total = users.shape[0]
    if k_total <= 8:
        ids = list(range(k_total))
        singles = []
        if k_total % 2:
            best = None
            for leftover in ids:
                rest = [i for i in ids if i != leftover]
                pairs = _exact_pairing(users, rest)
                cost = grouping_cost(users, pairs)
                if best is None or cost < best[0] - 1e-12:
                    best = (cost, pairs, [leftover])
            pairs, singles = best[1], best[2]
        else:
            pairs = _exact_pairing(users, ids)
        groups = pairs + [(int(s),) for s in singles]
        return UserGrouping(groups=groups, cost=grouping_cost(users, groups))
    pairs, pool = [], []
    for cl in clusters:
        for a, b in zip(cl[0::2], cl[1::2]):
            pairs.append((int(a), int(b)))
        if len(cl) % 2:
            pool.append(int(cl[-1]))
    best_pool, singles = [], []
    if pool:
        if len(pool) % 2:
            # leave out each candidate in turn, keep the cheapest matching
            best = None
            for leftover in pool:
                rest = [k for k in pool if k != leftover]
                for matching in _pool_pairings(rest):
                    cost = grouping_cost(users, matching)
                    if best is None or cost < best[0] - 1e-12:
                        best = (cost, matching, [leftover])
            best_pool, singles = best[1], best[2]
        else:
            best = min(_pool_pairings(pool),
                       key=lambda m: grouping_cost(users, m))
            best_pool = best
    pairs = pairs + [tuple(p) for p in best_pool]
    pairs, singles = _two_opt(users, pairs, singles)
    groups = [tuple(int(v) for v in p) for p in pairs]
    groups += [(int(s),) for s in singles]
    return UserGrouping(groups=groups, cost=grouping_cost(users, groups))


# ---------------------------------------------------------------------------
# stage 2: element-to-group assignment

@dataclass
class AssignmentMatrix:
    """Binary element-to-group incidence, rows = elements."""

    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int8)
        if self.x.ndim != 2 or not np.isin(self.x, (0, 1)).all():
            raise ValueError("assignment must be a binary matrix")

    @property
    def assigned_rows(self):
        return np.nonzero(self.x.sum(axis=1) > 0)[0]

    def group_of(self, i: int) -> int:
        cols = np.nonzero(self.x[i])[0]
        return int(cols[0]) if cols.size else -1


def hungarian_assign(rate_table: np.ndarray) -> AssignmentMatrix:
    """Maximum-total-rate one-to-one matching on a rectangular table.

    The table is zero-padded square so dummy rows/columns absorb the
    surplus side; their matches are stripped from the result.
    """
    table = np.asarray(rate_table, dtype=float)
    if not np.all(np.isfinite(table)):
        raise ValueError("rate table must be finite")
    n_pa, n_grp = table.shape
    size = max(n_pa, n_grp)
    padded = np.zeros((size, size))
    padded[:n_pa, :n_grp] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    x = np.zeros((n_pa, n_grp), dtype=np.int8)
    for i, j in zip(rows, cols):
        if i < n_pa and j < n_grp:
            x[i, j] = 1
    return AssignmentMatrix(x)


def _pa_coords(i: int, num_pas: int) -> tuple[int, int]:
    return divmod(i, num_pas)


@dataclass(frozen=True)
class Candidate:
    """Interference-free deployment of element i serving one group."""

    pa: tuple[int, int]
    users: tuple[int, ...]        # user index per mode slot
    x: float
    orientations: tuple[Orientation, ...]
    rx_world: tuple[np.ndarray, ...]
    etas: tuple[float, ...]       # serving-link matching efficiencies
    gains: tuple[float, ...]      # matched boresight power gains at x


class _SlotSolver:
    """Shared machinery for the rate table, greedy fill and deployment
    of one time slot.  Owns a candidate cache and a cross-gain cache;
    all tie-breaks are lowest-index-first."""

    def __init__(self, scenario: Scenario, groups):
        self.scenario = scenario
        self.groups = [tuple(g) for g in groups]
        self.links = [LinkModel(scenario, m)
                      for m in range(scenario.num_waveguides)]
        self.num_pas = scenario.num_pas
        self.mn = scenario.num_waveguides * scenario.num_pas
        self._candidates: dict[tuple[int, int], Candidate] = {}
        self._cross: dict = {}

    # -- polarization policies ------------------------------------------

    def _boresight_dir(self, orientation: Orientation, mode, user_pos,
                       pa_pos) -> np.ndarray:
        r, theta, phi = (v.item() for v in
                         _local_angles(user_pos, pa_pos, orientation))
        psi_t, psi_p = polarization_components(
            mode.index, theta, phi, mode.propagation_constant,
            self.scenario.med.k0)
        basis = spherical_basis(theta, phi, orientation)
        vec = psi_t * basis.vartheta + psi_p * basis.varphi
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else basis.vartheta

    def _rx_vector(self, pa_pos, orientation, mode, user_pos,
                   policy: str = "matched"):
        """(unit rx vector, serving eta) under a polarization policy.

        Deployment decisions always use the matched policy; the other
        policies only shape the receive vectors handed to the channel
        assembly, mirroring how polarization gains are measured on a
        fixed topology.
        """
        e_dir = self._boresight_dir(orientation, mode, user_pos, pa_pos)
        if policy == "matched":
            p = e_dir if e_dir[np.argmax(np.abs(e_dir))] >= 0 else -e_dir
            return p, 1.0
        basis_u = user_arrival_basis(user_pos, pa_pos)
        if policy == "fixed":
            p = basis_u.vartheta
            return p, float(abs(p @ e_dir))
        angles = codebook_angles(18)
        comps = np.array([e_dir @ basis_u.vartheta, e_dir @ basis_u.varphi])
        etas = np.abs(np.cos(angles) * comps[0] + np.sin(angles) * comps[1])
        best = int(np.argmax(etas))
        p = (np.cos(angles[best]) * basis_u.vartheta
             + np.sin(angles[best]) * basis_u.varphi)
        return p, float(etas[best])

    # -- candidates ------------------------------------------------------

    def candidate(self, i: int, j: int) -> Candidate:
        key = (i, j)
        if key not in self._candidates:
            self._candidates[key] = self._solve_candidate(i, j)
        return self._candidates[key]

    def _solve_candidate(self, i: int, j: int) -> Candidate:
        m, n = _pa_coords(i, self.num_pas)
        link = self.links[m]
        group = self.groups[j]
        users = self.scenario.users
        noise = self.scenario.noise
        power = self.scenario.power
        if len(group) == 1:
            sol = solve_single_user(users[group[0]], link, q=1)
            return self._finish_candidate(i, (group[0],), sol.x_star, link)
        orders = [tuple(group), tuple(reversed(group))]
        best = None
        for order in orders:
            sol = two_user_shared_position(
                users[order[0]], users[order[1]], link, power,
                (noise[order[0]], noise[order[1]]))
            cand = self._finish_candidate(i, order, sol.x_star, link)
            rate = self._rate_of(cand, (0.0, 0.0))
            if best is None or rate > best[0] + 1e-12:
                best = (rate, cand)
        return best[1]

    def _finish_candidate(self, i, order, x, link) -> Candidate:
        m, n = _pa_coords(i, self.num_pas)
        wg = link.wg
        pa_pos = np.array([x, wg.axis_y, wg.axis_z])
        orientations, rx, etas, gains = [], [], [], []
        for slot, k in enumerate(order):
            user_pos = self.scenario.users[k]
            orient = optimal_orientation(pa_pos, user_pos)
            mode = self.scenario.modes[slot]
            p, eta = self._rx_vector(pa_pos, orient, mode, user_pos)
            orientations.append(orient)
            rx.append(p)
            etas.append(eta)
            gains.append(link.gain(slot + 1, x, user_pos))
        # idle ports of a singleton group point straight down
        while len(orientations) < self.scenario.num_modes:
            orientations.append(Orientation())
        return Candidate(pa=(m, n), users=tuple(order), x=float(x),
                         orientations=tuple(orientations),
                         rx_world=tuple(rx), etas=tuple(etas),
                         gains=tuple(gains))

    # -- interference and rates -------------------------------------------

    def _cross_power(self, src: Candidate, src_i: int, q: int,
                     user_k: int, rx_vec, rx_tag) -> float:
        """Effective |eta h_pu h_wp|^2 from port q of a deployed source
        element to user k with the given receive vector."""
        key = (src_i, src.x, q, user_k, rx_tag)
        if key in self._cross:
            return self._cross[key]
        m, _ = _pa_coords(src_i, self.num_pas)
        wg = self.scenario.waveguides[m]
        mode = self.scenario.modes[q]
        pa_pos = np.array([src.x, wg.axis_y, wg.axis_z])
        user_pos = self.scenario.users[user_k]
        r, theta, phi = (v.item() for v in
                         _local_angles(user_pos, pa_pos, src.orientations[q]))
        s_q = pattern_factor(mode.index, theta, phi, wg.aperture_a,
                             wg.aperture_b, self.scenario.med.wavelength0)
        psi_t, psi_p = polarization_components(
            mode.index, theta, phi, mode.propagation_constant,
            self.scenario.med.k0)
        psi_norm = np.hypot(psi_t, psi_p)
        const = (self.scenario.gain_norm[q]
                 * aperture_constant(self.scenario.med, wg, mode))
        h_pu_mag = (const * abs(s_q) * psi_norm / r
                    * np.exp(-0.5 * self.scenario.alpha_a * r))
        if psi_norm > 0:
            basis = spherical_basis(theta, phi, src.orientations[q])
            e_dir = (psi_t * basis.vartheta + psi_p * basis.varphi) / psi_norm
            lam = abs(float(rx_vec @ e_dir))
        else:
            lam = 0.0
        h_wp_sq = np.exp(-wg.alpha_w * src.x) / wg.num_pas
        value = (lam * h_pu_mag) ** 2 * h_wp_sq
        self._cross[key] = value
        return value

    def _splits(self, cand: Candidate, eff_noise) -> tuple[float, ...]:
        if len(cand.users) == 1:
            return (1.0,)
        g = [cand.gains[s] * cand.etas[s] ** 2 for s in range(2)]
        w1, w2 = _split_from_gains(g[0], g[1], eff_noise[0], eff_noise[1],
                                   self.scenario.power)
        return (float(w1), float(w2))

    def _rate_of(self, cand: Candidate, interference) -> float:
        """Pair rate of a candidate with per-user interference powers
        added to the noise; splits re-optimized for the effective noise."""
        noise = self.scenario.noise
        power = self.scenario.power
        eff = [noise[k] + interference[s] for s, k in enumerate(cand.users)]
        splits = self._splits(cand, eff)
        wg_x = cand.x
        rate = 0.0
        for s, k in enumerate(cand.users):
            g_eff = cand.gains[s] * cand.etas[s] ** 2
            rate += 0.5 * np.log2(1.0 + power * splits[s] * g_eff / eff[s])
        return float(rate)

    def _interference_at(self, cand: Candidate, i: int,
                         assignment: AssignmentMatrix) -> list[float]:
        """Interference power seen by each user of candidate (i, .) from
        every other assigned element under the given assignment."""
        totals = [0.0 for _ in cand.users]
        power = self.scenario.power
        for i2 in assignment.assigned_rows:
            if i2 == i:
                continue
            j2 = assignment.group_of(i2)
            src = self.candidate(i2, j2)
            src_eff_noise = [self.scenario.noise[k] for k in src.users]
            src_splits = self._splits(src, src_eff_noise)
            for s, k in enumerate(cand.users):
                rx_tag = (i, k)
                for q2 in range(len(src.users)):
                    totals[s] += (power * src_splits[q2]
                                  * self._cross_power(src, i2, q2, k,
                                                      cand.rx_world[s], rx_tag))
        return totals

    def rate_entry(self, i: int, j: int, assignment: AssignmentMatrix) -> float:
        cand = self.candidate(i, j)
        interference = self._interference_at(cand, i, assignment)
        return self._rate_of(cand, interference)

    def rate_table(self, assignment: AssignmentMatrix | None = None) -> np.ndarray:
        if assignment is None:
            assignment = AssignmentMatrix(
                np.zeros((self.mn, len(self.groups)), dtype=np.int8))
        table = np.zeros((self.mn, len(self.groups)))
        for i in range(self.mn):
            for j in range(len(self.groups)):
                table[i, j] = self.rate_entry(i, j, assignment)
        return table

    def objective(self, assignment: AssignmentMatrix) -> float:
        total = 0.0
        for i in assignment.assigned_rows:
            total += self.rate_entry(i, assignment.group_of(i), assignment)
        return total

    def greedy_fill(self, assignment: AssignmentMatrix) -> AssignmentMatrix:
        """Assign leftover elements by exact marginal objective gain,
        best gain first, recomputing interference after each placement."""
        x = assignment.x.copy()
        leftovers = [i for i in range(self.mn) if x[i].sum() == 0]
        while leftovers:
            base = AssignmentMatrix(x)
            base_obj = self.objective(base)
            best = None
            for i in leftovers:
                for j in range(len(self.groups)):
                    trial = x.copy()
                    trial[i, j] = 1
                    gain = self.objective(AssignmentMatrix(trial)) - base_obj
                    if best is None or gain > best[0] + 1e-12:
                        best = (gain, i, j)
            _, i_star, j_star = best
            x[i_star, j_star] = 1
            leftovers.remove(i_star)
        return AssignmentMatrix(x)


def pairwise_rate_table(scenario: Scenario, grouping: UserGrouping,
                        assignment: AssignmentMatrix | None = None) -> np.ndarray:
    """MN x J matrix of achievable pair rates, each entry evaluated at
    the candidate's closed-form position/split with the interference
    implied by the (possibly empty) current assignment."""
    solver = _SlotSolver(scenario, grouping.groups)
    return solver.rate_table(assignment)


def greedy_fill(assignment: AssignmentMatrix, scenario: Scenario,
                grouping: UserGrouping) -> AssignmentMatrix:
    solver = _SlotSolver(scenario, grouping.groups)
    return solver.greedy_fill(assignment)


# ---------------------------------------------------------------------------
# stage 3: fractional-programming precoding

@dataclass
class PrecoderFactorization:
    """G (mode mixer), the frozen sparse splits W_p, their product and
    the auxiliary state of the final FP iteration.

    W_p is port-resolved: row (i, q) carries the amplitude share of the
    user served by element i's mode-q port (two nonzero rows per
    element, one per row).  Aggregating the two ports of an element
    into a single row would make the pair's precoding vectors colinear
    and void the mode-multiplexing gain, so G mixes the QM mode inputs
    over all MNQ ports instead.
    """

    g: np.ndarray
    w_p: np.ndarray
    w: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    chi: float
    power_trace: float


def _fp_rates(h, g, w_p, power, noise):
    v = h @ g @ w_p  # (K, K) received stream amplitudes
    gains = np.abs(v) ** 2
    signal = np.diag(gains)
    denom = power * (gains.sum(axis=1) - signal) + noise
    return power * signal / denom, v


def fp_precoding(h: np.ndarray, w_p: np.ndarray, power: float, noise,
                 tol: float = 1e-6, max_iter: int = 200,
                 track_tightness: bool = False):
    """Maximize the sum rate over the mode mixer G for fixed splits W_p.

    Alternates closed-form auxiliary updates with the KKT solve

        (sum_k mu_k h_k^H h_k + chi I) G (W_p W_p^H) = sqrt(P) RHS

    using the pseudo-inverse of W_p W_p^H and bisection on chi until
    tr(G W_p W_p^H G^H) meets the unit budget.  Returns the
    factorization and the per-iteration sum-rate trace (1/2 log2
    convention).  With ``track_tightness`` the trace of the transformed
    objective minus sum ln(1 + SINR) is returned as a third element.
    """
    h = np.asarray(h, dtype=complex)
    k_users, qm = h.shape
    w_p = np.asarray(w_p, dtype=complex)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (k_users,)).copy()
    if np.any(noise <= 0):
        raise ValueError("noise power must be positive")
    b = w_p @ w_p.conj().T
    b_pinv = np.linalg.pinv(b, hermitian=True)

    # matched-filter warm start: strongest served row per element
    g = np.zeros((qm, w_p.shape[0]), dtype=complex)
    for i in range(w_p.shape[0]):
        served = np.nonzero(np.abs(w_p[i]) > 0)[0]
        if served.size:
            k_best = served[np.argmax(np.linalg.norm(h[served], axis=1))]
            g[:, i] = h[k_best].conj()
    start_trace = float(np.trace(g @ b @ g.conj().T).real)
    if start_trace > 0:
        g /= np.sqrt(start_trace)

    trace, gaps = [], []
    sum_rate_prev = -np.inf
    chi = 0.0
    c1 = np.zeros(k_users)
    c2 = np.zeros(k_users, dtype=complex)
    for _ in range(max_iter):
        sinr, v = _fp_rates(h, g, w_p, power, noise)
        c1 = sinr
        denom_full = power * np.sum(np.abs(v) ** 2, axis=1) + noise
        c2 = np.sqrt(power) * np.diag(v) / denom_full
        if track_tightness:
            transformed = float(np.sum(
                (1 + c1) * (2 * np.sqrt(power) * (c2.conj() * np.diag(v)).real
                            - np.abs(c2) ** 2 * denom_full)
                + np.log(1 + c1) - c1))
            gaps.append(abs(transformed - float(np.sum(np.log(1 + c1)))))

        mu = power * (1 + c1) * np.abs(c2) ** 2
        a0 = (h.conj().T * mu) @ h
        rhs = np.sqrt(power) * (h.conj().T * ((1 + c1) * c2)) @ w_p.conj().T
        lam, u_eig = np.linalg.eigh(a0)
        lam = np.clip(lam.real, 0.0, None)
        m1 = u_eig.conj().T @ rhs @ b_pinv
        d_diag = np.real(np.einsum("ij,jk,ik->i", m1, b, m1.conj()))

        def power_trace(chi_val):
            denom = lam + chi_val
            safe = np.where(denom > 0, denom, np.inf)
            return float(np.sum(d_diag / safe ** 2))

        if power_trace(0.0) <= 1.0 + 1e-12:
            chi = 0.0
        else:
            hi = 1.0
            doublings = 0
            while power_trace(hi) > 1.0:
                hi *= 2.0
                doublings += 1
                if doublings > 200:
                    raise RuntimeError("power bisection bracket diverged")
            lo = 0.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if power_trace(mid) > 1.0:
                    lo = mid
                else:
                    hi = mid
                if abs(power_trace(hi) - 1.0) <= 1e-10:
                    break
            chi = hi
        denom = lam + chi
        safe = np.where(denom > 0, denom, np.inf)
        g = u_eig @ (m1 / safe[:, None])

        sinr, _ = _fp_rates(h, g, w_p, power, noise)
        sum_rate = float(np.sum(0.5 * np.log2(1.0 + sinr)))
        trace.append(sum_rate)
        if abs(sum_rate - sum_rate_prev) < tol:
            break
        sum_rate_prev = sum_rate

    final = PrecoderFactorization(
        g=g, w_p=w_p, w=g @ w_p, c1=c1, c2=c2, chi=float(chi),
        power_trace=float(np.trace(g @ b @ g.conj().T).real))
    if track_tightness:
        return final, np.asarray(trace), np.asarray(gaps)
    return final, np.asarray(trace)


# ---------------------------------------------------------------------------
# full per-scheme pipeline

@dataclass
class SlotSolution:
    user_indices: np.ndarray           # global user ids served this slot
    assignment: AssignmentMatrix
    candidates: dict
    placements: list
    report: channel.RateReport
    trace: np.ndarray


@dataclass
class SchemeResult:
    scheme: str
    report: channel.RateReport
    trace: np.ndarray
    slots: list[SlotSolution]
    grouping: UserGrouping


def _chunks(seq, size):
    return [seq[i:i + size] for i in range(0, len(seq), size)] or [seq]


def _enforce_min_spacing(positions: dict, min_gap: float, length: float) -> dict:
    """Push same-guide elements apart to the half-wavelength minimum."""
    out = dict(positions)
    order = sorted(out, key=lambda n: (out[n], n))
    prev = None
    for n in order:
        x = out[n]
        if prev is not None and x - prev < min_gap:
            x = prev + min_gap
        out[n] = min(x, length)
        prev = out[n]
    return out


def _solve_slot(scenario: Scenario, scheme: Scheme, slot_groups,
                slot_users) -> SlotSolution:
    local = {k: idx for idx, k in enumerate(slot_users)}
    groups_local = [tuple(local[k] for k in g) for g in slot_groups]
    slot_scn = replace(scenario, users=scenario.users[slot_users],
                       noise=scenario.noise[slot_users])
    solver = _SlotSolver(slot_scn, groups_local)
    table = solver.rate_table()
    assignment = solver.greedy_fill(hungarian_assign(table))

    num_pas = slot_scn.num_pas
    lam_half = slot_scn.med.wavelength0 / 2
    serving: dict[int, tuple[int, Candidate]] = {}
    per_wg_positions: list[dict[int, float]] = [dict() for _ in slot_scn.waveguides]
    cands = {}
    for i in assignment.assigned_rows:
        j = assignment.group_of(i)
        cand = solver.candidate(i, int(j))
        cands[int(i)] = cand
        m, n = cand.pa
        per_wg_positions[m][n] = cand.x
        for slot_idx, k_local in enumerate(cand.users):
            if k_local not in serving or i < serving[k_local][0]:
                serving[k_local] = (int(i), cand)

    placements = []
    for m, wg in enumerate(slot_scn.waveguides):
        spaced = _enforce_min_spacing(per_wg_positions[m], lam_half, wg.length)
        row = []
        for n in range(num_pas):
            i = m * num_pas + n
            if i in cands:
                cand = cands[i]
                row.append(PaPlacement(
                    waveguide_index=m, pa_index=n + 1,
                    x_position=spaced[n],
                    orientations=cand.orientations,
                    coupling_len=coupling_length(n + 1, num_pas, wg.kappa)))
            else:
                row.append(PaPlacement(
                    waveguide_index=m, pa_index=n + 1,
                    x_position=wg.length * (n + 1) / (num_pas + 1),
                    orientations=tuple(Orientation()
                                       for _ in range(slot_scn.num_modes)),
                    coupling_len=coupling_length(n + 1, num_pas, wg.kappa)))
        placements.append(row)

    rx = np.zeros((len(slot_users), 3))
    for k_local in range(len(slot_users)):
        if k_local in serving:
            i, cand = serving[k_local]
            slot_idx = cand.users.index(k_local)
            m, _ = _pa_coords(i, num_pas)
            wg = slot_scn.waveguides[m]
            pa_pos = np.array([cand.x, wg.axis_y, wg.axis_z])
            rx[k_local], _ = solver._rx_vector(
                pa_pos, cand.orientations[slot_idx],
                slot_scn.modes[slot_idx], slot_scn.users[k_local],
                policy=scheme.rx_policy)
        else:
            # unserved this slot: any unit vector; no stream is mapped
            rx[k_local] = np.array([0.0, 0.0, 1.0])

    n_modes = slot_scn.num_modes
    w_p = np.zeros((solver.mn * n_modes, len(slot_users)))
    for i in assignment.assigned_rows:
        cand = cands[int(i)]
        splits = solver._splits(cand, [slot_scn.noise[k] for k in cand.users])
        for slot_idx, k_local in enumerate(cand.users):
            w_p[i * n_modes + slot_idx, k_local] = np.sqrt(splits[slot_idx])

    deployed = replace(slot_scn, placements=placements)
    matrices = channel.assemble(deployed, rx)
    fact, trace = fp_precoding(matrices.h, w_p, slot_scn.power, slot_scn.noise)
    report = channel.rate_report(matrices.h, fact.w, slot_scn.power,
                                 slot_scn.noise)
    return SlotSolution(user_indices=np.asarray(slot_users),
                        assignment=assignment, candidates=cands,
                        placements=placements, report=report, trace=trace)


def optimize_scenario(scenario: Scenario, scheme_name: str) -> SchemeResult:
    """Run grouping, assignment, placement and FP precoding for one
    transmission scheme and report the end-to-end rates.

    Multi-mode schemes serve each pair on one element (one mode per
    user).  Single-mode schemes serve the same pairs in time slots (one
    user per element per slot, fundamental mode only) and scale rates
    by the slot count.
    """
    scheme = parse_scheme(scheme_name)
    wg_ys = [wg.axis_y for wg in scenario.waveguides]
    pairing = group_users(scenario.users, wg_ys, q=2)
    work = scenario.with_modes(scheme.num_modes)
    mn = scenario.num_waveguides * scenario.num_pas

    if scheme.num_modes == 2:
        groups = pairing.groups
    else:
        firsts = [(g[0],) for g in pairing.groups]
        seconds = [(g[1],) for g in pairing.groups if len(g) > 1]
        groups = firsts + seconds

    slot_groups = _chunks(groups, mn)
    n_slots = len(slot_groups)
    slots = []
    rates = np.zeros(scenario.num_users)
    sinrs = np.zeros(scenario.num_users)
    for sub in slot_groups:
        slot_users = [k for g in sub for k in g]
        sol = _solve_slot(work, scheme, sub, slot_users)
        slots.append(sol)
        rates[sol.user_indices] = sol.report.per_user_rate / n_slots
        sinrs[sol.user_indices] = sol.report.per_user_sinr

    max_len = max(len(s.trace) for s in slots)
    combined = np.zeros(max_len)
    for s in slots:
        padded = np.concatenate([s.trace,
                                 np.full(max_len - len(s.trace),
                                         s.trace[-1] if len(s.trace) else 0.0)])
        combined += padded / n_slots
    report = channel.RateReport(per_user_sinr=sinrs, per_user_rate=rates,
                                sum_rate=float(rates.sum()))
    return SchemeResult(scheme=scheme.name, report=report, trace=combined,
                        slots=slots, grouping=pairing)
