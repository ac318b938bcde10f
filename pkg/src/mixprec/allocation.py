"""Exact bit-width assignment under model-size and BitOps budgets.

The program chooses one bit-width per quantizable layer from a candidate
set, maximizing importance-weighted bits minus a synergy-weighted penalty
on bit transitions between consecutive layers:

    Phi = sum_l omega_l * b_l  -  lambda * sum_pairs s_hat * |b_l - b_m|

subject to   sum_l |w_l| * b_l      <= size budget
             sum_l MAC_l * b_l**2   <= BitOps budget.

Budgets are set from a uniform fixed-bit baseline, so a solution never
costs more than quantizing every layer at the target width.

Because each layer takes exactly one candidate width, the objective is
linear in the one-hot selection variables (the squared widths appear only
as constants inside the BitOps sum), so a depth-first branch-and-bound
over the layer chain solves the program exactly; an exhaustive solver
serves as its oracle on small instances.  Both share `objective`, use
identical tie-breaking (lexicographically smallest bits vector), and
report infeasibility as a result rather than an error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_BIT_SET = (4, 5, 6, 7, 8)
DEFAULT_LAMBDA = 0.1

_BRUTEFORCE_GUARD = 10 ** 7
_PRUNE_MARGIN = 1e-9  # never prune a branch within float noise of the incumbent


@dataclass(frozen=True)
class AllocationProblem:
    omega: tuple[float, ...]
    s_hat: tuple[float, ...]
    w_count: tuple[int, ...]
    macs: tuple[int, ...]
    bit_set: tuple[int, ...]
    size_budget: int
    bitops_budget: int
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "s_hat", tuple(float(v) for v in self.s_hat))
        object.__setattr__(self, "w_count", tuple(int(v) for v in self.w_count))
        object.__setattr__(self, "macs", tuple(int(v) for v in self.macs))
        object.__setattr__(self, "bit_set", tuple(sorted(set(int(b) for b in self.bit_set))))
        L = len(self.omega)
        if L == 0:
            raise ValueError("problem has no layers")
        if len(self.s_hat) != L - 1:
            raise ValueError("s_hat must have one entry per adjacent pair (L - 1)")
        if len(self.w_count) != L or len(self.macs) != L:
            raise ValueError("w_count/macs length must equal the layer count")
        if not self.bit_set:
            raise ValueError("candidate bit set is empty")
        if any(b < 1 for b in self.bit_set):
            raise ValueError("bit widths must be positive")
        if any(v < 0 for v in self.omega) or any(v < 0 for v in self.s_hat):
            raise ValueError("omega and s_hat must be nonnegative")
        if any(v < 0 for v in self.w_count) or any(v < 0 for v in self.macs):
            raise ValueError("w_count and macs must be nonnegative")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    @property
    def L(self) -> int:
        return len(self.omega)

    def size_bits(self, bits) -> int:
        return sum(w * b for w, b in zip(self.w_count, bits))

    def bitops(self, bits) -> int:
        return sum(m * b * b for m, b in zip(self.macs, bits))

    def is_feasible(self, bits) -> bool:
        return (self.size_bits(bits) <= self.size_budget
                and self.bitops(bits) <= self.bitops_budget)


def independent_variant(problem: AllocationProblem) -> AllocationProblem:
    """Replace every pair synergy with 1 (unweighted transition penalty)."""
    return replace(problem, s_hat=(1.0,) * (problem.L - 1))


def importance_only_variant(problem: AllocationProblem) -> AllocationProblem:
    """Drop the transition penalty entirely (lambda = 0)."""
    return replace(problem, lam=0.0)


@dataclass(frozen=True)
class BitAllocation:
    bits: tuple[int, ...] | None
    objective: float | None
    size_bits: int | None
    bitops: int | None
    feasible: bool

    @classmethod
    def infeasible(cls) -> "BitAllocation":
        return cls(bits=None, objective=None, size_bits=None, bitops=None,
                   feasible=False)


def objective(problem: AllocationProblem, bits) -> float:
    """Phi for a full assignment.

    Plain left-to-right summation so every caller (both solvers, the
    verifier) computes bit-identical floats for the same assignment.
    """
    bits = tuple(int(b) for b in bits)
    if len(bits) != problem.L:
        raise ValueError("assignment length does not match the layer count")
    allowed = set(problem.bit_set)
    if any(b not in allowed for b in bits):
        raise ValueError(f"assignment uses widths outside the candidate set {problem.bit_set}")
    gain = 0.0
    for w, b in zip(problem.omega, bits):
        gain += w * b
    penalty = 0.0
    for i, s in enumerate(problem.s_hat):
        penalty += s * abs(bits[i] - bits[i + 1])
    return gain - problem.lam * penalty


def _finish(problem: AllocationProblem, bits: tuple[int, ...], phi: float) -> BitAllocation:
    return BitAllocation(bits=bits, objective=phi,
                         size_bits=problem.size_bits(bits),
                         bitops=problem.bitops(bits), feasible=True)


def _min_bits_feasible(problem: AllocationProblem) -> bool:
    bmin = problem.bit_set[0]
    return problem.is_feasible((bmin,) * problem.L)


def solve_bruteforce(problem: AllocationProblem) -> BitAllocation:
    """Exhaustive oracle: enumerate every assignment in lexicographic
    order, keep the feasible one with maximal Phi (first seen wins ties,
    i.e. the lexicographically smallest)."""
    n = len(problem.bit_set) ** problem.L
    if n > _BRUTEFORCE_GUARD:
        raise ValueError(f"instance too large for brute force ({n} assignments)")
    if not _min_bits_feasible(problem):
        return BitAllocation.infeasible()
    best_phi = -np.inf
    best_bits: tuple[int, ...] | None = None
    for bits in itertools.product(problem.bit_set, repeat=problem.L):
        if not problem.is_feasible(bits):
            continue
        phi = objective(problem, bits)
        if phi > best_phi:
            best_phi, best_bits = phi, bits
    if best_bits is None:
        return BitAllocation.infeasible()
    return _finish(problem, best_bits, best_phi)


def _hill_climb(problem: AllocationProblem, bits: list[int]) -> tuple[tuple[int, ...], float]:
    """Improve a feasible assignment with single-layer and paired
    (one-up, one-down) moves until no move helps."""
    L, B = problem.L, problem.bit_set
    current = objective(problem, bits)
    for _ in range(8 * L * len(B)):
        best_move, best_phi = None, current
        for l in range(L):
            keep = bits[l]
            for b in B:
                if b == keep:
                    continue
                bits[l] = b
                if problem.is_feasible(bits):
                    phi = objective(problem, bits)
                    if phi > best_phi:
                        best_move, best_phi = ((l, b),), phi
            bits[l] = keep
        if best_move is None:
            # paired moves unlock budget-balanced swaps
            for l in range(L):
                for m in range(L):
                    if l == m:
                        continue
                    keep_l, keep_m = bits[l], bits[m]
                    for bl in B:
                        if bl <= keep_l:
                            continue
                        for bm in B:
                            if bm >= keep_m:
                                continue
                            bits[l], bits[m] = bl, bm
                            if problem.is_feasible(bits):
                                phi = objective(problem, bits)
                                if phi > best_phi:
                                    best_move, best_phi = ((l, bl), (m, bm)), phi
                    bits[l], bits[m] = keep_l, keep_m
        if best_move is None:
            break
        for l, b in best_move:
            bits[l] = b
        current = best_phi
    return tuple(bits), current


def _greedy_incumbent(problem: AllocationProblem) -> tuple[int, ...]:
    """A strong feasible starting point: hill-climbed best feasible
    uniform assignment."""
    L, B = problem.L, problem.bit_set
    bits = None
    for b in reversed(B):
        cand = (b,) * L
        if problem.is_feasible(cand):
            bits = list(cand)
            break
    assert bits is not None  # caller checked all-min feasibility
    return _hill_climb(problem, bits)[0]


def _budget_prices(problem: AllocationProblem, incumbent_phi: float):
    """Budget prices (per size bit, per BitOp) minimizing the dual bound.

    For any nonnegative prices mu, the value of every budget-feasible
    completion is bounded by its price-reduced value plus
    ``mu . remaining_budgets``, so every subgradient iterate yields an
    admissible bound; Polyak steps against the incumbent tune them once at
    the root.
    """
    B = np.array(problem.bit_set, dtype=np.float64)
    gain = np.outer(problem.omega, B)
    size_cost = np.outer(problem.w_count, B)
    ops_cost = np.outer(problem.macs, B * B)
    rows = np.arange(problem.L)

    def bound_at(mu):
        reduced = gain - mu[0] * size_cost - mu[1] * ops_cost
        jstar = reduced.argmax(axis=1)
        val = (reduced[rows, jstar].sum()
               + mu[0] * problem.size_budget + mu[1] * problem.bitops_budget)
        grad = np.array([problem.size_budget - size_cost[rows, jstar].sum(),
                         problem.bitops_budget - ops_cost[rows, jstar].sum()])
        return val, grad, jstar

    mu = np.zeros(2)
    best_mu = mu.copy()
    best_val, _, _ = bound_at(mu)
    rounding = None
    for _ in range(150):
        val, grad, jstar = bound_at(mu)
        if val < best_val:
            best_val, best_mu = val, mu.copy()
            rounding = jstar.copy()
        norm2 = float(grad @ grad)
        if norm2 == 0.0:
            break
        step = max(val - incumbent_phi, 0.0) / norm2
        if step == 0.0:
            break
        mu = np.maximum(0.0, mu - step * grad)
    return (float(best_mu[0]), float(best_mu[1])), rounding


def _priced_chain_dp(problem: AllocationProblem, gain, pen, mu):
    """dp[d][j]: best price-reduced value of layers d..L-1 given layer d-1
    took width index j, with budgets replaced by their prices.  Together
    with ``mu . remaining_budgets`` this is an admissible node bound that
    sees both the transition penalties and the budget pressure."""
    L, B = problem.L, problem.bit_set
    K = len(B)
    mu_s, mu_o = mu
    red = [[gain[l][j] - mu_s * problem.w_count[l] * B[j]
            - mu_o * problem.macs[l] * B[j] * B[j] for j in range(K)]
           for l in range(L)]
    dp = [[0.0] * K for _ in range(L + 1)]
    for d in range(L - 1, 0, -1):
        for jp in range(K):
            dp[d][jp] = max(red[d][j] - pen[d - 1][jp][j] + dp[d + 1][j]
                            for j in range(K))
    dp[0] = [max(red[0][j] + dp[1][j] for j in range(K))] * K
    return dp


def _repair_to_feasible(problem: AllocationProblem, bits: list[int]) -> list[int] | None:
    """Push widths down, cheapest objective loss first, until both budgets
    hold."""
    B = problem.bit_set
    for _ in range(problem.L * len(B)):
        if problem.is_feasible(bits):
            return bits
        best_l, best_loss = None, None
        over_size = problem.size_bits(bits) > problem.size_budget
        over_ops = problem.bitops(bits) > problem.bitops_budget
        for l in range(problem.L):
            j = B.index(bits[l])
            if j == 0:
                continue
            relieves = ((over_size and problem.w_count[l] > 0)
                        or (over_ops and problem.macs[l] > 0))
            if not relieves:
                continue
            loss = problem.omega[l] * (bits[l] - B[j - 1])
            if best_loss is None or loss < best_loss:
                best_l, best_loss = l, loss
        if best_l is None:
            return None
        bits[best_l] = B[B.index(bits[best_l]) - 1]
    return bits if problem.is_feasible(bits) else None


def solve_bnb(problem: AllocationProblem) -> BitAllocation:
    """Exact depth-first branch-and-bound over the layer chain.

    Children are explored in descending bit-width, starting from a
    hill-climbed feasible incumbent.  A branch dies only when no
    completion can beat the incumbent, established through admissible
    bounds evaluated in O(1) per node:

    * a chain DP over (layer, previous width) giving the best achievable
      suffix value -- gain minus transition penalties -- with the budgets
      relaxed,
    * the same DP on price-reduced gains plus ``prices . remaining
      budgets``, with budget prices tuned once at the root (strong when a
      budget binds and the penalty term is weak),
    * min-width completion cost against both budgets.

    Leaves recompute Phi through `objective`, and an equal-Phi leaf
    replaces the incumbent only if its bits vector is lexicographically
    smaller, so results match the brute-force oracle exactly.
    """
    if not _min_bits_feasible(problem):
        return BitAllocation.infeasible()

    L, lam = problem.L, problem.lam
    B = problem.bit_set
    K = len(B)
    order_desc = tuple(range(K - 1, -1, -1))
    bmin = B[0]
    w, mac = problem.w_count, problem.macs
    omega, s_hat = problem.omega, problem.s_hat

    gain = [[omega[l] * b for b in B] for l in range(L)]
    pen = [[[lam * s_hat[i] * abs(bp - b) for b in B] for bp in B]
           for i in range(L - 1)]

    # suffix_min_*[d]: min-width cost of layers d..L-1
    suffix_min_size = [0] * (L + 1)
    suffix_min_bitops = [0] * (L + 1)
    for d in range(L - 1, -1, -1):
        suffix_min_size[d] = suffix_min_size[d + 1] + w[d] * bmin
        suffix_min_bitops[d] = suffix_min_bitops[d + 1] + mac[d] * bmin * bmin

    def consider(bits: tuple[int, ...]):
        nonlocal best_phi, best_bits
        phi = objective(problem, bits)
        if phi > best_phi or (phi == best_phi and (best_bits is None or bits < best_bits)):
            best_phi, best_bits = phi, bits

    best_phi, best_bits = -np.inf, None
    consider(_greedy_incumbent(problem))
    mu, rounding = _budget_prices(problem, best_phi)
    if rounding is not None:
        cand = _repair_to_feasible(problem, [B[j] for j in rounding])
        if cand is not None:
            consider(_hill_climb(problem, cand)[0])

    bounds = [((0.0, 0.0), _priced_chain_dp(problem, gain, pen, (0.0, 0.0)))]
    if mu != (0.0, 0.0):
        bounds.append((mu, _priced_chain_dp(problem, gain, pen, mu)))

    partial = [0] * L

    def dfs(d: int, jp: int, size_so_far: int, bitops_so_far: int,
            value_so_far: float):
        nonlocal best_phi, best_bits
        if d == L:
            consider(tuple(partial))
            return
        pen_row = pen[d - 1][jp] if d > 0 else None
        for j in order_desc:
            b = B[j]
            size_next = size_so_far + w[d] * b
            if size_next + suffix_min_size[d + 1] > problem.size_budget:
                continue
            bitops_next = bitops_so_far + mac[d] * b * b
            if bitops_next + suffix_min_bitops[d + 1] > problem.bitops_budget:
                continue
            value_next = value_so_far + gain[d][j]
            if pen_row is not None:
                value_next -= pen_row[j]
            cutoff = best_phi - _PRUNE_MARGIN
            pruned = False
            for (mu_s, mu_o), dp in bounds:
                ub = (value_next + dp[d + 1][j]
                      + mu_s * (problem.size_budget - size_next)
                      + mu_o * (problem.bitops_budget - bitops_next))
                if ub < cutoff:
                    pruned = True
                    break
            if pruned:
                continue
            partial[d] = b
            dfs(d + 1, j, size_next, bitops_next, value_next)
        partial[d] = 0

    dfs(0, 0, 0, 0, 0.0)
    return _finish(problem, best_bits, best_phi)


@dataclass(frozen=True)
class AllocationCheck:
    feasible: bool
    size_bits: int
    bitops: int
    objective: float
    slack_size: int
    slack_bitops: int
    matches_stored: bool
    notes: tuple[str, ...]


def verify_allocation(problem: AllocationProblem, allocation: BitAllocation) -> AllocationCheck:
    """Independently recompute cost fields and constraint slack for a
    solved allocation, flagging any disagreement with the stored values."""
    if allocation.bits is None:
        return AllocationCheck(feasible=False, size_bits=0, bitops=0,
                               objective=float("nan"), slack_size=0,
                               slack_bitops=0, matches_stored=not allocation.feasible,
                               notes=("allocation carries no bits vector",))
    size = problem.size_bits(allocation.bits)
    bops = problem.bitops(allocation.bits)
    phi = objective(problem, allocation.bits)
    slack_size = problem.size_budget - size
    slack_bitops = problem.bitops_budget - bops
    feasible = slack_size >= 0 and slack_bitops >= 0
    notes = []
    if allocation.size_bits is not None and allocation.size_bits != size:
        notes.append(f"stored size_bits {allocation.size_bits} != recomputed {size}")
    if allocation.bitops is not None and allocation.bitops != bops:
        notes.append(f"stored bitops {allocation.bitops} != recomputed {bops}")
    if allocation.objective is not None and allocation.objective != phi:
        notes.append(f"stored objective {allocation.objective!r} != recomputed {phi!r}")
    if allocation.feasible != feasible:
        notes.append(f"stored feasible={allocation.feasible} but constraints say {feasible}")
    return AllocationCheck(feasible=feasible, size_bits=size, bitops=bops,
                           objective=phi, slack_size=slack_size,
                           slack_bitops=slack_bitops,
                           matches_stored=not notes, notes=tuple(notes))


def build_problem(importance, synergy, stats, target_bits: int,
                  bit_set=DEFAULT_BIT_SET, lam: float = DEFAULT_LAMBDA) -> AllocationProblem:
    """Assemble the program with budgets pinned to the uniform
    ``target_bits`` baseline, which is therefore always feasible."""
    ids = tuple(importance.layer_ids)
    if ids != tuple(stats.layer_ids):
        raise ValueError("importance and stats cover different layers")
    if tuple(synergy.pairs) != tuple(zip(ids[:-1], ids[1:])):
        raise ValueError("synergy pairs do not match the layer ordering")
    w = stats.w_count.astype(int)
    mac = stats.macs.astype(int)
    return AllocationProblem(
        omega=tuple(importance.omega),
        s_hat=tuple(synergy.s_hat),
        w_count=tuple(w),
        macs=tuple(mac),
        bit_set=bit_set,
        size_budget=int(np.dot(w, np.full(w.size, target_bits))),
        bitops_budget=int(np.dot(mac, np.full(mac.size, target_bits ** 2))),
        lam=lam,
    )


def export_lp(problem: AllocationProblem) -> str:
    """CPLEX-LP text of the instance, for cross-checks with external
    solvers.

    One-hot binaries ``a_l_b`` pick each layer's width; each adjacent
    pair's absolute transition is linearized with two nonnegative
    continuous variables ``dp_i`` and ``dn_i``.
    """
    B = problem.bit_set
    obj_terms = []
    for l in range(problem.L):
        for b in B:
            obj_terms.append(f"+ {problem.omega[l] * b!r} a_{l}_{b}")
    for i, s in enumerate(problem.s_hat):
        coeff = problem.lam * s
        obj_terms.append(f"- {coeff!r} dp_{i} - {coeff!r} dn_{i}")

    cons = []
    for l in range(problem.L):
        row = " + ".join(f"a_{l}_{b}" for b in B)
        cons.append(f" onehot_{l}: {row} = 1")
    size_row = " ".join(f"+ {problem.w_count[l] * b} a_{l}_{b}"
                        for l in range(problem.L) for b in B
                        if problem.w_count[l] * b != 0)
    cons.append(f" size: {size_row or '0 a_0_' + str(B[0])} <= {problem.size_budget}")
    bitops_row = " ".join(f"+ {problem.macs[l] * b * b} a_{l}_{b}"
                          for l in range(problem.L) for b in B
                          if problem.macs[l] * b * b != 0)
    cons.append(f" bitops: {bitops_row or '0 a_0_' + str(B[0])} <= {problem.bitops_budget}")
    for i in range(problem.L - 1):
        lhs = " ".join(f"+ {b} a_{i}_{b}" for b in B)
        rhs = " ".join(f"- {b} a_{i + 1}_{b}" for b in B)
        cons.append(f" trans_{i}: {lhs} {rhs} - dp_{i} + dn_{i} = 0")

    binaries = " ".join(f"a_{l}_{b}" for l in range(problem.L) for b in B)
    lines = ["Maximize", " obj: " + " ".join(obj_terms), "Subject To"]
    lines += cons
    lines += ["Binary", " " + binaries, "End", ""]
    return "\n".join(lines)
