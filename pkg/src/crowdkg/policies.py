"""Allocation rules: index policies, uniform sampling and the exact DP."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CapExceededError, DomainError, NoActionError, ValidationError

DETERMINISTIC = "deterministic"
RANDOM = "random"
_TIES = (DETERMINISTIC, RANDOM)
DEFAULT_STATE_CAP = 200_000
DP_TIE_TOL = 1e-12


def _check_tie(tie):
    if tie not in _TIES:
        raise DomainError(f"tie rule must be one of {_TIES}, got {tie!r}")


@dataclass(frozen=True)
class Uniform:
    @property
    def label(self):
        return "uniform"


@dataclass(frozen=True)
class KG:
    """Largest expected one-step reward."""

    tie: str = DETERMINISTIC

    def __post_init__(self):
        _check_tie(self.tie)

    mode = kernels.EXPECTED
    alpha = 1.0

    @property
    def label(self):
        return "kg" if self.tie == DETERMINISTIC else "kg-random"


@dataclass(frozen=True)
class OptKG:
    """Largest of the two possible one-step rewards."""

    tie: str = DETERMINISTIC

    def __post_init__(self):
        _check_tie(self.tie)

    mode = kernels.OPTIMISTIC
    alpha = 1.0

    @property
    def label(self):
        return "optkg" if self.tie == DETERMINISTIC else "optkg-random"


@dataclass(frozen=True)
class PessKG:
    """Largest of the two worst-case one-step rewards."""

    tie: str = DETERMINISTIC

    def __post_init__(self):
        _check_tie(self.tie)

    mode = kernels.PESSIMISTIC
    alpha = 1.0

    @property
    def label(self):
        return "pesskg" if self.tie == DETERMINISTIC else "pesskg-random"


@dataclass(frozen=True)
class CVaRKG:
    """Largest upper-tail CVaR of the reward at level ``alpha``."""

    alpha: float = 1.0
    tie: str = DETERMINISTIC

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"CVaR alpha must lie in (0, 1], got {self.alpha!r}")
        _check_tie(self.tie)

    mode = kernels.CVAR

    @property
    def label(self):
        base = f"cvar:{self.alpha:g}"
        return base if self.tie == DETERMINISTIC else base + "-random"


@dataclass(frozen=True)
class DPExact:
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        if self.state_cap < 1:
            raise DomainError(f"state cap must be at least 1, got {self.state_cap!r}")

    @property
    def label(self):
        return "dp"


INDEX_POLICIES = (KG, OptKG, PessKG, CVaRKG)


def parse_policy(text, alpha=None):
    """Build a policy from names such as ``optkg``, ``kg-random`` or ``cvar:0.2``.

    A bare ``cvar`` takes its level from ``alpha``.
    """
    name = text.strip().lower()
    tie = DETERMINISTIC
    if name.endswith("-random"):
        tie = RANDOM
        name = name[: -len("-random")]
    head, _, arg = name.partition(":")
    if head == "uniform" and not arg and tie == DETERMINISTIC:
        return Uniform()
    if head == "kg" and not arg:
        return KG(tie)
    if head == "optkg" and not arg:
        return OptKG(tie)
    if head == "pesskg" and not arg:
        return PessKG(tie)
    if head in ("cvar", "cvarkg"):
        level = arg or alpha
        if level is None:
            raise ValidationError("cvar policy needs a level, e.g. cvar:0.3 or --alpha")
        try:
            level = float(level)
        except ValueError:
            raise ValidationError(f"bad CVaR level in {text!r}") from None
        try:
            return CVaRKG(level, tie)
        except DomainError as exc:
            raise ValidationError(str(exc)) from None
    if head == "dp" and tie == DETERMINISTIC:
        if not arg:
            return DPExact()
        try:
            return DPExact(int(arg))
        except ValueError:
            raise ValidationError(f"bad DP state cap in {text!r}") from None
    raise ValidationError(f"unknown policy {text!r}")


def policy_scores(policy, S):
    """Index scores of every row of ``S`` under an index policy."""
    return kernels.scores(S.a, S.b, policy.mode, policy.alpha)


def pick_max(values, tie, rng, allowed=None):
    """Argmax of ``values`` over ``allowed`` with the given tie rule."""
    v = np.asarray(values, dtype=np.float64)
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool)
        if not allowed.any():
            raise NoActionError("no admissible action left")
        v = np.where(allowed, v, -np.inf)
    elif v.size == 0:
        raise NoActionError("no admissible action left")
    if tie == DETERMINISTIC:
        return int(np.argmax(v))
    top = np.flatnonzero(v == v.max())
    if top.size == 1:
        return int(top[0])
    return int(top[rng.integers(top.size)])


def _uniform_pick(K, rng, allowed):
    if allowed is None:
        return int(rng.integers(K))
    idx = np.flatnonzero(allowed)
    if idx.size == 0:
        raise NoActionError("no admissible action left")
    return int(idx[rng.integers(idx.size)])


def select_action(policy, S, remaining, rng, allowed=None):
    """Index of the next instance to label.

    ``allowed`` is an optional boolean mask of admissible instances.
    ``remaining`` only matters for the exact DP; index policies are
    stationary.
    """
    if remaining < 1:
        raise ValidationError("no budget remaining")
    if isinstance(policy, Uniform):
        return _uniform_pick(S.K, rng, allowed)
    if isinstance(policy, INDEX_POLICIES):
        return pick_max(policy_scores(policy, S), policy.tie, rng, allowed)
    if isinstance(policy, DPExact):
        if allowed is not None and not np.all(allowed):
            raise ValidationError("the exact DP needs an unrestricted action set")
        return dp_solve(S, remaining, policy.state_cap).first_action
    raise ValidationError(f"unsupported policy {policy!r}")


class _IndexChooser:
    # Index scores depend on a row's own counts only, so an update touches
    # one entry of the cached score vector.
    def __init__(self, policy, S):
        self.policy = policy
        self.values = policy_scores(policy, S)

    def choose(self, S, remaining, rng, allowed):
        return pick_max(self.values, self.policy.tie, rng, allowed)

    def notify(self, S, i):
        self.values[i] = kernels.score(S.a[i], S.b[i], self.policy.mode, self.policy.alpha)


class _UniformChooser:
    def choose(self, S, remaining, rng, allowed):
        return _uniform_pick(S.K, rng, allowed)

    def notify(self, S, i):
        pass


class _DPChooser:
    def __init__(self, policy, S, T):
        self.solution = dp_solve(S, T, policy.state_cap)

    def choose(self, S, remaining, rng, allowed):
        if allowed is not None and not np.all(allowed):
            raise ValidationError("the exact DP needs an unrestricted action set")
        return self.solution.table[(S.key(), remaining)][0]

    def notify(self, S, i):
        pass


def make_chooser(policy, S, T):
    """Stateful helper used by episode loops to pick actions quickly."""
    if isinstance(policy, Uniform):
        return _UniformChooser()
    if isinstance(policy, INDEX_POLICIES):
        return _IndexChooser(policy, S)
    if isinstance(policy, DPExact):
        return _DPChooser(policy, S, T)
    raise ValidationError(f"unsupported policy {policy!r}")


@dataclass
class DPSolution:
    """Optimal value, first action and the full decision table.

    ``table[(key, r)]`` holds ``(action, reward_to_go)`` where ``key`` is
    ``StateMatrix.key()`` and ``r`` the remaining budget; terminal entries
    have action ``None`` and value 0. ``value`` adds the current expected
    accuracy to the optimal reward-to-go.
    """

    value: float
    first_action: int | None
    table: dict = field(repr=False)
    initial_accuracy: float = 0.0


def dp_state_estimate(K, T):
    """Number of (state, remaining) pairs reachable from one state in T steps."""
    return math.comb(T + 2 * K, 2 * K)


def _h_sum(key):
    total = 0.0
    for a, b in key:
        p = kernels.upper_tail(a, b)
        total += max(p, 1.0 - p)
    return total


def dp_solve(S0, T, cap=DEFAULT_STATE_CAP):
    """Exact finite-horizon optimum by memoized backward induction."""
    if T < 0 or int(T) != T:
        raise ValidationError(f"budget must be a non-negative integer, got {T!r}")
    T = int(T)
    est = dp_state_estimate(S0.K, T)
    if est > cap:
        raise CapExceededError(est, cap)
    table = {}
    rewards = {}

    def reward(a, b):
        r = rewards.get((a, b))
        if r is None:
            r = kernels.score(a, b, kernels.EXPECTED)
            rewards[(a, b)] = r
        return r

    def solve(key, r):
        hit = table.get((key, r))
        if hit is not None:
            return hit[1]
        if r == 0:
            table[(key, r)] = (None, 0.0)
            return 0.0
        best = -math.inf
        best_i = None
        for i, (a, b) in enumerate(key):
            p1 = a / (a + b)
            up = key[:i] + ((a + 1.0, b),) + key[i + 1:]
            dn = key[:i] + ((a, b + 1.0),) + key[i + 1:]
            q = reward(a, b) + p1 * solve(up, r - 1) + (1.0 - p1) * solve(dn, r - 1)
            if q > best + DP_TIE_TOL:
                best = q
                best_i = i
        table[(key, r)] = (best_i, best)
        return best

    key0 = S0.key()
    to_go = solve(key0, T)
    g0 = _h_sum(key0)
    return DPSolution(g0 + to_go, table[(key0, T)][0], table, g0)


def evaluate_policy(policy, S0, T):
    """Exact expected final sum of max(P, 1 - P) when ``policy`` runs for T steps.

    Randomized choices (uniform sampling, random tie-breaks) are averaged
    over; the recursion branches on both labels at every step.
    """
    if isinstance(policy, DPExact):
        return dp_solve(S0, T, policy.state_cap).value
    memo = {}

    def weights(key):
        K = len(key)
        if isinstance(policy, Uniform):
            return [(i, 1.0 / K) for i in range(K)]
        v = np.array([kernels.score(a, b, policy.mode, policy.alpha) for a, b in key])
        if policy.tie == DETERMINISTIC:
            return [(int(np.argmax(v)), 1.0)]
        top = np.flatnonzero(v == v.max())
        return [(int(i), 1.0 / top.size) for i in top]

    def value(key, r):
        hit = memo.get((key, r))
        if hit is not None:
            return hit
        if r == 0:
            out = _h_sum(key)
        else:
            out = 0.0
            for i, w in weights(key):
                a, b = key[i]
                p1 = a / (a + b)
                up = key[:i] + ((a + 1.0, b),) + key[i + 1:]
                dn = key[:i] + ((a, b + 1.0),) + key[i + 1:]
                out += w * (p1 * value(up, r - 1) + (1.0 - p1) * value(dn, r - 1))
        memo[(key, r)] = out
        return out

    return value(S0.key(), int(T))
