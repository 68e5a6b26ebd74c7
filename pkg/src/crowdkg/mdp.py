"""The binary labeling process: states, label sources and episodes."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .beta import BetaState
from .errors import DomainError, ExhaustedError, NoActionError, ValidationError


class StateMatrix:
    """Per-instance Beta pseudo-counts plus the number of labels spent.

    Rows live in two float arrays ``a`` and ``b``; ``a0`` and ``b0`` keep the
    prior so the count identity can be checked at any time.
    """

    __slots__ = ("a", "b", "a0", "b0", "spent")

    def __init__(self, a, b, spent=0, a0=None, b0=None):
        a = np.array(a, dtype=np.float64, ndmin=1)
        b = np.array(b, dtype=np.float64, ndmin=1)
        if a.shape != b.shape or a.ndim != 1 or a.size == 0:
            raise ValidationError("state needs two equal-length non-empty count vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("state counts must be finite")
        if np.any(a <= 0) or np.any(b <= 0):
            raise DomainError("state counts must be positive")
        self.a = a
        self.b = b
        self.a0 = a.copy() if a0 is None else np.array(a0, dtype=np.float64)
        self.b0 = b.copy() if b0 is None else np.array(b0, dtype=np.float64)
        self.spent = int(spent)

    @classmethod
    def uniform(cls, K, a=1.0, b=1.0):
        """K instances sharing the prior Beta(a, b)."""
        if K < 1:
            raise ValidationError(f"K must be at least 1, got {K}")
        return cls(np.full(K, float(a)), np.full(K, float(b)))

    @classmethod
    def from_pairs(cls, pairs):
        pairs = [tuple(p) for p in pairs]
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @property
    def K(self):
        return self.a.shape[0]

    def row(self, i):
        return BetaState(float(self.a[i]), float(self.b[i]))

    def pairs(self):
        return [(float(x), float(y)) for x, y in zip(self.a, self.b)]

    def key(self):
        """Hashable snapshot of the counts, used to memoize exact solvers."""
        return tuple(zip(self.a.tolist(), self.b.tolist()))

    def copy(self):
        return StateMatrix(self.a.copy(), self.b.copy(), self.spent, self.a0, self.b0)

    def apply(self, i, y):
        """In-place unit update of row ``i`` with label ``y``."""
        if not 0 <= i < self.K:
            raise IndexError(f"instance {i} out of range for K={self.K}")
        if y == 1:
            self.a[i] += 1.0
        elif y == -1:
            self.b[i] += 1.0
        else:
            raise DomainError(f"label must be +1 or -1, got {y!r}")
        self.spent += 1

    def count_identity_holds(self):
        added = np.sum(self.a - self.a0) + np.sum(self.b - self.b0)
        return bool(np.isclose(added, self.spent, rtol=0, atol=1e-9))

    def __eq__(self, other):
        return (
            isinstance(other, StateMatrix)
            and self.spent == other.spent
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )

    def __repr__(self):
        return f"StateMatrix({self.pairs()}, spent={self.spent})"


@dataclass(frozen=True)
class LabelOutcome:
    instance: int
    label: int
    stage: int
    worker: int | None = None


@dataclass
class RunTrace:
    outcomes: list
    final_state: object
    positive_set: frozenset
    accuracy: float | None
    label_counts: np.ndarray
    worker_counts: np.ndarray | None = None
    exhausted: bool = False
    worker_states: object = None
    clamped: int = 0
    assignment: list | None = None

    @property
    def spent(self):
        return len(self.outcomes)


def update_state(S, i, y):
    """Return a new state with row ``i`` updated by label ``y``."""
    out = S.copy()
    out.apply(i, y)
    return out


def aggregate(S):
    """Indices whose posterior puts at least half its mass above 1/2."""
    return frozenset(np.flatnonzero(S.a >= S.b).tolist())


def accuracy(predicted, truth, K):
    """Fraction of the K instances on which the two positive sets agree."""
    predicted = set(predicted)
    truth = set(truth)
    both = len(predicted & truth)
    neither = K - len(predicted | truth)
    return (both + neither) / K


def expected_accuracy(S):
    """Sum over instances of max(P, 1 - P) with P the positive-tail mass."""
    total = 0.0
    for x, y in zip(S.a, S.b):
        p = kernels.upper_tail(x, y)
        total += max(p, 1.0 - p)
    return total


def episode_streams(seed):
    """Three independent generators: environment draw, labels, policy."""
    if not (0 <= int(seed) < 2**64):
        raise ValidationError(f"seed must be a non-negative 64-bit integer, got {seed!r}")
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(int(seed)).spawn(3)]


class SyntheticEnv:
    """Labels drawn from hidden soft labels ``theta`` by fully reliable workers."""

    restricted = False

    def __init__(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 1 or np.any(~np.isfinite(theta)) or np.any((theta < 0) | (theta > 1)):
            raise DomainError("theta must be a vector of probabilities")
        self.theta = theta
        self.K = theta.shape[0]
        # Ties at exactly 1/2 count as positive.
        self.truth = [1 if t >= 0.5 else -1 for t in theta]

    def fresh(self):
        return self

    def available_instances(self):
        return None

    def draw(self, i, rng, worker=None):
        return 1 if rng.random() < self.theta[i] else -1


class HeteroSyntheticEnv(SyntheticEnv):
    """Worker ``j`` agrees with a fully reliable worker with probability ``rho[j]``."""

    def __init__(self, theta, rho):
        super().__init__(theta)
        rho = np.asarray(rho, dtype=np.float64)
        if rho.ndim != 1 or np.any(~np.isfinite(rho)) or np.any((rho < 0) | (rho > 1)):
            raise DomainError("rho must be a vector of probabilities")
        self.rho = rho
        self.M = rho.shape[0]

    def available_pairs(self):
        return None

    def draw(self, i, rng, worker=None):
        if worker is None:
            raise ValidationError("heterogeneous environment needs a worker index")
        t = self.theta[i]
        r = self.rho[worker]
        p = r * t + (1.0 - r) * (1.0 - t)
        return 1 if rng.random() < p else -1


class ReplayEnv:
    """Recorded labels served back without replacement.

    ``records`` is a sequence of ``(instance, worker, label)`` triples with
    dense indices. ``truth`` holds the known true label per instance or
    ``None``. Labels can be drawn per instance (any worker) or per
    instance-worker pair; both views share one used-record mask.
    :meth:`fresh` returns an independent copy with full pools.
    """

    restricted = True

    def __init__(self, records, truth, K, M, classes=2, instance_ids=None, worker_ids=None):
        self.records = [(int(i), int(j), int(z)) for i, j, z in records]
        self.truth = list(truth)
        self.K = int(K)
        self.M = int(M)
        self.classes = int(classes)
        self.instance_ids = instance_ids
        self.worker_ids = worker_ids
        self._used = np.zeros(len(self.records), dtype=bool)
        self._pools = [[] for _ in range(self.K)]
        self._pair_pools = {}
        for r, (i, j, _) in enumerate(self.records):
            self._pools[i].append(r)
            self._pair_pools.setdefault((i, j), []).append(r)
        self._inst_left = np.array([len(p) for p in self._pools], dtype=np.int64)
        self._pair_left = {k: len(v) for k, v in self._pair_pools.items()}

    def fresh(self):
        return ReplayEnv(self.records, self.truth, self.K, self.M, self.classes,
                         self.instance_ids, self.worker_ids)

    def pool_sizes(self):
        return self._inst_left.tolist()

    def truth_coverage(self):
        return sum(t is not None for t in self.truth)

    def available_instances(self):
        return self._inst_left > 0

    def available_pairs(self):
        return sorted(k for k, v in self._pair_left.items() if v > 0)

    def pair_remaining(self, i, j):
        return self._pair_left.get((i, j), 0)

    def _take(self, pool, rng):
        # Uniform over the unused records in ``pool``; records consumed
        # through the other view are dropped lazily when met.
        while True:
            k = int(rng.integers(len(pool)))
            pool[k], pool[-1] = pool[-1], pool[k]
            r = pool.pop()
            if not self._used[r]:
                self._used[r] = True
                i, j, _ = self.records[r]
                self._inst_left[i] -= 1
                self._pair_left[(i, j)] -= 1
                return self.records[r][2]

    def draw(self, i, rng, worker=None):
        if worker is None:
            if self._inst_left[i] <= 0:
                raise ExhaustedError(f"no recorded labels left for instance {i}")
            return self._take(self._pools[i], rng)
        key = (i, worker)
        if self._pair_left.get(key, 0) <= 0:
            raise ExhaustedError(f"no recorded labels left for pair {key}")
        return self._take(self._pair_pools[key], rng)


def draw_label(env, i, rng, worker=None):
    """One label for instance ``i`` (from ``worker`` in heterogeneous mode)."""
    return env.draw(i, rng, worker)


def truth_accuracy(positive_set, truth):
    """Accuracy over the instances whose true label is known, or None."""
    hits = 0
    known = 0
    for i, t in enumerate(truth):
        if t is None:
            continue
        known += 1
        hits += (i in positive_set) == (t == 1)
    return hits / known if known else None


def run_episode(env, policy, T, S0, seed):
    """Spend up to ``T`` labels under ``policy`` and aggregate.

    Stops early if a replay environment runs out of labels; the trace then
    has ``exhausted`` set and fewer than ``T`` outcomes.
    """
    from .policies import make_chooser

    if T < 0 or int(T) != T:
        raise ValidationError(f"budget must be a non-negative integer, got {T!r}")
    T = int(T)
    if S0.K != env.K:
        raise ValidationError(f"state has K={S0.K} rows but environment has K={env.K}")
    _, label_rng, policy_rng = episode_streams(seed)
    S = S0.copy()
    chooser = make_chooser(policy, S, T)
    counts = np.zeros(S.K, dtype=np.int64)
    outcomes = []
    exhausted = False
    for t in range(T):
        allowed = env.available_instances()
        if allowed is not None and not allowed.any():
            exhausted = True
            break
        try:
            i = chooser.choose(S, T - t, policy_rng, allowed)
        except NoActionError:
            exhausted = True
            break
        y = env.draw(i, label_rng)
        S.apply(i, y)
        chooser.notify(S, i)
        counts[i] += 1
        outcomes.append(LabelOutcome(i, y, t))
    positive = aggregate(S)
    return RunTrace(
        outcomes=outcomes,
        final_state=S,
        positive_set=positive,
        accuracy=truth_accuracy(positive, env.truth),
        label_counts=counts,
        exhausted=exhausted,
    )
