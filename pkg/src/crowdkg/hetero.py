"""Workers of unknown reliability.

A worker's reliability ``rho`` is the probability that their label agrees
with that of a fully reliable worker, with prior Beta(c, d). After a label
the joint posterior of (theta, rho) no longer factorizes; it is replaced by
a product of two Betas whose first two moments match the exact marginals.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .beta import BetaState, RewardPair
from .errors import DomainError, NoActionError, ValidationError
from .mdp import LabelOutcome, RunTrace, StateMatrix, aggregate, episode_streams, truth_accuracy
from .policies import DETERMINISTIC, INDEX_POLICIES, Uniform, pick_max

DEFAULT_WORKER_PRIOR = (4.0, 1.0)


@dataclass(frozen=True)
class WorkerState:
    c: float
    d: float

    def __post_init__(self):
        c, d = self.c, self.d
        if not (math.isfinite(c) and math.isfinite(d)) or c <= 0 or d <= 0:
            raise DomainError(f"WorkerState needs finite positive counts, got ({c!r}, {d!r})")


@dataclass(frozen=True)
class MatchedUpdate:
    instance_post: BetaState
    worker_post: WorkerState
    clamped: bool = False


def _inst(s):
    return s if isinstance(s, BetaState) else BetaState(*s)


def _work(w):
    return w if isinstance(w, WorkerState) else WorkerState(*w)


def label_prob_pos(inst, worker):
    """Prior predictive probability that the worker reports +1."""
    s, w = _inst(inst), _work(worker)
    return kernels.label_prob_pos(s.a, s.b, w.c, w.d)


def moment_match_update(inst, worker, z):
    """Beta approximations of both marginal posteriors after label ``z``."""
    s, w = _inst(inst), _work(worker)
    a, b, c, d, clamped = kernels.matched_update(s.a, s.b, w.c, w.d, z)
    return MatchedUpdate(BetaState(a, b), WorkerState(c, d), bool(clamped))


def hetero_reward_pair(inst, worker):
    """Change in instance confidence after a +1 and after a -1 from this worker."""
    s, w = _inst(inst), _work(worker)
    return RewardPair(*kernels.hetero_reward_pair(s.a, s.b, w.c, w.d))


class WorkerMatrix:
    """Per-worker reliability pseudo-counts."""

    __slots__ = ("c", "d")

    def __init__(self, c, d):
        c = np.array(c, dtype=np.float64, ndmin=1)
        d = np.array(d, dtype=np.float64, ndmin=1)
        if c.shape != d.shape or c.size == 0:
            raise ValidationError("worker state needs two equal-length non-empty vectors")
        if np.any(~np.isfinite(c)) or np.any(~np.isfinite(d)) or np.any(c <= 0) or np.any(d <= 0):
            raise DomainError("worker counts must be finite and positive")
        self.c = c
        self.d = d

    @classmethod
    def uniform(cls, M, c=DEFAULT_WORKER_PRIOR[0], d=DEFAULT_WORKER_PRIOR[1]):
        if M < 1:
            raise ValidationError(f"M must be at least 1, got {M}")
        return cls(np.full(M, float(c)), np.full(M, float(d)))

    @classmethod
    def from_pairs(cls, pairs):
        pairs = [tuple(p) for p in pairs]
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @property
    def M(self):
        return self.c.shape[0]

    def copy(self):
        return WorkerMatrix(self.c.copy(), self.d.copy())


class PairScorer:
    """Scores of a fixed list of (instance, worker) pairs, kept current.

    Pairs are stored in lexicographic order so that the first maximum is
    the lexicographically smallest pair.
    """

    def __init__(self, policy, S, W, pairs):
        self.policy = policy
        pairs = sorted(set((int(i), int(j)) for i, j in pairs))
        if not pairs:
            raise NoActionError("no admissible instance-worker pair")
        self.pairs = pairs
        self.pi = np.array([p[0] for p in pairs], dtype=np.intp)
        self.pj = np.array([p[1] for p in pairs], dtype=np.intp)
        self.by_inst = {}
        self.by_work = {}
        for k, (i, j) in enumerate(pairs):
            self.by_inst.setdefault(i, []).append(k)
            self.by_work.setdefault(j, []).append(k)
        self.by_inst = {i: np.array(v, dtype=np.intp) for i, v in self.by_inst.items()}
        self.by_work = {j: np.array(v, dtype=np.intp) for j, v in self.by_work.items()}
        self.live = np.ones(len(pairs), dtype=bool)
        self.values = None
        if isinstance(policy, INDEX_POLICIES):
            self.values = self._score(S, W, np.arange(len(pairs)))

    def _score(self, S, W, idx):
        i = self.pi[idx]
        j = self.pj[idx]
        return kernels.hetero_scores(S.a[i], S.b[i], W.c[j], W.d[j], self.policy.mode, self.policy.alpha)

    def choose(self, rng):
        if not self.live.any():
            raise NoActionError("no admissible instance-worker pair")
        if self.values is None:
            idx = np.flatnonzero(self.live)
            return self.pairs[int(idx[rng.integers(idx.size)])]
        return self.pairs[pick_max(self.values, self.policy.tie, rng, self.live)]

    def notify(self, S, W, i, j):
        if self.values is None:
            return
        idx = np.union1d(self.by_inst.get(i, []), self.by_work.get(j, [])).astype(np.intp)
        self.values[idx] = self._score(S, W, idx)

    def retire(self, i, j):
        """Drop a pair from the action set (its replay pool ran dry)."""
        row = self.by_inst[i]
        self.live[row[self.pj[row] == j]] = False


def _all_pairs(K, M):
    return [(i, j) for i in range(K) for j in range(M)]


def select_pair(policy, S, W, allowed=None, rng=None):
    """Next (instance, worker) pair under any index policy or uniform sampling."""
    if not (isinstance(policy, INDEX_POLICIES) or isinstance(policy, Uniform)):
        raise ValidationError(f"policy {policy!r} is not available with heterogeneous workers")
    pairs = _all_pairs(S.K, W.M) if allowed is None else list(allowed)
    if not pairs:
        raise NoActionError("no admissible instance-worker pair")
    scorer = PairScorer(policy, S, W, pairs)
    if rng is None:
        rng = np.random.default_rng(0)
    return scorer.choose(rng)


def select_pair_optkg(S, W, allowed=None):
    """Pair with the largest optimistic reward; ties go to the smallest pair."""
    from .policies import OptKG

    return select_pair(OptKG(DETERMINISTIC), S, W, allowed)


def run_hetero_episode(env, policy, T, S0, W0, seed):
    """Spend up to ``T`` labels choosing both the instance and the worker."""
    if T < 0 or int(T) != T:
        raise ValidationError(f"budget must be a non-negative integer, got {T!r}")
    T = int(T)
    if S0.K != env.K or W0.M != env.M:
        raise ValidationError("state sizes do not match the environment")
    if not (isinstance(policy, INDEX_POLICIES) or isinstance(policy, Uniform)):
        raise ValidationError(f"policy {policy!r} is not available with heterogeneous workers")
    _, label_rng, policy_rng = episode_streams(seed)
    S = S0.copy()
    W = W0.copy()
    pairs = env.available_pairs()
    pairs = _all_pairs(S.K, W.M) if pairs is None else pairs
    inst_counts = np.zeros(S.K, dtype=np.int64)
    work_counts = np.zeros(W.M, dtype=np.int64)
    outcomes = []
    clamped = 0
    exhausted = False
    if not pairs:
        exhausted = T > 0
        scorer = None
    else:
        scorer = PairScorer(policy, S, W, pairs)
    restricted = getattr(env, "restricted", False)
    for t in range(T if scorer is not None else 0):
        try:
            i, j = scorer.choose(policy_rng)
        except NoActionError:
            exhausted = True
            break
        z = env.draw(i, label_rng, worker=j)
        a, b, c, d, flag = kernels.matched_update(S.a[i], S.b[i], W.c[j], W.d[j], z)
        S.a[i], S.b[i], W.c[j], W.d[j] = a, b, c, d
        S.spent += 1
        clamped += bool(flag)
        if restricted and env.pair_remaining(i, j) <= 0:
            scorer.retire(i, j)
        scorer.notify(S, W, i, j)
        inst_counts[i] += 1
        work_counts[j] += 1
        outcomes.append(LabelOutcome(i, z, t, j))
    positive = aggregate(S)
    return RunTrace(
        outcomes=outcomes,
        final_state=S,
        positive_set=positive,
        accuracy=truth_accuracy(positive, env.truth),
        label_counts=inst_counts,
        worker_counts=work_counts,
        exhausted=exhausted,
        worker_states=W,
        clamped=clamped,
    )
