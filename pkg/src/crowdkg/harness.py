"""Experiment orchestration: configs, data loading, runs and result files."""

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .contextual import ContextualSyntheticEnv, GaussianBelief, run_contextual_episode
from .errors import ParseError, ValidationError
from .hetero import WorkerMatrix, run_hetero_episode
from .mdp import HeteroSyntheticEnv, ReplayEnv, StateMatrix, SyntheticEnv, episode_streams, run_episode
from .multiclass import MultiSyntheticEnv, run_multiclass_episode
from .policies import DPExact, parse_policy

MODES = ("binary", "hetero", "multiclass", "contextual")
_MODE_ALIASES = {
    "binary-homogeneous": "binary",
    "homogeneous": "binary",
    "binary-heterogeneous": "hetero",
    "heterogeneous": "hetero",
}
CSV_COLUMNS = (
    "mode", "policy", "T", "replication", "seed", "spent", "exhausted",
    "accuracy", "clamped", "label_counts", "worker_counts",
)


def theta_grid():
    """Soft labels 0, 0.05, ..., 1 (21 instances)."""
    return [k / 20 for k in range(21)]


def rho_grid():
    """Reliabilities 0.1, 0.15, ..., 0.5 then 0.505, 0.515, ..., 0.995 (59 workers)."""
    low = [(10 + 5 * k) / 100 for k in range(9)]
    high = [(505 + 10 * k) / 1000 for k in range(50)]
    return low + high


def canonical_mode(mode):
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValidationError(f"mode: unknown mode {mode!r}; expected one of {MODES}")
    return mode


def parse_budget(value, K):
    """An integer budget, or a multiple of K written like ``"5K"``."""
    if isinstance(value, bool):
        raise ValidationError(f"budgets: bad budget {value!r}")
    if isinstance(value, (int, np.integer)):
        out = int(value)
    else:
        text = str(value).strip()
        try:
            if text.upper().endswith("K"):
                out = int(round(float(text[:-1] or 1) * K))
            else:
                out = int(text)
        except ValueError:
            raise ValidationError(f"budgets: bad budget {value!r}") from None
    if out < 0:
        raise ValidationError(f"budgets: budget must be non-negative, got {value!r}")
    return out


def _pair(value, name):
    if isinstance(value, str):
        parts = value.split(",")
    else:
        parts = list(value)
    try:
        nums = tuple(float(x) for x in parts)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: expected two numbers 'a,b', got {value!r}") from None
    if len(nums) != 2 or any(not math.isfinite(x) or x <= 0 for x in nums):
        raise ValidationError(f"{name}: expected two positive numbers, got {value!r}")
    return nums


def _probs(value, name):
    if value is None:
        return None
    if isinstance(value, str):
        value = value.split(",")
    try:
        out = [float(x) for x in value]
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: expected a list of probabilities") from None
    if not out or any(not 0.0 <= x <= 1.0 for x in out):
        raise ValidationError(f"{name}: every entry must lie in [0, 1]")
    return out


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one batch of episodes.

    ``generator`` and ``worker_generator`` are the Beta distributions the
    hidden soft labels and reliabilities are drawn from; they default to
    the priors. ``theta`` / ``rho`` pin the hidden values instead. In the
    multi-class mode the first entry of ``instance_prior`` and ``generator``
    is a symmetric Dirichlet concentration; in the contextual mode hidden
    weights and features are standard normal and the prior is N(0, I).
    """

    mode: str = "binary"
    K: int = 50
    M: int = 100
    C: int = 3
    p: int = 5
    instance_prior: tuple = (1.0, 1.0)
    worker_prior: tuple = (4.0, 1.0)
    generator: tuple | None = None
    worker_generator: tuple | None = None
    theta: list | None = None
    rho: list | None = None
    budgets: list = field(default_factory=lambda: ["5K"])
    policies: list = field(default_factory=lambda: ["optkg"])
    alpha: float | None = None
    replications: int = 1
    seed: int = 0
    timing: bool = False
    data: str | None = None
    classes: int | None = None
    features: str | None = None

    def validate(self):
        self.mode = canonical_mode(self.mode)
        for name in ("K", "M", "C", "p", "replications"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ValidationError(f"{name}: expected an integer, got {v!r}")
        if self.K < 1:
            raise ValidationError("K: must be at least 1")
        if self.M < 1:
            raise ValidationError("M: must be at least 1")
        if self.C < 2:
            raise ValidationError("C: must be at least 2")
        if self.p < 1:
            raise ValidationError("p: must be at least 1")
        if self.replications < 1:
            raise ValidationError("replications: must be at least 1")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise ValidationError("seed: must be an integer in [0, 2**64)")
        self.instance_prior = _pair(self.instance_prior, "instance_prior")
        self.worker_prior = _pair(self.worker_prior, "worker_prior")
        if self.generator is not None:
            self.generator = _pair(self.generator, "generator")
        if self.worker_generator is not None:
            self.worker_generator = _pair(self.worker_generator, "worker_generator")
        self.theta = _probs(self.theta, "theta")
        self.rho = _probs(self.rho, "rho")
        if self.theta is not None:
            self.K = len(self.theta)
        if self.rho is not None:
            self.M = len(self.rho)
        if self.alpha is not None and not (0.0 < float(self.alpha) <= 1.0):
            raise ValidationError("alpha: CVaR level must lie in (0, 1]")
        if not self.budgets:
            raise ValidationError("budgets: at least one budget is required")
        if not self.policies:
            raise ValidationError("policies: at least one policy is required")
        parsed = [parse_policy(p, self.alpha) for p in self.policies]
        if self.mode != "binary" and any(isinstance(p, DPExact) for p in parsed):
            raise ValidationError("policies: the exact DP is only available in binary mode")
        if self.data is not None and any(isinstance(p, DPExact) for p in parsed):
            raise ValidationError("policies: the exact DP cannot run on replayed data")
        if self.classes is not None and (not isinstance(self.classes, int) or self.classes < 2):
            raise ValidationError("classes: must be an integer of at least 2")
        return self

    def policy_specs(self):
        return [parse_policy(p, self.alpha) for p in self.policies]

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        aliases = {"reps": "replications", "instance-prior": "instance_prior",
                   "worker-prior": "worker_prior", "worker-generator": "worker_generator"}
        out = {}
        for k, v in data.items():
            k = aliases.get(k, k)
            if k not in known:
                raise ValidationError(f"{k}: unknown configuration field")
            out[k] = v
        return cls(**out)


@dataclass
class ResultRow:
    mode: str
    policy: str
    T: int
    replication: int
    seed: int
    spent: int
    exhausted: bool
    accuracy: float | None
    clamped: int
    label_counts: list
    worker_counts: list | None
    micros: int | None = None
    trace: list | None = None


def _check_header(header, required, path):
    if header is None:
        raise ParseError(f"{path}: empty file, header row required", line=1)
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"{path}: header is missing column(s) {', '.join(missing)}", line=1)


def load_replay_dataset(path, classes=None):
    """Read a replay CSV into a :class:`ReplayEnv`.

    Binary files use labels 1 and -1; with ``classes=C`` labels are
    ``0..C-1``. ``true_label`` may be ``NA`` (or empty) when unknown.
    Instance and worker ids keep their order of first appearance.
    """
    domain = {1, -1} if classes is None else set(range(classes))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        header = [h.strip() for h in header] if header is not None else None
        required = ("instance_id", "worker_id", "label", "true_label")
        _check_header(header, required, path)
        col = {name: header.index(name) for name in required}
        inst_ids, work_ids = {}, {}
        records, truth = [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
            iid = row[col["instance_id"]].strip()
            wid = row[col["worker_id"]].strip()
            if not iid or not wid:
                raise ParseError("instance_id and worker_id must be non-empty", line=line)
            try:
                z = int(row[col["label"]].strip())
            except ValueError:
                raise ParseError(f"label {row[col['label']]!r} is not an integer", line=line) from None
            if z not in domain:
                raise ValidationError(f"line {line}: label {z} outside {sorted(domain)}")
            raw_t = row[col["true_label"]].strip()
            if raw_t.upper() in ("NA", ""):
                t = None
            else:
                try:
                    t = int(raw_t)
                except ValueError:
                    raise ParseError(f"true_label {raw_t!r} is not an integer or NA", line=line) from None
                if t not in domain:
                    raise ValidationError(f"line {line}: true_label {t} outside {sorted(domain)}")
            i = inst_ids.setdefault(iid, len(inst_ids))
            j = work_ids.setdefault(wid, len(work_ids))
            if i == len(truth):
                truth.append(t)
            elif t is not None:
                if truth[i] is None:
                    truth[i] = t
                elif truth[i] != t:
                    raise ValidationError(f"line {line}: conflicting true_label for instance {iid!r}")
            records.append((i, j, z))
    if not records:
        raise ValidationError(f"{path}: no label rows")
    return ReplayEnv(records, truth, len(inst_ids), len(work_ids), classes or 2,
                     list(inst_ids), list(work_ids))


def load_features(path):
    """Read ``instance_id, f0, ..., f{p-1}``; returns (ids, K x p array)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        header = [h.strip() for h in header] if header is not None else None
        _check_header(header, ("instance_id",), path)
        if header[0] != "instance_id" or len(header) < 2:
            raise ParseError("header must be instance_id followed by f0..f{p-1}", line=1)
        expect = [f"f{k}" for k in range(len(header) - 1)]
        if header[1:] != expect:
            raise ParseError(f"feature columns must be {', '.join(expect)}", line=1)
        ids, rows, seen = [], [], set()
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
            iid = row[0].strip()
            if iid in seen:
                raise ValidationError(f"line {line}: duplicate instance_id {iid!r}")
            seen.add(iid)
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise ParseError("feature values must be numbers", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ValidationError(f"line {line}: feature values must be finite")
            ids.append(iid)
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no feature rows")
    return ids, np.array(rows, dtype=np.float64)


def _features_for(env, path):
    ids, X = load_features(path)
    index = {iid: k for k, iid in enumerate(ids)}
    missing = [iid for iid in env.instance_ids if iid not in index]
    if missing:
        raise ValidationError(f"features: no row for instance(s) {', '.join(missing[:5])}")
    return X[[index[iid] for iid in env.instance_ids]]


def _synthetic(cfg, rng):
    """Hidden parameters and priors for one replication."""
    if cfg.mode in ("binary", "hetero"):
        gen = cfg.generator or cfg.instance_prior
        theta = np.array(cfg.theta) if cfg.theta is not None else rng.beta(*gen, size=cfg.K)
        S0 = StateMatrix.uniform(cfg.K, *cfg.instance_prior)
        if cfg.mode == "binary":
            return SyntheticEnv(theta), S0, None
        wgen = cfg.worker_generator or cfg.worker_prior
        rho = np.array(cfg.rho) if cfg.rho is not None else rng.beta(*wgen, size=cfg.M)
        return HeteroSyntheticEnv(theta, rho), S0, WorkerMatrix.uniform(cfg.M, *cfg.worker_prior)
    if cfg.mode == "multiclass":
        conc = (cfg.generator or cfg.instance_prior)[0]
        theta = rng.dirichlet(np.full(cfg.C, conc), size=cfg.K)
        return MultiSyntheticEnv(theta), np.full((cfg.K, cfg.C), cfg.instance_prior[0]), None
    X = rng.standard_normal((cfg.K, cfg.p))
    w = rng.standard_normal(cfg.p)
    return ContextualSyntheticEnv(w, X), GaussianBelief.isotropic(cfg.p), X


def _replay_setup(cfg, base, X):
    env = base.fresh()
    if cfg.mode == "multiclass":
        return env, np.full((env.K, env.classes), cfg.instance_prior[0]), None
    if cfg.mode == "contextual":
        return env, GaussianBelief.isotropic(X.shape[1]), X
    S0 = StateMatrix.uniform(env.K, *cfg.instance_prior)
    if cfg.mode == "hetero":
        return env, S0, WorkerMatrix.uniform(env.M, *cfg.worker_prior)
    return env, S0, None


def _episode(cfg, policy, T, env, state, extra, seed):
    if cfg.mode == "binary":
        return run_episode(env, policy, T, state, seed)
    if cfg.mode == "hetero":
        return run_hetero_episode(env, policy, T, state, extra, seed)
    if cfg.mode == "multiclass":
        return run_multiclass_episode(env, policy, T, state, seed)
    return run_contextual_episode(env, policy, T, extra, state, seed)


def run_experiment(config, keep_traces=False):
    """One row per (policy, budget, replication), in that nesting order.

    Replication ``r`` runs under seed ``config.seed ^ r``; the hidden
    parameters of a replication are shared by every policy and budget.
    """
    cfg = config.validate()
    policies = cfg.policy_specs()
    replay = None
    if cfg.data is not None:
        if cfg.classes is not None:
            cfg.mode = "multiclass"
        elif cfg.features is not None:
            cfg.mode = "contextual"
        elif cfg.mode not in ("binary", "hetero"):
            raise ValidationError("mode: replay supports binary or hetero unless --classes/--features is given")
        replay = load_replay_dataset(cfg.data, cfg.classes)
        X = _features_for(replay, cfg.features) if cfg.features else None
        K = replay.K
    else:
        if cfg.classes is not None or cfg.features is not None:
            raise ValidationError("classes/features: only meaningful together with replay data")
        K = cfg.K
    budgets = [parse_budget(b, K) for b in cfg.budgets]
    setups = {}
    rows = []
    for policy in policies:
        for T in budgets:
            for r in range(cfg.replications):
                seed_r = cfg.seed ^ r
                if replay is not None:
                    env, state, extra = _replay_setup(cfg, replay, X)
                else:
                    if r not in setups:
                        setups[r] = _synthetic(cfg, episode_streams(seed_r)[0])
                    env, state, extra = setups[r]
                t0 = time.perf_counter()
                tr = _episode(cfg, policy, T, env, state, extra, seed_r)
                micros = int(round((time.perf_counter() - t0) * 1e6))
                rows.append(ResultRow(
                    mode=cfg.mode,
                    policy=policy.label,
                    T=T,
                    replication=r,
                    seed=seed_r,
                    spent=tr.spent,
                    exhausted=tr.exhausted,
                    accuracy=tr.accuracy,
                    clamped=tr.clamped,
                    label_counts=tr.label_counts.tolist(),
                    worker_counts=None if tr.worker_counts is None else tr.worker_counts.tolist(),
                    micros=micros if cfg.timing else None,
                    trace=[(o.instance, o.worker, o.label) for o in tr.outcomes] if keep_traces else None,
                ))
    return rows


def _fmt_counts(counts):
    return "" if counts is None else " ".join(str(c) for c in counts)


def rows_to_csv(rows, timing=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(CSV_COLUMNS) + (["micros"] if timing else [])
    w.writerow(cols)
    for row in rows:
        line = [
            row.mode, row.policy, row.T, row.replication, row.seed, row.spent,
            int(row.exhausted), "NA" if row.accuracy is None else repr(float(row.accuracy)),
            row.clamped, _fmt_counts(row.label_counts), _fmt_counts(row.worker_counts),
        ]
        if timing:
            line.append(row.micros)
        w.writerow(line)
    return buf.getvalue()


def rows_to_json(rows):
    return "[\n" + ",\n".join(json.dumps(asdict(r)) for r in rows) + "\n]"


def write_rows(rows, path, timing=False):
    text = rows_to_json(rows) if str(path).endswith(".json") else rows_to_csv(rows, timing)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
