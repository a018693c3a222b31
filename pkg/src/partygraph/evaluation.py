"""Metrics, coverage, API retrieval-cost planning and experiment protocols."""

from __future__ import annotations

import csv
import json
import math
import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .labels import ABSTAIN, ClassRegistry, LabeledUserSet
from .records import RecordStore, SignalKind


@dataclass
class Metrics:
    accuracy: float
    f1_macro: float
    f1_weighted: float
    confusion: np.ndarray
    abstained: int
    total: int

    @property
    def coverage(self) -> float:
        return 100.0 * (self.total - self.abstained) / self.total if self.total else 0.0

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "abstained": self.abstained,
            "total": self.total,
            "confusion": self.confusion.tolist(),
        }


def evaluate(pred: np.ndarray, gold: np.ndarray, n_classes: int, exclude_abstain: bool = False) -> Metrics:
    """Accuracy, macro/weighted F1 and confusion (rows gold, columns predicted).

    Abstentions count as errors unless ``exclude_abstain``; they never enter
    the confusion matrix but do count toward each gold class's support.
    """
    pred = np.asarray(pred, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size == 0:
        raise ValueError("cannot evaluate against an empty gold set")
    if pred.shape != gold.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match gold {gold.shape}")
    abstain = pred == ABSTAIN
    n_abstain = int(abstain.sum())
    n_all = gold.size
    if exclude_abstain:
        pred, gold = pred[~abstain], gold[~abstain]
        if gold.size == 0:
            return Metrics(0.0, 0.0, 0.0, np.zeros((n_classes, n_classes), dtype=np.int64), n_abstain, n_abstain)
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    ok = pred != ABSTAIN
    np.add.at(conf, (gold[ok], pred[ok]), 1)
    total = gold.size
    acc = float(np.trace(conf)) / total
    support = np.bincount(gold, minlength=n_classes).astype(float)
    tp = np.diag(conf).astype(float)
    predicted = conf.sum(axis=0).astype(float)
    prec = np.divide(tp, predicted, out=np.zeros(n_classes), where=predicted > 0)
    rec = np.divide(tp, support, out=np.zeros(n_classes), where=support > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(n_classes), where=denom > 0)
    present = support > 0
    macro = float(f1[present].mean()) if present.any() else 0.0
    weighted = float((f1 * support).sum() / support.sum())
    return Metrics(acc, macro, weighted, conf, n_abstain, n_all)


def coverage(users: Iterable[str], required: Iterable[SignalKind | str], store: RecordStore) -> float:
    """Percentage of ``users`` with at least one record of every required kind."""
    users = list(users)
    required = {SignalKind.parse(k) for k in required}
    if not users:
        return 0.0
    if not required:
        return 100.0
    has: dict[SignalKind, set[str]] = {k: set() for k in required}
    for src, kind, _ in store:
        if kind in has:
            has[kind].add(src)
    ok = sum(all(u in has[k] for k in required) for u in users)
    return 100.0 * ok / len(users)


def reach_coverage(pred: np.ndarray) -> float:
    """Percentage of nodes with a non-abstaining prediction."""
    pred = np.asarray(pred)
    return 100.0 * float((pred != ABSTAIN).mean()) if pred.size else 0.0


@dataclass(frozen=True)
class RateLimit:
    items_per_request: int
    requests_per_window: int
    window_minutes: int = 15

    def __post_init__(self):
        for name in ("items_per_request", "requests_per_window", "window_minutes"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def total_per_window(self) -> int:
        return self.items_per_request * self.requests_per_window


DEFAULT_RATES = {
    "tweets": RateLimit(200, 900),
    "likes": RateLimit(100, 75),
    "relations": RateLimit(5000, 15),
}

ENDPOINT_OF = {
    SignalKind.RETWEET: "tweets",
    SignalKind.MENTION: "tweets",
    SignalKind.QUOTE: "tweets",
    SignalKind.HASHTAG: "tweets",
    SignalKind.LIKE: "likes",
    SignalKind.FRIEND: "relations",
    SignalKind.FOLLOW: "relations",
}


def rate_table(overrides: Mapping[str, Mapping] | None = None) -> dict[str, RateLimit]:
    table = dict(DEFAULT_RATES)
    for name, fields in (overrides or {}).items():
        base = asdict(table[name]) if name in table else {}
        table[name] = RateLimit(**{**base, **fields})
    return table


@dataclass(frozen=True)
class CostPlan:
    users_per_window: float
    sd: float
    mean_requests: float
    n_users: int


def cost_plan(counts: Sequence[int], rate: RateLimit) -> CostPlan:
    """Users retrievable per rate-limit window.

    Each user costs ``max(1, ceil(count / items_per_request))`` requests; the
    window admits ``requests_per_window / mean(requests)`` users. The sd is
    the first-order propagation of the sample sd of requests per user.
    """
    c = np.asarray(list(counts), dtype=np.int64)
    if c.size == 0:
        raise ValueError("cost plan needs at least one user")
    if np.any(c < 0):
        raise ValueError("item counts must be non-negative")
    req = np.maximum(1, -(-c // rate.items_per_request))
    mean = float(req.mean())
    sd_req = float(req.std(ddof=1)) if req.size > 1 else 0.0
    upw = rate.requests_per_window / mean
    return CostPlan(upw, rate.requests_per_window * sd_req / (mean * mean), mean, int(c.size))


def slowest_plan(per_kind_counts: Mapping[SignalKind | str, Sequence[int]], table=None) -> tuple[str, CostPlan]:
    """Endpoints run in parallel; a method is as fast as its slowest endpoint."""
    table = table or DEFAULT_RATES
    best = None
    for kind, counts in per_kind_counts.items():
        ep = ENDPOINT_OF[SignalKind.parse(kind)]
        plan = cost_plan(counts, table[ep])
        if best is None or plan.users_per_window < best[1].users_per_window:
            best = (ep, plan)
    if best is None:
        raise ValueError("no signal kinds given")
    return best


@dataclass(frozen=True)
class ExperimentPlan:
    test_fraction: float = 0.4
    repetitions: int = 10
    seed_source: str = "public"
    test_type: str = "public"
    signals: tuple[str, ...] = ("retweet",)
    method: str = "lp"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        for name in ("seed_source", "test_type"):
            if getattr(self, name) not in ("public", "politicians", "both"):
                raise ValueError(f"{name} must be public, politicians or both")

    @classmethod
    def from_json(cls, path) -> ExperimentPlan:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment plan field(s): {', '.join(sorted(unknown))}")
        if "signals" in data:
            data["signals"] = tuple(data["signals"])
        return cls(**data)


_TYPE = {"public": "public", "politicians": "politician"}


def _of_type(labels: LabeledUserSet, which: str) -> list[str]:
    if which == "both":
        return list(labels)
    return [u for u, e in labels.items() if e.user_type == _TYPE[which]]


@dataclass
class Split:
    train: LabeledUserSet
    test: list[str]


def make_split(plan: ExperimentPlan, gold: LabeledUserSet, rep: int,
               train_pool: LabeledUserSet | None = None) -> Split:
    """Test users sampled from gold (by test_type); training labels from the rest."""
    pool = sorted(_of_type(gold, plan.test_type))
    rng = np.random.default_rng([plan.seed, rep])
    n_test = int(round(plan.test_fraction * len(pool)))
    if n_test < 1:
        raise ValueError(f"need at least {math.ceil(1 / plan.test_fraction)} labeled {plan.test_type} users")
    test = [pool[i] for i in np.sort(rng.choice(len(pool), size=n_test, replace=False))]
    test_set = set(test)
    source = train_pool if train_pool is not None else gold
    train_users = [u for u in _of_type(source, plan.seed_source) if u not in test_set]
    train = source.subset(train_users)
    if len({train.label_of(u) for u in train}) < 2:
        raise ValueError(
            f"training set has {len(train)} users covering fewer than 2 classes; "
            "need labeled users of at least 2 classes outside the test set"
        )
    return Split(train, test)


Pipeline = Callable[[LabeledUserSet, list[str]], Mapping[str, int]]


@dataclass
class RepResult:
    rep: int
    metrics: Metrics
    runtime_s: float


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    reps: list[RepResult] = field(default_factory=list)

    def _stat(self, fn) -> tuple[float, float]:
        vals = np.array([fn(r) for r in self.reps], dtype=float)
        return float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0

    @property
    def accuracy(self) -> tuple[float, float]:
        return self._stat(lambda r: r.metrics.accuracy)

    @property
    def f1_macro(self) -> float:
        return self._stat(lambda r: r.metrics.f1_macro)[0]

    @property
    def f1_weighted(self) -> float:
        return self._stat(lambda r: r.metrics.f1_weighted)[0]

    @property
    def coverage(self) -> float:
        return self._stat(lambda r: r.metrics.coverage)[0]

    @property
    def runtime(self) -> float:
        return self._stat(lambda r: r.runtime_s)[0]


def run_experiment(
    plan: ExperimentPlan,
    gold: LabeledUserSet,
    pipeline: Pipeline,
    train_pool: LabeledUserSet | None = None,
    threads: int = 1,
) -> ExperimentResult:
    """Repeat split / fit / predict; only the pipeline call is timed.

    ``pipeline(train_labels, test_users)`` returns class indices for test
    users; missing users or ``ABSTAIN`` count as abstentions.
    """
    k = len(gold.classes)

    def one(rep: int) -> RepResult:
        split = make_split(plan, gold, rep, train_pool)
        t0 = time.perf_counter()
        out = pipeline(split.train, split.test)
        dt = time.perf_counter() - t0
        pred = np.array([out.get(u, ABSTAIN) for u in split.test], dtype=np.int64)
        g = np.array([gold.label_of(u) for u in split.test], dtype=np.int64)
        return RepResult(rep, evaluate(pred, g, k), dt)

    reps = range(plan.repetitions)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, reps))
    else:
        results = [one(r) for r in reps]
    return ExperimentResult(plan, results)


RESULT_FIELDS = ["method", "signal", "acc_mean", "acc_sd", "f1_macro", "f1_weighted",
                 "coverage", "users_per_window", "runtime_s"]


def write_results(rows: Iterable[Mapping], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in RESULT_FIELDS})


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else v


def result_row(method: str, signal: str, res: ExperimentResult, users_per_window: float | str = "",
               include_runtime: bool = True) -> dict:
    acc, sd = res.accuracy
    return {
        "method": method, "signal": signal, "acc_mean": acc, "acc_sd": sd,
        "f1_macro": res.f1_macro, "f1_weighted": res.f1_weighted, "coverage": res.coverage,
        "users_per_window": users_per_window, "runtime_s": res.runtime if include_runtime else "",
    }


def group_labels(labels: np.ndarray, classes: ClassRegistry, mapping: Mapping[str, str]
                 ) -> tuple[np.ndarray, ClassRegistry]:
    """Map fine class indices onto coarse groups; abstentions stay abstentions."""
    missing = [c for c in classes.names if c not in mapping]
    if missing:
        raise ValueError(f"class(es) without a group: {', '.join(missing)}")
    groups: list[str] = []
    for c in classes.names:
        if mapping[c] not in groups:
            groups.append(mapping[c])
    if len(groups) < 2:
        raise ValueError("grouping must produce at least 2 groups")
    coarse = ClassRegistry(groups)
    lut = np.array([groups.index(mapping[c]) for c in classes.names], dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    out = np.where(labels == ABSTAIN, ABSTAIN, lut[np.clip(labels, 0, None)])
    return out, coarse


CANADA_COALITIONS = {"GPC": "left", "NDP": "left", "LPC": "left", "CPC": "right", "PPC": "right"}
