"""Experiment orchestration: replica ladders, summaries, reports and manifests."""

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import oracle, solver, stats
from .errors import DomainError, InsufficientData, ValidationError

REPORT_COLUMNS = ("case", "N", "sigma2_hat", "sigma2_oracle", "sup_dist", "tv_dist", "ks_stat", "slope")
EXTRA_COLUMNS = ("n", "se", "sup_se", "tv_se", "ks_p", "skewness", "sup_dist_oracle",
                 "tv_dist_oracle", "n_diverged", "flag")

DEFAULT_TOLERANCES = {
    "r2_min": 0.8,
    "ks_level": 0.01,
    "monotone_se": 2.0,
}


def slope_window(case, alpha):
    if case == 1 and alpha != 2.0:
        return (-0.9, -0.15)
    return (-0.8, -0.2)


@dataclass
class ExperimentPlan:
    """A simulation configuration, an N-ladder and where to write outputs."""

    sim: solver.SimConfig
    N_ladder: tuple
    out_dir: str = None
    threads: int = 1
    chunk: int = 256
    n_boot: int = 20
    with_oracle: bool = True
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        ladder = tuple(float(n) for n in self.N_ladder)
        if not ladder:
            raise DomainError("the N-ladder is empty")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise DomainError("the N-ladder must be strictly increasing")
        floor = math.e if self.sim.case == 3 else 1.0
        if ladder[0] < floor:
            raise DomainError(f"all N must be >= {floor:.4g} for case {self.sim.case}")
        self.N_ladder = ladder
        if self.threads < 1 or self.chunk < 1:
            raise DomainError("threads and chunk must be positive")
        self.tolerances = {**DEFAULT_TOLERANCES, **self.tolerances}

    @property
    def replicas(self):
        return self.sim.replicas


@dataclass
class Summary:
    """One row of the report: ensemble statistics at a single window size."""

    case: int
    N: float
    sigma2_hat: float = math.nan
    sigma2_oracle: float = math.nan
    sup_dist: float = math.nan
    tv_dist: float = math.nan
    ks_stat: float = math.nan
    slope: float = math.nan
    n: int = 0
    se: float = math.nan
    sup_se: float = math.nan
    tv_se: float = math.nan
    ks_p: float = math.nan
    skewness: float = math.nan
    sup_dist_oracle: float = math.nan
    tv_dist_oracle: float = math.nan
    n_diverged: int = 0
    flag: str = ""


@dataclass
class ExperimentResult:
    summaries: list
    fit: object
    manifest: dict
    samples: dict
    exit_code: int


# ------------------------------------------------------------------ running

def _run_chunk(args):
    cfg, N_ladder, index, lo, hi, shard = args
    res = solver.simulate_batch(cfg, range(lo, hi), N_list=N_ladder)
    if shard is not None:
        with open(shard, "w") as fh:
            for i, rep in enumerate(res.replicas):
                for j, N in enumerate(N_ladder):
                    a = res.A[i, j]
                    rec = {"case": cfg.case, "alpha": cfg.alpha, "t": cfg.t, "N": N,
                           "replica": int(rep), "A_N": None if not np.isfinite(a) else float(a),
                           "neg_fraction": float(res.neg_fraction[i]),
                           "runtime_ms": float(res.runtime_ms[i])}
                    fh.write(json.dumps(rec) + "\n")
    return index, res.A, res.neg_fraction, res.diverged_step


def simulate_ladder(cfg, N_ladder, replicas, threads=1, chunk=256, shard_dir=None):
    """Run ``replicas`` replicas in chunks; returns ``(A, neg_fraction, diverged)``.

    Every replica is seeded from ``(seed, replica)`` alone, so results do not
    depend on ``threads`` or ``chunk``. With ``shard_dir`` each chunk writes its
    own JSONL shard.
    """
    jobs = []
    for index, lo in enumerate(range(0, replicas, chunk)):
        hi = min(lo + chunk, replicas)
        shard = None if shard_dir is None else os.path.join(shard_dir, f"shard-{index:05d}.jsonl")
        jobs.append((cfg, tuple(N_ladder), index, lo, hi, shard))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    parts.sort(key=lambda p: p[0])
    if not parts:
        k = len(N_ladder)
        return np.empty((0, k)), np.empty(0), np.empty(0, dtype=np.int64)
    A = np.concatenate([p[1] for p in parts])
    neg = np.concatenate([p[2] for p in parts])
    div = np.concatenate([p[3] for p in parts])
    return A, neg, div


def merge_shards(shard_dir, target):
    """Concatenate the per-chunk JSONL shards (in chunk order) into ``target``."""
    names = sorted(n for n in os.listdir(shard_dir) if n.startswith("shard-") and n.endswith(".jsonl"))
    with open(target, "w") as out:
        for name in names:
            path = os.path.join(shard_dir, name)
            with open(path) as fh:
                out.write(fh.read())
            os.remove(path)
    return target


def oracle_variances(cfg, N_ladder):
    """Oracle ``Var(A_N)`` for cases 1-2 (NaN for case 3)."""
    if cfg.case == 3:
        return [math.nan] * len(N_ladder)
    sol = oracle.solve_covariance(case=cfg.case, alpha=cfg.alpha, t=cfg.t, N=max(N_ladder),
                                  spec=cfg.spec if cfg.case == 2 else None, d=cfg.d,
                                  noise_scale=cfg.noise_scale)
    return [oracle.variance_of_average(sol, N)[0] for N in N_ladder]


def summarize(case, N, samples, sigma2_oracle=math.nan, n_boot=20, seed=0, n_diverged=0):
    """Variance, density distances and KS statistic for one window size."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    row = Summary(case=case, N=float(N), sigma2_oracle=float(sigma2_oracle), n=int(x.size),
                  n_diverged=int(n_diverged))
    ens = stats.EnsembleStats.from_samples(x, keep_samples=False)
    try:
        row.sigma2_hat, row.se = stats.estimate_variance(ens)
        row.skewness = ens.skewness
        F = stats.normalize(x)
        est = stats.kde_density(F)
        row.sup_dist = stats.sup_distance(est)
        row.tv_dist = stats.tv_distance(est)
        row.ks_stat, row.ks_p = stats.ks_test(F)
        if n_boot >= 2:
            row.sup_se, row.tv_se = stats.distance_bootstrap(x, n_boot=n_boot, seed=seed)
        if np.isfinite(sigma2_oracle) and sigma2_oracle > 0:
            est_o = stats.kde_density(stats.normalize(x, math.sqrt(sigma2_oracle)))
            row.sup_dist_oracle = stats.sup_distance(est_o)
            row.tv_dist_oracle = stats.tv_distance(est_o)
    except (InsufficientData, DomainError) as exc:
        row.flag = f"no distances: {exc}"
    return row


def run_experiment(plan):
    """Simulate the ladder, summarize each N, fit the rate and write outputs.

    Returns an :class:`ExperimentResult`; ``exit_code`` is 0 when every check
    in the manifest passes, 1 otherwise (including an empty run).
    """
    cfg = plan.sim
    shard_dir = None
    if plan.out_dir is not None:
        os.makedirs(plan.out_dir, exist_ok=True)
        shard_dir = os.path.join(plan.out_dir, "shards")
        os.makedirs(shard_dir, exist_ok=True)
    A, neg, div = simulate_ladder(cfg, plan.N_ladder, plan.replicas, plan.threads,
                                  plan.chunk, shard_dir)
    if shard_dir is not None:
        merge_shards(shard_dir, os.path.join(plan.out_dir, "replicas.jsonl"))
        os.rmdir(shard_dir)
    if plan.replicas == 0:
        manifest = {"plan": plan_record(plan), "checks": {}, "pass": False,
                    "reason": "no replicas"}
        _write_outputs(plan, [], manifest)
        return ExperimentResult([], None, manifest, {}, 1)
    oracle_s2 = (oracle_variances(cfg, plan.N_ladder) if plan.with_oracle
                 else [math.nan] * len(plan.N_ladder))
    n_div = int(np.sum(div >= 0))
    rows, samples = [], {}
    for j, N in enumerate(plan.N_ladder):
        samples[N] = A[:, j]
        rows.append(summarize(cfg.case, N, A[:, j], oracle_s2[j], plan.n_boot,
                              seed=cfg.seed + j, n_diverged=n_div))
    fit = None
    dist = [r.sup_dist for r in rows]
    try:
        fit = stats.fit_rate(plan.N_ladder, dist, case=cfg.case)
        for r in rows:
            r.slope = fit.slope
    except (InsufficientData, DomainError):
        pass
    manifest = build_manifest(plan, rows, fit, neg)
    _write_outputs(plan, rows, manifest)
    return ExperimentResult(rows, fit, manifest, samples, 0 if manifest["pass"] else 1)


def build_manifest(plan, rows, fit, neg_fraction=None):
    """Pass/fail record of the rate, monotonicity and normality checks."""
    tol = plan.tolerances
    lo, hi = tol.get("slope_window", slope_window(plan.sim.case, plan.sim.alpha))
    checks = {}
    if fit is not None:
        checks["slope_in_window"] = bool(lo <= fit.slope <= hi)
        checks["r2"] = bool(fit.r2 > tol["r2_min"])
    else:
        checks["slope_in_window"] = checks["r2"] = False
    k = tol["monotone_se"]
    checks["sup_nonincreasing"] = stats.nonincreasing_within(
        [r.sup_dist for r in rows], [r.sup_se if np.isfinite(r.sup_se) else 0 for r in rows], k)
    checks["tv_nonincreasing"] = stats.nonincreasing_within(
        [r.tv_dist for r in rows], [r.tv_se if np.isfinite(r.tv_se) else 0 for r in rows], k)
    checks["ks_largest_N"] = bool(rows[-1].ks_p >= tol["ks_level"])
    out = {
        "plan": plan_record(plan),
        "fit": None if fit is None else {
            "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
            "dropped_smallest": fit.dropped_smallest,
            "log_corrected": None if fit.log_corrected is None else list(fit.log_corrected)},
        "slope_window": [lo, hi],
        "checks": checks,
        "pass": bool(all(checks.values())),
    }
    if neg_fraction is not None and len(neg_fraction):
        out["mean_neg_fraction"] = float(np.mean(neg_fraction))
    return out


def plan_record(plan):
    sim = asdict(plan.sim)
    return {"sim": sim, "N_ladder": list(plan.N_ladder), "threads": plan.threads,
            "chunk": plan.chunk, "n_boot": plan.n_boot}


def _write_outputs(plan, rows, manifest):
    if plan.out_dir is None:
        return
    with open(os.path.join(plan.out_dir, "summary.csv"), "w", newline="") as fh:
        fh.write(report_csv(rows))
    with open(os.path.join(plan.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


# ------------------------------------------------------------------ reports

def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def report_csv(summaries):
    """Long-format CSV; the first columns always follow ``REPORT_COLUMNS``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS + EXTRA_COLUMNS)
    for r in sorted(summaries, key=lambda r: (r.case, r.N)):
        w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS + EXTRA_COLUMNS])
    return buf.getvalue()


_TYPES = {f.name: f.type for f in fields(Summary)}


def parse_report(text):
    """Inverse of :func:`report_csv`; raises ValidationError on schema mismatch."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise ValidationError("empty report") from None
    if header[: len(REPORT_COLUMNS)] != REPORT_COLUMNS:
        raise ValidationError(f"unexpected columns {header}")
    unknown = [c for c in header if c not in _TYPES]
    if unknown:
        raise ValidationError(f"unknown columns {unknown}")
    out = []
    for line_no, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ValidationError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
        kw = {}
        for name, raw in zip(header, row):
            typ = _TYPES[name]
            try:
                if typ in ("str", str):
                    kw[name] = raw
                elif typ in ("int", int):
                    kw[name] = int(raw)
                else:
                    kw[name] = float(raw) if raw != "" else math.nan
            except ValueError:
                raise ValidationError(f"line {line_no}: bad value {raw!r} for {name}") from None
        out.append(Summary(**kw))
    return out


def emit_report(summaries):
    """Human-readable table (one section per case) and the CSV text.

    Rows without distances are flagged in the table rather than dropped.
    """
    if not summaries:
        raise ValidationError("nothing to report")
    for r in summaries:
        if not isinstance(r, Summary):
            raise ValidationError(f"expected Summary records, got {type(r).__name__}")
        if not (math.isfinite(r.sup_dist) and math.isfinite(r.tv_dist)) and not r.flag:
            r.flag = "missing distances"
    lines = []
    for case in sorted({r.case for r in summaries}):
        lines.append(f"case {case}")
        lines.append("  " + "  ".join(f"{c:>13}" for c in REPORT_COLUMNS[1:]) + "  flag")
        for r in sorted((r for r in summaries if r.case == case), key=lambda r: r.N):
            cells = [f"{getattr(r, c):>13.6g}" for c in REPORT_COLUMNS[1:]]
            lines.append("  " + "  ".join(cells) + ("  " + r.flag if r.flag else ""))
        lines.append("")
    return "\n".join(lines), report_csv(summaries)


# ------------------------------------------------------------------ config

def load_config(path):
    """Flat ``key = value`` file (``#`` comments); keys use CLI flag spelling."""
    out = {}
    with open(path) as fh:
        for no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{no}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out
