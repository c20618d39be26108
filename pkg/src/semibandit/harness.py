"""Experiment configuration, seeded sweeps and result emission.

A run is described by one JSON config file. Every trial gets its own seed
derived from ``(seed, trial index)``, so results do not depend on how many
worker processes execute them. Outputs are tidy CSV plus a schema-versioned
JSON summary; nothing is plotted here.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .core import ActionSubset, ContractViolation, PolicyClass, sample_uniform_actions
from .environments import (
    Instance,
    LowerBoundSpec,
    SequenceStream,
    _random_policy_table,
    hot_action_instance,
    list_instance_to_rewards,
    load_json,
    loss_sequence,
    lower_bound_instance,
    planted_gap_instance,
    policy_class_from_json,
    random_list_instance,
    random_sparse_instance,
)
from .pac import PacConfig, pac_comband, pac_single_label
from .regret import exp4_comb_sparse, exp4_entropy_baseline, read_loss_sequence, default_rates

log = logging.getLogger(__name__)

OUT_ENV = "SEMIBANDIT_OUT"
KINDS = ("pac", "pac-single-label", "regret", "regret-baseline", "lower-bound-sanity", "diagnose")
PAC_COLUMNS = ("seed", "N1", "N2", "T", "gamma", "gap", "grad_inf_norm", "max_policy_variance", "erm_calls")
REGRET_COLUMNS = ("seed", "T", "eta", "nu", "terminal_regret", "max_ratio", "min_p")
TRACE_COLUMNS = ("t", "loss", "cumulative_regret", "min_p", "max_ratio")


class HarnessError(Exception):
    """Harness failure with a machine-readable ``code`` and a process exit status."""

    exit_status = 3

    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


class ConfigError(HarnessError):
    exit_status = 2


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    instance: str | None = None
    policies: str | None = None
    generator: dict[str, Any] | None = None
    loss_file: str | None = None
    trials: int = 1
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError("config-invalid", f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("config-invalid", "trials must be >= 1")
        for path in (self.instance, self.policies, self.loss_file):
            if path is not None and not Path(path).exists():
                raise ConfigError("config-missing-file", f"referenced file {path} does not exist")
        if self.kind in ("pac", "pac-single-label", "regret", "regret-baseline", "diagnose"):
            if self.generator is None and (self.instance is None or self.policies is None):
                raise ConfigError("config-invalid", "need a generator or instance + policies files")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError("config-missing-file", str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config-parse", f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config-parse", "config must be a JSON object")
        base = Path(path).parent
        for key in ("instance", "policies", "loss_file"):
            if doc.get(key) is not None:
                doc[key] = str(base / doc[key])
        doc.pop("version", None)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError("config-invalid", str(exc)) from exc

    def out_dir(self) -> Path:
        return Path(os.environ.get(OUT_ENV) or self.output_dir)


@dataclass
class SweepResult:
    kind: str
    columns: tuple[str, ...]
    rows: list[dict[str, Any]]
    aggregate: dict[str, dict[str, float]] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.aggregate:
            self.aggregate = aggregate_rows(self.rows, self.columns)

    def verify(self) -> None:
        if aggregate_rows(self.rows, self.columns) != self.aggregate:
            raise HarnessError("aggregate-mismatch", "aggregates differ from recomputation")

    def to_json(self) -> dict:
        return {"version": 1, "kind": self.kind, "columns": list(self.columns), "rows": self.rows,
                "aggregate": self.aggregate, "errors": self.errors, **self.extra}


def mean_se(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def aggregate_rows(rows: list[dict], columns) -> dict[str, dict[str, float]]:
    out = {}
    for col in columns:
        if col == "seed":
            continue
        vals = [r.get(col) for r in rows]
        if vals and all(isinstance(v, (int, float)) or v is None for v in vals):
            mean, se = mean_se(vals)
            out[col] = {"mean": mean, "se": se}
    return out


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c] if isinstance(row, dict) else row[i]) for i, c in enumerate(columns)])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_problem(cfg: ExperimentConfig):
    if cfg.generator is None:
        try:
            return Instance.from_json(load_json(cfg.instance)), policy_class_from_json(load_json(cfg.policies))
        except (KeyError, ValueError) as exc:
            raise ConfigError("config-invalid", f"bad instance or policy file: {exc}") from exc
    return generate(dict(cfg.generator))


def generate(spec: dict):
    """Build ``(Instance, PolicyClass)`` from a generator spec dict."""
    kind = spec.pop("type", None)
    try:
        if kind == "random":
            seed = spec.pop("seed", 0)
            return random_sparse_instance(rng=np.random.default_rng(seed), **spec)
        if kind == "planted":
            seed = spec.pop("seed", 0)
            return planted_gap_instance(rng=np.random.default_rng(seed), **spec)
        if kind == "hot":
            return hot_action_instance(**spec)
        if kind == "list":
            seed = spec.pop("seed", 0)
            rng = np.random.default_rng(seed)
            n_policies = spec.pop("n_policies", 8)
            inst = list_instance_to_rewards(random_list_instance(rng=rng, **spec))
            table = _random_policy_table(inst.K, inst.m, inst.n_contexts, n_policies, rng)
            return inst, PolicyClass(table, inst.K)
    except TypeError as exc:
        raise ConfigError("config-invalid", f"generator parameters: {exc}") from exc
    raise ConfigError("config-invalid", f"unknown generator type {kind!r}")


def _pac_trial(args) -> dict:
    inst, cls, params, seed, single = args
    cfg = PacConfig(N1=int(params["N1"]), N2=int(params["N2"]), T=int(params["T"]),
                    gamma=float(params.get("gamma", 0.5)), seed=seed)
    if single:
        stream = SequenceStream(*inst.sample(cfg.N1 + cfg.N2, np.random.default_rng(seed + 1)))
        rep = pac_single_label(stream, cls, cfg, inst)
    else:
        rep = pac_comband(inst, cls, cfg)
    return {"seed": seed, "N1": cfg.N1, "N2": cfg.N2, "T": cfg.T, "gamma": cfg.gamma, "gap": rep.gap,
            "grad_inf_norm": rep.grad_inf_norm, "max_policy_variance": rep.max_policy_variance,
            "erm_calls": rep.erm_calls, "_report": rep.to_json()}


def _regret_trial(args) -> dict:
    inst, cls, params, seed, baseline, seq = args
    T = int(params["T"])
    if seq is None:
        contexts, losses = loss_sequence(inst, T, np.random.default_rng(seed))
    else:
        contexts, losses = seq
    rng = np.random.default_rng(seed + 1)
    nu = float(params.get("nu", 1.0 / 16))
    eta = params.get("eta")
    if baseline:
        run = exp4_entropy_baseline(contexts, losses, cls, T, eta, rng=rng)
        eta = eta if eta is not None else default_rates(cls.n_policies, cls.m, cls.K, T)[0]
        nu = None
    else:
        s = float(params.get("s", inst.s if inst is not None else cls.K))
        run = exp4_comb_sparse(contexts, losses, cls, T, eta, nu, rng, s=s)
        eta = eta if eta is not None else default_rates(cls.n_policies, cls.m, s, T)[0]
    return {"seed": seed, "T": T, "eta": eta, "nu": nu, "terminal_regret": run.terminal_regret,
            "max_ratio": float(run.max_ratio.max(initial=0.0)), "min_p": float(run.min_p.min(initial=1.0)),
            "_trace": run.trace_rows()}


def _map(fn: Callable, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _guarded(args) -> tuple[dict | None, str | None]:
    fn, job = args
    try:
        return fn(job), None
    except (ContractViolation, RuntimeError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _collect(fn, jobs, workers, errors: list[str]) -> list[dict]:
    """Run jobs (possibly in a process pool), keeping results in trial order."""
    rows = []
    for row, err in _map(_guarded, [(fn, j) for j in jobs], workers):
        if err is not None:
            errors.append(err)
        else:
            rows.append(row)
    return rows


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> SweepResult:
    """Run all trials of ``cfg`` and write ``<kind>.csv`` and ``<kind>.json`` to the output directory."""
    seeds = [trial_seed(cfg.seed, i) for i in range(cfg.trials)]
    errors: list[str] = []
    if cfg.kind in ("pac", "pac-single-label"):
        inst, cls = _load_problem(cfg)
        jobs = [(inst, cls, cfg.params, s, cfg.kind == "pac-single-label") for s in seeds]
        rows = _collect(_pac_trial, jobs, cfg.workers, errors)
        reports = [r.pop("_report") for r in rows]
        result = SweepResult(cfg.kind, PAC_COLUMNS, rows, errors=errors, extra={"reports": reports})
    elif cfg.kind in ("regret", "regret-baseline"):
        seq = read_loss_sequence(cfg.loss_file) if cfg.loss_file else None
        if seq is not None and cfg.generator is None and cfg.instance is None:
            inst, cls = None, policy_class_from_json(load_json(cfg.policies))
        else:
            inst, cls = _load_problem(cfg)
        params = dict(cfg.params)
        if seq is not None:
            params.setdefault("T", len(seq[0]))
        jobs = [(inst, cls, params, s, cfg.kind == "regret-baseline", seq) for s in seeds]
        rows = _collect(_regret_trial, jobs, cfg.workers, errors)
        traces = [r.pop("_trace") for r in rows]
        result = SweepResult(cfg.kind, REGRET_COLUMNS, rows, errors=errors)
        if write:
            out = cfg.out_dir()
            out.mkdir(parents=True, exist_ok=True)
            for i, trace in enumerate(traces):
                write_csv(out / f"{cfg.kind}_trace_{i}.csv", TRACE_COLUMNS, trace)
    elif cfg.kind == "lower-bound-sanity":
        result = lower_bound_sanity(cfg.params.get("specs", []), seeds=cfg.trials, seed=cfg.seed,
                                    T_violation=int(cfg.params.get("T_violation", 1000)),
                                    T_multipliers=cfg.params.get("T_multipliers", (0.25, 100.0)))
    else:
        inst, cls = _load_problem(cfg)
        report = diagnose(inst, cls, float(cfg.params.get("gamma", 0.5)), int(cfg.params.get("fw_iters", 20000)))
        result = SweepResult("diagnose", ("policy", "exact_reward", "gap", "audit"), report["policies"],
                             extra={"diagnosis": report})
    result.verify()
    if write:
        out = cfg.out_dir()
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{cfg.kind}.csv", result.columns, result.rows)
        (out / f"{cfg.kind}.json").write_text(json.dumps(result.to_json(), indent=1, sort_keys=True) + "\n")
    return result


def sparsity_sweep(s_values, K: int = 32, m: int = 2, n_policies: int = 8, n_contexts: int = 20, T: int = 20000,
                   seeds: int = 10, family_seed: int = 1234, baseline: bool = True, workers: int = 1,
                   ) -> list[dict[str, Any]]:
    """Terminal regret (mean, s.e. over seeds) per sparsity level on nested hot-action instances."""
    table = []
    for s in s_values:
        inst, cls = hot_action_instance(K, m, s, n_contexts, n_policies, family_seed)
        algos = [("sparse", False)] + ([("baseline", True)] if baseline else [])
        for name, is_base in algos:
            jobs = [(inst, cls, {"T": T, "s": s}, trial_seed(family_seed, i), is_base, None) for i in range(seeds)]
            runs = _map(_regret_trial_summary, jobs, workers)
            terminal = [r["terminal_regret"] for r in runs]
            early = [r["regret_at_tenth"] for r in runs]
            mean, se = mean_se(terminal)
            mean_early, se_early = mean_se(early)
            table.append({"s": s, "algorithm": name, "mean": mean, "se": se, "n": seeds,
                          "mean_at_tenth": mean_early, "se_at_tenth": se_early, "T": T,
                          "max_ratio": max(r["max_ratio"] for r in runs)})
    return table


def _regret_trial_summary(args) -> dict:
    row = _regret_trial(args)
    trace = row.pop("_trace")
    T = row["T"]
    row["regret_at_tenth"] = trace[T // 10 - 1][2] if T >= 10 else math.nan
    return row


def uniform_identification(spec: LowerBoundSpec, T: int, rng: np.random.Generator) -> bool:
    """Naive identifier: uniform subsets for ``T`` rounds, report the top-``m`` empirical means."""
    inst = lower_bound_instance(spec)
    means = inst.means[0]
    actions = sample_uniform_actions(spec.K, spec.m, T, rng)
    pulls = np.bincount(actions.ravel(), minlength=spec.K)
    # per-action rewards are independent of the played set, so sums given pulls are binomial
    sums = rng.binomial(pulls, means)
    est = np.where(pulls > 0, sums / np.maximum(pulls, 1), 0.0)
    order = np.lexsort((rng.random(spec.K), -est))  # ties broken at random
    return set(order[:spec.m].tolist()) == set(spec.good_set.members)


def sparsity_violations(spec: LowerBoundSpec, T: int, rng: np.random.Generator) -> int:
    _, rewards = lower_bound_instance(spec).sample(T, rng)
    return int((rewards.sum(axis=1) > spec.s).sum())


def _parse_spec(d: dict) -> LowerBoundSpec:
    K, m = int(d["K"]), int(d["m"])
    good = d.get("good_set", list(range(m)))
    return LowerBoundSpec(K, m, float(d["s"]), float(d["eps"]), ActionSubset(tuple(good), K))


def lower_bound_sanity(specs, seeds: int = 20, seed: int = 0, T_violation: int = 1000,
                       T_multipliers=(0.25, 100.0)) -> SweepResult:
    """Total-mean identity, sparsity-violation frequency and identification success per spec.

    Identification horizons are ``c * s m / eps^2`` for each multiplier ``c``
    (``eps = 0`` uses the multipliers directly as horizons).
    """
    rows = []
    for k, d in enumerate(specs):
        spec = d if isinstance(d, LowerBoundSpec) else _parse_spec(d)
        inst = lower_bound_instance(spec)
        total = float(inst.means.sum())
        rngs = [np.random.default_rng(trial_seed(seed, 1000 * k + i)) for i in range(seeds)]
        counts = [sparsity_violations(spec, T_violation, r) for r in rngs]
        row = {"spec": k, "K": spec.K, "m": spec.m, "s": spec.s, "eps": spec.eps,
               "total_mean": total, "total_mean_error": abs(total - spec.s / 2),
               "violation_round_freq": sum(counts) / (seeds * T_violation),
               "violation_run_freq": sum(c > 0 for c in counts) / seeds,
               "violation_bound": T_violation * math.exp(-spec.s / 4)}
        for c in T_multipliers:
            T = max(1, math.ceil(c * spec.s * spec.m / spec.eps ** 2)) if spec.eps > 0 else max(1, int(c))
            wins = [uniform_identification(spec, T, r) for r in rngs]
            mean, se = mean_se([float(w) for w in wins])
            row[f"success_T{c:g}"] = mean
            row[f"success_se_T{c:g}"] = se
            row[f"horizon_T{c:g}"] = T
        rows.append(row)
    columns = tuple(rows[0].keys()) if rows else ("spec",)
    return SweepResult("lower-bound-sanity", columns, rows)


def diagnose(inst: Instance, cls, gamma: float = 0.5, fw_iters: int = 20000) -> dict:
    """Exact gaps, smoothed marginals and estimator audits at the population minimizer."""
    from .environments import exact_policy_rewards
    from .fw_objective import exact_estimator_audit, exact_population_objective, population_frank_wolfe

    values = exact_policy_rewards(inst, cls)
    p_hat = population_frank_wolfe(inst, cls, gamma, fw_iters).p
    _, grad = exact_population_objective(p_hat, inst, cls, gamma)
    audit = exact_estimator_audit(p_hat, inst, cls, gamma)
    rows = [{"policy": j, "exact_reward": float(values[j]), "gap": float(values.max() - values[j]),
             "audit": float(audit[j])} for j in range(cls.n_policies)]
    return {"policies": rows, "p_hat": p_hat.weights.tolist(), "gamma": gamma,
            "grad_inf_norm": float(np.abs(grad).max()), "s": inst.s,
            "smoothed_marginals": cls.smoothed_marginals(p_hat, gamma).tolist(),
            "variance_bound": float(cls.m * audit.max())}
