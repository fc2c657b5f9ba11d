"""Experiment configuration, seeded Monte Carlo orchestration and the CLI.

Configuration files are YAML (JSON is valid YAML) with sections ``model``,
``policy``, ``weights``, ``nuisance`` and, for Monte Carlo runs,
``experiment``; see ``EXAMPLE_CONFIG``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import yaml

from .collection import collect_episodes
from .estimator import solve, standardized_error
from .inference import (MIN_BAND_DRAWS, confidence_band, confidence_interval, replication_seed,
                        summarize)
from .model_plm import (BaselineEffect, ConfigError, DomainError, EpisodeBatch, EpisodeRecord,
                        FeatureMap, Noise, PlmConfig, baseline_residual_variance,
                        derive_true_parameters, oracle_f)
from .nuisance import NuisanceConfig
from .ope import ReferencePolicy, contrast_features, evaluate_policy, true_ope_parameters
from .policy import POLICY_KINDS, PolicyFamily, PolicySnapshot, episode_moments
from .weights import SCHEMES, WeightConfig, default_weight_config

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

EXAMPLE_CONFIG = """\
model:
  horizon: 2
  dim: 1
  theta: [1.0]
  omega: [0.5]
  gammas: []
  features: {kind: product, arm_values: [[0.0], [1.0]]}
  beta: {family: affine, intercept: [0.5], linear: [[0.5]]}
  kappa: {family: quadratic, intercept: [0.2], linear: [[0.3]], quad: [[-0.1]]}
  x1: {low: [1.0], high: [2.0]}
  eta: {family: uniform, scale: 0.5}
  eps: {family: uniform, scale: 1.0}
  box: {low: [-10.0], high: [10.0]}
  y_bounds: [-20.0, 20.0]
policy: {kind: eps-greedy, alpha: 0.3, explore: 1.0}
weights: {}
nuisance: {mode: plm, degree: 2}
experiment:
  kind: coverage
  schemes: [oracle, feasible]
  n_grid: [2000]
  replications: 20
  levels: [0.05]
  seed: 0
"""


# ---------------------------------------------------------------- config IO

def _arr(v, name):
    try:
        return np.asarray(v, float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{name}: expected numbers, got {v!r}") from err


def _baseline(spec: Optional[dict], out_dim: int, name: str) -> BaselineEffect:
    spec = dict(spec or {"family": "zero"})
    allowed = {"family", "intercept", "linear", "quad", "amplitude", "freq", "phase", "clip"}
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"{name}: unknown keys {sorted(extra)}")
    if "clip" in spec and spec["clip"] is not None:
        spec["clip"] = tuple(spec["clip"])
    return BaselineEffect(out_dim=out_dim, **spec)


def _noise(spec: Optional[dict], name: str) -> Noise:
    spec = spec or {"family": "zero"}
    try:
        return Noise(spec.get("family", "zero"), float(spec.get("scale", 0.0)))
    except (TypeError, AttributeError) as err:
        raise ConfigError(f"{name}: malformed noise block") from err


def model_from_dict(m: dict) -> PlmConfig:
    """Build a PlmConfig from the ``model`` section."""
    if not isinstance(m, dict):
        raise ConfigError("model section must be a mapping")
    for key in ("horizon", "dim", "theta", "omega", "features"):
        if key not in m:
            raise ConfigError(f"model.{key} is required")
    l, d = int(m["horizon"]), int(m["dim"])
    fs = m["features"]
    arm_values = _arr(fs.get("arm_values", [[0.0] * d, [1.0] * d]), "features.arm_values")
    features = FeatureMap(fs.get("kind", "product"), l, d, arm_values)
    x1 = m.get("x1", {})
    box = m.get("box", {})
    yb = m.get("y_bounds", [-np.inf, np.inf])
    return PlmConfig(
        horizon=l, dim=d, theta=_arr(m["theta"], "theta"), omega=_arr(m["omega"], "omega"),
        features=features, gammas=[_arr(g, "gammas") for g in m.get("gammas", [])],
        beta=_baseline(m.get("beta"), d, "beta"), kappa=_baseline(m.get("kappa"), 1, "kappa"),
        x1_low=x1.get("low"), x1_high=x1.get("high"),
        eta=_noise(m.get("eta"), "eta"), eps=_noise(m.get("eps"), "eps"),
        box_low=box.get("low"), box_high=box.get("high"),
        y_low=float(yb[0]), y_high=float(yb[1]),
    )


def policy_from_dict(p: dict) -> PolicyFamily:
    p = dict(p or {})
    allowed = {"kind", "alpha", "explore", "base_probs", "temperature", "event_c"}
    extra = set(p) - allowed
    if extra:
        raise ConfigError(f"policy: unknown keys {sorted(extra)}")
    try:
        return PolicyFamily(**p)
    except ValueError as err:
        raise ConfigError(f"policy: {err}") from err


def weights_from_dict(w: dict, model: PlmConfig, scheme: str = "consistent") -> WeightConfig:
    w = dict(w or {})
    base = default_weight_config(scheme, model.eps.variance, model.y_low, model.y_high)
    try:
        return WeightConfig(scheme, float(w.get("sigma2") or base.sigma2),
                            float(w.get("M2") or base.M2), float(w.get("tol", base.tol)))
    except ValueError as err:
        raise ConfigError(f"weights: {err}") from err


def nuisance_from_dict(n: dict) -> NuisanceConfig:
    try:
        return NuisanceConfig(**(n or {}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"nuisance: {err}") from err


def load_config(path) -> dict:
    """Read a YAML/JSON configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: not valid YAML ({err})") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def validate_config(data: dict) -> list[str]:
    """Instantiate every section; returns a list of problems (empty when valid)."""
    problems = []
    model = None
    try:
        model = model_from_dict(data.get("model"))
        if not np.all(np.isfinite([model.y_low, model.y_high])):
            problems.append("model.y_bounds must be finite (they set the weight cap M^2)")
    except (ConfigError, ValueError, TypeError) as err:
        problems.append(f"model: {err}")
    for name, fn in (("policy", policy_from_dict), ("nuisance", nuisance_from_dict)):
        try:
            fn(data.get(name))
        except (ConfigError, ValueError, TypeError) as err:
            problems.append(str(err))
    if model is not None and not problems:
        try:
            weights_from_dict(data.get("weights"), model)
        except ConfigError as err:
            problems.append(str(err))
    if "experiment" in data:
        try:
            ExperimentSpec.from_dict(data)
        except (ConfigError, ValueError, TypeError) as err:
            problems.append(f"experiment: {err}")
    return problems


# ------------------------------------------------------------- episode logs

def write_episodes(path, batch: EpisodeBatch) -> None:
    with open(path, "w") as fh:
        for k in range(len(batch)):
            r = batch.record(k)
            fh.write(json.dumps({"index": r.index, "X": r.X.tolist(), "T": r.T.tolist(),
                                 "y": r.y, "snapshot_id": r.snapshot_id}) + "\n")


def read_episodes(path) -> EpisodeBatch:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                records.append(EpisodeRecord(int(d["index"]), np.asarray(d["X"], float),
                                             np.asarray(d["T"], int), float(d["y"]), int(d["snapshot_id"])))
            except (ValueError, KeyError, TypeError) as err:
                raise ConfigError(f"{path}:{lineno}: malformed episode record ({err})") from err
    if not records:
        raise ConfigError(f"{path}: no episodes")
    return EpisodeBatch.from_records(records)


def write_policies(path, snapshots: dict) -> None:
    with open(path, "w") as fh:
        for sid in sorted(snapshots):
            fh.write(snapshots[sid].to_json() + "\n")


def read_policies(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                snap = PolicySnapshot.from_dict(json.loads(line))
            except (ValueError, TypeError) as err:
                raise ConfigError(f"{path}:{lineno}: malformed policy snapshot ({err})") from err
            out[snap.snapshot_id] = snap
    return out


# ------------------------------------------------------- Monte Carlo runner

@dataclass
class ExperimentSpec:
    model: PlmConfig
    policy: PolicyFamily
    schemes: list
    n_grid: list
    replications: int
    levels: list = field(default_factory=lambda: [0.05])
    seed: int = 0
    kind: str = "coverage"
    weights: dict = field(default_factory=dict)
    nuisance: NuisanceConfig = field(default_factory=NuisanceConfig)
    reference: Optional[str] = None
    band_draws: int = MIN_BAND_DRAWS
    truth_samples: int = 1_000_000
    experiment_id: str = "experiment"

    def __post_init__(self):
        if list(self.n_grid) != sorted(self.n_grid) or not self.n_grid:
            raise ConfigError("n_grid must be a non-empty ascending list")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}")
        if self.kind not in ("coverage", "rate"):
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        for a in self.levels:
            if not 0 < a < 1:
                raise ConfigError("levels must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        exp = data.get("experiment")
        if not isinstance(exp, dict):
            raise ConfigError("experiment section is required")
        allowed = {"kind", "schemes", "n_grid", "replications", "levels", "seed", "reference",
                   "band_draws", "truth_samples", "id"}
        extra = set(exp) - allowed
        if extra:
            raise ConfigError(f"experiment: unknown keys {sorted(extra)}")
        return cls(model=model_from_dict(data.get("model")), policy=policy_from_dict(data.get("policy")),
                   schemes=list(exp.get("schemes", ["consistent"])),
                   n_grid=[int(v) for v in exp.get("n_grid", [1000])],
                   replications=int(exp.get("replications", 1)),
                   levels=[float(v) for v in exp.get("levels", [0.05])],
                   seed=int(exp.get("seed", 0)), kind=exp.get("kind", "coverage"),
                   weights=dict(data.get("weights") or {}),
                   nuisance=nuisance_from_dict(data.get("nuisance")),
                   reference=exp.get("reference"), band_draws=int(exp.get("band_draws", MIN_BAND_DRAWS)),
                   truth_samples=int(exp.get("truth_samples", 1_000_000)),
                   experiment_id=str(exp.get("id", "experiment")))

    def reference_policy(self) -> Optional[ReferencePolicy]:
        return parse_reference(self.reference, self.model.horizon) if self.reference else None


def parse_reference(name: str, horizon: int) -> ReferencePolicy:
    if name == "zero":
        return ReferencePolicy.zero_policy(horizon)
    if name == "always-treat":
        return ReferencePolicy.always_treat(horizon)
    if name.startswith("constant:"):
        return ReferencePolicy.constant(int(name.split(":", 1)[1]), horizon)
    raise ConfigError(f"unknown reference policy {name!r} (zero, always-treat, constant:K)")


@dataclass
class Truth:
    theta: np.ndarray
    var_r0: Optional[float]
    reference_arms: Optional[tuple]


def prepare_truth(spec: ExperimentSpec) -> Truth:
    ref = spec.reference_policy()
    if ref is None:
        theta = derive_true_parameters(spec.model, spec.truth_samples, seed=spec.seed).flat()
        arms = None
    else:
        theta, _ = true_ope_parameters(spec.model, ref, spec.truth_samples, seed=spec.seed)
        arms = ref.arms
    var_r0 = baseline_residual_variance(spec.model, arms) if "oracle" in spec.schemes else None
    return Truth(theta, var_r0, arms)


def run_replication(spec: ExperimentSpec, rep: int, truth: Optional[Truth] = None) -> list[dict]:
    """Rows for every (n, scheme) cell of one replication.

    Episodes are simulated once at the largest n; smaller n use prefixes,
    which is exactly the data an experimenter would hold at that point.
    """
    truth = prepare_truth(spec) if truth is None else truth
    rng = np.random.default_rng(replication_seed(spec.seed, rep))
    model, feats = spec.model, spec.model.features
    ref = spec.reference_policy()
    rows = []
    try:
        batch, snaps = collect_episodes(model, spec.policy, spec.n_grid[-1], rng)
    except (DomainError, np.linalg.LinAlgError) as err:
        return [{"experiment": spec.experiment_id, "replication": rep, "status": f"error: {err}"}]
    q, cov = episode_moments(batch, snaps, feats)
    psi_full = None if ref is None else contrast_features(batch, ref, feats).gamma
    p = truth.theta.shape[0]
    for n in spec.n_grid:
        sub = batch.prefix(n)
        f_or = None
        if "oracle" in spec.schemes:
            f_or = oracle_f(model, sub, truth.reference_arms, truth.var_r0)
        for scheme in spec.schemes:
            t0 = time.perf_counter()
            row = {"experiment": spec.experiment_id, "scheme": scheme, "alpha": spec.policy.alpha,
                   "n": n, "replication": rep, "status": "ok"}
            try:
                wc = weights_from_dict(spec.weights, model, scheme)
                est = solve(sub, snaps, feats, wc, spec.policy.alpha, spec.policy.c,
                            psi=None if psi_full is None else psi_full[:n],
                            reference_arms=truth.reference_arms,
                            oracle_f=f_or if scheme == "oracle" else None,
                            nuisance=spec.nuisance, moments_cache=(q[:n], cov[:n]))
            except Exception as err:  # recorded in the row, the sweep goes on
                row["status"] = f"error: {type(err).__name__}: {err}"
                rows.append(row)
                continue
            row["flag"] = est.flag
            row["l2_error"] = float(np.linalg.norm(est.theta - truth.theta))
            z = standardized_error(est, truth.theta) if est.flag else np.full(p, np.nan)
            for k in range(p):
                row[f"theta_{k}"] = float(est.theta[k])
                row[f"z_{k}"] = float(z[k])
            for a in spec.levels:
                tag = "" if len(spec.levels) == 1 else f"@{a:g}"
                for k in range(p):
                    row[f"ci_{k}{tag}"] = confidence_interval(est, np.eye(p)[k], a).contains(truth.theta)
                if spec.kind == "coverage":
                    row[f"band{tag}"] = confidence_band(est, a, spec.band_draws, rep).contains(truth.theta)
            row["runtime"] = time.perf_counter() - t0
            rows.append(row)
    return rows


def _run_chunk(args):
    spec, reps, truth = args
    return [row for rep in reps for row in run_replication(spec, rep, truth)]


def loglog_slope(n: Sequence[float], err: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(n, float)), np.log(np.asarray(err, float)), 1)[0])


def run_montecarlo(spec: ExperimentSpec, workers: int = 1) -> tuple[pd.DataFrame, dict]:
    """All replications; rows are ordered by replication regardless of workers."""
    truth = prepare_truth(spec)
    reps = list(range(spec.replications))
    if workers > 1:
        chunks = [reps[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [(spec, c, truth) for c in chunks]))
        rows = [r for part in parts for r in part]
    else:
        rows = _run_chunk((spec, reps, truth))
    df = pd.DataFrame(rows).sort_values(["replication", "n", "scheme"], kind="stable").reset_index(drop=True)
    return df, summarize_results(spec, df, truth)


def summarize_results(spec: ExperimentSpec, df: pd.DataFrame, truth: Truth) -> dict:
    ok = df[df.status == "ok"]
    p = truth.theta.shape[0]
    summary = {"experiment": spec.experiment_id, "kind": spec.kind, "alpha": spec.policy.alpha,
               "replications": spec.replications, "truth": truth.theta.tolist(),
               "failed_cells": int((df.status != "ok").sum()), "schemes": {}}
    for scheme, grp in ok.groupby("scheme", sort=True):
        cells = grp.groupby("n").l2_error.mean()
        entry = {"mean_l2_error": {int(k): float(v) for k, v in cells.items()},
                 "flag_rate": float(grp.flag.mean())}
        if len(cells) > 1:
            entry["loglog_slope"] = loglog_slope(cells.index, cells.values)
            entry["target_slope"] = (spec.policy.alpha - 1.0) / 2.0
        if len(spec.levels) == 1 and spec.kind == "coverage":
            table, band = summarize(grp, p)
            entry["coverage"] = table.drop(columns=["scheme"]).to_dict(orient="records")
            entry["band"] = band.drop(columns=["scheme"]).to_dict(orient="records")
        summary["schemes"][scheme] = entry
    return summary


# --------------------------------------------------------------------- CLI

class CliError(Exception):
    """Bad invocation; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="episodic-z", description="Re-weighted Z-estimation for adaptively collected episodes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate an adaptive experiment and write episode/policy logs")
    s.add_argument("--config", required=True)
    s.add_argument("--policy", choices=POLICY_KINDS)
    s.add_argument("--alpha", type=float)
    s.add_argument("--explore", type=float)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=".")

    e = sub.add_parser("estimate", help="estimate from episode and policy logs")
    e.add_argument("--config", required=True)
    e.add_argument("--episodes", required=True)
    e.add_argument("--policies", required=True)
    e.add_argument("--scheme", choices=SCHEMES, default="consistent")
    e.add_argument("--alpha", type=float)
    e.add_argument("--level", type=float, default=0.05)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="estimates.json")

    m = sub.add_parser("montecarlo", help="run a seeded Monte Carlo study")
    m.add_argument("--spec", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--replications", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--out", default=".")

    o = sub.add_parser("ope", help="off-policy value of a deterministic reference policy")
    o.add_argument("--config", required=True)
    o.add_argument("--episodes", required=True)
    o.add_argument("--policies", required=True)
    o.add_argument("--reference", default="always-treat")
    o.add_argument("--scheme", choices=SCHEMES, default="feasible")
    o.add_argument("--alpha", type=float)
    o.add_argument("--level", type=float, default=0.05)
    o.add_argument("--out", default="ope.json")

    v = sub.add_parser("validate-config", help="check a configuration file")
    v.add_argument("config")
    return p


def _family(data: dict, args) -> PolicyFamily:
    pol = dict(data.get("policy") or {})
    for key in ("policy", "alpha", "explore"):
        val = getattr(args, key, None)
        if val is not None:
            pol["kind" if key == "policy" else key] = val
    return policy_from_dict(pol)


def _cmd_simulate(args) -> int:
    data = load_config(args.config)
    model = model_from_dict(data.get("model"))
    family = _family(data, args)
    if args.n < 1:
        raise CliError("--n must be positive")
    batch, snaps = collect_episodes(model, family, args.n, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_episodes(out / "episodes.ndjson", batch)
    write_policies(out / "policies.ndjson", snaps)
    print(f"wrote {len(batch)} episodes and {len(snaps)} policy snapshots to {out}")
    return EXIT_OK


def _estimate_payload(est, p, level, seed) -> dict:
    payload = est.to_dict()
    payload["intervals"] = [confidence_interval(est, np.eye(p)[k], level).to_dict() for k in range(p)]
    payload["band"] = confidence_band(est, level, MIN_BAND_DRAWS, seed).to_dict()
    return payload


def _cmd_estimate(args) -> int:
    data = load_config(args.config)
    model = model_from_dict(data.get("model"))
    family = _family(data, args)
    batch, snaps = read_episodes(args.episodes), read_policies(args.policies)
    wc = weights_from_dict(data.get("weights"), model, args.scheme)
    if args.scheme == "oracle":
        raise CliError("the oracle scheme needs simulator ground truth; use montecarlo")
    est = solve(batch, snaps, model.features, wc, family.alpha, family.c,
                nuisance=nuisance_from_dict(data.get("nuisance")))
    payload = _estimate_payload(est, est.theta.shape[0], args.level, args.seed)
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"theta_hat = {np.array2string(est.theta, precision=4)}  event={est.flag}")
    return EXIT_OK


def _cmd_montecarlo(args) -> int:
    data = load_config(args.spec)
    if args.seed is not None:
        data.setdefault("experiment", {})["seed"] = args.seed
    if args.replications is not None:
        data.setdefault("experiment", {})["replications"] = args.replications
    spec = ExperimentSpec.from_dict(data)
    df, summary = run_montecarlo(spec, max(1, args.workers))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    df.to_csv(out / "results.csv", index=False)
    if spec.kind == "coverage":
        ok = df[df.status == "ok"]
        if len(spec.levels) == 1 and len(ok):
            table, band = summarize(ok, len(summary["truth"]))
            table.to_csv(out / "coverage.csv", index=False)
            band.to_csv(out / "band.csv", index=False)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for scheme, entry in summary["schemes"].items():
        line = f"{scheme}: flag rate {entry['flag_rate']:.3f}"
        if "loglog_slope" in entry:
            line += f", slope {entry['loglog_slope']:.3f} (target {entry['target_slope']:.3f})"
        print(line)
    return EXIT_OK


def _cmd_ope(args) -> int:
    data = load_config(args.config)
    model = model_from_dict(data.get("model"))
    family = _family(data, args)
    batch, snaps = read_episodes(args.episodes), read_policies(args.policies)
    if args.scheme == "oracle":
        raise CliError("the oracle scheme needs simulator ground truth; use montecarlo")
    ref = parse_reference(args.reference, model.horizon)
    wc = weights_from_dict(data.get("weights"), model, args.scheme)
    res = evaluate_policy(batch, snaps, model.features, ref, wc, family.alpha, family.c, args.level)
    Path(args.out).write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True))
    print(f"value({ref.name}) = {res.value:.4f} +- {float(res.interval.half_width):.4f}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    problems = validate_config(load_config(args.config))
    for msg in problems:
        print(f"invalid: {msg}", file=sys.stderr)
    if problems:
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "estimate": _cmd_estimate, "montecarlo": _cmd_montecarlo,
            "ope": _cmd_ope, "validate-config": _cmd_validate}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns 0 on success, 1 on validation errors, 2 on runtime errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"cannot read input: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as err:
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())
