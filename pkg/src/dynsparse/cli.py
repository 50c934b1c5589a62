"""Command-line entry point.

Subcommands: ``simulate`` (prior paths), ``fit-map`` (online EM),
``fit-glasso`` (sliding-window group lasso), ``fit-smc`` (particle MCMC),
``acf`` (autocorrelation table of a simulated path), and ``verify``
(check output files against their manifest).

Configuration is a flat ``key=value`` text file (``--config``) plus
``key=value`` arguments on the command line, which win.  Identical
(config, seed) pairs produce byte-identical outputs.  Exit status: 0 on
success, 1 for numerical/model errors during the run, 2 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError, DynsparseError
from .group_lasso import run_sliding_window
from .io import ParseError, load_data, verify_dir, write_manifest, write_table
from .map_em import run_online_map
from .prior import ModelConfig, autocorrelation, simulate_path
from .smc import pimh_run, posterior_summary

__all__ = ["main", "run_command"]

_MODEL_KEYS = ("nu", "delta", "gamma", "alpha", "d", "rho", "sigma")
_FLOAT_KEYS = ("nu", "delta", "gamma", "alpha", "rho", "sigma", "tol", "eps_sparse")
_INT_KEYS = ("d", "n_particles", "n_iters", "max_iter", "seed", "T", "max_lag", "p")
_KNOWN_KEYS = set(_FLOAT_KEYS) | set(_INT_KEYS) | {"probs", "data_path", "out_dir"}

_DEFAULTS = {
    "tol": "1e-8",
    "probs": "0.05,0.95",
    "p": "1",
    "max_lag": "300",
}


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit status 2."""


def _read_config_file(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def _resolve(args: argparse.Namespace) -> dict[str, str]:
    cfg = dict(_DEFAULTS)
    if args.config:
        cfg.update(_read_config_file(args.config))
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        cfg[key.strip()] = value.strip()
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return cfg


def _typed(cfg: dict[str, str]) -> dict:
    out: dict = {}
    for key, raw in cfg.items():
        try:
            if key in _FLOAT_KEYS:
                out[key] = float(raw)
            elif key in _INT_KEYS:
                out[key] = int(raw)
            elif key == "probs":
                out[key] = [float(v) for v in raw.split(",") if v.strip()]
            else:
                out[key] = raw
        except ValueError:
            raise ConfigError(f"config key {key}={raw!r} has the wrong type") from None
    return out


def _require(cfg: dict, keys: tuple[str, ...], command: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"{command} requires config keys: {', '.join(missing)}")


def _model_config(cfg: dict) -> ModelConfig:
    kwargs = {k: cfg[k] for k in _MODEL_KEYS if k in cfg}
    kwargs["p"] = cfg.get("p", 1)
    try:
        return ModelConfig(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid model configuration: {exc}") from None


def _run_id(command: str, cfg: dict) -> str:
    payload = json.dumps({"command": command, "config": cfg}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _fmt(value: float) -> str:
    return repr(float(value))


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _estimate_rows(beta_hat, support, lower=None, upper=None) -> list[list[str]]:
    p, T = beta_hat.shape
    rows = []
    for t in range(T):
        for j in range(p):
            lo = _fmt(lower[j, t]) if lower is not None else ""
            hi = _fmt(upper[j, t]) if upper is not None else ""
            rows.append(
                [str(t + 1), str(j + 1), _fmt(beta_hat[j, t]), lo, hi,
                 str(int(support[j, t]))]
            )
    return rows


_ESTIMATE_HEADER = ["t", "j", "estimate", "lower", "upper", "support"]


def _cmd_simulate(cfg: dict, run_id: str) -> list[Path]:
    _require(cfg, ("T", "seed", "out_dir"), "simulate")
    model = _model_config(cfg)
    rng = np.random.default_rng(cfg["seed"])
    out = _out_dir(cfg)
    T = cfg["T"]
    if model.fixed_d:
        beta = simulate_path(model, T, rng)
        d_path = None
    else:
        from .prior import simulate_d_chain

        d_path = simulate_d_chain(model.rho, 0, T, rng)
        beta = simulate_path(model, T, rng, d_path=d_path)
    rows = [
        [str(t + 1), str(j + 1), _fmt(beta[j, t])]
        for t in range(T)
        for j in range(beta.shape[0])
    ]
    files = [out / "path.csv"]
    write_table(files[0], run_id, ["t", "j", "value"], rows)
    if d_path is not None:
        files.append(out / "d_path.csv")
        write_table(
            files[1], run_id, ["t", "d"],
            [[str(t + 1), str(int(d_path[t]))] for t in range(T)],
        )
    return files


def _cmd_acf(cfg: dict, run_id: str) -> list[Path]:
    _require(cfg, ("T", "seed", "out_dir"), "acf")
    model = _model_config(cfg)
    rng = np.random.default_rng(cfg["seed"])
    out = _out_dir(cfg)
    beta = simulate_path(model, cfg["T"], rng)
    acf = autocorrelation(beta[0] ** 2, cfg["max_lag"])
    rows = [[str(lag + 1), _fmt(acf[lag])] for lag in range(acf.shape[0])]
    path = out / "acf.csv"
    write_table(path, run_id, ["lag", "acf"], rows)
    return [path]


def _cmd_fit_map(cfg: dict, run_id: str) -> list[Path]:
    _require(cfg, ("data_path", "out_dir", "max_iter"), "fit-map")
    model = _model_config(cfg)
    data = load_data(cfg["data_path"])
    out = _out_dir(cfg)
    fit = run_online_map(
        data, model, tol=cfg["tol"], max_iter=cfg["max_iter"],
        eps_sparse=cfg.get("eps_sparse"),
    )
    est = out / "estimates.csv"
    write_table(est, run_id, _ESTIMATE_HEADER, _estimate_rows(fit.beta_hat, fit.support))
    diag = out / "diagnostics.csv"
    rows = [
        [str(t + 1), str(i), _fmt(v)]
        for t, trace in enumerate(fit.objective_trace)
        for i, v in enumerate(trace)
    ]
    write_table(diag, run_id, ["t", "iter", "objective"], rows)
    return [est, diag]


def _cmd_fit_glasso(cfg: dict, run_id: str) -> list[Path]:
    _require(cfg, ("data_path", "out_dir", "max_iter"), "fit-glasso")
    model = _model_config(cfg)
    data = load_data(cfg["data_path"])
    out = _out_dir(cfg)
    fit = run_sliding_window(
        data, model, tol=cfg["tol"], max_iter=cfg["max_iter"],
        eps_sparse=cfg.get("eps_sparse", 0.0),
    )
    est = out / "estimates.csv"
    write_table(est, run_id, _ESTIMATE_HEADER, _estimate_rows(fit.beta_hat, fit.support))
    diag = out / "diagnostics.csv"
    rows = [
        [str(w + 1), str(i), _fmt(v)]
        for w, trace in enumerate(fit.objective_trace)
        for i, v in enumerate(trace)
    ]
    write_table(diag, run_id, ["window", "sweep", "objective"], rows)
    return [est, diag]


def _cmd_fit_smc(cfg: dict, run_id: str) -> list[Path]:
    _require(
        cfg, ("data_path", "out_dir", "seed", "n_particles", "n_iters"), "fit-smc"
    )
    model = _model_config(cfg)
    data = load_data(cfg["data_path"])
    out = _out_dir(cfg)
    probs = cfg["probs"]
    if len(probs) < 2:
        raise ConfigError("fit-smc needs at least two probs for the interval")
    rng = np.random.default_rng(cfg["seed"])
    chain = pimh_run(data, model, cfg["n_particles"], cfg["n_iters"], rng)
    summ = posterior_summary(chain, np.asarray(probs))
    lower, upper = summ.quantiles[0], summ.quantiles[-1]
    support = (lower > 0) | (upper < 0)
    est = out / "estimates.csv"
    write_table(
        est, run_id, _ESTIMATE_HEADER,
        _estimate_rows(summ.mean, support, lower, upper),
    )
    diag = out / "diagnostics.csv"
    write_table(
        diag, run_id, ["iteration", "log_evidence", "accepted"],
        [
            [str(m + 1), _fmt(chain.log_evidence[m]), str(int(chain.accepted[m]))]
            for m in range(chain.log_evidence.shape[0])
        ],
    )
    dpost = out / "d_posterior.csv"
    rows = [
        [str(t + 1), str(d), _fmt(summ.d_posterior[d, t])]
        for t in range(summ.d_posterior.shape[1])
        for d in range(summ.d_posterior.shape[0])
        if summ.d_posterior[d, t] > 0
    ]
    write_table(dpost, run_id, ["t", "d", "probability"], rows)
    return [est, diag, dpost]


_COMMANDS = {
    "simulate": _cmd_simulate,
    "acf": _cmd_acf,
    "fit-map": _cmd_fit_map,
    "fit-glasso": _cmd_fit_glasso,
    "fit-smc": _cmd_fit_smc,
}


def run_command(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="dynsparse",
        description="Dynamic sparse regression with generalized hyperbolic priors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument(
            "overrides", nargs="*", metavar="key=value",
            help="configuration overrides (win over the file)",
        )
    pv = sub.add_parser("verify")
    pv.add_argument("out_dir", help="output directory with a manifest.json")

    args = parser.parse_args(argv)

    if args.command == "verify":
        problems = verify_dir(args.out_dir)
        for item in problems:
            print(item, file=sys.stderr)
        if problems:
            return 1
        print("ok")
        return 0

    try:
        cfg = _typed(_resolve(args))
        run_id = _run_id(args.command, {k: str(v) for k, v in sorted(cfg.items())})
        handler = _COMMANDS[args.command]
        # required-key validation happens inside the handler before work starts
        files = handler(cfg, run_id)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DynsparseError as exc:
        _write_error_record(cfg.get("out_dir"), args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_manifest(Path(cfg["out_dir"]), run_id, {k: str(v) for k, v in sorted(cfg.items())}, files)
    for f in files:
        print(f.as_posix())
    return 0


def _write_error_record(out_dir: Optional[str], command: str, exc: Exception) -> None:
    if not out_dir:
        return
    try:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "error.json").write_text(
            json.dumps(
                {"command": command, "error_type": type(exc).__name__,
                 "message": str(exc)},
                indent=2, sort_keys=True,
            ) + "\n"
        )
    except OSError:
        pass


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
