"""Command-line interface: ``spinfer simulate|fit|estimate|mcmc|summarize``.

Every command reads an optional JSON config (``--config``); ``--seed``,
``--out`` and ``--threads`` override the matching config entries. Failures
print a JSON error object to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .censoring import CensoringSpec
from .data import read_data_csv, simulate_influenza, simulate_lv, write_data_csv
from .errors import SchemaError, SpinferError
from .gp import FitConfig
from .mcmc import McmcConfig, default_mcmc_config, metropolis_run
from .ode import INFLUENZA_TIV, LOTKA_VOLTERRA, get_model
from .pipeline import SurrogateBundle, fit_surrogate, is_unimodal, run_ensemble, state_trajectories
from .shooting import OptimizerConfig, default_grid, default_optimizer
from .summary import kde, summarize_samples, width_ratios

log = logging.getLogger("spinfer")

MODEL_DEFAULTS = {
    LOTKA_VOLTERRA: {"surrogate": "gp", "transform": None, "censoring": None},
    INFLUENZA_TIV: {"surrogate": "hettp", "transform": "log10p1", "censoring": {}},
}


@dataclass
class RunConfig:
    """Everything a run needs; every field has a default and may be overridden in JSON."""

    model: str = LOTKA_VOLTERRA
    surrogate: str | None = None
    kernel: str = "se"
    J: int = 1000
    grid_points: int | None = None
    seed: int = 0
    threads: int = 1
    output_dir: str = "out"
    transform: str | None = "default"
    censoring: dict | None = field(default_factory=lambda: {"default": True})
    fit: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)

    def __post_init__(self):
        get_model(self.model)
        d = MODEL_DEFAULTS.get(self.model, {"surrogate": "gp", "transform": None, "censoring": None})
        if self.surrogate is None:
            self.surrogate = d["surrogate"]
        if self.transform == "default":
            self.transform = d["transform"]
        if self.censoring == {"default": True}:
            self.censoring = d["censoring"]
        if self.J < 1:
            raise SpinferError("J must be >= 1")
        if self.grid_points is not None and self.grid_points < 2:
            raise SpinferError("grid_points must be >= 2")

    @classmethod
    def load(cls, path=None, **overrides):
        raw = {}
        if path:
            try:
                raw = json.loads(Path(path).read_text())
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(raw, dict):
                raise SchemaError(f"{path}: config must be a JSON object")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def opt(self):
        return default_optimizer(get_model(self.model), **{"seed": self.seed, **self.optimizer})

    def grid(self):
        return default_grid(get_model(self.model), self.grid_points)


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def cmd_simulate(cfg: RunConfig):
    """Synthetic data CSV: the Lotka-Volterra study or the influenza stand-in."""
    out = _out(cfg)
    if cfg.model == LOTKA_VOLTERRA:
        ds = simulate_lv(seed=cfg.seed, **cfg.simulate)
    else:
        ds = simulate_influenza(seed=cfg.seed, **cfg.simulate)
    path = out / "data.csv"
    write_data_csv(path, ds)
    info = {"model": cfg.model, "rows": int(len(ds.time)), "unique_times": int(np.unique(ds.time).size),
            "seed": cfg.seed, "synthetic": True, "path": str(path)}
    _write_json(out / "data_meta.json", info)
    return info


def _load_data(cfg, data_path):
    return read_data_csv(data_path, transform=cfg.transform)


def _censoring_spec(cfg, ds, output=0):
    if cfg.censoring is None:
        return None
    spec = ds.censoring(output, **{k: v for k, v in cfg.censoring.items() if k == "threshold"})
    extra = {k: v for k, v in cfg.censoring.items() if k != "threshold"}
    if extra:
        d = spec.to_dict()
        d.update(extra)
        spec = CensoringSpec.from_dict(d)
    return spec if spec.censored else None


def cmd_fit(cfg: RunConfig, data_path):
    """Fit the configured surrogate per output and write artifact plus predictive surface."""
    out = _out(cfg)
    ds = _load_data(cfg, data_path)
    model = get_model(cfg.model)
    if len(ds.outputs) != model.outputs:
        raise SchemaError(f"{cfg.model} expects {model.outputs} output(s); data has {len(ds.outputs)}")
    fcfg = FitConfig(**{"seed": cfg.seed, **cfg.fit})
    fits = []
    for k in ds.outputs:
        design = ds.design(k)
        if design is None:
            raise SpinferError(f"output {k} has no uncensored observations")
        fits.append(fit_surrogate(design, cfg.surrogate, cfg.kernel, fcfg))
    spec = _censoring_spec(cfg, ds) if model.outputs == 1 else None
    bundle = SurrogateBundle(cfg.model, fits, spec, cfg.transform)
    _write_json(out / "fit.json", bundle.to_dict())
    grid = np.linspace(ds.time.min(), ds.time.max(), 201)
    rows = []
    for k, f in enumerate(fits):
        pred = f.predict(grid)
        lo, hi = pred.interval(0.95)
        nlo, nhi = pred.interval(0.95, include_noise=True)
        rows += [[k, _fmt(t), _fmt(m), _fmt(a), _fmt(b), _fmt(c), _fmt(e)]
                 for t, m, a, b, c, e in zip(grid, pred.mean, lo, hi, nlo, nhi)]
    _write_csv(out / "surface.csv", ["output", "time", "mean", "lo95", "hi95", "lo95_noise", "hi95_noise"], rows)
    diag = {"surrogate": cfg.surrogate, "loglik": [f.loglik for f in fits],
            "hyperparameters": [_hyper(f) for f in fits],
            "censored": None if spec is None else spec.to_dict()}
    _write_json(out / "fit_diagnostics.json", diag)
    return diag


def _hyper(fit):
    d = fit.to_dict()
    return {k: v for k, v in d.items() if k not in ("design", "latent_design", "latents")}


def cmd_estimate(cfg: RunConfig, fit_path):
    """Sample paths, invert them, write ensemble CSV, summary, densities and state bands."""
    out = _out(cfg)
    try:
        bundle = SurrogateBundle.from_dict(json.loads(Path(fit_path).read_text()))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{fit_path}: invalid JSON ({exc})") from None
    if bundle.model != cfg.model:
        raise SchemaError(f"fit artifact is for {bundle.model!r}, config says {cfg.model!r}")
    model = get_model(cfg.model)
    ens, paths = run_ensemble(bundle, model, cfg.J, cfg.seed, cfg.opt(), cfg.threads, cfg.grid())
    names = model.param_names
    _write_csv(out / "ensemble.csv", ["index", "converged", "objective", "iterations", *names],
               [[r.index, int(r.converged), _fmt(r.objective), r.iterations, *map(_fmt, r.p_hat)]
                for r in ens.results])
    est = ens.converged_estimates()
    summary = summarize_samples(est, names, "ensemble",
                                {"failures": ens.failures, "J": cfg.J, "seed": cfg.seed, "model": cfg.model})
    _write_json(out / "summary.json", summary)
    _write_kde(out / "kde_ensemble.csv", est, names)
    tgrid = np.linspace(*((1.0, 11.0) if model.name == INFLUENZA_TIV else (0.0, 10.0)), 201)
    states = state_trajectories(model, est, tgrid) if len(est) else np.empty((0, tgrid.size, model.state_dim))
    rows = []
    for s in range(model.state_dim):
        q = np.quantile(states[:, :, s], [0.025, 0.5, 0.975], axis=0) if len(est) else np.full((3, tgrid.size), math.nan)
        rows += [[s, _fmt(t), _fmt(a), _fmt(b), _fmt(c)] for t, a, b, c in zip(tgrid, *q)]
    _write_csv(out / "states.csv", ["state", "time", "q025", "q500", "q975"], rows)
    if model.name == INFLUENZA_TIV and len(est):
        summary["unimodal_virus_fraction"] = float(np.mean([is_unimodal(s[:, 3]) for s in states]))
        _write_json(out / "summary.json", summary)
    return summary


def _write_kde(path, samples, names):
    rows = []
    for i, name in enumerate(names):
        if len(samples) == 0:
            continue
        g, d, h = kde(samples[:, i])
        rows += [[name, _fmt(x), _fmt(y), _fmt(h)] for x, y in zip(g, d)]
    _write_csv(path, ["parameter", "x", "density", "bandwidth"], rows)


def cmd_mcmc(cfg: RunConfig, data_path):
    """Random-walk Metropolis baseline on the uncensored data."""
    out = _out(cfg)
    ds = _load_data(cfg, data_path)
    model = get_model(cfg.model)
    designs = [ds.design(k) for k in ds.outputs]
    over = {"seed": cfg.seed, **cfg.mcmc}
    mc = McmcConfig.from_dict({**asdict(default_mcmc_config(model)), **over})
    res = metropolis_run(model, designs, mc)
    names = model.param_names
    _write_csv(out / "chain.csv", ["step", *names, "log_post"],
               [[i, *map(_fmt, row), _fmt(lp)] for i, (row, lp) in enumerate(zip(res.chain, res.log_post))])
    summary = summarize_samples(res.chain, names, "mcmc",
                                {"acceptance_rate": res.acceptance_rate,
                                 "burn_acceptance_rate": res.burn_acceptance_rate,
                                 "warnings": res.warnings, "seed": mc.seed, "model": cfg.model,
                                 "n_burn": mc.n_burn, "n_keep": mc.n_keep})
    _write_json(out / "chain_summary.json", summary)
    _write_kde(out / "kde_mcmc.csv", res.chain, names)
    return summary


def cmd_summarize(cfg: RunConfig, inputs):
    """Merge summary JSONs; with two or more, tabulate IQR width ratios against the first."""
    if not inputs:
        raise SpinferError("summarize needs at least one summary file")
    out = _out(cfg)
    sums = []
    for p in inputs:
        try:
            s = json.loads(Path(p).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(s, dict) or "parameters" not in s or "method" not in s:
            raise SchemaError(f"{p}: not a summary file (needs 'method' and 'parameters')")
        sums.append(s)
    names = list(sums[0]["parameters"])
    for p, s in zip(inputs[1:], sums[1:]):
        if list(s["parameters"]) != names:
            raise SchemaError(f"{p}: parameters {list(s['parameters'])} differ from {names}")
    report = {"inputs": [str(p) for p in inputs], "summaries": sums, "width_ratios": []}
    for s in sums[1:]:
        report["width_ratios"].append(width_ratios(sums[0], s))
    if len(sums) > 1:
        cols = ["parameter", "reference", "other", "iqr_reference", "iqr_other", "ratio"]
        rows = [[r[c] for c in cols] for table in report["width_ratios"] for r in table]
        _write_csv(out / "width_ratios.csv", cols, rows)
    _write_json(out / "report.json", report)
    return report


def build_parser():
    p = argparse.ArgumentParser(prog="spinfer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help="worker processes for the ensemble")
        sp.add_argument("--model", choices=[LOTKA_VOLTERRA, INFLUENZA_TIV])
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("simulate", help="write a synthetic data CSV"))
    sp = common(sub.add_parser("fit", help="fit the surrogate to a data CSV"))
    sp.add_argument("--data", required=True)
    sp = common(sub.add_parser("estimate", help="sample paths and invert them"))
    sp.add_argument("--fit", required=True, help="fit.json from the fit command")
    sp.add_argument("-J", type=int, dest="J", help="number of sample paths")
    sp = common(sub.add_parser("mcmc", help="random-walk Metropolis baseline"))
    sp.add_argument("--data", required=True)
    sp = common(sub.add_parser("summarize", help="merge and compare summary files"))
    sp.add_argument("inputs", nargs="+")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, seed=args.seed, output_dir=args.out, threads=args.threads,
                             model=args.model, J=getattr(args, "J", None))
        if args.command == "simulate":
            result = cmd_simulate(cfg)
        elif args.command == "fit":
            result = cmd_fit(cfg, args.data)
        elif args.command == "estimate":
            result = cmd_estimate(cfg, args.fit)
        elif args.command == "mcmc":
            result = cmd_mcmc(cfg, args.data)
        else:
            result = cmd_summarize(cfg, args.inputs)
    except SpinferError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io-error", "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "output_dir": cfg.output_dir,
                      "result": _brief(result)}, default=_jsonable))
    return 0


def _brief(result):
    if isinstance(result, dict) and "parameters" in result:
        return {k: v["quantiles"][2] for k, v in result["parameters"].items()}
    if isinstance(result, dict) and "summaries" in result:
        return {"inputs": len(result["summaries"])}
    return result


if __name__ == "__main__":
    sys.exit(main())
