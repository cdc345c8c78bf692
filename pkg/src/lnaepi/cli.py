"""Command-line interface: ``lnaepi {simulate,fit,compare,pf-variance}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import csv
import datetime
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import PRESETS, load_config, read_data, write_data
from .exceptions import ConfigError, InvalidInputError, NumericalFailure
from .gaussfilter import forward_filter, ode_loglik
from .inference.diagnostics import dic, ess_or_nan, predictive_bands, r0, r0_samples
from .inference.mcmc import loglik_variance, run_chain, stream
from .inference.priors import ParameterSpace
from .simulate import corrupt, simulate_mjp
from .smc import AuxBlock, pf_loglik

__all__ = ["main", "build_parser", "cmd_simulate", "cmd_fit", "cmd_compare", "cmd_pf_variance",
           "read_chain", "summary_from_chain_file"]

logger = logging.getLogger("lnaepi")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_manifest(out, command, cfg, seed, threads, extra=None):
    cfg = _with_seed(cfg, seed)
    manifest = {
        "command": command,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": seed,
        "threads": threads,
        "unit": cfg.unit,
        "config": cfg.to_dict(),
        "config_text": cfg.to_text(),
    }
    manifest.update(extra or {})
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _with_seed(cfg, seed):
    from dataclasses import replace

    return replace(cfg, seed=seed)


def _out_dir(args, cfg):
    out = args.out or cfg.out or os.path.join("runs", cfg.label)
    os.makedirs(out, exist_ok=True)
    return out


# -- data ---------------------------------------------------------------------------

def _simulate(cfg, seed):
    """Simulated path and reported counts for a config with a [simulate] block."""
    model = cfg.get_model()
    params = cfg.params(fill=False)
    path = simulate_mjp(model, params, cfg.t_end, cfg.grid, stream(seed, "simulate"),
                        substep=cfg.substep)
    y = corrupt(path.grid_incidence, params.obs, stream(seed, "corrupt"))
    return model, path, y


def _load_observations(cfg, seed):
    if cfg.data_path is not None:
        t, y = read_data(cfg.data_path)
        if abs(t[0] - cfg.interval) > 1e-9 * max(1.0, cfg.interval):
            raise ConfigError(
                f"{cfg.source}: [inference] interval = {cfg.interval:g} does not match the "
                f"data spacing {t[0]:g}")
        return t, y
    _, path, y = _simulate(cfg, seed)
    return path.obs_times, np.asarray(y, dtype=float)


def cmd_simulate(cfg, out, seed, threads=1):
    """Simulate data from a config; writes ``data.csv``, ``truth.csv``, ``events.csv``."""
    if cfg.t_end is None:
        raise ConfigError(f"{cfg.source}: simulate needs a [simulate] section")
    model, path, y = _simulate(cfg, seed)
    write_data(os.path.join(out, "data.csv"), path.obs_times, y)
    truth = path.latent_truth(model)
    header = ["t", "s", "i"] + [f"n{j + 1}" for j in range(model.n_events)]
    rows = [list(r) for r in truth]
    if model.tv_beta:
        header.append("log_beta")
        rows = [r + [lb] for r, lb in zip(rows, path.log_beta[1:])]
    _write_csv(os.path.join(out, "truth.csv"), header, rows)
    _write_csv(os.path.join(out, "events.csv"), ["time", "event"],
               zip(path.times, path.event_ids + 1))
    _write_manifest(out, "simulate", cfg, seed, threads,
                    {"outputs": ["data.csv", "truth.csv", "events.csv"]})
    return y


# -- fit ----------------------------------------------------------------------------

def _loglik_fn(cfg, model, space, y, seed):
    """Log-likelihood on the free scale, as used by DIC."""
    if cfg.scheme == "ffmh":
        return lambda th: forward_filter(model, space.inverse_transform(th), y, cfg.interval,
                                         cfg.n_steps, raise_on_failure=False)[0]
    if cfg.scheme == "ode_mh":
        return lambda th: ode_loglik(model, space.inverse_transform(th), y, cfg.interval,
                                     cfg.n_steps, raise_on_failure=False)
    aux = AuxBlock.draw(stream(seed, "aux"), y.shape[0], cfg.n_particles, model.n_latent)
    return lambda th: pf_loglik(model, space.inverse_transform(th), y, aux,
                                propagation=cfg.propagation, interval=cfg.interval,
                                n_steps=cfg.n_steps)[0]


def _draw_columns(chain, space, model):
    nat = np.array([space.to_natural(row) for row in chain.draws]).reshape(len(chain), -1)
    header = list(space.names)
    r0_col = r0_samples(nat, space, model) if len(chain) else None
    if r0_col is not None:
        nat = np.column_stack([nat, r0_col])
        header.append("R0")
    return header, nat


def summarize_columns(header, values, elapsed):
    """Summary rows computed from natural-scale draw columns."""
    rows = []
    for j, name in enumerate(header):
        col = values[:, j]
        e = ess_or_nan(col)
        sd = float(col.std(ddof=1)) if col.size > 1 else 0.0
        rows.append([name, float(col.mean()), sd, e, e / elapsed if elapsed > 0 else float("nan")])
    return rows


def cmd_fit(cfg, out, seed, threads=1):
    """Fit a config; writes draws, summary, optional bands and a manifest.

    Returns a dict with the DIC, p_D and acceptance rate.
    """
    t, y = _load_observations(cfg, seed)
    if cfg.data_path is None:
        write_data(os.path.join(out, "data.csv"), t, y)
    model = cfg.get_model()
    space = ParameterSpace(cfg.prior_spec(), cfg.params())
    if space.dim == 0:
        raise ConfigError(f"{cfg.source}: [priors] must name at least one free parameter")
    chain = run_chain(cfg.scheme, model, space, y, cfg.settings(seed))
    header, values = _draw_columns(chain, space, model)
    _write_csv(os.path.join(out, "draws.csv"), ["iteration"] + header + ["loglik", "accepted"],
               ([i] + list(v) + [ll, acc] for i, (v, ll, acc) in
                enumerate(zip(values, chain.loglik, chain.accepted))))
    summary = summarize_columns(header, values, chain.elapsed) if len(chain) else []
    _write_csv(os.path.join(out, "summary.csv"), ["parameter", "mean", "sd", "ess", "ess_per_s"],
               summary)
    result = {"label": cfg.label, "model": cfg.model, "obs": cfg.obs_kind,
              "acceptance_rate": chain.acceptance_rate, "elapsed": chain.elapsed,
              "iterations": len(chain)}
    if len(chain):
        d, p_d = dic(chain, _loglik_fn(cfg, model, space, y, seed))
        result.update(dic=d, p_d=p_d)
        if chain.paths is not None and len(chain.paths):
            _write_bands(out, cfg, model, space, chain)
    with open(os.path.join(out, "fit.json"), "w") as fh:
        json.dump(result, fh, indent=2)
    _write_manifest(out, "fit", cfg, seed, threads, {"result": result})
    return result


def _write_bands(out, cfg, model, space, chain):
    T1 = chain.paths.shape[1]
    times = cfg.interval * np.arange(T1)
    bands = predictive_bands(chain.paths, model, cfg.x0, times=times)
    header, cols = ["t"], [bands["t"]]
    keys = ["S", "I", "log_beta"] if model.tv_beta else ["S", "I"]
    if model.tv_beta:
        # time-resolved R0 from the log rate path and the matching gamma draw
        names = list(space.names)
        gam = np.array([space.to_natural(chain.draws[i])[names.index("gamma")]
                        if "gamma" in names else space.base.gamma for i in chain.path_index])
        r0_paths = np.array([r0(space.base.replace(gamma=g), model, p[:, -1])
                             for g, p in zip(gam, chain.paths)])
        lo, hi = np.quantile(r0_paths, (0.025, 0.975), axis=0)
        bands["R0"] = (r0_paths.mean(axis=0), lo, hi)
        keys = keys + ["R0"]
    for key in keys:
        mean, lo, hi = bands[key]
        header += [f"{key}_mean", f"{key}_lo", f"{key}_hi"]
        cols += [mean, lo, hi]
    _write_csv(os.path.join(out, "bands.csv"), header, np.column_stack(cols))


def read_chain(path):
    """Read ``draws.csv``; returns ``(parameter names, natural-scale values)``."""
    with open(path) as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    names = header[1:-2]
    return names, data[:, 1:-2]


def summary_from_chain_file(path, elapsed):
    names, values = read_chain(path)
    return summarize_columns(names, values, elapsed)


# -- compare ------------------------------------------------------------------------

def _fit_member(args):
    cfg, out, seed = args
    os.makedirs(out, exist_ok=True)
    return cmd_fit(cfg, out, seed)


def cmd_compare(cfgs, out, seed, threads=1):
    """Fit every config and write ``dic.csv`` with the preferred model flagged.

    The table is rewritten after each completed fit so partial results
    survive a failure.
    """
    jobs = [(c, os.path.join(out, c.label), seed) for c in cfgs]
    labels = [c.label for c in cfgs]
    if len(set(labels)) != len(labels):
        raise ConfigError("compared configs need distinct [run] labels")
    results = []

    def flush():
        best = min(results, key=lambda r: r["dic"])["label"] if results else None
        _write_csv(os.path.join(out, "dic.csv"), ["model", "dic", "p_d", "preferred"],
                   [[r["label"], r["dic"], r["p_d"], r["label"] == best] for r in results])
        return best

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(_fit_member, jobs):
                results.append(res)
                flush()
    else:
        for job in jobs:
            results.append(_fit_member(job))
            flush()
    best = flush()
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump({"command": "compare", "version": __version__, "seed": seed,
                   "threads": threads, "members": labels, "preferred": best,
                   "config_texts": {c.label: _with_seed(c, seed).to_text() for c in cfgs}},
                  fh, indent=2)
    return results, best


# -- pf-variance --------------------------------------------------------------------

def cmd_pf_variance(cfg, out, seed, particles, reps=100, rho=None, threads=1):
    """Variance of repeated particle-filter log-likelihood estimates at the
    config's parameter values, for each particle count in ``particles``."""
    t, y = _load_observations(cfg, seed)
    model, params = cfg.get_model(), cfg.params()
    rows = []
    for n in particles:
        v = loglik_variance(model, params, y, n, n_reps=reps, rho=rho, seed=seed,
                            interval=cfg.interval, n_steps=cfg.n_steps,
                            propagation=cfg.propagation)
        rows.append([n, "" if rho is None else rho, reps, v])
        logger.info("N=%d variance=%.4f", n, v)
    _write_csv(os.path.join(out, "pf_variance.csv"), ["particles", "rho", "reps", "variance"],
               rows)
    _write_manifest(out, "pf-variance", cfg, seed, threads,
                    {"particles": list(particles), "reps": reps, "rho": rho})
    return rows


# -- entry point --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="lnaepi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, many=False):
        if many:
            sp.add_argument("--config", required=True, nargs="+",
                            help=f"config files, manifests or presets {PRESETS}")
        else:
            sp.add_argument("--config", required=True,
                            help=f"config file, run manifest or preset {PRESETS}")
        sp.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--iterations", type=int, help="override [inference] iterations")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("simulate", help="simulate a synthetic data set"))
    common(sub.add_parser("fit", help="run MCMC for one config"))
    common(sub.add_parser("compare", help="fit several configs and tabulate DIC"), many=True)
    sp = sub.add_parser("pf-variance", help="variance of particle-filter log-likelihoods")
    common(sp)
    sp.add_argument("--particles", type=int, nargs="+", help="particle counts to try")
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--rho", type=float, help="report variance of CN-correlated differences")
    return p


def _seed(u64):
    if u64 is None:
        return None
    if not 0 <= u64 < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    return u64


def _apply_overrides(cfg, args):
    from dataclasses import replace

    if args.iterations is not None:
        if args.iterations < 0:
            raise ConfigError("--iterations must be >= 0")
        cfg = replace(cfg, iterations=args.iterations)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        seed = _seed(args.seed)
        if args.command == "compare":
            cfgs = [_apply_overrides(load_config(c), args) for c in args.config]
            seed = cfgs[0].seed if seed is None else seed
            out = args.out or os.path.join("runs", "compare")
            os.makedirs(out, exist_ok=True)
            results, best = cmd_compare(cfgs, out, seed, args.threads)
            for r in results:
                print(f"{r['label']}\tDIC={r['dic']:.2f}\tpD={r['p_d']:.2f}")
            print(f"preferred: {best}")
            return EXIT_OK
        cfg = _apply_overrides(load_config(args.config), args)
        seed = cfg.seed if seed is None else seed
        out = _out_dir(args, cfg)
        if args.command == "simulate":
            y = cmd_simulate(cfg, out, seed, args.threads)
            print(f"wrote {len(y)} observations to {out}")
        elif args.command == "fit":
            res = cmd_fit(cfg, out, seed, args.threads)
            print(json.dumps(res))
        else:
            particles = args.particles or [cfg.n_particles or 100]
            rows = cmd_pf_variance(cfg, out, seed, particles, args.reps, args.rho, args.threads)
            for n, _, _, v in rows:
                print(f"N={n}\tvariance={v:.4f}")
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
