"""Command-line front end.

One strict JSON config document drives everything; matrices live in
headerless CSV files. Unknown keys are rejected with JSON-pointer-style
paths. Exit status: 0 = PROPER/success, 2 = IMPROPER/DIVERGES,
3 = UNDETERMINED/INCONCLUSIVE, 1 = error.
"""

import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import distributions as dist
from . import oracle, propriety, sampler, selection
from .errors import ConfigError, ProperLmmError
from .model import (FsnEffects, ModelSpec, NormalEffects, PriorStructure,
                    ProbitSpec, ShapePrior, SmnEffects, TpnEffects,
                    load_matrix, load_vector)

ENV_OUT_DIR = "PROPERLMM_OUT"

_EXIT_BY_VERDICT = {"PROPER": 0, "IMPROPER": 2, "UNDETERMINED": 3,
                    "CONVERGES": 0, "DIVERGES": 2, "INCONCLUSIVE": 3}


# ---------------------------------------------------------------------------
# Strict config validation
# ---------------------------------------------------------------------------

def _expect_object(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")


def _check_keys(obj, allowed, required, path):
    _expect_object(obj, path)
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}/{key}: unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}/{key}: missing required key")


def _as_float(v, path):
    if isinstance(v, bool) or v is None:
        raise ConfigError(f"{path}: expected a number")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {v!r}") from None


def _as_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return v


def _as_rational(v, path):
    try:
        if isinstance(v, str):
            return Fraction(v)
        if isinstance(v, int):
            return Fraction(v)
        return Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{path}: expected a rational number, "
                          f"got {v!r}") from None


def _as_str(v, path, choices=None):
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string")
    if choices and v not in choices:
        raise ConfigError(f"{path}: expected one of {sorted(choices)}, "
                          f"got {v!r}")
    return v


def _as_list(v, path):
    if not isinstance(v, list):
        raise ConfigError(f"{path}: expected an array")
    return v


# ---------------------------------------------------------------------------
# Block builders
# ---------------------------------------------------------------------------

_SHAPE_PRIOR_KEYS = {
    "uniform": ("lo", "hi"),
    "truncated-normal": ("loc", "scale", "lo", "hi"),
    "gamma": ("shape", "rate"),
    "point-mass": ("value",),
}


def _build_shape_prior(cfg, path):
    _check_keys(cfg, set(_SHAPE_PRIOR_KEYS) | {"kind"} | {
        k for keys in _SHAPE_PRIOR_KEYS.values() for k in keys}, ("kind",),
        path)
    kind = _as_str(cfg["kind"], f"{path}/kind", set(_SHAPE_PRIOR_KEYS))
    needed = _SHAPE_PRIOR_KEYS[kind]
    _check_keys(cfg, {"kind", *needed}, ("kind", *needed), path)
    args = [_as_float(cfg[k], f"{path}/{k}") for k in needed]
    builder = {
        "uniform": ShapePrior.uniform,
        "truncated-normal": ShapePrior.truncated_normal,
        "gamma": ShapePrior.gamma,
        "point-mass": ShapePrior.point_mass,
    }[kind]
    try:
        return builder(*args)
    except ProperLmmError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _build_family(cfg, path):
    _check_keys(cfg, {"kind", "parameterisation", "fsn_family", "mixing",
                      "shape_prior"}, ("kind",), path)
    kind = _as_str(cfg["kind"], f"{path}/kind",
                   {"normal", "tpn", "fsn", "smn"})
    if kind == "normal":
        _check_keys(cfg, {"kind"}, ("kind",), path)
        return NormalEffects()
    sp = _build_shape_prior(cfg["shape_prior"], f"{path}/shape_prior") \
        if "shape_prior" in cfg else None
    if kind == "tpn":
        name = _as_str(cfg.get("parameterisation", "epsilon-skew"),
                       f"{path}/parameterisation")
        try:
            param = dist.get_parameterisation(name)
        except ProperLmmError as exc:
            raise ConfigError(f"{path}/parameterisation: {exc}") from None
        if sp is None:
            if name != "epsilon-skew":
                raise ConfigError(f"{path}/shape_prior: required for "
                                  f"parameterisation {name!r}")
            sp = ShapePrior.uniform(-1.0, 1.0)
        return TpnEffects(param, sp)
    if kind == "fsn":
        name = _as_str(cfg.get("fsn_family", "skew-normal"),
                       f"{path}/fsn_family", set(dist.FSN_FAMILIES))
        if sp is None:
            raise ConfigError(f"{path}/shape_prior: missing required key")
        return FsnEffects(dist.FSN_FAMILIES[name], sp)
    name = _as_str(cfg.get("mixing", "gamma"), f"{path}/mixing",
                   set(dist.MIXING_DISTRIBUTIONS))
    if sp is None:
        raise ConfigError(f"{path}/shape_prior: missing required key")
    return SmnEffects(dist.MIXING_DISTRIBUTIONS[name], sp)


def _build_prior(cfg, path):
    _check_keys(cfg, {"variant", "a", "b", "s"}, ("variant", "a"), path)
    variant = _as_str(cfg["variant"], f"{path}/variant",
                      {"power-exp", "half-cauchy"})
    a = tuple(_as_rational(v, f"{path}/a/{i}")
              for i, v in enumerate(_as_list(cfg["a"], f"{path}/a")))
    b = s = None
    if "b" in cfg:
        b = tuple(_as_rational(v, f"{path}/b/{i}")
                  for i, v in enumerate(_as_list(cfg["b"], f"{path}/b")))
    if "s" in cfg:
        s = tuple(_as_float(v, f"{path}/s/{i}")
                  for i, v in enumerate(_as_list(cfg["s"], f"{path}/s")))
    try:
        return PriorStructure(variant, a, b=b, s=s)
    except ProperLmmError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _build_model(cfg, family, prior, path, base_dir):
    _check_keys(cfg, {"x_csv", "z_csv", "y_csv", "factor_sizes"},
                ("x_csv", "z_csv", "factor_sizes"), path)
    factor_sizes = tuple(_as_int(v, f"{path}/factor_sizes/{i}") for i, v in
                         enumerate(_as_list(cfg["factor_sizes"],
                                            f"{path}/factor_sizes")))

    def resolve(name):
        p = cfg[name]
        if not isinstance(p, str):
            raise ConfigError(f"{path}/{name}: expected a file path string")
        full = p if os.path.isabs(p) else os.path.join(base_dir, p)
        if not os.path.exists(full):
            raise ConfigError(f"{path}/{name}: file not found: {full}")
        return full

    X = load_matrix(resolve("x_csv"))
    Z = load_matrix(resolve("z_csv"))
    y = load_vector(resolve("y_csv")) if "y_csv" in cfg else None
    try:
        spec = ModelSpec(X, Z, factor_sizes, family, prior)
    except ProperLmmError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec, y


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

_TOP_KEYS = {"command", "model", "family", "prior", "probit", "probe",
             "sample", "bf", "dist"}


def run(config, base_dir=".", verbose=False):
    """Execute a validated config. Returns (exit_code, stdout_text,
    artifacts) where artifacts maps file names to contents."""
    _check_keys(config, _TOP_KEYS, ("command",), "")
    command = _as_str(config["command"], "/command",
                      {"check", "probe", "sample", "bf", "dist"})
    handler = {
        "check": _cmd_check,
        "probe": _cmd_probe,
        "sample": _cmd_sample,
        "bf": _cmd_bf,
        "dist": _cmd_dist,
    }[command]
    return handler(config, base_dir, verbose)


def _require_blocks(config, names):
    for name in names:
        if name not in config:
            raise ConfigError(f"/{name}: missing required key")


def _model_from_config(config, base_dir, need_y=True):
    _require_blocks(config, ("model", "family", "prior"))
    family = _build_family(config["family"], "/family")
    prior = _build_prior(config["prior"], "/prior")
    spec, y = _build_model(config["model"], family, prior, "/model",
                           base_dir)
    if need_y and y is None:
        raise ConfigError("/model/y_csv: missing required key")
    return spec, y


def _cmd_check(config, base_dir, verbose):
    if "probit" in config:
        pcfg = config["probit"]
        _check_keys(pcfg, {"groups", "a1"}, ("groups", "a1"), "/probit")
        _require_blocks(config, ("family",))
        family = _build_family(config["family"], "/family")
        groups = []
        for i, pair in enumerate(_as_list(pcfg["groups"], "/probit/groups")):
            pair = _as_list(pair, f"/probit/groups/{i}")
            if len(pair) != 2:
                raise ConfigError(f"/probit/groups/{i}: expected "
                                  "[successes, failures]")
            groups.append((_as_int(pair[0], f"/probit/groups/{i}/0"),
                           _as_int(pair[1], f"/probit/groups/{i}/1")))
        a1 = _as_rational(pcfg["a1"], "/probit/a1")
        try:
            pspec = ProbitSpec(tuple(groups), a1, family)
            verdict = propriety.check_probit(pspec)
        except ProperLmmError as exc:
            raise ConfigError(f"/probit: {exc}") from None
    else:
        spec, y = _model_from_config(config, base_dir, need_y=False)
        verdict = propriety.check_model(spec, y)
    text = verdict.to_json()
    return (_EXIT_BY_VERDICT[verdict.overall], text,
            {"verdict.json": text + "\n"})


def _cmd_probe(config, base_dir, verbose):
    spec, y = _model_from_config(config, base_dir)
    pcfg = config.get("probe", {})
    _check_keys(pcfg, {"levels", "tol"}, (), "/probe")
    levels = _as_int(pcfg.get("levels", 8), "/probe/levels")
    tol = _as_float(pcfg.get("tol", 1e-3), "/probe/tol")
    schedule = oracle.default_schedule(spec, y, levels=levels)
    verdict = oracle.propriety_probe(spec, y, schedule=schedule, tol=tol)
    payload = {
        "outcome": verdict.outcome,
        "tol": verdict.tol,
        "trace": [{"k": k, "value": v} for k, v in verdict.increment_trace],
        "rel_increments": list(verdict.rel_increments),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    return (_EXIT_BY_VERDICT[verdict.outcome], text,
            {"probe.json": text + "\n", "probe_trace.csv": verdict.to_csv()})


def _cmd_sample(config, base_dir, verbose):
    spec, y = _model_from_config(config, base_dir)
    scfg = config.get("sample", {})
    _check_keys(scfg, {"iterations", "burn_in", "seed", "chains",
                       "allow_improper"}, ("iterations", "burn_in", "seed"),
                "/sample")
    iterations = _as_int(scfg["iterations"], "/sample/iterations")
    burn_in = _as_int(scfg["burn_in"], "/sample/burn_in")
    seed = _as_int(scfg["seed"], "/sample/seed")
    n_chains = _as_int(scfg.get("chains", 1), "/sample/chains")
    allow = bool(scfg.get("allow_improper", False))
    chains = [sampler.mwg_sample(spec, y, iterations, burn_in, seed,
                                 allow_improper=allow, chain_index=c)
              for c in range(n_chains)]
    import warnings as _warnings
    with _warnings.catch_warnings():
        if n_chains < 2:
            _warnings.simplefilter("ignore")
        report = sampler.diagnostics(chains)
    artifacts = {"diagnostics.json": sampler.diagnostics_json(report) + "\n"}
    for c, chain in enumerate(chains):
        lines = [",".join(chain.column_names())]
        for row in chain.flat():
            lines.append(",".join(repr(v) for v in row))
        artifacts[f"draws_chain{c}.csv"] = "\n".join(lines) + "\n"
    summary = {
        "chains": n_chains,
        "kept_draws": len(chains[0]),
        "acceptance_rates": chains[0].acceptance_rates,
        "diagnostics": report["parameters"],
    }
    text = sampler.diagnostics_json(summary)
    return 0, text, artifacts


def _cmd_bf(config, base_dir, verbose):
    bcfg = config.get("bf", {})
    _check_keys(bcfg, {"method", "gamma0", "source", "draws", "seed",
                       "iterations", "burn_in", "factor", "mixing2",
                       "datasets_csv", "level"}, ("method",), "/bf")
    method = _as_str(bcfg["method"], "/bf/method",
                     {"savage-dickey", "smn-demo"})
    if method == "savage-dickey":
        gamma0 = _as_float(bcfg.get("gamma0", 0.0), "/bf/gamma0")
        source = _as_str(bcfg.get("source", "chain"), "/bf/source",
                         {"chain", "prior"})
        seed = _as_int(bcfg.get("seed", 0), "/bf/seed")
        if source == "prior":
            _require_blocks(config, ("family",))
            family = _build_family(config["family"], "/family")
            if not hasattr(family, "shape_prior"):
                raise ConfigError("/family: savage-dickey needs a family "
                                  "with a shape prior")
            n_draws = _as_int(bcfg.get("draws", 20000), "/bf/draws")
            rng = np.random.default_rng(seed)
            draws = family.shape_prior.sample(rng, n_draws)
            res = selection.savage_dickey(draws, family.shape_prior, gamma0)
        else:
            spec, y = _model_from_config(config, base_dir)
            iterations = _as_int(bcfg.get("iterations", 6000),
                                 "/bf/iterations")
            burn_in = _as_int(bcfg.get("burn_in", 1000), "/bf/burn_in")
            factor = _as_int(bcfg.get("factor", 0), "/bf/factor")
            chain = sampler.mwg_sample(spec, y, iterations, burn_in, seed)
            res = selection.savage_dickey(chain, spec.re_family.shape_prior,
                                          gamma0, factor=factor)
        payload = {
            "method": "savage-dickey",
            "gamma0": gamma0,
            "bf_point_vs_encompassing": res.bf,
            "mc_se": res.mc_se,
            "posterior_density": res.posterior_density,
            "prior_density": res.prior_density,
            "n_draws": res.n_draws,
            "sparse_warning": res.sparse_warning,
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        return 0, text, {"bf.json": text + "\n"}
    # smn-demo
    spec, y = _model_from_config(config, base_dir, need_y=False)
    if not isinstance(spec.re_family, SmnEffects):
        raise ConfigError("/family/kind: smn-demo needs the smn family")
    mix2_name = _as_str(bcfg.get("mixing2", "point-mass"), "/bf/mixing2",
                        set(dist.MIXING_DISTRIBUTIONS))
    level = _as_int(bcfg.get("level", 6), "/bf/level")
    datasets = []
    if "datasets_csv" in bcfg:
        for i, p in enumerate(_as_list(bcfg["datasets_csv"],
                                       "/bf/datasets_csv")):
            full = p if os.path.isabs(p) else os.path.join(base_dir, p)
            if not os.path.exists(full):
                raise ConfigError(f"/bf/datasets_csv/{i}: file not found: "
                                  f"{full}")
            datasets.append(load_vector(full))
    elif y is not None:
        datasets = [y]
    else:
        raise ConfigError("/bf/datasets_csv: missing required key")
    report = selection.smn_bf_invariance_demo(
        spec, datasets, spec.re_family.mixing,
        dist.MIXING_DISTRIBUTIONS[mix2_name], level=level)
    text = selection.demo_report_json(report)
    return 0, text, {"bf.json": text + "\n"}


def _cmd_dist(config, base_dir, verbose):
    dcfg = config.get("dist", {})
    _check_keys(dcfg, {"op", "x", "mu", "sigma", "shape", "n", "seed"},
                ("op",), "/dist")
    _require_blocks(config, ("family",))
    family = _build_family(config["family"], "/family")
    op = _as_str(dcfg["op"], "/dist/op", {"pdf", "sample"})
    mu = _as_float(dcfg.get("mu", 0.0), "/dist/mu")
    sigma = _as_float(dcfg.get("sigma", 1.0), "/dist/sigma")
    shape = _as_float(dcfg.get("shape", 0.0), "/dist/shape")
    try:
        if op == "pdf":
            if "x" not in dcfg:
                raise ConfigError("/dist/x: missing required key")
            x = [_as_float(v, f"/dist/x/{i}") for i, v in
                 enumerate(_as_list(dcfg["x"], "/dist/x"))]
            if isinstance(family, TpnEffects):
                vals = [float(dist.tpn_pdf(v, mu, sigma, shape,
                                           family.param)) for v in x]
            elif isinstance(family, FsnEffects):
                vals = [float(dist.fsn_pdf(v, mu, sigma, shape,
                                           family.family)) for v in x]
            elif isinstance(family, SmnEffects):
                vals = [float(dist.smn_pdf(np.array([v - mu]), sigma,
                                           family.mixing, shape))
                        for v in x]
            else:
                vals = [float(np.exp(-0.5 * ((v - mu) / sigma) ** 2)
                              / (sigma * np.sqrt(2 * np.pi))) for v in x]
        else:
            n = _as_int(dcfg.get("n", 10), "/dist/n")
            seed = _as_int(dcfg.get("seed", 0), "/dist/seed")
            rng = np.random.default_rng(seed)
            if isinstance(family, TpnEffects):
                vals = list(dist.tpn_sample(rng, mu, sigma, shape,
                                            family.param, size=n))
            elif isinstance(family, FsnEffects):
                vals = list(dist.fsn_sample(rng, mu, sigma, shape,
                                            family.family, size=n))
            elif isinstance(family, SmnEffects):
                vals = [float(v) for v in
                        dist.smn_sample(rng, 1, sigma, family.mixing,
                                        shape, size=n)[:, 0] + mu]
            else:
                vals = list(mu + sigma * rng.standard_normal(n))
    except ProperLmmError as exc:
        raise ConfigError(f"/dist: {exc}") from None
    payload = {"op": op, "values": [float(v) for v in vals]}
    text = json.dumps(payload, indent=2, sort_keys=True)
    return 0, text, {"dist.json": text + "\n"}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="properlmm",
        description="Propriety checks, probes, sampling, and Bayes factors "
                    "for mixed models with flexible random effects.")
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed in the config")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default: ${ENV_OUT_DIR} "
                             "or none)")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    out_dir = args.out or os.environ.get(ENV_OUT_DIR)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            for block in ("sample", "bf", "dist"):
                if isinstance(config.get(block), dict):
                    config[block]["seed"] = args.seed
        code, text, artifacts = run(config,
                                    base_dir=os.path.dirname(
                                        os.path.abspath(args.config)),
                                    verbose=args.verbose)
    except ProperLmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for name, content in artifacts.items():
            with open(os.path.join(out_dir, name), "w",
                      encoding="utf-8") as fh:
                fh.write(content)
        if args.verbose:
            print(f"wrote {len(artifacts)} artifact(s) to {out_dir}",
                  file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
