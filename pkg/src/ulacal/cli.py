"""Command-line entry point.

Configuration files hold ``section.field=value`` lines (``#`` starts a
comment). ``--set`` overrides win over the file, which wins over defaults.
Exit status: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from ulacal import harness, rmt, sphericity, toeplitz_recon
from ulacal.errors import UlacalError
from ulacal.scenario import ScenarioConfig, build_covariance, draw_phase_errors, generate_snapshots, sample_covariance, trial_rng

EXPERIMENTS = {
    "lr-pdf": harness.ExperimentKind.LR_PDF,
    "ml-benchmark": harness.ExperimentKind.ML_BENCHMARK,
    "invariant": harness.ExperimentKind.INVARIANT,
    "adhoc": harness.ExperimentKind.ADHOC,
    "oversampled": harness.ExperimentKind.OVERSAMPLED,
    "crb": harness.ExperimentKind.CRB_PROFILE,
}
NULL_KEYS = ("N", "T", "trials", "seed")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def valid_keys():
    keys = [f"scenario.{name}" for name in ScenarioConfig.field_names()]
    keys += [f"options.{f.name}" for f in fields(harness.ExperimentOptions)]
    return keys


def _schema():
    lines = ["configuration keys (section.field=value):"]
    defaults = ScenarioConfig()
    for name in ScenarioConfig.field_names():
        v = getattr(defaults, name)
        lines.append(f"  scenario.{name} (default {getattr(v, 'value', v)})")
    opts = harness.ExperimentOptions()
    for f in fields(opts):
        lines.append(f"  options.{f.name} (default {getattr(opts, f.name)!r})")
    lines.append("bare field names are accepted when unambiguous, e.g. --set T=300")
    return "\n".join(lines)


def read_config(path):
    """``{key: value}`` from a config file, in file order."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_sets(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _split_key(key):
    scen = set(ScenarioConfig.field_names())
    opts = {f.name for f in fields(harness.ExperimentOptions)}
    if "." in key:
        section, name = key.split(".", 1)
        if (section == "scenario" and name in scen) or (section == "options" and name in opts):
            return section, name
    elif key in scen:
        return "scenario", key
    elif key in opts:
        return "options", key
    raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(valid_keys())}")


def resolve_spec(kind, config_values, set_values, seed=None):
    """Experiment spec from defaults, then the config file, then ``--set``."""
    scen, opts = {}, {}
    for key, value in list(config_values.items()) + list(set_values.items()):
        if key == "experiment.kind":
            if value != kind.value:
                raise ConfigError(f"config is for experiment {value!r}, not {kind.value!r}")
            continue
        section, name = _split_key(key)
        (scen if section == "scenario" else opts)[name] = value
    if seed is not None:
        scen["seed"] = seed
    base = harness.default_scenario(kind)
    try:
        merged = {name: getattr(base, name) for name in ScenarioConfig.field_names()}
        merged.update(scen)
        scenario = ScenarioConfig.from_mapping(merged)
        options = harness.options_from_mapping(opts)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return harness.ExperimentSpec(kind, scenario, options)


def _add_common(p):
    p.add_argument("--config", help="file of section.field=value lines")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key (repeatable)")
    p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=int, help="override scenario.seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")


def build_parser():
    parser = _Parser(
        prog="ulacal",
        description="Blind phase calibration experiments for uniform linear arrays.",
        epilog=_schema(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, kind in EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run the {kind.value} experiment", epilog=_schema(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_common(p)
    p = sub.add_parser("null-dist", help="precompute a sphericity null distribution")
    _add_common(p)
    p = sub.add_parser("reconstruct", help="ME Toeplitz reconstruction of one sample matrix")
    _add_common(p)
    p.add_argument("--input", help="text file with a complex Hermitian matrix (numpy.loadtxt format)")
    return parser


def _progress(done):
    print(f"{done} trials done", file=sys.stderr)


def _run_experiment(args, kind):
    spec = resolve_spec(kind, read_config(args.config) if args.config else {}, parse_sets(args.set), args.seed)
    report = harness.run_experiment(spec, jobs=args.jobs, out_dir=args.out, progress=_progress)
    print(json.dumps(harness.jsonable(report.summary), indent=2, sort_keys=True))
    print(f"wall time {report.wall_time:.2f} s; reports in {args.out}", file=sys.stderr)


def _run_null(args):
    values = {**(read_config(args.config) if args.config else {}), **parse_sets(args.set)}
    picked = {"N": 17, "T": 300, "trials": 1000, "seed": 1}
    for key, value in values.items():
        name = key.split(".", 1)[1] if key.startswith("scenario.") else key
        if name not in NULL_KEYS:
            raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(NULL_KEYS)}")
        try:
            picked[name] = int(value, 0)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer") from exc
    if args.seed is not None:
        picked["seed"] = args.seed
    null = sphericity.cached_null(args.out, picked["N"], picked["T"], picked["trials"], picked["seed"])
    print(f"N={null.N} T={null.T} trials={null.trials} median log-LR {np.median(null.samples):.6g}")


def _run_reconstruct(args):
    if args.input:
        try:
            R = np.loadtxt(args.input, dtype=complex, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read matrix from {args.input}: {exc}") from exc
        T = None
    else:
        spec = resolve_spec(harness.ExperimentKind.LR_PDF,
                            read_config(args.config) if args.config else {}, parse_sets(args.set), args.seed)
        cfg = spec.scenario
        rng = trial_rng(cfg.seed, 0)
        phases = draw_phase_errors(cfg.phi_max_deg, cfg.N, rng)
        R = sample_covariance(generate_snapshots(build_covariance(cfg), phases, cfg.T, rng))
        T = cfg.T
    T_hat, _ = toeplitz_recon.reconstruct(R)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"lag": k, "re": v.real, "im": v.imag} for k, v in enumerate(T_hat.first_col)]
    harness.write_records(out / "toeplitz.csv", ["lag", "re", "im"], rows)
    summary = {"log_lr": sphericity.lr_stat(R, T_hat).log_lr}
    if T is not None and T > R.shape[0]:
        Rm = rmt.modify_matrix(R, T)
        summary["log_lr_rmt"] = sphericity.lr_stat(Rm, toeplitz_recon.reconstruct(Rm)[0]).log_lr
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        if args.command in EXPERIMENTS:
            _run_experiment(args, EXPERIMENTS[args.command])
        elif args.command == "null-dist":
            _run_null(args)
        else:
            _run_reconstruct(args)
    except ConfigError as exc:
        print(f"ulacal: config error: {exc}", file=sys.stderr)
        return 1
    except (UlacalError, OSError) as exc:
        print(f"ulacal: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
