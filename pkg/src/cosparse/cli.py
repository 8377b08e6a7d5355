"""Command-line front end: single reconstructions, experiment sweeps, and
the numerical certificate suite.

Every run writes a JSON manifest of its fully resolved configuration;
``--replay MANIFEST`` reruns it and reproduces the outputs (``--threads 1``
guarantees bitwise-identical CSVs up to the wall-clock column of the
per-trial table).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .certificates import run_certificates
from .experiments import (
    ExperimentSpec,
    medians_to_csv,
    results_to_csv,
    run_single_trial,
    run_trials,
    write_pgm,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------------------
# Experiment presets (desk scale by default; --paper-scale restores the
# original protocol sizes)
# ---------------------------------------------------------------------------


def _alpha_sweep_spec(args) -> ExperimentSpec:
    if args.paper_scale:
        gen = {"n": 48, "total_transitions": 28, "alpha": 1.0}
        sweep = (1.0, 3.0, 9.0, 27.0)
        trials = 25
    else:
        gen = {"n": 32, "total_transitions": 20, "alpha": 1.0}
        sweep = (1.0, 3.0, 9.0, 19.0)
        trials = 25
    return ExperimentSpec(
        name="alpha-sweep",
        generator="finite_diff_2d",
        gen_params=gen,
        operator="spread_spectrum",
        sampling_ratio=0.25,
        measurement_snr_db=40.0,
        algorithms=tuple(args.algos),
        trials=args.trials or trials,
        base_seed=args.seed,
        dictionary="finite_difference",
        sweep_param="alpha",
        sweep_values=sweep,
        outer={"max_outer": args.max_outer},
        inner={"max_iterations": args.max_inner},
    )


def _image_spec(args) -> ExperimentSpec:
    if args.target == "shepp":
        if args.paper_scale:
            gen = {"n1": 96, "n2": 96, "complex": True}
            ratios = (0.1, 0.2, 0.3, 0.4, 0.5)
            trials = 7
        else:
            gen = {"n1": 64, "n2": 64, "complex": True}
            ratios = (0.2, 0.3)
            trials = 5
        generator, snr = "shepp_logan", 40.0
        dict_kind, dict_params = "uwt", {"filters": ["db1"], "levels": 1}
    else:
        if not args.image:
            raise SystemExit("--target file requires --image PATH (PGM)")
        gen = {"path": args.image}
        if args.crop:
            gen["crop"] = [int(v) for v in args.crop.split(",")]
        ratios = (0.2, 0.3) if not args.paper_scale else (0.1, 0.2, 0.3, 0.4, 0.5)
        trials = 5 if not args.paper_scale else 7
        generator, snr = "image_file", 30.0
        dict_kind, dict_params = "uwt", {"filters": ["db1", "db2"], "levels": 1}
    if args.dict:
        from .experiments import parse_dictionary_spec

        parsed = parse_dictionary_spec(args.dict)
        dict_kind = parsed.pop("kind")
        dict_params = parsed
    return ExperimentSpec(
        name="image",
        generator=generator,
        gen_params=gen,
        operator="spread_spectrum",
        sampling_ratio=ratios[0],
        measurement_snr_db=args.snr if args.snr is not None else snr,
        algorithms=tuple(args.algos),
        trials=args.trials or trials,
        base_seed=args.seed,
        dictionary=dict_kind,
        dict_params=dict_params,
        sweep_param="sampling_ratio",
        sweep_values=tuple(args.mn) if args.mn else ratios,
        outer={"max_outer": args.max_outer},
        inner={"max_iterations": args.max_inner},
    )


def _dmri_spec(args) -> ExperimentSpec:
    if args.paper_scale:
        gen = {"n1": 144, "t_count": 48, "seed": 0}
        ratios = (0.2, 0.3, 0.4)
        trials = 7
    else:
        gen = {"n1": 48, "t_count": 16, "seed": 0}
        ratios = (0.25, 0.35)
        trials = 3
    if args.image:
        gen = {"path": args.image}
    return ExperimentSpec(
        name="dmri",
        generator="dmri_file" if args.image else "dmri_profile",
        gen_params=gen,
        operator="partial_fourier_video",
        sampling_ratio=ratios[0],
        measurement_snr_db=args.snr if args.snr is not None else 30.0,
        algorithms=tuple(args.algos),
        trials=args.trials or trials,
        base_seed=args.seed,
        dictionary="owt",
        dict_params={"filters": ["db1", "db2", "db3"], "levels": 2},
        sweep_param="sampling_ratio",
        sweep_values=tuple(args.mn) if args.mn else ratios,
        outer={"max_outer": args.max_outer},
        inner={"max_iterations": args.max_inner},
    )


def _dictionary_sweep_spec(args) -> ExperimentSpec:
    sweeps = ("owt:db1:1", "owt:db1+db2:1", "owt:db1+db2:2",
              "uwt:db1:1", "uwt:db1+db2:1")
    gen = {"n1": 64, "n2": 64, "complex": False}
    if args.paper_scale:
        gen = {"n1": 96, "n2": 96, "complex": False}
    return ExperimentSpec(
        name="dictionary-sweep",
        generator="shepp_logan",
        gen_params=gen,
        operator="spread_spectrum",
        sampling_ratio=0.4,
        measurement_snr_db=args.snr if args.snr is not None else 30.0,
        algorithms=("co_irw_l1",) if tuple(args.algos) == _DEFAULT_ALGOS else tuple(args.algos),
        trials=args.trials or 3,
        base_seed=args.seed,
        dictionary="uwt",
        sweep_param="dictionary",
        sweep_values=sweeps,
        outer={"max_outer": args.max_outer},
        inner={"max_iterations": args.max_inner},
    )


_PRESETS = {
    "alpha-sweep": _alpha_sweep_spec,
    "image": _image_spec,
    "dmri": _dmri_spec,
    "dictionary-sweep": _dictionary_sweep_spec,
}

_DEFAULT_ALGOS = ("l1", "irw_l1", "co_l1", "co_irw_l1")


# ---------------------------------------------------------------------------
# Manifest plumbing
# ---------------------------------------------------------------------------


def _write_manifest(path, command: str, spec: ExperimentSpec, threads: int) -> None:
    manifest = {
        "tool": "cosparse",
        "version": __version__,
        "command": command,
        "threads": threads,
        "spec": spec.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_manifest(path) -> tuple[str, ExperimentSpec, int]:
    with open(path) as fh:
        manifest = json.load(fh)
    return (
        manifest["command"],
        ExperimentSpec.from_dict(manifest["spec"]),
        int(manifest.get("threads", 1)),
    )


def _emit_experiment(spec: ExperimentSpec, out_dir: str, threads: int,
                     dump_recons: bool = False) -> None:
    os.makedirs(out_dir, exist_ok=True)
    table = run_trials(spec, threads=threads,
                       dump_dir=out_dir if dump_recons else None)
    results_to_csv(table.records, os.path.join(out_dir, f"{spec.name}_results.csv"))
    medians_to_csv(table, spec.name, os.path.join(out_dir, f"{spec.name}_medians.csv"))
    _write_manifest(os.path.join(out_dir, f"{spec.name}_manifest.json"),
                    "experiment", spec, threads)
    for (algorithm, sv), stats in sorted(table.medians.items(), key=lambda kv: str(kv[0])):
        print(f"{spec.name} {algorithm:12s} sweep={sv}: "
              f"median {stats['median_snr_db']:.2f} dB over {stats['trial_count']} trials")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_recover(args) -> int:
    if args.replay:
        command, spec, _ = _load_manifest(args.replay)
        if command != "recover":
            raise SystemExit(f"manifest describes a {command!r} run, not recover")
    else:
        algo = args.algo.replace("-", "_")
        if args.gen == "finite-diff":
            generator = "finite_diff_2d"
            gen_params = {"n": args.size, "total_transitions": args.transitions,
                          "alpha": args.alpha}
            dictionary, dict_params = "finite_difference", {}
            operator = "spread_spectrum"
        elif args.gen == "shepp":
            generator = "shepp_logan"
            gen_params = {"n1": args.size, "n2": args.size, "complex": True}
            dictionary, dict_params = "uwt", {"filters": ["db1"], "levels": 1}
            operator = "spread_spectrum"
        elif args.gen == "dmri":
            generator = "dmri_profile"
            gen_params = {"n1": max(args.size, 48), "t_count": args.frames, "seed": 0}
            dictionary, dict_params = "owt", {"filters": ["db1", "db2", "db3"], "levels": 2}
            operator = "partial_fourier_video"
        elif args.gen == "image":
            if not args.image:
                raise SystemExit("--gen image requires --image PATH")
            generator = "image_file"
            gen_params = {"path": args.image}
            dictionary, dict_params = "uwt", {"filters": ["db1", "db2"], "levels": 1}
            operator = "spread_spectrum"
        else:
            raise SystemExit(f"unknown generator {args.gen!r}")
        if args.dict:
            from .experiments import parse_dictionary_spec

            parsed = parse_dictionary_spec(args.dict)
            dictionary = parsed.pop("kind")
            dict_params = parsed
        spec = ExperimentSpec(
            name="recover",
            generator=generator,
            gen_params=gen_params,
            operator=operator,
            sampling_ratio=args.mn,
            measurement_snr_db=args.snr,
            algorithms=(algo,),
            trials=1,
            base_seed=args.seed,
            dictionary=dictionary,
            dict_params=dict_params,
            outer={"max_outer": args.max_outer,
                   "epsilon": args.eps, "varepsilon": args.vareps,
                   **({"eps_d": args.eps_d} if args.eps_d is not None else {})},
            inner={"max_iterations": args.max_inner},
        )

    os.makedirs(args.out, exist_ok=True)
    records, results, x_true, shape = run_single_trial(spec, None, 0)
    algorithm = spec.algorithms[0]
    result = results[algorithm]
    if isinstance(result, Exception):
        print(f"recovery failed: {result}", file=sys.stderr)
        return EXIT_FAILURE

    rec = records[0]
    dump = os.path.join(args.out, f"recover_{algorithm}_none_{rec.seed}.pgm")
    write_pgm(dump, np.asarray(result.x_hat).reshape(shape), normalize=True)
    trace_path = os.path.join(args.out, "trace.csv")
    _write_trace_csv(result, trace_path)
    _write_manifest(os.path.join(args.out, "manifest.json"), "recover", spec, 1)
    print(f"recovery SNR: {rec.recovery_snr_db:.2f} dB "
          f"({len(result.trace)} outer iterations, {rec.wall_time_s:.2f} s)")
    print(f"artifacts: {dump}, {trace_path}, manifest.json")
    return EXIT_OK


def _write_trace_csv(result, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "band", "lambda", "eps_d", "band_l1_norm",
                         "objective", "inner_iters"])
        for row in result.trace_rows():
            writer.writerow([row["t"], row["band"], repr(row["lambda"]),
                             row["eps_d"] if row["eps_d"] == "" else repr(row["eps_d"]),
                             repr(row["band_l1_norm"]), repr(row["objective"]),
                             row["inner_iters"]])


def cmd_experiment(args) -> int:
    if args.replay:
        command, spec, threads = _load_manifest(args.replay)
        if command != "experiment":
            raise SystemExit(f"manifest describes a {command!r} run, not experiment")
        _emit_experiment(spec, args.out, args.threads or threads,
                         dump_recons=args.dump_recons)
        return EXIT_OK
    if args.name not in _PRESETS:
        raise SystemExit(f"unknown experiment {args.name!r}; expected one of {sorted(_PRESETS)}")
    spec = _PRESETS[args.name](args)
    _emit_experiment(spec, args.out, args.threads or 1, dump_recons=args.dump_recons)
    return EXIT_OK


def cmd_certify(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    results = run_certificates(args.seed, lambda_update_scale=1.0 + args.perturb_lambda)
    all_passed = True
    for res in results:
        print(("PASS" if res.passed else "FAIL") + f" {res.name}: {res.detail}")
        if not res.passed:
            all_passed = False
            replay = {
                "certificate": res.name,
                "seed": args.seed,
                "perturb_lambda": args.perturb_lambda,
                "instance": res.instance,
            }
            path = os.path.join(args.out, f"failed_{res.name}.json")
            with open(path, "w") as fh:
                json.dump(replay, fh, indent=2, sort_keys=True)
                fh.write("\n")
            print(f"     failing instance written to {path}")
    return EXIT_OK if all_passed else EXIT_FAILURE


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _apply_config_defaults(parser, subparsers, argv):
    """Pre-scan for --config and fold file values in as parser defaults
    (flags given on the command line still win)."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        parser.error("--config requires a path")
    with open(path) as fh:
        values = json.load(fh)
    defaults = {k.replace("-", "_"): v for k, v in values.items()}
    for sub in subparsers.values():
        sub.set_defaults(**defaults)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosparse",
        description="Composite iteratively-reweighted L1 sparse recovery",
    )
    parser.add_argument("--version", action="version", version=f"cosparse {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of flag defaults (flags override)")
        p.add_argument("--out", default=os.environ.get("COSPARSE_OUT", "cosparse_out"),
                       help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for trials (1 = bitwise deterministic)")

    rec = sub.add_parser("recover", help="single reconstruction")
    common(rec)
    rec.add_argument("--replay", help="rerun a recover manifest")
    rec.add_argument("--algo", default="co_l1",
                     choices=["l1", "irw-l1", "irw_l1", "co-l1", "co_l1",
                              "co-irw-l1-eps", "co_irw_l1_eps", "co-irw-l1", "co_irw_l1"])
    rec.add_argument("--gen", default="finite-diff",
                     choices=["finite-diff", "shepp", "dmri", "image"])
    rec.add_argument("--image", help="input PGM for --gen image")
    rec.add_argument("--alpha", type=float, default=9.0)
    rec.add_argument("--transitions", type=int, default=20)
    rec.add_argument("--size", type=int, default=32)
    rec.add_argument("--frames", type=int, default=16)
    rec.add_argument("--mn", type=float, required=False, help="sampling ratio M/N")
    rec.add_argument("--snr", type=float, default=40.0)
    rec.add_argument("--dict", help="dictionary spec, e.g. uwt:db1:1 or fd")
    rec.add_argument("--max-outer", type=int, default=16)
    rec.add_argument("--max-inner", type=int, default=60)
    rec.add_argument("--eps", type=float, default=0.0)
    rec.add_argument("--eps-d", type=float, default=None)
    rec.add_argument("--vareps", type=float, default=0.0)

    exp = sub.add_parser("experiment", help="run a trial-family experiment")
    common(exp)
    exp.add_argument("name", nargs="?", default="alpha-sweep",
                     choices=list(_PRESETS))
    exp.add_argument("--replay", help="rerun an experiment manifest")
    exp.add_argument("--paper-scale", action="store_true",
                     help="use the original protocol sizes instead of desk scale")
    exp.add_argument("--trials", type=int, default=None)
    exp.add_argument("--algos", nargs="+", default=list(_DEFAULT_ALGOS))
    exp.add_argument("--mn", nargs="+", type=float, default=None)
    exp.add_argument("--snr", type=float, default=None)
    exp.add_argument("--target", default="shepp", choices=["shepp", "file"])
    exp.add_argument("--image", help="input PGM when --target file")
    exp.add_argument("--crop", help="center crop rows,cols for --target file")
    exp.add_argument("--dict", help="dictionary spec override")
    exp.add_argument("--max-outer", type=int, default=16)
    exp.add_argument("--max-inner", type=int, default=60)
    exp.add_argument("--dump-recons", action="store_true",
                     help="write each reconstruction as a PGM")

    cert = sub.add_parser("certify", help="run the numerical certificate suite")
    common(cert)
    cert.add_argument("--perturb-lambda", type=float, default=0.0,
                      help="inject a relative weight-update error (harness self-check)")

    return parser, {"recover": rec, "experiment": exp, "certify": cert}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    _apply_config_defaults(parser, subparsers, argv)
    args = parser.parse_args(argv)
    if args.subcommand == "recover":
        if not args.replay and args.mn is None:
            parser.error("recover requires --mn (sampling ratio) unless --replay is given")
        args.algo = args.algo.replace("-", "_")
        return cmd_recover(args)
    if args.subcommand == "experiment":
        args.algos = [a.replace("-", "_") for a in args.algos]
        return cmd_experiment(args)
    return cmd_certify(args)


if __name__ == "__main__":
    sys.exit(main())
