"""Command-line entry point: ``rulsmc <command> ...``.

Exit status: 0 success, 1 runtime failure, 2 usage or input validation error,
3 replay produced different draws. ``RULSMC_WORKERS`` (comma-separated
``host:port``) supplies worker endpoints when neither the config nor
``--workers`` does.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from . import records
from .damage import GrowthLaw, NoFailureError, failure_cycle
from .data import ObservationFormatError, emit_observations, ingest_observations, synth_data
from .fit import least_squares_fit
from .mcmc import ConfigError
from .rul import DEFAULT_HORIZON, default_horizon, predictive_band, rul_series, rul_table

log = logging.getLogger("rulsmc")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2, 3


def _csv_ints(text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_strs(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _overrides(args):
    """Flag values that override config keys; ``None`` means not given."""
    o = {}

    def put(section, key, val):
        if val is not None:
            if section is None:
                o[key] = val
            else:
                o.setdefault(section, {})[key] = val

    put(None, "seed", getattr(args, "seed", None))
    put(None, "model_cost_s", getattr(args, "model_cost", None))
    put("law", "a0_mm", getattr(args, "a0", None))
    put("law", "a_fail_mm", getattr(args, "a_fail", None))
    put("mcmc", "n_samples", getattr(args, "n_samples", None))
    put("mcmc", "n_burn", getattr(args, "n_burn", None))
    put("mcmc", "thin", getattr(args, "thin", None))
    put("smc", "n_particles", getattr(args, "n_particles", None))
    put("smc", "n_mcmc", getattr(args, "n_mcmc", None))
    put("executor", "mode", getattr(args, "mode", None))
    put("executor", "workers", getattr(args, "workers", None))
    put("executor", "n_threads", getattr(args, "threads", None))
    put("executor", "batch_size", getattr(args, "batch_size", None))
    put("synth", "n_points", getattr(args, "n_points", None))
    return o


def _config(args):
    return cfgmod.load_config(getattr(args, "config", None), _overrides(args))


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)


# commands


def cmd_template(args):
    _write(args.output, json.dumps(cfgmod.template(), indent=2) + "\n")
    return EXIT_OK


def cmd_synth(args):
    cfg = _config(args)
    s = cfg["synth"]
    law = GrowthLaw(a0=float(s["a0_mm"]), a_fail=float(cfg["law"]["a_fail_mm"]))
    obs = synth_data(cfgmod.build_truth(cfg), law, int(s["n_points"]), tuple(s["cycle_span_cycles"]),
                     seed=int(cfg["seed"]))
    emit_observations(obs, args.output)
    print(f"wrote {obs.n} observations to {args.output}")
    return EXIT_OK


def cmd_fit(args):
    cfg = _config(args)
    obs = ingest_observations(args.data)
    law = cfgmod.build_law(cfg, obs)
    fit = least_squares_fit(obs, law, prior=cfgmod.build_prior(cfg))
    p = fit.params
    horizon = cfg["rul"]["horizon_cycles"]
    try:
        n_fail = str(failure_cycle(p, law.with_horizon(horizon or DEFAULT_HORIZON)))
    except NoFailureError:
        n_fail = "none"
    lines = ["quantity\tvalue",
             f"log10_alpha\t{p.log10_alpha:.10g}", f"beta\t{p.beta:.10g}", f"sigma_mm\t{p.sigma:.10g}",
             f"sum_squares_mm2\t{fit.sum_squares:.10g}", f"failure_cycle\t{n_fail}",
             f"converged\t{int(fit.converged)}", f"restarts\t{fit.n_restarts}"]
    _write(args.output, "\n".join(lines) + "\n")
    if not fit.converged:
        log.warning("least-squares fit did not converge; reporting the best point found")
    return EXIT_OK


def _run_sampler(sampler, args):
    cfg = _config(args)
    obs = ingest_observations(args.data)
    executor = cfgmod.build_executor(cfg, records._env_workers()) if sampler == "smc" else None
    samples, target, seconds = records.execute(sampler, cfg, obs, executor)
    rec = records.new_record(sampler, cfg, obs, samples, target, seconds)
    records.save_record(rec, obs, args.out)
    sys.stdout.write(records.summary_table(rec.draws, rec.names))
    print(f"{sampler}: {len(rec.draws)} draws, acceptance {rec.acceptance_rate:.3f}, "
          f"{seconds:.2f} s; record written to {args.out}")
    return EXIT_OK


def cmd_mcmc(args):
    return _run_sampler("mcmc", args)


def cmd_smc(args):
    return _run_sampler("smc", args)


def cmd_rul(args):
    rec, obs = records.load_record(args.record)
    cfg = rec.config
    law = cfgmod.build_law(cfg, obs)
    out = args.out or args.record
    checkpoints = args.checkpoints or cfg["rul"]["checkpoints_cycles"]
    start, stop, num = args.grid or cfg["rul"]["grid_cycles"]
    grid = np.round(np.linspace(start, stop, int(num)))
    horizon = cfg["rul"]["horizon_cycles"]
    horizon = default_horizon(obs, law) if horizon is None else int(horizon)
    band = predictive_band(rec.samples(), law, grid, seed=rec.seed)
    np.savetxt(os.path.join(out, "band.tsv"), band.as_table(), delimiter="\t", comments="", fmt="%.10g",
               header="cycle\tlower_mm\tmedian_mm\tupper_mm")
    series = rul_series(rec.samples(), law, checkpoints, horizon=horizon)
    table = rul_table(series)
    np.savetxt(os.path.join(out, "rul.tsv"), table, delimiter="\t", comments="", fmt="%.10g",
               header="cycle\tq05\tq25\tq50\tq75\tq95\tcensored_fraction")
    print("cycle\tq05\tq25\tq50\tq75\tq95\tcensored")
    for row in table:
        print("\t".join(f"{v:.6g}" for v in row))
    return EXIT_OK


def cmd_worker(args):
    from .dist.worker import serve_worker, worker_from_args

    obs, law, prior = worker_from_args(args)
    serve_worker(args.bind, obs, law, prior, args.model_cost)
    return EXIT_OK


def cmd_bench(args):
    from .dist.bench import BenchCell, BenchProblem, run_benchmark

    cfg = _config(args)
    obs = ingest_observations(args.data)
    target = records.make_target(cfg, obs)
    if args.model_cost is None and target.model_cost == 0.0:
        log.warning("model cost is 0; remote timings will be dominated by protocol overhead")
    smc = cfgmod.build_smc(cfg)

    def batch(threads):
        # default: one job per dispatcher thread, otherwise extra threads sit idle
        return args.batch_size or -(-smc.n_particles // threads)

    grid = []
    for mode in args.modes:
        if mode in ("serial",):
            grid.append(BenchCell(mode))
        elif mode == "threaded":
            grid.extend(BenchCell(mode, t, batch(t)) for t in args.thread_counts)
        else:
            grid.extend(BenchCell(mode, args.threads_per_worker * n, batch(args.threads_per_worker * n), n)
                        for n in args.worker_counts)
    workers = list(cfg["executor"]["workers"]) or records._env_workers() or None
    baseline = cfgmod.build_mcmc(cfg) if args.baseline_wall_time is None else args.baseline_wall_time
    report = run_benchmark(grid, BenchProblem(target, smc, args.workload), baseline,
                           repetitions=args.repetitions, workers=workers, sanity=args.sanity)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        _write(os.path.join(args.out, "speedup.tsv"), text)
    return EXIT_OK if all(r.ok for r in report.rows) else EXIT_FAILURE


def cmd_replay(args):
    from .dist.executor import MutationExecutor

    rec, obs = records.load_record(args.record)
    executor = None
    if rec.sampler == "smc" and (args.mode or args.workers or args.threads or args.batch_size):
        base = rec.config["executor"]
        mode = args.mode or base["mode"]
        executor = MutationExecutor(
            mode=mode,
            workers=tuple(args.workers or base["workers"] or records._env_workers()) if mode.startswith("remote")
            else (),
            n_threads=args.threads or base["n_threads"],
            batch_size=args.batch_size if args.batch_size is not None else base["batch_size"])
    _, same = records.replay(rec, obs, executor)
    if same:
        print(f"replay {rec.run_id}: draws identical ({len(rec.draws)} x {rec.draws.shape[1]})")
        return EXIT_OK
    print(f"replay {rec.run_id}: draws DIFFER from the record", file=sys.stderr)
    return EXIT_MISMATCH


# argument parsing


def _add_common(p, data=True):
    p.add_argument("--config", help="run-config JSON file (see `rulsmc template`)")
    p.add_argument("--seed", type=int, help="master seed")
    if data:
        p.add_argument("--data", required=True, help="observations: cycle, crack_length_mm")
        p.add_argument("--a0", type=float, help="initial crack length, mm")
        p.add_argument("--a-fail", type=float, help="failure crack length, mm")


def _add_executor(p):
    p.add_argument("--mode", choices=("serial", "threaded", "remote-model-eval", "remote-full-mutation"))
    p.add_argument("--workers", type=_csv_strs, help="comma-separated host:port list")
    p.add_argument("--threads", type=int, help="dispatcher threads")
    p.add_argument("--batch-size", type=int, help="particles per job")


def build_parser():
    parser = argparse.ArgumentParser(prog="rulsmc", description="Bayesian crack-growth calibration and RUL.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("template", help="print the default run config")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_template)

    p = sub.add_parser("synth", help="generate synthetic observations")
    _add_common(p, data=False)
    p.add_argument("--n-points", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="least-squares fit")
    _add_common(p)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mcmc", help="adaptive Metropolis calibration")
    _add_common(p)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--n-burn", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--out", required=True, help="run record directory")
    p.set_defaults(func=cmd_mcmc)

    p = sub.add_parser("smc", help="tempered SMC calibration")
    _add_common(p)
    _add_executor(p)
    p.add_argument("--n-particles", type=int)
    p.add_argument("--n-mcmc", type=int)
    p.add_argument("--model-cost", type=float, help="busy-wait seconds per model evaluation")
    p.add_argument("--out", required=True, help="run record directory")
    p.set_defaults(func=cmd_smc)

    p = sub.add_parser("rul", help="predictive band and RUL tables from a run record")
    p.add_argument("--record", required=True)
    p.add_argument("--checkpoints", type=_csv_ints, help="comma-separated cycles")
    p.add_argument("--grid", type=_csv_ints, help="start,stop,count")
    p.add_argument("--out", help="output directory (default: the record directory)")
    p.set_defaults(func=cmd_rul)

    from .dist.worker import add_worker_args

    p = sub.add_parser("worker", help="serve mutation jobs over HTTP")
    add_worker_args(p)
    p.set_defaults(func=cmd_worker)

    p = sub.add_parser("bench", help="executor speedup benchmark")
    _add_common(p)
    p.add_argument("--modes", type=_csv_strs, default=["serial", "remote-model-eval", "remote-full-mutation"])
    p.add_argument("--worker-counts", type=_csv_ints, default=[1, 2, 4, 8])
    p.add_argument("--thread-counts", type=_csv_ints, default=[1, 2, 4])
    p.add_argument("--threads-per-worker", type=int, default=1)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--n-particles", type=int)
    p.add_argument("--model-cost", type=float, help="busy-wait seconds per model evaluation")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--workload", choices=("mutation", "smc"), default="mutation")
    p.add_argument("--n-samples", type=int, help="baseline MCMC length")
    p.add_argument("--n-burn", type=int, help="baseline MCMC burn-in")
    p.add_argument("--baseline-wall-time", type=float, help="skip the baseline run and use this many seconds")
    p.add_argument("--sanity", action="store_true", help="add the like-for-like serial row")
    p.add_argument("--out", help="directory for speedup.tsv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="re-run a record and verify identical draws")
    p.add_argument("record")
    _add_executor(p)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigFileError, ObservationFormatError, ConfigError, ValueError,
            FileNotFoundError, argparse.ArgumentTypeError) as exc:
        print(f"rulsmc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except records.ReplayMismatch as exc:
        print(f"rulsmc {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except KeyboardInterrupt:
        return EXIT_FAILURE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"rulsmc {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
