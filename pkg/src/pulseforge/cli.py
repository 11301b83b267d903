"""Command-line entry point: ``pulseforge train | prepare | study | refine | inspect-checkpoint``.

Exit codes: 0 success, 2 user/config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, studies
from .config import ConfigError, RunConfig, load_config, parse_angle, parse_int_list, parse_target
from .network import CheckpointError, MlpModel, load_checkpoint, save_checkpoint
from .quantum import NumericalError, SystemConfig
from .reports import write_metadata, write_report, write_table
from .states import bloch_grid_arrays, bloch_states
from .training import evaluate, evaluate_sequences, train

log = logging.getLogger("pulseforge")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 2, 3
STUDIES = ("pulse_count", "training_size", "truncation", "bloch_map", "trajectory", "azimuthal", "photon_number")


def _out_dir(args, cfg: RunConfig, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path(cfg.values["io"]["out_dir"]) / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_run(out: Path, cfg: RunConfig, **extra) -> None:
    (out / "resolved_config.ini").write_text(cfg.to_ini())
    write_metadata(out / "run.meta.json", seeds=asdict(cfg.seeds), **extra)


def _system_for(model: MlpModel, base: SystemConfig) -> SystemConfig:
    try:
        return replace(
            base,
            n=model.n if model.n is not None else int(round(np.sqrt(model.input_dim + 1))),
            n_comp=model.n_comp if model.n_comp is not None else base.n_comp,
            num_pulses=model.num_pulses,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _checkpoint_path(args, cfg: RunConfig) -> str:
    path = getattr(args, "checkpoint", None) or cfg.values["io"]["checkpoint"]
    if not path:
        raise ConfigError("this command needs a checkpoint (--checkpoint or [io] checkpoint)")
    if not Path(path).exists():
        raise ConfigError(f"checkpoint {path} does not exist")
    return path


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    system, cost_cfg, seeds = cfg.system, cfg.training, cfg.seeds
    out = _out_dir(args, cfg, "train")
    _echo_run(out, cfg, command="train")
    model, tlog = train(
        cost_cfg,
        system,
        seeds,
        cfg.hidden_sizes,
        cfg.activation,
        dump_path=out / "divergence_dump.npz",
        progress=lambda r: log.info("epoch %d cost %.6g val %.6g", r.epoch, r.train_cost, r.val_infidelity),
    )
    save_checkpoint(model, out / "checkpoint.json")
    tlog.write(out / "training_log.jsonl")
    write_metadata(out / "training_summary.json", **tlog.summary())
    print(f"checkpoint: {out / 'checkpoint.json'}")
    print(f"best validation infidelity: {tlog.best_val_infidelity:.6g} (epoch {tlog.best_epoch})")
    return EXIT_OK


def _fmt(x) -> str:
    return repr(float(x))


def _print_program(seq, ev, label="") -> None:
    print(f"pulse program{label}: N={seq.num_pulses}, T={_fmt(seq.total_time)}")
    print("  k  zeta  xi  phi  varphi")
    for k, p in enumerate(seq.pulses):
        print(f"  {k} " + " ".join(_fmt(v) for v in p.as_array()))
    print(f"fidelity={_fmt(ev.fidelity[0])} purity={_fmt(ev.purity[0])} leakage={_fmt(ev.leakage[0])}")


def cmd_prepare(args) -> int:
    cfg = load_config(args.config, args.seed)
    model = load_checkpoint(_checkpoint_path(args, cfg))
    system = _system_for(model, cfg.system)
    target, notice = parse_target(args.target, system.n)
    if notice:
        print(f"notice: {notice}")
    ev = evaluate(model, target, system)
    from .quantum import PulseSequence

    seq = PulseSequence(ev.params[0], float(ev.total_time[0]))
    _print_program(seq, ev)
    if args.refine:
        res = studies.refine(model, target, cfg.refine, system)
        ref_ev = evaluate_sequences(res.sequence.params[None], [res.sequence.total_time], target[None], system)
        _print_program(res.sequence, ref_ev, " (refined)")
        print(f"used_neighbor={res.used_neighbor} accepted={res.accepted} candidates={res.candidates}")
    return EXIT_OK


def cmd_refine(args) -> int:
    """Refine one target (--target) or a Bloch grid / Haar set, reporting before/after fidelities."""
    cfg = load_config(args.config, args.seed)
    model = load_checkpoint(_checkpoint_path(args, cfg))
    system = _system_for(model, cfg.system)
    rcfg = cfg.refine
    if args.target:
        args.refine = True
        return cmd_prepare(args)
    study = cfg.study
    if system.n == 2:
        theta, phi = bloch_grid_arrays(study["resolution_theta"], study["resolution_phi"])
        targets = bloch_states(theta, phi).reshape(-1, 2)
    else:
        from .states import haar_dataset

        targets = haar_dataset(study["eval_states"], system.n, cfg.seeds.validation)
    results = studies.refine_batch(model, targets, rcfg, system)
    before = np.array([r.unrefined_fidelity for r in results])
    after = np.array([r.fidelity for r in results])
    out = _out_dir(args, cfg, "refine")
    _echo_run(out, cfg, command="refine")
    write_table(
        out / "refine.csv",
        ["index", "fidelity_before", "fidelity_after", "used_neighbor"],
        [[i, b, a, int(r.used_neighbor)] for i, (b, a, r) in enumerate(zip(before, after, results))],
    )
    summary = {
        "states": len(results),
        "below_accept_before": int(np.sum(before < rcfg.accept)),
        "below_accept_after": int(np.sum(after < rcfg.accept)),
        "mean_fidelity_before": float(before.mean()),
        "mean_fidelity_after": float(after.mean()),
    }
    write_metadata(out / "refine.meta.json", refine=asdict(rcfg), **summary)
    print(json.dumps(summary))
    return EXIT_OK


def _study_pulse_count(cfg, args, out):
    s = cfg.study
    report = studies.pulse_count_sweep(
        cfg.system.n,
        parse_int_list(s["pulse_range"]),
        s["seeds_per_point"],
        s["eval_states"],
        cfg.training,
        cfg.system,
        base_seed=cfg.seeds.init,
        coverage=s["coverage"],
        n_resamples=s["n_resamples"],
        cache_dir=cfg.values["io"]["cache_dir"] or None,
        workers=args.jobs,
        hidden_sizes=cfg.hidden_sizes,
        activation=cfg.activation,
    )
    write_report(out, "pulse_count", report, failures=report.failures, interval=report.interval)


def _study_training_size(cfg, args, out):
    s = cfg.study
    report = studies.training_size_study(
        cfg.system.n,
        parse_int_list(s["sizes"]),
        s["seeds_per_size"],
        cfg.training,
        cfg.system,
        base_seed=cfg.seeds.init,
        validation_states=s["validation_states"],
        cache_dir=cfg.values["io"]["cache_dir"] or None,
        workers=args.jobs,
        hidden_sizes=cfg.hidden_sizes,
        activation=cfg.activation,
    )
    write_report(out, "training_size", report, failures=report.failures, interval=report.interval)


def _study_truncation(cfg, args, out):
    s = cfg.study
    report = studies.truncation_study(
        cfg.system.n,
        parse_int_list(s["n_comp_candidates"]),
        parse_int_list(s["n_prepared_range"]),
        cfg.system.num_pulses,
        cfg.training,
        base_seed=cfg.seeds.init,
        eval_states=s["validation_states"],
        tolerance=s["tolerance"],
        cache_dir=cfg.values["io"]["cache_dir"] or None,
        workers=args.jobs,
        hidden_sizes=cfg.hidden_sizes,
        activation=cfg.activation,
    )
    write_report(out, "truncation", report, selected_n_comp=report.selected_n_comp, failures=report.failures)
    print(f"selected n_comp: {report.selected_n_comp}")


def _load_for_study(cfg, args):
    model = load_checkpoint(_checkpoint_path(args, cfg))
    return model, _system_for(model, cfg.system)


def _study_bloch_map(cfg, args, out):
    model, system = _load_for_study(cfg, args)
    s = cfg.study
    bmap = studies.bloch_map(model, system, (s["resolution_theta"], s["resolution_phi"]))
    write_report(out, "bloch_map", bmap, resolution=list(bmap.resolution))
    write_table(out / "bloch_map_grid.csv", ["theta_index", "phi_index", "log10_infidelity"], bmap.grid_rows())


def _study_trajectory(cfg, args, out):
    model, system = _load_for_study(cfg, args)
    target, notice = parse_target(cfg.study["target"], system.n)
    if notice:
        print(f"notice: {notice}")
    traj = studies.record_trajectory(model, target, system, cfg.study["samples_per_pulse"])
    write_report(out, "trajectory", traj, target=[[z.real, z.imag] for z in target])
    print(f"final fidelity={_fmt(traj.fidelity[-1])} purity={_fmt(traj.purity[-1])}")


def _study_azimuthal(cfg, args, out):
    model, system = _load_for_study(cfg, args)
    s = cfg.study
    table = studies.azimuthal_diagnostics(model, system, parse_angle(s["theta"]), s["phi_samples"])
    write_report(out, "azimuthal", table, theta=table.theta)
    for i, (pre, post) in enumerate(zip(table.trace_pre, table.trace_post)):
        width = pre.shape[1]
        header = ["phi", *[f"pre{j}" for j in range(width)], *[f"post{j}" for j in range(width)]]
        write_table(out / f"azimuthal_layer{i}.csv", header, [[p, *a, *b] for p, a, b in zip(table.phi, pre, post)])


def _study_photon_number(cfg, args, out):
    paths = [p.strip() for p in cfg.study["checkpoints"].split(",") if p.strip()]
    if getattr(args, "checkpoint", None):
        paths = [args.checkpoint, *paths]
    if not paths:
        raise ConfigError("photon_number needs checkpoints ([study] checkpoints or --checkpoint)")
    s = cfg.study
    for path in paths:
        if not Path(path).exists():
            raise ConfigError(f"checkpoint {path} does not exist")
        model = load_checkpoint(path)
        system = _system_for(model, cfg.system)
        report = studies.photon_number_study(model, system, s["samples"], s["bins"], seed=cfg.seeds.validation)
        write_report(out, f"photon_number_n{system.n}", report, checkpoint=str(path))


def cmd_study(args) -> int:
    if args.name not in STUDIES:
        raise ConfigError(f"unknown study {args.name!r}; choose from {', '.join(STUDIES)}")
    cfg = load_config(args.config, args.seed)
    for override in args.set or []:
        if "=" not in override or "." not in override.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {override!r}")
        key, value = override.split("=", 1)
        section, name = key.split(".", 1)
        if section not in cfg.values:
            raise ConfigError(f"unknown section [{section}]")
        cfg.override(section, name, value)
    out = _out_dir(args, cfg, args.name)
    _echo_run(out, cfg, command=f"study {args.name}")
    globals()[f"_study_{args.name}"](cfg, args, out)
    print(f"reports written to {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = load_checkpoint(args.path)
    info = {
        "layer_sizes": model.layer_sizes,
        "activation": model.activation,
        "n": model.n,
        "n_comp": model.n_comp,
        "num_pulses": model.num_pulses,
        "seed": model.seed,
        "parameters": int(sum(p.size for p in model.parameters())),
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulseforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--seed", type=int, help="override [seeds] seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel training workers")
        if checkpoint:
            p.add_argument("--checkpoint", help="trained model checkpoint")

    p = sub.add_parser("train", help="train a controller")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prepare", help="print the pulse program for a target")
    common(p, checkpoint=True)
    p.add_argument("target", help="'theta=.. phi=..' or comma-separated amplitudes")
    p.add_argument("--refine", action="store_true", help="apply neighbour refinement")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("study", help="run a named study")
    common(p, checkpoint=True)
    p.add_argument("name", help=" | ".join(STUDIES))
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("refine", help="refine one target or a whole grid")
    common(p, checkpoint=True)
    p.add_argument("--target", help="single target; omit to refine the configured grid")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USER if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
