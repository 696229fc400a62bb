"""Command-line entry point: ``selfdb <command> [options]``.

Exit codes: 0 success, 1 property failure, 2 usage/config error, 3 I/O error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dataio
from .checks import SUITES, run_suite
from .errors import DanglingReferenceError, FormatError, InvalidArgument, TrainingDiverged
from .metrics import evaluate, write_metrics_csv
from .model import ModelParams
from .operators import Measurement, apply_mask, make_nested_triple, simulate_measurement, synthetic_maps
from .processes import PROCESS_KINDS
from .samplers import sample_ambient_db, sample_db, sample_ddm, sample_selfdb
from .schedules import DdmSchedule, constant_sigma, linear_beta_schedule, table_sigma
from .tensors import NoiseDraw
from .training import TrainConfig, TrainingSet, train, write_loss_csv

log = logging.getLogger("selfdb")

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3, 4

PATH_KEYS = {"dataset", "measurements", "masks", "checkpoint", "loss_csv"}
CONFIG_KEYS = TrainConfig.field_names() | PATH_KEYS | {"coils"}


class UsageError(Exception):
    pass


def _fraction(text: str) -> float:
    return float(Fraction(text.strip()))


def _rates(text: str) -> tuple[float, float, float]:
    try:
        rates = tuple(_fraction(r) for r in text.split(","))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from exc
    if len(rates) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated rates")
    return rates


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def cmd_gen_data(args):
    spec = dataio.PhantomSpec(size=args.size, n_ellipses=args.n_ellipses, phase_amplitude=args.phase_amplitude, seed=args.seed)
    ds = dataio.gen_dataset(spec, args.n, start=args.start)
    crc = dataio.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} images of {args.size}x{args.size} to {args.out} crc32={crc:08x}")


def cmd_gen_masks(args):
    triple = make_nested_triple(args.width, args.rates, args.center_fraction, NoiseDraw(args.seed))
    manifest = dataio.write_triple(triple, args.out_dir, args.rates)
    print(f"wrote masks with {[len(m.selected) for m in triple]} columns, manifest {manifest}")


def cmd_simulate(args):
    ds = dataio.read_dataset(args.dataset)
    mask_dir = Path(args.masks)
    triple = dataio.read_triple(mask_dir)
    name = {"m": 0, "m_bar": 1, "m_prime": 2}[args.mask]
    mask = list(triple)[name]
    h, w = ds.images.shape[1:]
    maps = synthetic_maps(args.coils, h, w) if args.coils > 1 else None
    ys = np.stack([
        simulate_measurement(x, maps, mask, args.noise_std, NoiseDraw(args.seed).child(i)).data for i, x in enumerate(ds.images)
    ])
    out = Path(args.out)
    rel = os.path.relpath(mask_dir / dataio.TRIPLE_NAMES[name], out.parent.resolve() if out.parent.exists() else out.parent)
    crc = dataio.write_measurements(ys, rel, out)
    print(f"wrote {len(ys)} measurements ({args.mask}, {len(mask.selected)} columns) to {out} crc32={crc:08x}")


def load_config(path) -> tuple[TrainConfig, dict]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    unknown = sorted(set(raw) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")
    paths = {}
    for key in PATH_KEYS & set(raw):
        p = Path(raw.pop(key))
        paths[key] = p if p.is_absolute() else path.parent / p
    coils = int(raw.pop("coils", 1))
    try:
        cfg = TrainConfig(**raw)
    except (TypeError, InvalidArgument) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    if "checkpoint" not in paths:
        raise UsageError("config needs a 'checkpoint' output path")
    needed = {
        "ddm": ["dataset"],
        "db": ["dataset", "measurements"],
        "ambient_ddm": ["measurements", "masks"],
        "ambient_db": ["measurements", "masks"],
        "selfdb": ["measurements", "masks"],
    }[cfg.process_kind]
    for key in needed:
        if key not in paths:
            raise UsageError(f"{cfg.process_kind} config needs '{key}'")
        if not paths[key].exists():
            raise UsageError(f"config path {key}={paths[key]} does not exist")
    paths["coils"] = coils
    return cfg, paths


def _checkpoint_meta(cfg: TrainConfig, coils: int) -> dict:
    meta = {"process_kind": cfg.process_kind, "conditional": cfg.conditional, "coils": coils, "seed": cfg.seed}
    if cfg.is_ddm_family:
        meta["ddm_schedule"] = {"T": cfg.T, "beta_min": cfg.beta_min, "beta_max": cfg.beta_max}
    else:
        meta["bridge_schedule"] = cfg.bridge_schedule().to_dict()
    return meta


def cmd_train(args):
    cfg, paths = load_config(args.config)
    coils = paths["coils"]
    data = TrainingSet()
    if "dataset" in paths:
        data.images = dataio.read_dataset(paths["dataset"]).images
    if "measurements" in paths:
        meas, mask, _ = dataio.read_measurements(paths["measurements"])
        data.measurements = np.stack([m.data for m in meas])
        if "masks" in paths:
            data.triple = dataio.read_triple(paths["masks"])
            if cfg.process_kind != "db" and mask != data.triple.m:
                raise UsageError("training measurements must be sampled with the triple's outer mask m")
    if data.images is not None and data.measurements is not None and len(data.images) != len(data.measurements):
        raise UsageError("dataset and measurements differ in count")
    h, w = data.image_shape
    data.maps = synthetic_maps(coils, h, w) if coils > 1 else None
    params, records = train(cfg, data)
    crc = dataio.write_checkpoint(params, paths["checkpoint"], _checkpoint_meta(cfg, coils))
    loss_csv = paths.get("loss_csv", Path(str(paths["checkpoint"]) + ".loss.csv"))
    write_loss_csv(records, loss_csv)
    print(f"trained {cfg.process_kind} for {cfg.iterations} iterations; checkpoint {paths['checkpoint']} crc32={crc:08x}")


def _bridge_from_meta(meta):
    d = meta["bridge_schedule"]
    if d["kind"] == "constant":
        return constant_sigma(d["sigma0"])
    return table_sigma(d["t"], d["sigma"])


def cmd_infer(args):
    params, meta = dataio.read_checkpoint(args.ckpt)
    kind = meta.get("process_kind")
    if kind not in PROCESS_KINDS:
        raise UsageError(f"checkpoint has unknown process kind {kind!r}")
    meas, mask, _ = dataio.read_measurements(args.measurements)
    h, w = meas[0].shape[-2:]
    if (h, w) != (params.arch.height, params.arch.width):
        raise UsageError(f"measurements are {h}x{w}, checkpoint expects {params.arch.height}x{params.arch.width}")
    coils = meta.get("coils", 1)
    if meas[0].shape[0] != coils:
        raise UsageError(f"measurements have {meas[0].shape[0]} coils, checkpoint was trained with {coils}")
    maps = synthetic_maps(coils, h, w) if coils > 1 else None
    triple = dataio.read_triple(args.masks) if args.masks else None
    if kind in ("ambient_ddm", "ambient_db", "selfdb") and triple is None:
        raise UsageError(f"{kind} inference needs --masks")
    if triple is not None and kind != "db" and mask != triple.m_prime:
        raise UsageError("test measurements must be sampled with the triple's m_prime")
    if kind == "ddm":
        raise UsageError("unconditional ddm checkpoints generate images; they do not reconstruct measurements")
    recons = []
    trajectory = []
    for i, y in enumerate(meas):
        draw = NoiseDraw(args.seed).child(i)
        traj = trajectory if (args.dump_trajectory and i == args.trajectory_index) else None
        if kind == "selfdb":
            x = sample_selfdb(params, _bridge_from_meta(meta), y, triple, args.steps, draw, maps, trajectory=traj)
        elif kind == "ambient_db":
            x = sample_ambient_db(params, _bridge_from_meta(meta), y, triple.m_prime, args.steps, draw, maps, trajectory=traj)
        elif kind == "db":
            x = sample_db(params, _bridge_from_meta(meta), y, args.steps, draw, maps, trajectory=traj)
        else:
            s = meta["ddm_schedule"]
            sched = linear_beta_schedule(s["T"], s["beta_min"], s["beta_max"])
            cond = apply_mask(triple.m_prime, y) if params.arch.cond_channels else None
            x = sample_ddm(params, sched, (h, w), draw, condition=cond, m_prime=triple.m_prime, maps=maps, trajectory=traj)
        recons.append(x)
    crc = dataio.write_dataset(dataio.Dataset(np.stack(recons)), args.out)
    print(f"reconstructed {len(recons)} images with {kind}; wrote {args.out} crc32={crc:08x}")
    if args.dump_trajectory:
        if not trajectory:
            raise UsageError(f"trajectory index {args.trajectory_index} out of range")
        ts, states = zip(*trajectory)
        dataio.write_dataset(dataio.Dataset(np.stack(states), t_values=list(ts)), args.dump_trajectory)
        print(f"wrote {len(states)} trajectory states to {args.dump_trajectory}")


def cmd_eval(args):
    recon = dataio.read_dataset(args.recon).images
    ref = dataio.read_dataset(args.ref).images
    if len(recon) != len(ref) or recon.shape[1:] != ref.shape[1:]:
        raise UsageError(f"reconstructions {recon.shape} and references {ref.shape} do not match")
    report = evaluate(recon, ref)
    write_metrics_csv(report, args.out)
    print(f"mean nrmse {report.nrmse:.4f} ssim {report.ssim:.4f} over {len(ref)} images")


def cmd_check(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = []
    for name in names:
        for check in run_suite(name):
            print(f"[{name}] {check.line()}")
            if not check.passed:
                failed.append(check.name)
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_PROPERTY
    print("all checks passed")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="selfdb", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic phantom dataset (SDBD)")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--start", type=int, default=0, help="index of the first phantom")
    g.add_argument("--n-ellipses", type=int, default=12)
    g.add_argument("--phase-amplitude", type=float, default=0.5)
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("gen-masks", help="write a nested mask triple (SDBM x3 + manifest.json)")
    g.add_argument("--width", type=_positive_int, required=True)
    g.add_argument("--rates", type=_rates, default=(1 / 4, 1 / 6, 1 / 8), help="r1,r2,r3; fractions like 1/6 accepted")
    g.add_argument("--center-fraction", type=_fraction, default=1 / 16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen_masks)

    g = sub.add_parser("simulate", help="measure a dataset with one mask of a triple (SDBY)")
    g.add_argument("--dataset", required=True)
    g.add_argument("--masks", required=True, help="mask triple directory")
    g.add_argument("--mask", choices=("m", "m_bar", "m_prime"), default="m")
    g.add_argument("--noise-std", type=float, default=0.0)
    g.add_argument("--coils", type=_positive_int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_simulate)

    g = sub.add_parser("train", help="train a reconstructor from a JSON run config")
    g.add_argument("--config", required=True)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("infer", help="reconstruct measurements with a trained checkpoint")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--measurements", required=True)
    g.add_argument("--masks")
    g.add_argument("--steps", type=_positive_int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--dump-trajectory")
    g.add_argument("--trajectory-index", type=int, default=0)
    g.set_defaults(func=cmd_infer)

    g = sub.add_parser("eval", help="NRMSE/SSIM of reconstructions against references")
    g.add_argument("--recon", required=True)
    g.add_argument("--ref", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("check", help="run built-in property suites")
    g.add_argument("--suite", choices=(*SUITES, "all"), default="all")
    g.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except (UsageError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatError, DanglingReferenceError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
