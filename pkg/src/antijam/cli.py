"""Command-line entry point: detect-curve, simulate, analyze, worst-case.

Exit codes: 0 success, 1 usage/config error, 2 I/O error (including image
shape mismatch), 3 degenerate data, 4 infeasible optimization.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import detection as det
from . import ghostsim as gs
from .config import ExperimentConfig, default_config_path, resolve_pair, resolve_state, start_manifest
from .errors import DegenerateRegionError, InfeasibleLevelError, InvalidArgumentError
from .pnm import atomic_write_bytes, pgm_bytes, read_pbm, read_pgm

log = logging.getLogger("antijam")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

CSV_COLUMNS = ("pair_name", "level", "d", "p_detect", "p_false_alarm", "note")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; our contract reserves 2 for I/O.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Six significant digits, '.' separator, no locale."""
    if x is None:
        return ""
    x = float(x)
    if x == 0:
        return "0"
    return f"{x:.6g}"


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


class Run:
    """Output directory plus manifest bookkeeping for one command."""

    def __init__(self, command, cfg: ExperimentConfig, config_text: str, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
        self.manifest, self._t0 = start_manifest(command, config_text, cfg.seed)

    def write(self, name: str, data: bytes, checksum: bool = True) -> Path:
        path = self.out / name
        atomic_write_bytes(path, data)
        if checksum:
            self.manifest.add_output(path)
        return path

    def write_image(self, name: str, image) -> None:
        self.write(f"{name}.pgm", pgm_bytes(image))
        if self.cfg.png:
            _write_png(self.out / f"{name}.png", image)

    def finish(self) -> None:
        # records the output path, so it is not a checksummed primary output
        self.write("effective_config.json", self.cfg.dumps().encode("utf-8"), checksum=False)
        self.manifest.wall_clock_s = round(time.perf_counter() - self._t0, 3)
        self.write("manifest.json", self.manifest.dumps().encode("utf-8"), checksum=False)


def _write_png(path, image) -> None:
    try:
        from PIL import Image
    except ImportError:
        log.warning("Pillow not installed; skipping %s", path)
        return
    img = np.asarray(image, dtype=float)
    peak = img.max() if img.size and img.max() > 0 else 1.0
    Image.fromarray(np.rint(img / peak * 255).astype(np.uint8), mode="L").save(path)


# --------------------------------------------------------------------------
# scene helpers


def build_scene(cfg: ExperimentConfig) -> gs.Scene:
    sc = cfg.scene
    lam, tee = gs.default_masks(sc.width, sc.height)
    if sc.mask_true is not None:
        lam = read_pbm(cfg.resolve_path(sc.mask_true))
    if sc.mask_false is not None:
        tee = read_pbm(cfg.resolve_path(sc.mask_false))
    return gs.Scene(sc.width, sc.height, lam, tee, gs.uniform_illumination(sc.width, sc.height),
                    float(sc.photons), float(sc.dark_total))


def region_mask(cfg: ExperimentConfig, scene: gs.Scene, spec: str | None):
    if spec is None:
        return None
    if spec == "all":
        return np.ones(scene.shape, dtype=bool)
    if spec in ("overlap", "lambda_only", "t_only", "object_free"):
        return getattr(scene, spec)
    return read_pbm(cfg.resolve_path(spec))


# --------------------------------------------------------------------------
# commands


def cmd_detect_curve(run: Run, threads: int) -> int:
    cfg = run.cfg
    search = cfg.search_settings(threads)
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    levels = sorted(float(x) for x in cfg.levels)
    for spec in cfg.pairs:
        name, rho1, rho2 = resolve_pair(spec)
        for pt in det.detection_curve((rho1, rho2), levels, cfg.noise(), search, cfg.test_params()):
            writer.writerow([name, fmt(pt.level), fmt(pt.d), fmt(pt.p_detect),
                             fmt(pt.p_false_alarm), pt.note])
            log.info("%s level=%s d=%s", name, fmt(pt.level), fmt(pt.d))
    run.write("curve.csv", buf.getvalue().encode("utf-8"))
    return EXIT_OK


def _intrusion(cfg: ExperimentConfig) -> gs.Intrusion:
    it = cfg.intruder
    return gs.Intrusion(resolve_state(it.state), float(it.r), tuple(float(b) for b in it.brightness))


def cmd_simulate(run: Run, threads: int) -> int:
    cfg = run.cfg
    scene = build_scene(cfg)
    _, rho1, rho2 = resolve_pair(cfg.pair)
    angles = cfg.analyzer()
    img1, img2 = gs.simulate_pair(scene, rho1, rho2, _intrusion(cfg), angles, cfg.seed, threads)
    clean = gs.simulate_clean(scene, rho1, angles, cfg.seed, threads)
    rec = gs.recover(img1, img2)
    metrics = {
        "recovered": gs.compute_metrics(rec, clean, scene).as_dict(),
        "clean": gs.image_metrics(clean, scene).as_dict(),
        "overlap_visibility": gs.measure_region_visibility(img1, img2, scene.overlap, scene.object_free),
        "overlap_visibility_raw": gs.measure_region_visibility(img1, img2, scene.overlap),
        "scene_digest": scene.digest(),
        "seed": cfg.seed,
    }
    for name, image in (("jammed_j1", img1.counts), ("jammed_j2", img2.counts),
                        ("recovered", rec.image), ("clean", clean.counts)):
        run.write_image(name, image)
    run.write("metrics.json", _json_bytes(metrics))
    print(json.dumps(metrics["recovered"], sort_keys=True))
    return EXIT_OK


def analyze_images(cfg: ExperimentConfig, a: np.ndarray, b: np.ndarray):
    """Detection report and recovery for two measured images."""
    if a.shape != b.shape:
        raise OSError(f"image shapes differ: {a.shape} vs {b.shape}")
    sc = cfg.scene
    if a.shape != (sc.height, sc.width):
        raise OSError(f"images are {a.shape}, config scene is {(sc.height, sc.width)}")
    scene = build_scene(cfg)
    an = cfg.analyze
    noise, params = cfg.noise(), cfg.test_params()
    region = region_mask(cfg, scene, an.region)
    background = region_mask(cfg, scene, an.background)
    v_obs = gs.measure_region_visibility(a, b, region, background)
    v_exp = float(an.expected_visibility)
    d_measured = det.d_statistic(v_obs, v_exp, noise)
    d_design = det.d_statistic(float(an.alternative_visibility), v_exp, noise)
    if d_design <= 0:
        raise InvalidArgumentError("alternative_visibility must be below expected_visibility")
    verdict = det.decide([v_exp - v_obs], noise, params, d_design)
    report = det.DetectionReport(
        v_expected=v_exp, v_observed=v_obs, d=d_measured, verdict=verdict,
        p_detect=det.detection_probability(d_design, params),
        p_false_alarm=det.false_alarm_probability(d_design, params),
        threshold=det._log_lambda_over_d(d_design, params) + d_design / 2,
    ).as_dict()
    report["d_design"] = d_design
    weight = 1.0
    if an.estimate_weight:
        weight = gs.estimate_weight(a, b, region_mask(cfg, scene, an.weight_region))
    rec = gs.recover(a, b, weight)
    report["weight"] = weight
    t_only = scene.t_only
    if t_only.any():
        report["residual_false_mean"] = float(rec.image[t_only].mean())
        report["residual_false_unweighted"] = float(gs.recover(a, b).image[t_only].mean())
    return report, rec


def cmd_analyze(run: Run, img1: str, img2: str) -> int:
    try:
        a, b = read_pgm(img1), read_pgm(img2)
    except InvalidArgumentError as exc:
        raise OSError(f"unreadable image: {exc}") from exc
    report, rec = analyze_images(run.cfg, a, b)
    run.write_image("recovered", rec.image)
    run.write("report.json", _json_bytes(report))
    print(f"verdict: {report['verdict']}  d={fmt(report['d'])}  "
          f"P_d={fmt(report['p_detect'])}  P_err={fmt(report['p_false_alarm'])}")
    return EXIT_OK


def _settings_dict(search: det.SearchSettings) -> dict:
    out = dict(search.__dict__)
    out.pop("threads")  # execution detail; must not change outputs
    return out


def cmd_worst_case(run: Run, threads: int, level: float | None, single_photon: bool) -> int:
    cfg = run.cfg
    search = cfg.search_settings(threads)
    wc = cfg.worst_case
    if single_photon or wc.single_photon:
        res = det.worst_case_d_single_photon(float(wc.r), cfg.noise(), search)
        report = {"mode": "single-photon", "d": res.d, "theta": res.theta,
                  "intruder_alpha": res.alpha, "intruder_beta": res.beta,
                  "delta_v": res.delta_v, "r": res.r}
    else:
        target = float(wc.level if level is None else level)
        name, rho1, rho2 = resolve_pair(cfg.pair)
        res = det.worst_case_d(rho1, rho2, target, cfg.noise(), search)
        report = {"mode": "two-photon", "pair": name, "target_level": target, **res.as_dict(),
                  "p_detect": det.detection_probability(res.d, cfg.test_params()),
                  "p_false_alarm": det.false_alarm_probability(res.d, cfg.test_params())}
    report["settings"] = _settings_dict(search)
    run.write("worst_case.json", _json_bytes(report))
    print(json.dumps({k: v for k, v in report.items() if k != "settings"}, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: $ANTIJAM_CONFIG, else built-in defaults)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="antijam", description="Jamming detection and recovery for polarization ghost imaging.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("detect-curve", parents=[common], help="worst-case detection probability vs jamming level")
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo jammed images and recovery")
    an = sub.add_parser("analyze", parents=[common], help="test two images for jamming and recover")
    an.add_argument("img1")
    an.add_argument("img2")
    wc = sub.add_parser("worst-case", parents=[common], help="max-min separation for one pair")
    wc.add_argument("--level", type=float, help="target jamming level (overrides config)")
    wc.add_argument("--single-photon", action="store_true", help="single-photon |H>/|V> example")
    return p


def _load_config(path: str | None):
    path = path or default_config_path()
    if path is None:
        return ExperimentConfig(), ""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data, base_dir=Path(path).resolve().parent), text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = (os.cpu_count() or 1) if args.threads == 0 else args.threads
    if threads < 0:
        print("antijam: error: --threads must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg, text = _load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        cfg.validate()
        run = Run(args.command, cfg, text, Path(cfg.out))
        if args.command == "detect-curve":
            code = cmd_detect_curve(run, threads)
        elif args.command == "simulate":
            code = cmd_simulate(run, threads)
        elif args.command == "analyze":
            code = cmd_analyze(run, args.img1, args.img2)
        else:
            code = cmd_worst_case(run, threads, args.level, args.single_photon)
        run.finish()
        return code
    except (UsageError, ValueError) as exc:
        print(f"antijam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"antijam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DegenerateRegionError as exc:
        print(f"antijam: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except InfeasibleLevelError as exc:
        print(f"antijam: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
