"""Command-line front door.

Subcommands:
    attack        run the attack and write AE, perturbation, front, report
    visualize     render a perturbation pattern image
    export-front  re-export a run's Pareto front as CSV (plus plot data)
    gen-attention compute and save an attention map

Exit codes: 0 success, 2 attack failed (no misclassifying candidate found),
1 operational error. Configuration is accepted as flags or as a flat
``key = value`` file; flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import attention as attention_mod
from . import masking
from .attack import AttackConfig, AttackError, AttackReport, run_attack
from .images import (
    DimensionMismatch,
    FileFormatError,
    Image,
    load_image,
    round_half_away,
    save_image,
)
from .oracle import OracleError, SubprocessOracle, make_oracle

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ATTACK_FAILED = 2

# Perturbation-pattern gray levels: outside the mask, inside but unmodified,
# and the midpoint that perturbations brighten/darken around.
GRAY_OUTSIDE = 200
GRAY_UNMODIFIED = 80
GRAY_MIDPOINT = 128


@dataclass
class RunConfig:
    image: str = ""
    oracle: str = "toy:linear"
    attention: str = "proxy"  # "proxy" or "file:<path>"
    use_attention: bool = True
    use_parity: bool = True
    parity_segment: str = "even"
    pop: int = 50
    budget: int = 10_000
    eta_crossover: float = 20.0
    eta_mutation: float = 20.0
    pc: float = 1.0
    pm: float | None = None  # None -> 1/d
    delta_max: float | None = None
    seed: int = 0
    oracle_seed: int = 0
    proxy_seed: int = 0
    classes: int = 10
    final_from: str = "history"
    workers: int = 1
    out: str = "attack-out"


_BOOL_KEYS = {"use_attention", "use_parity"}
_INT_KEYS = {"pop", "budget", "seed", "oracle_seed", "proxy_seed", "classes", "workers"}
_FLOAT_KEYS = {"eta_crossover", "eta_mutation", "pc", "pm", "delta_max"}


def load_config_file(path: str | Path) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in RunConfig.__dataclass_fields__:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if key in _BOOL_KEYS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def merge_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    # flags win: argparse defaults are None so only explicit flags override
    overrides = {
        "image": args.image,
        "oracle": args.oracle,
        "attention": args.attention,
        "pop": args.pop,
        "budget": args.budget,
        "eta_crossover": args.eta_crossover,
        "eta_mutation": args.eta_mutation,
        "pc": args.pc,
        "pm": args.pm,
        "delta_max": args.delta_max,
        "seed": args.seed,
        "oracle_seed": args.oracle_seed,
        "proxy_seed": args.proxy_seed,
        "classes": args.classes,
        "final_from": args.final_from,
        "workers": args.workers,
        "out": args.out,
        "parity_segment": args.parity_segment,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.no_attention:
        cfg.use_attention = False
    if args.no_parity:
        cfg.use_parity = False
    return cfg


def _float_str(v: float) -> str:
    return repr(float(v))


def write_front_csv(path: Path, rows: list[dict]) -> None:
    """Rows sorted by f2 ascending (stable on eval index)."""
    rows = sorted(rows, key=lambda r: (r["f2"], r["eval_index"]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f1", "f2", "predicted_class", "success", "eval_index"])
        for r in rows:
            writer.writerow(
                [
                    _float_str(r["f1"]),
                    _float_str(r["f2"]),
                    r["predicted_class"],
                    int(r["success"]),
                    r["eval_index"],
                ]
            )


def front_rows(report: AttackReport) -> list[dict]:
    return [
        {
            "f1": e.f1,
            "f2": e.f2,
            "predicted_class": e.predicted_class,
            "success": e.predicted_class != report.original_class,
            "eval_index": e.eval_index,
        }
        for e in report.front_entries
    ]


def write_perturbation_csv(path: Path, report: AttackReport) -> None:
    """Winning genome as sparse (l, w, c, value) rows; zero entries dropped."""
    genome = report.history[report.final_ae.eval_index].genome
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l", "w", "c", "value"])
        for slot in np.nonzero(genome)[0]:
            l, w, c = report.index.triple(int(slot))
            writer.writerow([l, w, c, _float_str(genome[slot])])


def report_summary(report: AttackReport, cfg: RunConfig) -> dict:
    final = None
    if report.final_ae is not None:
        eff = report.final_ae.perturbation
        final = {
            "predicted_class": report.final_ae.predicted_class,
            "confidence": report.final_ae.confidence,
            "f2": report.final_ae.f2,
            "eval_index": report.final_ae.eval_index,
            "pixels_changed": int(np.count_nonzero(eff.values)),
        }
    return {
        "config": asdict(cfg),
        "original_class": report.original_class,
        "clean_confidence": report.clean_confidence,
        "dimension": report.dimension,
        "mask_pixels": report.mask.popcount,
        "attention_fallback": report.attention_fallback,
        "query_count": report.query_count,
        "evaluations": len(report.log),
        "wall_time_s": report.wall_time,
        "success": report.success,
        "final_ae": final,
        "front": front_rows(report),
    }


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = merge_run_config(args)
    if not cfg.image:
        print("error: no input image given (--image or config file)", file=sys.stderr)
        return EXIT_ERROR
    try:
        attack_cfg = AttackConfig(
            population_size=cfg.pop,
            max_evaluations=cfg.budget,
            eta_crossover=cfg.eta_crossover,
            eta_mutation=cfg.eta_mutation,
            crossover_prob=cfg.pc,
            mutation_prob=cfg.pm,
            seed=cfg.seed,
            use_attention=cfg.use_attention,
            use_parity=cfg.use_parity,
            parity_segment=cfg.parity_segment,
            delta_max=cfg.delta_max,
            final_ae_scope=cfg.final_from,
            workers=cfg.workers,
        )
        attack_cfg.moea_config()  # validate optimizer settings up front
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_ERROR

    image = load_image(cfg.image)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    oracle = make_oracle(
        cfg.oracle, image.shape, seed=cfg.oracle_seed, num_classes=cfg.classes
    )
    attention_source = None
    if cfg.use_attention:
        if cfg.attention == "proxy":
            attention_source = attention_mod.seed_proxy(
                cfg.proxy_seed, channels=image.channels, num_classes=cfg.classes
            )
        elif cfg.attention.startswith("file:"):
            attention_source = attention_mod.load_attention(
                cfg.attention[len("file:") :], image.height, image.width
            )
        else:
            print(f"error: unknown attention source {cfg.attention!r}", file=sys.stderr)
            return EXIT_ERROR

    try:
        report = run_attack(image, oracle, attention_source, attack_cfg)
    except AttackError as exc:
        # flush what we have before reporting the failure
        partial = [
            {
                "f1": e.f1,
                "f2": e.f2,
                "predicted_class": e.predicted_class,
                "success": None,
                "eval_index": e.eval_index,
            }
            for e in exc.partial_log
        ]
        (out_dir / "report.json").write_text(
            json.dumps({"error": str(exc), "partial_evaluations": len(partial)}, indent=2)
            + "\n"
        )
        print(f"error: attack aborted: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        if isinstance(oracle, SubprocessOracle):
            oracle.close()

    masking.save_mask(report.mask, out_dir / "mask.pgm")
    write_front_csv(out_dir / "front.csv", front_rows(report))
    (out_dir / "report.json").write_text(
        json.dumps(report_summary(report, cfg), indent=2, sort_keys=True) + "\n"
    )
    if not report.success:
        print(
            f"attack failed: no candidate changed the prediction "
            f"(class {report.original_class}, {report.query_count} queries)"
        )
        return EXIT_ATTACK_FAILED

    save_image(report.final_ae.image, out_dir / "ae.png")
    write_perturbation_csv(out_dir / "perturbation.csv", report)
    print(
        f"attack succeeded: class {report.original_class} -> "
        f"{report.final_ae.predicted_class} "
        f"(confidence {report.final_ae.confidence:.4f}, "
        f"l2 {report.final_ae.f2:.3f}, {report.query_count} queries, d={report.dimension})"
    )
    return EXIT_OK


def read_perturbation_csv(path: str | Path) -> list[tuple[int, int, int, float]]:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["l", "w", "c", "value"]:
            raise FileFormatError(f"{path}: expected header l,w,c,value")
        for row in reader:
            entries.append((int(row["l"]), int(row["w"]), int(row["c"]), float(row["value"])))
    return entries


def render_pattern(
    image: Image, mask_bits: np.ndarray, entries: list[tuple[int, int, int, float]]
) -> np.ndarray:
    """Perturbation-pattern rendering.

    Out-of-mask pixels light gray, in-mask unmodified pixels dark gray,
    perturbed channels midpoint-plus-change (brighter = positive change,
    darker = negative).
    """
    h, w, c = image.shape
    if mask_bits.shape != (h, w):
        raise DimensionMismatch(
            f"mask {mask_bits.shape} does not match image {h}x{w}"
        )
    pattern = np.where(mask_bits[:, :, None], GRAY_UNMODIFIED, GRAY_OUTSIDE).astype(np.uint8)
    pattern = np.repeat(pattern, c, axis=2) if pattern.shape[2] != c else pattern
    for l, wx, ch, value in entries:
        if not (0 <= l < h and 0 <= wx < w and 0 <= ch < c):
            raise DimensionMismatch(f"perturbation entry ({l},{wx},{ch}) outside image")
        if not mask_bits[l, wx]:
            raise ValueError(f"perturbation entry ({l},{wx},{ch}) outside the mask")
        u = float(image.pixels[l, wx, ch])
        applied = float(np.clip(round_half_away(np.array(u + value)), 0, 255))
        eff = applied - u
        if eff != 0.0:
            pattern[l, wx, ch] = GRAY_MIDPOINT + int(np.clip(eff, -127, 127))
    return pattern


def cmd_visualize(args: argparse.Namespace) -> int:
    image = load_image(args.image)
    mask = masking.load_mask(args.mask)
    if (mask.height, mask.width) != (image.height, image.width):
        raise DimensionMismatch(
            f"mask {mask.height}x{mask.width} does not match image "
            f"{image.height}x{image.width}"
        )
    entries = read_perturbation_csv(args.perturbation)
    pattern = render_pattern(image, mask.bits, entries)
    save_image(Image(pattern), args.out)
    print(f"wrote perturbation pattern to {args.out}")
    return EXIT_OK


def cmd_export_front(args: argparse.Namespace) -> int:
    report_path = Path(args.report)
    if not report_path.exists():
        print(f"error: report {report_path} does not exist", file=sys.stderr)
        return EXIT_ERROR
    summary = json.loads(report_path.read_text())
    if "front" not in summary:
        print(f"error: {report_path} has no Pareto front (failed run?)", file=sys.stderr)
        return EXIT_ERROR
    write_front_csv(Path(args.out), summary["front"])
    if args.plot_data:
        rows = sorted(summary["front"], key=lambda r: (r["f2"], r["eval_index"]))
        with open(args.plot_data, "w") as fh:
            fh.write("# f2 f1\n")
            for r in rows:
                fh.write(f"{_float_str(r['f2'])} {_float_str(r['f1'])}\n")
    print(f"exported {len(summary['front'])} front rows to {args.out}")
    return EXIT_OK


def cmd_gen_attention(args: argparse.Namespace) -> int:
    image = load_image(args.image)
    if args.proxy_file:
        proxy = attention_mod.load_proxy(args.proxy_file)
    else:
        proxy = attention_mod.seed_proxy(
            args.proxy_seed or 0, channels=image.channels, num_classes=args.classes or 10
        )
    amap = attention_mod.compute_cam(proxy, image, upsample=args.upsample)
    attention_mod.save_attention(amap, args.out)
    if args.save_proxy:
        attention_mod.save_proxy(proxy, args.save_proxy)
    nonzero = int(np.count_nonzero(amap.values))
    print(f"wrote {amap.height}x{amap.width} attention map to {args.out} "
          f"({nonzero} salient pixels)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pixattack",
        description="Black-box adversarial attacks via attention-screened "
        "sparse perturbations and bi-objective search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="run an attack against one image")
    p_attack.add_argument("--image", help="target image (png/ppm/pgm)")
    p_attack.add_argument("--oracle", help="toy:linear | toy:convgap | subprocess:<cmd> | http:<url>")
    p_attack.add_argument("--attention", help="proxy | file:<map.pgm>")
    p_attack.add_argument("--no-attention", action="store_true", help="ablation: skip attention screening")
    p_attack.add_argument("--no-parity", action="store_true", help="ablation: skip parity refinement")
    p_attack.add_argument("--parity-segment", choices=["even", "odd"], dest="parity_segment")
    p_attack.add_argument("--pop", type=int, help="population size (default 50)")
    p_attack.add_argument("--budget", type=int, help="max oracle evaluations (default 10000)")
    p_attack.add_argument("--eta-crossover", type=float, dest="eta_crossover")
    p_attack.add_argument("--eta-mutation", type=float, dest="eta_mutation")
    p_attack.add_argument("--pc", type=float, help="crossover probability (default 1.0)")
    p_attack.add_argument("--pm", type=float, help="mutation probability (default 1/d)")
    p_attack.add_argument("--delta-max", type=float, dest="delta_max", help="symmetric cap on per-pixel change")
    p_attack.add_argument("--seed", type=int, help="search RNG seed")
    p_attack.add_argument("--oracle-seed", type=int, dest="oracle_seed")
    p_attack.add_argument("--proxy-seed", type=int, dest="proxy_seed")
    p_attack.add_argument("--classes", type=int, help="toy oracle class count")
    p_attack.add_argument("--final-from", choices=["history", "front"], dest="final_from")
    p_attack.add_argument("--workers", type=int, help="parallel oracle evaluations")
    p_attack.add_argument("--out", help="output directory")
    p_attack.add_argument("--config", help="flat key = value config file; flags win")
    p_attack.set_defaults(func=cmd_attack)

    p_vis = sub.add_parser("visualize", help="render a perturbation pattern")
    p_vis.add_argument("--image", required=True, help="original image")
    p_vis.add_argument("--perturbation", required=True, help="perturbation CSV (l,w,c,value)")
    p_vis.add_argument("--mask", required=True, help="mask PGM from the attack run")
    p_vis.add_argument("--out", required=True, help="output pattern image")
    p_vis.set_defaults(func=cmd_visualize)

    p_front = sub.add_parser("export-front", help="export the Pareto front of a finished run")
    p_front.add_argument("--report", required=True, help="report.json from an attack run")
    p_front.add_argument("--out", required=True, help="output CSV path")
    p_front.add_argument("--plot-data", dest="plot_data", help="also write whitespace-separated plot data")
    p_front.set_defaults(func=cmd_export_front)

    p_gen = sub.add_parser("gen-attention", help="compute an attention map for an image")
    p_gen.add_argument("--image", required=True)
    p_gen.add_argument("--out", required=True, help="output PGM path")
    p_gen.add_argument("--proxy-seed", type=int, dest="proxy_seed", help="seeded toy proxy")
    p_gen.add_argument("--proxy-file", dest="proxy_file", help="load proxy weights instead")
    p_gen.add_argument("--save-proxy", dest="save_proxy", help="persist the proxy weights")
    p_gen.add_argument("--classes", type=int)
    p_gen.add_argument("--upsample", choices=["bilinear", "nearest"], default="bilinear")
    p_gen.set_defaults(func=cmd_gen_attention)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OracleError, FileFormatError, DimensionMismatch, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
