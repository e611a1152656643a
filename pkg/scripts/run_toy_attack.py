"""Self-contained demo attack: conv-GAP proxy, linear-softmax target.

Generates a seeded image (or loads one), runs the full pipeline, and prints
the trade-off curve summary. Useful as a quick sanity check of the whole
stack without any external oracle.
"""

import argparse
import time

import numpy as np

from pixattack.attack import AttackConfig, run_attack
from pixattack.attention import seed_proxy
from pixattack.images import Image, load_image
from pixattack.oracle import LinearSoftmaxOracle


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--image", help="png/ppm/pgm target; defaults to a seeded random image")
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--budget", type=int, default=10_000)
    parser.add_argument("--pop", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--target-seed", type=int, default=1000)
    parser.add_argument("--proxy-seed", type=int, default=2000)
    args = parser.parse_args()

    if args.image:
        image = load_image(args.image)
    else:
        rng = np.random.default_rng(args.seed)
        image = Image(rng.integers(0, 256, (args.size, args.size, 3), dtype=np.uint8))

    target = LinearSoftmaxOracle.from_seed(args.target_seed, image.shape)
    proxy = seed_proxy(args.proxy_seed, channels=image.channels)
    config = AttackConfig(
        population_size=args.pop, max_evaluations=args.budget, seed=args.seed
    )

    started = time.perf_counter()
    report = run_attack(image, target, proxy, config)
    elapsed = time.perf_counter() - started

    print(f"image {image.height}x{image.width}x{image.channels}, d = {report.dimension}")
    print(f"clean prediction: class {report.original_class} "
          f"(confidence {report.clean_confidence:.4f})")
    print(f"{report.query_count} queries in {elapsed:.1f}s")
    if report.success:
        ae = report.final_ae
        changed = int(np.count_nonzero(ae.perturbation.values))
        print(f"SUCCESS: class {report.original_class} -> {ae.predicted_class} "
              f"(confidence {ae.confidence:.4f}), l2 = {ae.f2:.2f}, "
              f"{changed} channel values changed")
    else:
        print("FAILED: no candidate changed the prediction")
    print("\ntrade-off front (f1 = original-class confidence, f2 = l2 norm):")
    for entry in sorted(report.front_entries, key=lambda e: e.f2):
        marker = "*" if entry.predicted_class != report.original_class else " "
        print(f"  {marker} f1 = {entry.f1:.4f}   f2 = {entry.f2:9.2f}   "
              f"pred = {entry.predicted_class}")


if __name__ == "__main__":
    main()
