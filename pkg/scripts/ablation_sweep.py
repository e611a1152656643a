"""Ablation sweep over the two dimension-reduction stages.

Runs the attack on a batch of seeded images in four modes (full pipeline,
attention only, parity only, neither) and tabulates search-space dimension,
success, and final l2 norm per mode.
"""

import argparse

import numpy as np

from pixattack.attack import AttackConfig, run_attack
from pixattack.attention import seed_proxy
from pixattack.images import Image
from pixattack.oracle import LinearSoftmaxOracle

MODES = [
    ("attention+parity", True, True),
    ("attention-only", True, False),
    ("parity-only", False, True),
    ("neither", False, False),
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", type=int, default=5)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--budget", type=int, default=2000)
    parser.add_argument("--pop", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    shape = (args.size, args.size, 3)
    target = LinearSoftmaxOracle.from_seed(1000, shape)
    proxy = seed_proxy(2000, channels=3)

    print(f"{'mode':>18} {'image':>6} {'d':>6} {'success':>8} {'final l2':>10}")
    totals = {name: [0, 0.0] for name, _, _ in MODES}
    for image_seed in range(args.images):
        rng = np.random.default_rng(image_seed)
        image = Image(rng.integers(0, 256, shape, dtype=np.uint8))
        for name, use_attention, use_parity in MODES:
            config = AttackConfig(
                population_size=args.pop,
                max_evaluations=args.budget,
                seed=args.seed,
                use_attention=use_attention,
                use_parity=use_parity,
            )
            report = run_attack(image, target, proxy if use_attention else None, config)
            l2 = report.final_ae.f2 if report.success else float("nan")
            totals[name][0] += int(report.success)
            totals[name][1] += 0.0 if np.isnan(l2) else l2
            print(f"{name:>18} {image_seed:>6} {report.dimension:>6} "
                  f"{str(report.success):>8} {l2:>10.1f}")

    print("\nsummary:")
    for name, _, _ in MODES:
        wins, l2_sum = totals[name]
        mean_l2 = l2_sum / wins if wins else float("nan")
        print(f"  {name:>18}: {wins}/{args.images} success, mean final l2 {mean_l2:.1f}")


if __name__ == "__main__":
    main()
