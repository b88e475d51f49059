#!/usr/bin/env python3
"""Compare rescoring CER of the two noise-contrastive training modes.

For each seed this builds a fresh synthetic benchmark, trains one energy
model with a frozen noise distribution and one whose noise keeps taking
likelihood steps, tunes interpolation weights on dev, and reports test CER
against the first-pass baseline.
"""

import argparse

from energylm.synthbench import run_method_comparison


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--steps", type=int, default=1200)
    ap.add_argument("--batch-size", type=int, default=48)
    args = ap.parse_args()

    print(f"{'seed':>4}  {'no_lm':>8}  {'static':>8}  {'dynamic':>8}")
    wins = 0
    for seed in args.seeds:
        res = run_method_comparison(seed, train_steps=args.steps, batch_size=args.batch_size)
        ok = res["dnce"] <= res["nce"] and res["nce"] < res["no_lm"] and res["dnce"] < res["no_lm"]
        wins += ok
        flag = "" if ok else "  *"
        print(f"{seed:>4}  {res['no_lm']:>8.4f}  {res['nce']:>8.4f}  {res['dnce']:>8.4f}{flag}")
    print(f"{wins}/{len(args.seeds)} seeds show dynamic <= static < no-LM")


if __name__ == "__main__":
    main()
