#!/usr/bin/env python3
"""Write the synthetic recognition benchmark to disk.

Produces a training corpus (one sentence per line) plus dev/test n-best
JSONL files, all derived from a single seed, so the full CLI pipeline can
run against real files.
"""

import argparse
import json
import os

from energylm.rescoring import NBestList
from energylm.synthbench import build_benchmark


def dump_nbest(path: str, lists: list[NBestList]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for nb in lists:
            rec = {
                "utt": nb.utt,
                "ref": nb.ref,
                "hyps": [{"text": h.text, "am": h.am} for h in nb.hyps],
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=1600)
    ap.add_argument("--n-dev", type=int, default=120)
    ap.add_argument("--n-test", type=int, default=300)
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    bench = build_benchmark(args.seed, args.n_train, args.n_dev, args.n_test)

    with open(os.path.join(args.out_dir, "train.txt"), "w", encoding="utf-8") as f:
        for text in bench.train_texts:
            f.write(text + "\n")
    dump_nbest(os.path.join(args.out_dir, "dev_nbest.jsonl"), bench.dev_lists)
    dump_nbest(os.path.join(args.out_dir, "test_nbest.jsonl"), bench.test_lists)
    print(
        f"wrote {len(bench.train_texts)} training sentences, "
        f"{len(bench.dev_lists)} dev lists, {len(bench.test_lists)} test lists "
        f"to {args.out_dir}"
    )


if __name__ == "__main__":
    main()
