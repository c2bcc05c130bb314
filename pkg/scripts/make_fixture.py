#!/usr/bin/env python3
"""Regenerate the bundled synthetic fixture under fixtures/toy/.

Everything is derived from one seed, so re-running this script reproduces
the checked-in files byte for byte.
"""

import argparse
import json
from pathlib import Path

from lsrkit.encoders import EncoderConfig, init_params, save_params
from lsrkit.synthetic import separable_corpus

DIM = 8
SEED = 3
N_PAIRS = 24
N_CLASSES = 8


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=Path(__file__).resolve().parent.parent / "fixtures" / "toy")
    args = parser.parse_args()
    out = Path(args.out)

    task = separable_corpus(n_pairs=N_PAIRS, n_classes=N_CLASSES, dimension=DIM, seed=SEED)
    paths = task.write_files(out)

    config = EncoderConfig(variant="M2")
    config.save(out / "m2.json")
    save_params(out / "params_init.jsonl", init_params(config, task.vocab.size, DIM, SEED))

    with open(out / "train.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "epochs": 5,
                "batch_size": 8,
                "learning_rate": 4.0,
                "temperature": 1.0,
                "seed": SEED,
                "flops_lambda": 0.0,
            },
            f,
            indent=2,
        )
        f.write("\n")

    with open(out / "stoplist.txt", "w", encoding="utf-8") as f:
        f.write("shared0\nshared1\n")

    for name, path in sorted(paths.items()):
        print(f"wrote {name}: {path}")
    print(f"wrote config: {out / 'm2.json'}, params: {out / 'params_init.jsonl'}, train: {out / 'train.json'}")


if __name__ == "__main__":
    main()
