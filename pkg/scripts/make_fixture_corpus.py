#!/usr/bin/env python3
"""Generate the synthetic training images and evaluation sites to a directory.

The output is self-contained: a label<TAB>path manifest for `webcat train`
plus 40 static sites (20 positive, 20 negative) that any file server, or
webcat.localserver.FixtureServer, can publish for `webcat evaluate`.
"""

import argparse
from pathlib import Path

from webcat.synth import generate_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="directory to write into")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train-per-class", type=int, default=100,
                        help="training images per class (default 100)")
    parser.add_argument("--side", type=int, default=96, help="image edge length")
    args = parser.parse_args()

    root = Path(args.out)
    corpus = generate_corpus(
        root, seed=args.seed, n_train_per_class=args.train_per_class, side=args.side
    )
    n_pos = sum(1 for s in corpus.sites if s.label)
    print(f"manifest: {corpus.manifest}")
    print(f"training images: {2 * args.train_per_class}")
    print(f"sites: {len(corpus.sites)} ({n_pos} positive, {len(corpus.sites) - n_pos} negative)")
    print(f"example page: {root / corpus.sites[0].path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
