#!/usr/bin/env python3
"""Preprocess, training and total time of ELR-GNN against GCN at equal epochs.

Runs on the synthetic citation-scale graph, or on an imported dataset with
``--manifest``.

    python3 scripts/run_efficiency.py --epochs 1000
"""
import argparse
import dataclasses
import json
import sys

from elrgnn import dataio as io
from elrgnn import experiments as X
from elrgnn import graph as G
from elrgnn import synthetic as S


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int, default=X.CITATION_ELR.epochs)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if args.manifest:
        graph, _, _ = io.load_dataset(args.manifest)
    else:
        graph = S.citation_like()
    split = G.random_split(graph.labels, args.seed)
    elr = dataclasses.replace(X.CITATION_ELR, epochs=args.epochs, seed=args.seed)
    gcn = dataclasses.replace(X.CITATION_GCN, epochs=args.epochs, seed=args.seed)
    print(json.dumps(X.efficiency(graph, split, elr, gcn), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
