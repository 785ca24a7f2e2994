#!/usr/bin/env python3
"""Held-out EER across PCA output dimensionalities for each learner.

PCA is fitted on the feature matrix and the learners are trained on the
projected features, mirroring the usual preprocessing sweep. The raw
(no-PCA) column is included for reference.
"""

import argparse

import numpy as np

import ecml


def split_pairs(pairs, n_train, seed):
    rng = np.random.default_rng(seed + 104729)
    idx = rng.permutation(len(pairs))
    take = lambda sel: ecml.PairSet(pairs.i[sel], pairs.j[sel], pairs.y[sel])
    return take(idx[:n_train]), take(idx[n_train:])


def heldout_eer(learner_name, lam, feats, train, heldout, seed, stages):
    model = ecml.fit_cascade(
        feats, train, stages, ecml.make_learner(learner_name, lam), seed
    )
    scored = ecml.score_pairs(
        lambda a, b: ecml.cascade_distance(model, a, b), feats, heldout
    )
    return ecml.compute_eer(scored).eer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ids", type=int, default=50)
    ap.add_argument("--samples-per-id", type=int, default=20)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--intra-spread", type=float, default=1.0)
    ap.add_argument("--inter-spread", type=float, default=0.5)
    ap.add_argument("--train-pairs", type=int, default=3000)
    ap.add_argument("--heldout-pairs", type=int, default=2000)
    ap.add_argument("--pca-dims", type=int, nargs="+", default=[64, 32, 16, 8])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--stages", type=int, default=0,
                    help="0 for plain learners, >=1 to sweep the cascade instead")
    args = ap.parse_args()

    feats, labels = ecml.gen_synthetic(
        args.ids, args.samples_per_id, args.dim,
        args.intra_spread, args.inter_spread, args.seed,
    )
    total = args.train_pairs + args.heldout_pairs
    pool = ecml.sample_pairs(labels, total, 0.5, args.seed)
    train, heldout = split_pairs(pool, args.train_pairs, args.seed)

    learners = [("rmml", 0.1 if args.stages else 0.5), ("kissme", None),
                ("genuine-baseline", None)]
    header = f"{'pca dim':>8}" + "".join(f"{name:>18}" for name, _ in learners)
    print(header)
    for k in [None] + list(args.pca_dims):
        if k is None:
            reduced, tag = feats, "raw"
        else:
            pca = ecml.fit_pca(feats, k)
            reduced, tag = ecml.apply_pca(pca, feats), str(k)
        cells = []
        for name, lam in learners:
            try:
                eer = heldout_eer(name, lam, reduced, train, heldout, args.seed, args.stages)
                cells.append(f"{eer:>18.4f}")
            except ecml.NumericalError:
                cells.append(f"{'--':>18}")
        print(f"{tag:>8}" + "".join(cells))


if __name__ == "__main__":
    main()
