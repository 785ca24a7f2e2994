#!/usr/bin/env python3
"""Held-out EER of the ensemble cascade as the stage count grows.

Stage count 0 is the plain learner; each added stage doubles the leading
group count. Train EER is reported alongside to expose where extra depth
stops buying fit and starts costing generalization.
"""

import argparse

import numpy as np

import ecml


def split_pairs(pairs, n_train, seed):
    rng = np.random.default_rng(seed + 104729)
    idx = rng.permutation(len(pairs))
    take = lambda sel: ecml.PairSet(pairs.i[sel], pairs.j[sel], pairs.y[sel])
    return take(idx[:n_train]), take(idx[n_train:])


def eer_of(model, feats, pairs):
    scored = ecml.score_pairs(
        lambda a, b: ecml.cascade_distance(model, a, b), feats, pairs
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
    ap.add_argument("--max-stages", type=int, default=5)
    ap.add_argument("--lambda", type=float, default=0.1, dest="lam")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    total = args.train_pairs + args.heldout_pairs
    train_eer = np.zeros((args.seeds, args.max_stages + 1))
    test_eer = np.zeros_like(train_eer)
    for seed in range(args.seeds):
        feats, labels = ecml.gen_synthetic(
            args.ids, args.samples_per_id, args.dim,
            args.intra_spread, args.inter_spread, seed,
        )
        pool = ecml.sample_pairs(labels, total, 0.5, seed)
        train, heldout = split_pairs(pool, args.train_pairs, seed)
        for stages in range(args.max_stages + 1):
            lam = args.lam if stages else 0.5
            model = ecml.fit_cascade(
                feats, train, stages, ecml.make_learner("rmml", lam), seed
            )
            train_eer[seed, stages] = eer_of(model, feats, train)
            test_eer[seed, stages] = eer_of(model, feats, heldout)

    print(f"{'stages':>7} {'train eer':>10} {'heldout eer':>12}")
    for stages in range(args.max_stages + 1):
        print(f"{stages:>7} {train_eer[:, stages].mean():>10.4f} "
              f"{test_eer[:, stages].mean():>12.4f}")


if __name__ == "__main__":
    main()
