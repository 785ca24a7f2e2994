#!/usr/bin/env python3
"""Held-out EER of the rmml learner as the balance weight lambda increases.

Sweeps lambda from 0 to 1.2 in steps of 0.1 for both the plain learner and
the ensemble cascade, averaged over seeds. Overlapping clusters (the default
geometry here) show the characteristic shape: a quick drop from lambda=0,
then a plateau or a slow climb as the discriminative term starts to overfit.
"""

import argparse

import numpy as np

import ecml


def split_pairs(pairs, n_train, seed):
    rng = np.random.default_rng(seed + 104729)
    idx = rng.permutation(len(pairs))
    take = lambda sel: ecml.PairSet(pairs.i[sel], pairs.j[sel], pairs.y[sel])
    return take(idx[:n_train]), take(idx[n_train:])


def heldout_eer(model, feats, pairs):
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
    ap.add_argument("--stages", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    lams = [round(0.1 * k, 1) for k in range(13)]
    total = args.train_pairs + args.heldout_pairs
    plain = np.zeros((args.seeds, len(lams)))
    casc = np.zeros_like(plain)
    for seed in range(args.seeds):
        feats, labels = ecml.gen_synthetic(
            args.ids, args.samples_per_id, args.dim,
            args.intra_spread, args.inter_spread, seed,
        )
        pool = ecml.sample_pairs(labels, total, 0.5, seed)
        train, heldout = split_pairs(pool, args.train_pairs, seed)
        for k, lam in enumerate(lams):
            m0 = ecml.fit_cascade(feats, train, 0, ecml.make_learner("rmml", lam), seed)
            plain[seed, k] = heldout_eer(m0, feats, heldout)
            mc = ecml.fit_cascade(
                feats, train, args.stages, ecml.make_learner("rmml", lam), seed
            )
            casc[seed, k] = heldout_eer(mc, feats, heldout)

    print(f"{'lambda':>7} {'eer plain':>10} {'eer cascade':>12}")
    for k, lam in enumerate(lams):
        print(f"{lam:>7.1f} {plain[:, k].mean():>10.4f} {casc[:, k].mean():>12.4f}")


if __name__ == "__main__":
    main()
