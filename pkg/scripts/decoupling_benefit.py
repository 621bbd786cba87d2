"""Cluster quality of decoupled embeddings versus raw pixels of the macros.

With k equal to the true template count, compares Davies-Bouldin (lower is
better) and mean silhouette (higher is better) after k-means.
"""
import argparse

import numpy as np

from macromatch.analysis import davies_bouldin, kmeans, silhouette
from macromatch.embed import FeatureExtractorSpec, build_records
from macromatch.imagecore import prepare_working_set, vectorize
from macromatch.matcher import build_dictionary, match_template
from macromatch.synth import gen_corpus


def scores(X, k, seed):
    labels = kmeans(X, k, seed=seed).labels
    return davies_bouldin(X, labels), silhouette(X, labels).mean


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--templates", type=int, default=4)
    ap.add_argument("--per", type=int, default=25)
    ap.add_argument("--max-coverage", type=float, default=0.3)
    ap.add_argument("--extractor", default="raw-pixels")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    args = ap.parse_args()
    spec = FeatureExtractorSpec.parse(args.extractor)

    print("seed\tdbi_decoupled\tdbi_naive\tsil_decoupled\tsil_naive")
    for seed in args.seeds:
        corpus = gen_corpus(args.templates, args.per, args.max_coverage, seed)
        _, targets, templates = prepare_working_set(corpus.macros, corpus.templates)
        A = build_dictionary(templates, seed=seed)
        matches = [match_template(A, t) for t in targets]
        ids = [str(i) for i in range(len(targets))]
        dec = np.array([r.full for r in build_records(ids, targets, matches, spec)])
        raw = np.array([vectorize(m) for m in corpus.macros])
        dd, ds = scores(dec, args.templates, seed)
        nd, ns = scores(raw, args.templates, seed)
        print(f"{seed}\t{dd:.4f}\t{nd:.4f}\t{ds:.4f}\t{ns:.4f}")


if __name__ == "__main__":
    main()
