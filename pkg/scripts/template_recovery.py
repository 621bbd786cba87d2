"""Recover templates from unlabeled macros and score them against ground truth."""
import argparse
import time

import numpy as np

from macromatch.imagecore import prepare_working_set
from macromatch.synth import gen_corpus
from macromatch.templategen import construct_templates


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--templates", type=int, default=4)
    ap.add_argument("--per", type=int, default=25)
    ap.add_argument("--max-coverage", type=float, default=0.2)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    ap.add_argument("--grouped", action="store_true", help="feed targets template by template")
    args = ap.parse_args()

    print("seed\tfound\tmax_err\tmin_purity\tconverged\tseconds")
    for seed in args.seeds:
        t0 = time.perf_counter()
        corpus = gen_corpus(args.templates, args.per, args.max_coverage, seed,
                            interleave=not args.grouped)
        pre, targets, truth = prepare_working_set(corpus.macros, corpus.templates)
        lib = construct_templates(targets, seed=seed)
        errs, purity = [], []
        for tpl in lib.templates:
            labels = np.array([corpus.labels[i] for i in tpl.members])
            major = np.bincount(labels).argmax()
            purity.append(np.mean(labels == major))
            errs.append(np.mean(np.abs(pre.restore(tpl.image).data
                                       - pre.restore(truth[major]).data)))
        conv = sum(t.converged for t in lib.templates)
        print(f"{seed}\t{len(lib.templates)}\t{max(errs):.3f}\t{min(purity):.2f}"
              f"\t{conv}/{len(lib.templates)}\t{time.perf_counter() - t0:.2f}")


if __name__ == "__main__":
    main()
