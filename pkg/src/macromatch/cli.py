"""``macromatch`` command line.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, embed, synth
from .imagecore import ImageFormatError, Preprocessor, load_image, save_image
from .l1solver import DEFAULT_LAMBDA_RATIO
from .manifest import Entry, Manifest, ManifestError, load_manifest
from .matcher import DEFAULT_AUGMENT, DEFAULT_TR, build_dictionary, match_many
from .templategen import DEFAULT_TB_RMS, construct_templates

log = logging.getLogger("macromatch")

DATA_ERRORS = (ImageFormatError, embed.TableFormatError, ManifestError, ValueError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write(out, text: str) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# shared loading

def _load_images(man: Manifest):
    return [load_image(man.resolve(e)) for e in man.entries]


def _prepare(tpl_man: Manifest, tgt_man: Manifest):
    tpl_imgs = _load_images(tpl_man)
    tgt_imgs = _load_images(tgt_man)
    if not tpl_imgs:
        raise ValueError("template manifest has no entries")
    pre = Preprocessor.fit(tgt_imgs + tpl_imgs)
    return pre, [pre(t) for t in tgt_imgs], [pre(s) for s in tpl_imgs]


def _template_labels(tpl_man: Manifest):
    return [e.template_id if e.template_id is not None else i
            for i, e in enumerate(tpl_man.entries)]


def _run_matching(args):
    tpl_man = load_manifest(args.templates)
    tgt_man = load_manifest(args.targets)
    pre, targets, templates = _prepare(tpl_man, tgt_man)
    A = build_dictionary(templates, args.augment, args.seed)
    matches = match_many(A, targets, jobs=args.jobs, t_r=args.tr, lam_ratio=args.lambda_ratio)
    return tpl_man, tgt_man, pre, targets, matches


def _read_embeddings(path):
    table = embed.read_table(path)
    if not table:
        raise ValueError(f"{path}: no embeddings")
    ids = list(table)
    return ids, np.array([table[i] for i in ids])


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args):
    out = Path(args.out)
    (out / "templates").mkdir(parents=True, exist_ok=True)
    (out / "macros").mkdir(exist_ok=True)
    corpus = synth.gen_corpus(args.templates, args.per, args.max_coverage, args.seed,
                              args.size, args.size, interleave=not args.grouped)
    params = {"seed": args.seed, "max_coverage": args.max_coverage,
              "templates": args.templates, "per": args.per, "size": args.size}
    tpl_entries = []
    for i, t in enumerate(corpus.templates):
        rel = f"templates/tpl_{i:03d}.pgm"
        save_image(t, out / rel)
        tpl_entries.append(Entry(f"tpl{i:03d}", rel, i))
    entries = []
    for i, (m, lab) in enumerate(zip(corpus.macros, corpus.labels)):
        rel = f"macros/m_{i:05d}.pgm"
        save_image(m, out / rel)
        entries.append(Entry(f"m{i:05d}", rel, lab))
    if args.noise:
        (out / "noise").mkdir(exist_ok=True)
        for i in range(args.noise):
            rel = f"noise/n_{i:04d}.pgm"
            save_image(synth.gen_noise([args.seed, 7, i], args.size, args.size), out / rel)
            entries.append(Entry(f"n{i:04d}", rel, None))
    Manifest(tpl_entries, dict(params)).save(out / "templates.manifest")
    Manifest(entries, dict(params)).save(out / "corpus.manifest")
    log.info("synth: %d templates, %d targets -> %s", len(tpl_entries), len(entries), out)


def cmd_build_templates(args):
    man = load_manifest(args.targets)
    imgs = _load_images(man)
    if not imgs:
        raise ValueError(f"{args.targets}: no targets")
    pre = Preprocessor.fit(imgs)
    targets = [pre(t) for t in imgs]
    lib = construct_templates(targets, t_r=args.tr, t_b=args.tb, seed=args.seed,
                              lam_ratio=args.lambda_ratio)
    out = Path(args.out)
    (out / "templates").mkdir(parents=True, exist_ok=True)
    entries = []
    for tpl in lib.templates:
        rel = f"templates/tpl_{tpl.template_id:03d}.igrd"
        save_image(pre.restore(tpl.image), out / rel)
        members = tuple(man.entries[i].target_id for i in tpl.members)
        entries.append(Entry(f"tpl{tpl.template_id:03d}", rel, tpl.template_id,
                             None, members))
    params = {"global_mean": repr(pre.global_mean), "t_r": args.tr, "t_b": repr(lib.t_b),
              "lambda_ratio": args.lambda_ratio, "seed": args.seed,
              "converged": ",".join(str(int(t.converged)) for t in lib.templates)}
    Manifest(entries, params).save(out / "templates.manifest")
    log.info("build-templates: %d targets -> %d templates", len(targets), len(entries))


def cmd_match(args):
    tpl_man, tgt_man, pre, targets, matches = _run_matching(args)
    labels = _template_labels(tpl_man)
    lines = []
    for e, m in zip(tgt_man.entries, matches):
        tid = "none" if m.template_id is None else str(labels[m.template_id])
        lines.append(f"{e.target_id}\ttemplate={tid}\tmatched={str(m.matched).lower()}"
                     f"\tresidual={_fmt(m.residual)}\tthreshold={_fmt(m.threshold)}"
                     f"\tvotes={','.join(map(str, m.votes.tolist()))}\n")
    if args.save_overlays:
        d = Path(args.save_overlays)
        d.mkdir(parents=True, exist_ok=True)
        for e, m in zip(tgt_man.entries, matches):
            save_image(m.overlay, d / f"{e.target_id}.igrd")
    _write(args.out, "".join(lines))


def cmd_embed(args):
    tpl_man, tgt_man, pre, targets, matches = _run_matching(args)
    spec = embed.FeatureExtractorSpec.parse(args.extractor)
    labels = _template_labels(tpl_man)
    ids = [e.target_id for e in tgt_man.entries]
    records = embed.build_records(ids, targets, matches, spec)
    records = [replace(r, template_id=None if r.template_id is None else labels[r.template_id])
               for r in records]
    if args.text:
        text = embed.ingest_text_features(args.text)
        # a manifest text id, when given, names the table row for that target
        keyed = {}
        for e in tgt_man.entries:
            key = e.text_id or e.target_id
            if key in text:
                keyed[e.target_id] = text[key]
        records = embed.impute_missing_text(records, keyed, args.text_dim)
    embed.write_table({r.target_id: r.full for r in records}, args.out, binary=args.binary)
    if args.meta:
        rows = ["id\ttemplate\tmatched\ttext_imputed\timputed_from"]
        for r, m in zip(records, matches):
            rows.append(f"{r.target_id}\t{'-' if r.template_id is None else r.template_id}"
                        f"\t{str(m.matched).lower()}\t{str(r.text_imputed).lower()}"
                        f"\t{r.imputed_from or '-'}")
        _write(args.meta, "\n".join(rows) + "\n")


def cmd_cluster(args):
    ids, X = _read_embeddings(args.embeddings)
    ca = analysis.kmeans(X, args.k, seed=args.seed, max_iter=args.max_iter)
    _write(args.out, "".join(f"{i}\t{int(lab)}\n" for i, lab in zip(ids, ca.labels)))


def _read_labels(path, ids):
    labels = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{n}: expected 'point_id<TAB>label'")
        labels[parts[0]] = int(parts[1])
    missing = [i for i in ids if i not in labels]
    if missing:
        raise ValueError(f"{path}: no label for {missing[0]!r}")
    return np.array([labels[i] for i in ids])


def cmd_metrics(args):
    ids, X = _read_embeddings(args.embeddings)
    if args.labels:
        labels = _read_labels(args.labels, ids)
    elif args.k:
        labels = analysis.kmeans(X, args.k, seed=args.seed).labels
    else:
        raise UsageError("metrics: one of --labels or --k is required")
    sil = analysis.silhouette(X, labels)
    dbi = analysis.davies_bouldin(X, labels)
    _write(args.out, f"n={len(ids)}\nk={len(np.unique(labels))}\n"
                     f"silhouette_mean={sil.mean!r}\n"
                     f"silhouette_std_across_clusters={sil.std_across_clusters!r}\n"
                     f"dbi={dbi!r}\n")


def cmd_retrieve(args):
    ids, X = _read_embeddings(args.embeddings)
    if args.query not in ids:
        raise ValueError(f"query id {args.query!r} not in {args.embeddings}")
    q = X[ids.index(args.query)]
    hits = analysis.knn_retrieve(q, list(zip(ids, X)), args.k, args.metric,
                                 query_id=args.query, self_exclude=not args.include_self)
    _write(args.out, "".join(f"{rid}\t{d!r}\n" for rid, d in hits))


def cmd_tree(args):
    ids, X = _read_embeddings(args.embeddings)
    D = analysis.pairwise_distances(X, args.metric)
    tree = analysis.upgma(D, ids)
    log.info("tree: method=%s leaves=%d metric=%s", tree.method, len(ids), args.metric)
    _write(args.out, tree.newick() + "\n")


def cmd_splits(args):
    runs = analysis.temporal_splits(args.periods)
    log.info("splits: %d periods -> %d runs", args.periods, len(runs))
    _write(args.out, "".join(f"{i}\t{j}\n" for i, j in runs))


# ---------------------------------------------------------------------------

def _match_flags(p):
    p.add_argument("--templates", required=True, help="template manifest")
    p.add_argument("--targets", required=True, help="target manifest")
    p.add_argument("--tr", type=float, default=DEFAULT_TR,
                   help="relative residual threshold (match if ||Ax-y|| <= tr*||y||)")
    p.add_argument("--lambda-ratio", type=float, default=DEFAULT_LAMBDA_RATIO,
                   help="l1 penalty as a fraction of ||A^T y||_inf")
    p.add_argument("--augment", type=int, default=DEFAULT_AUGMENT,
                   help="extra dictionary columns per template (flip + crops)")
    p.add_argument("--seed", type=int, default=0, help="augmentation seed")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for matching")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    parser = _Parser(prog="macromatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("synth", help="write a synthetic template/macro corpus")
    p.add_argument("--templates", type=int, required=True, help="number of templates")
    p.add_argument("--per", type=int, required=True, help="macros per template")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-coverage", type=float, default=0.3, help="largest overlay coverage")
    p.add_argument("--noise", type=int, default=0, help="pure-noise targets to add")
    p.add_argument("--size", type=int, default=48, help="image side in pixels")
    p.add_argument("--grouped", action="store_true",
                   help="group macros by template instead of interleaving")
    p.add_argument("--seed", type=int, default=0, help="corpus seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-templates", help="discover templates from targets")
    p.add_argument("--targets", required=True, help="target manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tr", type=float, default=DEFAULT_TR, help="relative residual threshold")
    p.add_argument("--tb", type=float, default=None,
                   help=f"blend convergence threshold in l2 (default {DEFAULT_TB_RMS}*sqrt(n))")
    p.add_argument("--lambda-ratio", type=float, default=DEFAULT_LAMBDA_RATIO,
                   help="l1 penalty as a fraction of ||A^T y||_inf")
    p.add_argument("--seed", type=int, default=0, help="augmentation seed")
    p.set_defaults(func=cmd_build_templates)

    p = sub.add_parser("match", help="match targets to templates")
    _match_flags(p)
    p.add_argument("--out", default="-", help="report path (default stdout)")
    p.add_argument("--save-overlays", default=None, help="directory for IGRD overlays")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("embed", help="write decoupled embeddings")
    _match_flags(p)
    p.add_argument("--out", required=True, help="embedding table path")
    p.add_argument("--extractor", default="raw-pixels",
                   help="raw-pixels or block-mean:<b>")
    p.add_argument("--text", default=None, help="text feature table (ETBL/ETBB)")
    p.add_argument("--text-dim", type=int, default=None,
                   help="text dimension to assume when no target has text")
    p.add_argument("--binary", action="store_true", help="write ETBB instead of ETBL")
    p.add_argument("--meta", default=None, help="per-record provenance TSV")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", help="k-means over an embedding table")
    p.add_argument("--embeddings", required=True, help="embedding table")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--seed", type=int, default=0, help="k-means++ seed")
    p.add_argument("--max-iter", type=int, default=300, help="Lloyd iteration cap")
    p.add_argument("--out", default="-", help="labels path (default stdout)")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("metrics", help="silhouette and Davies-Bouldin report")
    p.add_argument("--embeddings", required=True, help="embedding table")
    p.add_argument("--labels", default=None, help="cluster labels from 'cluster'")
    p.add_argument("--k", type=int, default=None, help="cluster with k-means first")
    p.add_argument("--seed", type=int, default=0, help="k-means++ seed")
    p.add_argument("--out", default="-", help="report path (default stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("retrieve", help="nearest neighbours of one record")
    p.add_argument("--embeddings", required=True, help="embedding table")
    p.add_argument("--query", required=True, help="query record id")
    p.add_argument("--k", type=int, default=4, help="neighbours to return")
    p.add_argument("--metric", choices=analysis.METRICS, default="euclidean")
    p.add_argument("--include-self", action="store_true", help="keep the query in results")
    p.add_argument("--out", default="-", help="output path (default stdout)")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("tree", help="UPGMA tree as Newick")
    p.add_argument("--embeddings", required=True, help="embedding table")
    p.add_argument("--metric", choices=analysis.METRICS, default="euclidean")
    p.add_argument("--out", default="-", help="Newick path (default stdout)")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("splits", help="enumerate temporal train/test splits")
    p.add_argument("--periods", type=int, required=True, help="number of time periods")
    p.add_argument("--out", default="-", help="output path (default stdout)")
    p.set_defaults(func=cmd_splits)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"macromatch: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"macromatch {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
