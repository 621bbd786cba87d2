import subprocess
import sys

import numpy as np
import pytest

from macromatch.cli import build_parser, main
from macromatch.embed import read_table, write_table
from macromatch.imagecore import load_image, save_image
from macromatch.manifest import Entry, Manifest, ManifestError, load_manifest
from macromatch.synth import OverlaySpec, gen_macro

SUBCOMMANDS = ["synth", "build-templates", "match", "embed", "cluster", "metrics",
               "retrieve", "tree", "splits"]


def test_manifest_roundtrip(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P5 1 1 255\n\x00")
    man = Manifest([Entry("a", "a.pgm", 3, "txt_a", ("x", "y")), Entry("b", "a.pgm")],
                   {"seed": 0, "global_mean": 12.5})
    man.save(tmp_path / "m.manifest")
    back = load_manifest(tmp_path / "m.manifest")
    assert back.entries == man.entries
    assert back.global_mean == 12.5 and back.params["seed"] == "0"
    assert back.resolve(back.entries[0]) == tmp_path / "a.pgm"


@pytest.mark.parametrize("body,msg", [
    ("MMAN0\n\n", ":1:"),
    ("MMAN1\nnonsense\n\n", ":2: expected key=value"),
    ("MMAN1\n\na\ta.pgm\na\ta.pgm\n", ":4: duplicate"),
    ("MMAN1\n\na\tmissing.pgm\n", ":3: missing file"),
    ("MMAN1\n\na\ta.pgm\tx\n", ":3: bad template id"),
    ("MMAN1\n\nlonely\n", ":3: expected"),
])
def test_manifest_errors(tmp_path, body, msg):
    (tmp_path / "a.pgm").write_bytes(b"P5 1 1 255\n\x00")
    (tmp_path / "m.manifest").write_text(body)
    with pytest.raises(ManifestError, match=msg):
        load_manifest(tmp_path / "m.manifest")


def test_manifest_duplicate_on_write():
    with pytest.raises(ManifestError):
        Manifest([Entry("a", "x"), Entry("a", "y")]).format()


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_documents_every_flag(cmd, capsys):
    parser = build_parser()
    with pytest.raises(SystemExit) as exc:
        parser.parse_args([cmd, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = parser._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


def test_usage_errors_exit_1(tmp_path):
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["splits", "--periods", "3", "--unknown"]) == 1
    assert main(["metrics", "--embeddings", str(tmp_path / "x")]) != 0


def test_data_errors_exit_2(tmp_path, capsys):
    assert main(["tree", "--embeddings", str(tmp_path / "none.etbl")]) == 2
    (tmp_path / "bad.manifest").write_text("MMAN1\n\nq\tq.pgm\n")
    rc = main(["build-templates", "--targets", str(tmp_path / "bad.manifest"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "bad.manifest:3" in capsys.readouterr().err


def test_tree_example(tmp_path, capsys):
    write_table({"a": np.array([0.0, 0.0]), "b": np.array([2.0, 0.0]),
                 "c": np.array([1.0, np.sqrt(63.0)])}, tmp_path / "e.etbl")
    assert main(["tree", "--embeddings", str(tmp_path / "e.etbl"), "--metric",
                 "euclidean"]) == 0
    assert capsys.readouterr().out == "((a:1,b:1):3,c:4);\n"


def test_splits(capsys):
    assert main(["splits", "--periods", "13"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 78


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--templates", "4", "--per", "25", "--out", str(root / "c"),
                 "--noise", "3"]) == 0
    return root


def test_synth_layout(corpus):
    man = load_manifest(corpus / "c" / "corpus.manifest")
    assert len(man.entries) == 103
    assert man.entries[0].template_id == 0 and man.entries[-1].template_id is None
    tpl = load_manifest(corpus / "c" / "templates.manifest")
    assert [e.template_id for e in tpl.entries] == [0, 1, 2, 3]


def test_match_example_template_two(corpus, tmp_path, capsys):
    # a lightly overlaid macro so the strict threshold still admits it
    c = corpus / "c"
    t = load_image(c / "templates" / "tpl_002.pgm")
    m, _ = gen_macro(t, OverlaySpec("text-band", 0.02, 255.0, anchor="top"), seed=3)
    save_image(m, tmp_path / "q.pgm")
    Manifest([Entry("q", "q.pgm", 2)]).save(tmp_path / "q.manifest")
    rc = main(["match", "--templates", str(c / "templates.manifest"),
               "--targets", str(tmp_path / "q.manifest"), "--tr", "0.45",
               "--lambda-ratio", "0.05", "--jobs", "1"])
    assert rc == 0
    fields = capsys.readouterr().out.split("\t")
    assert fields[:3] == ["q", "template=2", "matched=true"]


def test_pipeline(corpus, capsys):
    c = corpus / "c"
    assert main(["build-templates", "--targets", str(c / "corpus.manifest"),
                 "--out", str(corpus / "built")]) == 0
    built = load_manifest(corpus / "built" / "templates.manifest")
    # three noise images seed their own singleton templates
    assert len(built.entries) == 7
    assert sorted(len(e.members) for e in built.entries) == [1, 1, 1, 25, 25, 25, 25]

    common = ["--templates", str(c / "templates.manifest"),
              "--targets", str(c / "corpus.manifest"), "--jobs", "1"]
    assert main(["match", *common, "--out", str(corpus / "report.tsv")]) == 0
    lines = (corpus / "report.tsv").read_text().splitlines()
    truth = [e.template_id for e in load_manifest(c / "corpus.manifest").entries]
    got = [line.split("\t")[1].split("=")[1] for line in lines]
    assert sum(g == str(t) for g, t in zip(got[:100], truth[:100])) >= 95
    assert got[100:] == ["none"] * 3

    write_table({f"m{i:05d}": np.array([float(i % 4), 1.0]) for i in range(0, 100, 2)},
                corpus / "text.etbl")
    assert main(["embed", *common, "--out", str(corpus / "e.etbl"),
                 "--text", str(corpus / "text.etbl"), "--meta", str(corpus / "meta.tsv")]) == 0
    table = read_table(corpus / "e.etbl")
    assert len(table) == 103 and next(iter(table.values())).shape == (2 * 2304 + 2,)
    meta = (corpus / "meta.tsv").read_text().splitlines()
    assert meta[0].startswith("id\ttemplate") and "corpus" in meta[-1]

    e = str(corpus / "e.etbl")
    assert main(["cluster", "--embeddings", e, "--k", "4", "--out",
                 str(corpus / "labels.tsv")]) == 0
    assert main(["metrics", "--embeddings", e, "--labels", str(corpus / "labels.tsv")]) == 0
    report = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert report["n"] == "103" and report["k"] == "4"
    assert -1 <= float(report["silhouette_mean"]) <= 1
    assert main(["retrieve", "--embeddings", e, "--query", "m00000", "--k", "3"]) == 0
    hits = capsys.readouterr().out.splitlines()
    assert len(hits) == 3 and all(not h.startswith("m00000\t") for h in hits)
    assert main(["tree", "--embeddings", e]) == 0
    assert capsys.readouterr().out.rstrip().endswith(";")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "macromatch.cli", "splits", "--periods", "3"],
                         capture_output=True, text=True, check=True)
    assert out.stdout == "0\t1\n0\t2\n1\t2\n"
