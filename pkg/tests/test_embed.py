import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macromatch.embed import (EmbeddingRecord, FeatureExtractorSpec, TableFormatError,
                              build_records, decoupled_embedding, extract_image_features,
                              impute_missing_text, read_table, write_table)
from macromatch.imagecore import ImageGrid, prepare_working_set
from macromatch.matcher import build_dictionary, match_template
from macromatch.synth import OverlaySpec, gen_macro, gen_templates


def rec(tid, template, text=None):
    return EmbeddingRecord(tid, template, np.zeros(2),
                           None if text is None else np.asarray(text, dtype=float))


def test_spec_parse_and_dims():
    raw = FeatureExtractorSpec.parse("raw-pixels")
    assert raw.output_dim(48, 48) == 2304
    blk = FeatureExtractorSpec.parse("block-mean:8")
    assert str(blk) == "block-mean:8" and blk.output_dim(48, 48) == 36
    with pytest.raises(ValueError):
        FeatureExtractorSpec.parse("block-mean:x")
    with pytest.raises(ValueError):
        blk.output_dim(50, 48)


def test_block_mean_whole_image():
    img = ImageGrid(np.random.default_rng(0).uniform(0, 255, (48, 48)))
    f = extract_image_features(img, FeatureExtractorSpec("block-mean", 48))
    assert f.shape == (1,) and f[0] == pytest.approx(img.data.mean())


def test_block_mean_quadrants():
    q = np.block([[np.full((24, 24), 1.0), np.full((24, 24), 2.0)],
                  [np.full((24, 24), 3.0), np.full((24, 24), 4.0)]])
    f = extract_image_features(ImageGrid(q), FeatureExtractorSpec("block-mean", 24))
    assert f.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_decoupled_embedding_halves():
    tpls = gen_templates(2, seed=4)
    macro, _ = gen_macro(tpls[1], OverlaySpec("text-band", 0.2, 0.0, anchor="bottom"), seed=0)
    _, (y,), templates = prepare_working_set([macro], tpls)
    r = match_template(build_dictionary(templates), y)
    assert r.matched and r.template_id == 1
    spec = FeatureExtractorSpec()
    e = decoupled_embedding(y, r, spec)
    assert e.shape == (4608,)
    assert np.allclose(e[:2304] + e[2304:], y.data.reshape(-1))
    recs = build_records(["m0"], [y], [r], spec)
    assert recs[0].template_id == 1 and np.array_equal(recs[0].full, e)


def test_table_roundtrip_text(tmp_path):
    table = {"a": np.array([0.1, -2.5]), "b": np.array([1e-9, 3.0])}
    write_table(table, tmp_path / "t.etbl")
    back = read_table(tmp_path / "t.etbl")
    assert list(back) == ["a", "b"]
    assert all(np.array_equal(back[k], table[k]) for k in table)


def test_table_roundtrip_binary(tmp_path):
    table = {"x1": np.array([0.5, 2.0, -1.0]), "é": np.array([3.0, 4.0, 5.0])}
    write_table(table, tmp_path / "t.etbb", binary=True)
    back = read_table(tmp_path / "t.etbb")
    assert all(np.array_equal(back[k], table[k]) for k in table)


def test_empty_table(tmp_path):
    (tmp_path / "e.etbl").write_text("ETBL1 3\n")
    assert read_table(tmp_path / "e.etbl") == {}


@pytest.mark.parametrize("body,msg", [
    ("ETBL1 2\na 1 2\na 3 4\n", ":3: duplicate"),
    ("ETBL1 2\na 1 2\nb 3\n", ":3: expected 2"),
    ("ETBL1 2\na 1 zz\n", ":2:"),
    ("ETBX 2\n", ":1:"),
    ("", ":1: empty"),
])
def test_table_errors(tmp_path, body, msg):
    p = tmp_path / "bad.etbl"
    p.write_text(body)
    with pytest.raises(TableFormatError, match=msg):
        read_table(p)


def test_truncated_binary(tmp_path):
    write_table({"a": np.ones(4)}, tmp_path / "t.etbb", binary=True)
    raw = (tmp_path / "t.etbb").read_bytes()
    (tmp_path / "t.etbb").write_bytes(raw[:-3])
    with pytest.raises(TableFormatError):
        read_table(tmp_path / "t.etbb")


def test_write_rejects_ragged(tmp_path):
    with pytest.raises(TableFormatError):
        write_table({"a": np.ones(2), "b": np.ones(3)}, tmp_path / "r.etbl")


def test_impute_template_mean():
    out = impute_missing_text([rec("a", 0), rec("b", 0), rec("c", 0)],
                              {"a": [1.0, 1.0], "b": [3.0, 3.0]})
    assert out[2].text_part.tolist() == [2.0, 2.0]
    assert out[2].text_imputed and out[2].imputed_from == "template"
    assert not out[0].text_imputed


def test_impute_noop_when_complete():
    recs = [rec("a", 0, [1.0]), rec("b", 1, [2.0])]
    out = impute_missing_text(recs, {})
    assert [r.text_part.tolist() for r in out] == [[1.0], [2.0]]
    assert not any(r.text_imputed for r in out)


def test_impute_corpus_fallback():
    out = impute_missing_text([rec("a", 0), rec("b", 1), rec("c", None)],
                              {"a": [2.0, 0.0]})
    assert out[1].imputed_from == "corpus" and out[1].text_part.tolist() == [2.0, 0.0]
    assert out[2].imputed_from == "corpus"


def test_impute_without_any_text():
    with pytest.raises(ValueError, match="cannot impute"):
        impute_missing_text([rec("a", 0)], {})
    out = impute_missing_text([rec("a", 0)], {}, text_dim=3)
    assert out[0].text_part.tolist() == [0.0, 0.0, 0.0]


@given(st.lists(st.tuples(st.sampled_from([0, 1, 2, None]), st.booleans()), min_size=1,
                max_size=12), st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_impute_idempotent_and_total(spec, seed):
    rng = np.random.default_rng(seed)
    recs = [rec(f"r{i}", t) for i, (t, _) in enumerate(spec)]
    text = {f"r{i}": rng.standard_normal(2) for i, (_, has) in enumerate(spec) if has}
    once = impute_missing_text(recs, text, text_dim=2)
    twice = impute_missing_text(once, text, text_dim=2)
    assert all(r.text_part is not None and r.full.shape == (4,) for r in once)
    assert all(np.array_equal(a.text_part, b.text_part) and a.imputed_from == b.imputed_from
               for a, b in zip(once, twice))
