import json
import random

import pytest

from helpers import minimal_cover_size
from kgcode import data_path
from kgcode.core import Document, EntityType, RelationType, Schema, load_schema, triple
from kgcode.datasets import (
    Dataset,
    UncoveredRelationError,
    hard_subset,
    load_dataset,
    relation_ids_of,
    sample_subset,
    save_dataset,
    select_exemplars,
)


def _line(doc_id, rel="work for", head="John", tail="IBM"):
    return json.dumps({
        "id": doc_id,
        "text": f"{head} and {tail}.",
        "triples": [{"head": {"text": head, "type": "person"}, "relation": rel,
                     "tail": {"text": tail, "type": "organization"}}],
    })


def test_load_three_docs(tmp_path, conll_schema):
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join(_line(i) for i in "abc") + "\n")
    ds = load_dataset(p, conll_schema)
    assert ds.ids() == ["a", "b", "c"]
    assert ds.diagnostics == ()


def test_load_skips_malformed_line(tmp_path, conll_schema):
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join([_line("a"), "{not json", _line("b"), _line("c")]) + "\n")
    ds = load_dataset(p, conll_schema)
    assert len(ds) == 3
    assert len(ds.diagnostics) == 1 and ds.diagnostics[0].line == 2


def test_load_schema_mismatch_is_not_fatal(tmp_path, conll_schema):
    p = tmp_path / "d.jsonl"
    p.write_text(_line("a", rel="cures") + "\n")
    ds = load_dataset(p, conll_schema)
    assert len(ds) == 1
    assert any("cures" in d.message for d in ds.diagnostics)


def test_load_duplicate_ids_and_normalization(tmp_path, conll_schema):
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join([_line("a", head="  John   Smith "), _line("a"), ""]) + "\n")
    ds = load_dataset(p, conll_schema)
    assert len(ds) == 1
    assert ds.documents[0].gold[0].head.text == "John Smith"
    assert "duplicate" in ds.diagnostics[0].message


def test_load_missing_file(tmp_path, conll_schema):
    with pytest.raises(OSError):
        load_dataset(tmp_path / "nope.jsonl", conll_schema)


def test_save_load_round_trip(tmp_path, toy_test, conll_schema):
    save_dataset(toy_test, tmp_path / "x.jsonl")
    again = load_dataset(tmp_path / "x.jsonl", conll_schema)
    assert again.documents == toy_test.documents


def test_toy_shape(toy_test, toy_train, conll_schema):
    assert len(toy_test) == 20
    assert toy_test.diagnostics == () and toy_train.diagnostics == ()
    assert len(conll_schema.entity_types) == 3 and len(conll_schema.relation_types) == 4


def _docs(n):
    return Dataset("s", tuple(Document(f"d{i}", f"text {i}", (triple("a", "r", "b"),)) for i in range(n)))


def test_sample_all():
    ds = _docs(10)
    assert sample_subset(ds, 10, 7).ids() == ds.ids()


def test_sample_deterministic_and_ordered():
    ds = _docs(10)
    a, b = sample_subset(ds, 3, 1), sample_subset(ds, 3, 2)
    assert a == sample_subset(ds, 3, 1)
    assert b == sample_subset(ds, 3, 2)
    assert a.ids() != b.ids()
    order = ds.ids()
    assert [order.index(i) for i in a.ids()] == sorted(order.index(i) for i in a.ids())


def test_sample_300_stable():
    ds = _docs(1000)
    a = sample_subset(ds, 300, 42)
    assert len(a) == 300 and a == sample_subset(ds, 300, 42)


def test_sample_too_many():
    with pytest.raises(ValueError, match=r"11.*10"):
        sample_subset(_docs(10), 11, 0)


def _rel_schema(n_rel):
    return Schema("s", (EntityType("e", "E"),), tuple(RelationType(f"r{i}", f"r{i}") for i in range(n_rel)))


def _doc_with(doc_id, rels):
    return Document(doc_id, doc_id, tuple(triple(f"h{j}", r, f"t{j}") for j, r in enumerate(rels)))


def test_forced_cover_one_per_relation():
    schema = _rel_schema(3)
    train = Dataset("s", (_doc_with("a", ["r0"]), _doc_with("b", ["r1"]), _doc_with("c", ["r2"])))
    ex = select_exemplars(train, schema, 1, 0)
    assert ex.ids() == ["a", "b", "c"]
    assert ex.covered_relations == {"r0", "r1", "r2"}


def test_shared_doc_cover_is_two():
    schema = _rel_schema(3)
    train = Dataset("s", (_doc_with("ab", ["r0", "r1"]), _doc_with("c", ["r2"])))
    rel_sets = [relation_ids_of(d, schema) for d in train.documents]
    assert minimal_cover_size(rel_sets, {"r0", "r1", "r2"}) == 2
    ex = select_exemplars(train, schema, 1, 5)
    assert len(ex.exemplars) == 2
    assert ex.covered_relations == {"r0", "r1", "r2"}


def test_ade_three_shot():
    schema = load_schema(data_path("ade_schema.json"))
    train = Dataset("ade", tuple(
        Document(f"d{i}", "x", (triple(f"drug{i}", "adverse effect", f"ill{i}"),)) for i in range(10)
    ))
    ex = select_exemplars(train, schema, 3, 0)
    assert len(ex.exemplars) == 3


def test_exemplars_deterministic(toy_train, conll_schema):
    a = select_exemplars(toy_train, conll_schema, 2, 9)
    assert a == select_exemplars(toy_train, conll_schema, 2, 9)
    assert a.covered_relations == {r.id for r in conll_schema.relation_types}


def test_uncovered_relation_error():
    schema = _rel_schema(3)
    train = Dataset("s", (_doc_with("a", ["r0"]),))
    with pytest.raises(UncoveredRelationError) as err:
        select_exemplars(train, schema, 1, 0)
    assert err.value.missing == ["r1", "r2"]


def test_exemplar_order_follows_schema():
    schema = _rel_schema(2)
    train = Dataset("s", (_doc_with("b", ["r1"]), _doc_with("a", ["r0"])))
    assert select_exemplars(train, schema, 1, 0).ids() == ["a", "b"]


def test_hard_subset_filters(toy_test):
    cmv = Document("cmv", "CMV and ganciclovir-induced brain damage.", (
        triple("CMV", "adverse effect", "brain damage"), triple("ganciclovir", "adverse effect", "brain damage")))
    single = Document("s", "x", (triple("a", "r", "b"),))
    assert hard_subset(Dataset("s", (cmv, single))).ids() == ["cmv"]
    assert len(hard_subset(Dataset("s", (single,)))) == 0
    hard = hard_subset(toy_test)
    assert 0 < len(hard) < len(toy_test)
    assert hard_subset(hard) == hard


def test_random_cover_property():
    rng = random.Random(2)
    for _ in range(50):
        n_rel = rng.randint(1, 5)
        schema = _rel_schema(n_rel)
        docs = tuple(
            _doc_with(f"d{i}", rng.sample([f"r{j}" for j in range(n_rel)], rng.randint(1, n_rel)))
            for i in range(rng.randint(1, 8))
        )
        train = Dataset("s", docs)
        present = set().union(*(relation_ids_of(d, schema) for d in docs))
        if len(present) < n_rel:
            with pytest.raises(UncoveredRelationError):
                select_exemplars(train, schema, 1, 0)
            continue
        ex = select_exemplars(train, schema, rng.randint(1, 3), rng.randint(0, 99))
        assert ex.covered_relations == present
        assert len(set(ex.ids())) == len(ex.ids())
