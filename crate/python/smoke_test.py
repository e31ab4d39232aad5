"""Smoke test for the convkg extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
then run from the repository root:
    python python/smoke_test.py
"""

import pathlib
import sys

import convkg

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def main():
    engine = convkg.Engine(str(DATA))

    s = engine.session()
    first = s.ask("Who is Michael Jackson?")
    assert first["short_text"] == "Michael Jackson is an American author, composer, singer and dancer", first
    assert first["source"] in ("REASONING", "SEARCH")
    second = s.ask("What is his father's name?")
    assert second["values"] == ["Joseph Jackson"], second
    assert second["provenance"], "answers carry their triples"
    assert 0.0 <= second["confidence"] <= 1.0
    s.reward(1, "+")
    try:
        s.reward(1, "-")
    except ValueError:
        pass
    else:
        raise AssertionError("double reward must fail")
    assert len(s) == 2

    fresh = engine.session().ask("What is his father's name?")
    assert fresh["clarification"] and fresh["source"] == "NONE", fresh

    alice = engine.session("alice").ask("Who is the president of the country where I was born?")
    assert alice["values"] == ["Emmanuel Macron"], alice

    assert engine.query("SELECT ?f\nQ2831 P22 ?f") == ["Joseph Jackson"]
    assert engine.entity_sheet("Q2831")["types"] == ["human"]

    kb = convkg.KnowledgeBase(str(DATA / "kb" / "triples.tsv"), str(DATA / "kb" / "entities.jsonl"))
    entities, triples = kb.stats()
    assert triples == len(kb) > 0 and entities > 0
    assert kb.match_pattern(s="Q2831", p="P22") == [("Q2831", "P22", "Q1349483")]
    assert kb.query("COUNT ?s\nQ2831 P3373 ?s") == ["8"]

    assert convkg.prf(["a", "b"], ["b", "c"]) == (0.5, 0.5, 0.5)
    assert convkg.prf([], []) == (1.0, 1.0, 1.0)
    p, r, f = convkg.coref_prf([["m1", "m2"]], [["m1", "m2", "m3"]])
    assert (p, r) == (1.0, 0.5)

    _, _, f1 = engine.bench(str(DATA / "bench" / "bench20.jsonl"))
    assert f1 >= 0.95, f1

    print("python smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
