import json

import numpy as np
import pytest

from oracles import average_precision
from retrocode.benchmark import (
    BenchmarkConfig,
    CloneBenchmark,
    CloneQuery,
    build_synthetic_benchmark,
    line_starts,
    load_benchmark,
    save_benchmark,
    tree_digest,
)
from retrocode.codeview import parse
from retrocode.dense import build_vector_index, build_vocab, fragment_symbols, init_params
from retrocode.evaluate import EvalReport, alpha_sweep, rank_programs, run_clone_eval, run_completion_eval
from retrocode.generator import CopyAugmentedModel, complete_line, train_ngram
from retrocode.hybrid import RetrievalConfig, RetrievalIndices
from retrocode.lexer import TokenKind, tokenize
from retrocode.metrics import exact_match
from retrocode.sparse import build_bm25

TINY = dict(dev_problems=2, train_programs=5, fragment_length=32)


@pytest.fixture(scope="module")
def bench():
    return build_synthetic_benchmark(BenchmarkConfig(num_problems=12, variants_per_problem=3, seed=3, **TINY))


@pytest.fixture(scope="module")
def indices(bench):
    pool = bench.clone.pool
    params = init_params(build_vocab(fragment_symbols(pool)), 16, seed=0)
    return RetrievalIndices(pool, build_bm25(pool), params, build_vector_index(params, pool))


def test_counting():
    b = build_synthetic_benchmark(BenchmarkConfig(num_problems=2, variants_per_problem=3, **TINY))
    assert len(b.clone.sources) == 6 and len(b.clone.problems) == 2
    assert len({q.problem_id for q in b.clone.queries}) == 2
    assert len(b.clone.queries) == 6


def test_config_validation():
    with pytest.raises(ValueError):
        BenchmarkConfig(variants_per_problem=1)
    with pytest.raises(ValueError):
        BenchmarkConfig(num_problems=0)


def test_variants_parse_and_are_distinct(bench):
    seeds = {}
    for pid, paths in bench.clone.problems.items():
        texts = [dict(bench.clone.sources)[p] for p in paths]
        for t in texts:
            assert parse(tokenize(t)).tokens() == tokenize(t)
        seeds[pid] = texts
    # all variants of a problem share a seed, so no two problems coincide
    flat = [t for ts in seeds.values() for t in ts]
    assert len(set(flat)) == len(flat)


def test_every_query_has_relevant_programs(bench):
    for q in bench.clone.queries:
        rel = bench.clone.relevant(q)
        assert rel and q.path not in rel
        assert len(q.tokens) < len(tokenize(dict(bench.clone.sources)[q.path]))


def test_completion_split_is_disjoint(bench):
    held = {p for p, _ in bench.clone.sources} - set(bench.completion.db_paths)
    assert len(held) == len(bench.clone.problems)
    for item in bench.completion.line_items + bench.completion.token_items:
        assert item.path in held and len(item.context) >= bench.config.min_context
    for item in bench.completion.line_items:
        assert item.gold[-1].kind is TokenKind.NEWLINE
        assert len(item.context) in line_starts(item.context + item.gold)


def test_same_seed_identical_bytes(tmp_path, bench):
    again = build_synthetic_benchmark(bench.config)
    save_benchmark(bench, tmp_path / "a")
    save_benchmark(again, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_round_trip(tmp_path, bench):
    save_benchmark(bench, tmp_path)
    back = load_benchmark(tmp_path)
    assert back.clone.problems == bench.clone.problems
    assert back.clone.sources == sorted(bench.clone.sources)
    assert [q.tokens for q in back.clone.queries] == [q.tokens for q in bench.clone.queries]
    assert back.completion == bench.completion
    assert back.train_sources == bench.train_sources


def test_exact_duplicate_pool_gives_perfect_sparse_p1(programs):
    sources, problems = [], {}
    for pid, text in enumerate(programs[:15]):
        problems[pid] = [f"p{pid}_a.py", f"p{pid}_b.py"]
        sources += [(problems[pid][0], text), (problems[pid][1], text)]
    toks = {p: tokenize(t) for p, t in sources}
    queries = [CloneQuery(p, pid, toks[p][: len(toks[p]) // 2]) for pid, ps in problems.items() for p in ps]
    b = CloneBenchmark(problems, queries, sources, 32)
    rep = run_clone_eval(b, RetrievalIndices(b.pool, build_bm25(b.pool)), RetrievalConfig("sparse"))
    assert rep.metrics["p_at_1"] == 1.0


def test_untrained_dense_is_near_chance(bench, indices):
    rep = run_clone_eval(bench.clone, indices, RetrievalConfig("dense"))
    assert 0.0 <= rep.metrics["p_at_1"] <= 0.5


def test_report_recomputable_from_dump(bench, indices):
    rep = run_clone_eval(bench.clone, indices, RetrievalConfig("sparse"), k=100)
    aps, hits = [], 0
    for row in rep.per_query:
        ids = [p for p, _ in row["ranking"]]
        rel = set(row["relevant"])
        aps.append(average_precision(ids, rel, 100))
        hits += ids[0] in rel
        assert row["query"] not in ids
    assert abs(np.mean(aps) - rep.metrics["map@100"]) <= 1e-9
    assert hits / len(aps) == rep.metrics["p_at_1"]


def test_program_score_is_best_fragment(bench, indices):
    ranked = rank_programs(bench.clone, indices, RetrievalConfig("sparse"), 0)
    scores = [s for _, s in ranked]
    assert scores == sorted(scores, reverse=True)
    assert len(ranked) == len(bench.clone.sources) - 1


def test_report_ranges_enforced():
    with pytest.raises(ValueError):
        EvalReport("clone", {"map@100": 1.5}, {})
    with pytest.raises(ValueError):
        EvalReport("completion", {"perplexity": 0.5}, {})


def test_report_is_pure_function(bench, indices):
    a = run_clone_eval(bench.clone, indices, RetrievalConfig("hybrid"), stamp={"seed": 1})
    b = run_clone_eval(bench.clone, indices, RetrievalConfig("hybrid"), stamp={"seed": 1})
    assert a.to_json(True) == b.to_json(True)
    assert json.loads(a.to_json())["fingerprint"] == a.fingerprint


def test_alpha_sweep_picks_best(bench, indices):
    alphas = (0.0, 1.0, 1e6)
    best, rep = alpha_sweep(bench.clone, indices, alphas)
    maps = [r["map@100"] for r in rep.per_query]
    assert rep.metrics["map@100.best"] == max(maps)
    assert best == alphas[maps.index(max(maps))]


def test_completion_retrieval_off_is_base_model(bench):
    db = bench.completion_db()
    model = CopyAugmentedModel(train_ngram(db))
    items = bench.completion.line_items[:6]
    tok_items = bench.completion.token_items[:3]
    idx = RetrievalIndices(db, build_bm25(db))
    with_r = run_completion_eval(items, tok_items, model, idx, RetrievalConfig("sparse"))
    off = run_completion_eval(items, tok_items, model, None, None)
    for k in ("em", "edit_sim", "perplexity"):
        assert with_r.metrics[f"off.{k}"] == off.metrics[k]
    base = CopyAugmentedModel(model.base, lam=1.0)
    lam_one = run_completion_eval(items, tok_items, base, idx, RetrievalConfig("sparse")).metrics
    assert {k: v for k, v in lam_one.items() if not k.startswith("off.")} == off.metrics
    for row in with_r.per_query:
        if row.get("em") == 1:
            assert row["edit_sim"] == 100.0


def test_variants_differ_from_their_seed(bench):
    from retrocode.augment import derive_seed
    from retrocode.benchmark import _distinct_programs

    seeds = _distinct_programs(bench.config.num_problems, derive_seed(bench.config.seed, "problems"), set())
    texts = dict(bench.clone.sources)
    for pid, paths in bench.clone.problems.items():
        for p in paths:
            assert tokenize(texts[p]) != tokenize(seeds[pid])
