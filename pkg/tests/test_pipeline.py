import copy

import numpy as np
import pytest

from increpair.corpus import (SynthConfig, Token, coarse, generate_synthetic, gold_labels,
                              parse_utterance, to_incremental_gold)
from increpair.evaluation import _coarse_steps, edit_overhead, edit_overhead_counts
from increpair.pipeline import (Detector, LabelEdit, PipelineError, RepairHypothesis,
                                RepairStack, diff_states, hypothesis_count_bound, new_detector,
                                replay, run_detector)
from helpers import gold_oracle, scripted
from oracles import count_unnecessary

JOHN = parse_utterance("John/NNP likes/VBZ uh/UH loves/VBZ Mary/NNP")
JOHN_GOLD = parse_utterance("John/NNP [ likes/VBZ + {uh/UH} loves/VBZ ] Mary/NNP")


def fig4_classifiers():
    """Decisions of the worked example: a premature onset at 'likes', then the real one."""
    return scripted(
        edit=lambda i: i["target"] == 2,
        rp_start=lambda i: i["n"] in (1, 3),
        rm_start=lambda i: (i["n"], i["cand"]) in ((1, 0), (3, 1)),
        rp_end=lambda i: i["n"] == 3 and i["hyp"] == (1, 3),
    )


def _tokens(words):
    return [Token(w, "NN", i) for i, w in enumerate(words)]


class TestWorkedExample:
    def test_coarse_trace(self, synth_lms):
        det = Detector(synth_lms, fig4_classifiers())
        run = run_detector(det, JOHN.tokens)
        steps = _coarse_steps(run.edit_log)
        assert steps == [
            [LabelEdit("add", 0, "fluent")],
            [LabelEdit("add", 0, "rm"), LabelEdit("add", 1, "rp")],
            [LabelEdit("revoke", 0, "rm"), LabelEdit("revoke", 1, "rp"), LabelEdit("add", 2, "ed")],
            [LabelEdit("add", 1, "rm"), LabelEdit("add", 3, "rp")],
            [LabelEdit("add", 4, "fluent")],
        ]
        assert sum(map(len, steps)) == 9

    def test_edit_overhead_is_four_ninths(self, synth_lms):
        run = run_detector(Detector(synth_lms, fig4_classifiers()), JOHN.tokens)
        inc = to_incremental_gold(JOHN_GOLD)
        assert edit_overhead_counts(run.edit_log, inc) == (4, 9)
        assert edit_overhead(run.edit_log, inc) == 4 / 9
        gold_coarse = [tuple(coarse(s) for s in g) for g in inc]
        assert count_unnecessary(_coarse_steps(run.edit_log), gold_coarse) == (4, 9)

    def test_final_state_matches_gold(self, synth_lms):
        run = run_detector(Detector(synth_lms, fig4_classifiers()), JOHN.tokens)
        assert run.final == gold_labels(JOHN_GOLD)
        assert run.outputs[-1] == frozenset({(1, 3)})


class TestEditScripts:
    def test_fluent_word_gets_fluent_add(self, synth_lms):
        det = Detector(synth_lms, scripted())
        for i, w in enumerate(["i", "want", "it"]):
            assert det.consume(Token(w, "NN", i)) == [LabelEdit("add", i, "fluent")]

    def test_diff_and_replay(self):
        a = (frozenset(), frozenset({"rm_start"}))
        b = (frozenset({"ed"}), frozenset(), frozenset())
        edits = diff_states(a, b)
        assert LabelEdit("revoke", 1, "rm_start") in edits
        assert LabelEdit("add", 2, "fluent") in edits
        with pytest.raises(PipelineError):
            replay([LabelEdit("revoke", 0, "ed")])

    def test_replay_soundness_trained(self, small_bundle, synth_corpus):
        det = small_bundle.detector(2)
        for u in synth_corpus[:150]:
            run = run_detector(det, u.tokens)
            flat = [e for step in run.edit_log for e in step]
            assert [frozenset(s) for s in replay(flat)] == list(run.final)
            for t in range(len(u)):
                prefix = [e for step in run.edit_log[:t + 1] for e in step]
                assert tuple(frozenset(s) for s in replay(prefix)) == run.snapshots[t]

    def test_out_of_order(self, synth_lms):
        det = Detector(synth_lms, scripted())
        with pytest.raises(PipelineError):
            det.consume(Token("a", "NN", 1))


class TestOracleDetector:
    def test_reproduces_gold_with_zero_edit_overhead(self, synth_lms):
        corpus = generate_synthetic(SynthConfig(n_utts=300, repair_rate=0.25, seed=21,
                                                interregnum_rate=0.3, edit_rate=0.05))
        total = 0
        for u in corpus:
            run = run_detector(Detector(synth_lms, gold_oracle(u)), u.tokens)
            assert run.final == gold_labels(u)
            bad, tot = edit_overhead_counts(run.edit_log, to_incremental_gold(u))
            assert bad == 0
            total += tot
        assert total > 1000

    def test_embedded_repairs_coexist(self, synth_lms):
        u = parse_utterance("a/X [ b/Y + [ c/Y + d/Y ] ] e/Z")
        det = Detector(synth_lms, gold_oracle(u))
        run = run_detector(det, u.tokens)
        assert {(h.rm_start, h.rp_start) for h in det.final_repairs()} == {(1, 2), (2, 3)}
        assert run.final == gold_labels(u)


class TestWindow:
    def test_open_hypothesis_expires(self, synth_lms):
        det = Detector(synth_lms, scripted(rp_start=lambda i: i["n"] == 1,
                                           rm_start=lambda i: i["cand"] == 0))
        words = [f"w{i}" for i in range(10)]
        run = run_detector(det, _tokens(words))
        assert "rm_start" in run.snapshots[7][0]
        assert all(not tags for tags in run.snapshots[8])
        assert LabelEdit("revoke", 0, "rm_start") in run.edit_log[8]

    def test_no_hypothesis_beyond_window(self, small_bundle, synth_corpus):
        det = small_bundle.detector(2)
        for u in synth_corpus[:100]:
            det.reset()
            for t in u.tokens:
                det.consume(t)
                for h in det.stack:
                    assert t.index - h.rp_start < 7
                    assert h.rp_start - h.rm_start <= 7


class TestCapacity:
    def test_construction_bound(self, synth_lms):
        with pytest.raises(PipelineError):
            Detector(synth_lms, scripted(), capacity=3)
        with pytest.raises(PipelineError):
            RepairStack(0)

    def test_at_most_capacity_per_onset(self, synth_lms):
        # every candidate is positive; scores prefer the nearest
        rules = scripted(rp_start=lambda i: True,
                         rm_start=lambda i: (True, 1.0 / (i["n"] - i["cand"])))
        for cap in (1, 2):
            det = Detector(synth_lms, rules, capacity=cap)
            for t in _tokens([f"w{i}" for i in range(12)]):
                det.consume(t)
                per = {}
                for h in det.stack:
                    per[h.rp_start] = per.get(h.rp_start, 0) + 1
                assert max(per.values(), default=0) <= cap
                assert sum(not h.shadow for h in det.stack if h.rp_start == t.index) <= 1

    def test_shadow_promotion(self, synth_lms):
        rules = scripted(rp_start=lambda i: i["n"] == 3,
                         rm_start=lambda i: (True, {2: 0.9, 1: 0.8}.get(i["cand"], 0.1)),
                         rp_end=lambda i: i["hyp"] == (1, 3))
        det = Detector(synth_lms, rules, capacity=2)
        run_detector(det, _tokens(["a", "b", "c", "b", "e"]))
        assert [(h.rm_start, h.rp_start, h.shadow) for h in det.final_repairs()] == [(1, 3, False)]

    def test_stack_push_limit(self):
        s = RepairStack(1)
        s.push(RepairHypothesis(0, 1, (0,), 1.0))
        with pytest.raises(PipelineError):
            s.push(RepairHypothesis(0, 1, (0,), 0.5))


class TestSearchBound:
    def test_examples(self):
        assert hypothesis_count_bound(3) == 6
        # the sum of min(p, 7) for p = 1..20 is 28 + 13 * 7
        assert hypothesis_count_bound(20) == 119
        assert hypothesis_count_bound(20) <= 20 * 21 // 2
        assert hypothesis_count_bound(20, capacity=2) == 238
        assert hypothesis_count_bound(0) == 0

    def test_triangular_dominates(self):
        for n in range(60):
            assert hypothesis_count_bound(n) <= n * (n + 1) // 2

    def test_measured_evaluations(self, synth_lms):
        det = Detector(synth_lms, scripted(rp_start=lambda i: True))
        for u in generate_synthetic(SynthConfig(n_utts=100, repair_rate=0.3, seed=4)):
            run = run_detector(det, u.tokens)
            assert sum(run.rm_evals) <= hypothesis_count_bound(len(u))


class TestOverheadCounters:
    def test_fresh_detector(self, synth_lms):
        det = Detector(synth_lms, scripted())
        assert det.processing_overhead == 0.0 and det.n_classifications == 0

    def test_po_at_least_one(self, small_bundle, synth_corpus):
        det = small_bundle.detector()
        for u in synth_corpus[:50]:
            run = run_detector(det, u.tokens)
            assert all(c >= 1 for c in run.classifications)


class TestDAG:
    def test_append_only(self, small_bundle, synth_corpus):
        det = small_bundle.detector()
        for u in synth_corpus[:40]:
            det.reset()
            before = None
            for t in u.tokens:
                det.consume(t)
                nodes = det.dag.nodes
                if before is not None:
                    assert len(nodes) == len(before) + 1
                    for old, new in zip(before, nodes):
                        for key, vals in old.items():
                            assert new[key] == vals
                before = copy.deepcopy(nodes)


class TestTrainedDetector:
    def test_fluent_input_rarely_tagged(self, small_bundle):
        fluent = generate_synthetic(SynthConfig(n_utts=200, repair_rate=0.0, edit_rate=0.0,
                                                seed=8))
        det = small_bundle.detector()
        tagged = words = 0
        for u in fluent:
            run = run_detector(det, u.tokens)
            tagged += sum(bool(s) for s in run.final)
            words += len(u)
        assert tagged / words < 0.02

    def test_never_firing_components_give_no_tags(self, synth_lms):
        det = Detector(synth_lms, scripted())
        run = run_detector(det, generate_synthetic(n_utts=1, seed=3)[0].tokens)
        assert all(not s for s in run.final)

    def test_manifest_checked(self, synth_lms, small_bundle):
        forests = dict(small_bundle.forests)
        forests["rp_end"] = small_bundle.forests["edit"]
        with pytest.raises(PipelineError):
            new_detector(synth_lms.lex, synth_lms.pos, synth_lms.edit, forests)
        with pytest.raises(PipelineError):
            Detector(synth_lms, {"edit": forests["edit"]})

    def test_po_grows_with_repair_density(self, small_bundle):
        det = small_bundle.detector()
        po = []
        for rate in (0.0, 0.3):
            corpus = generate_synthetic(SynthConfig(n_utts=200, repair_rate=rate, seed=12))
            counts = [c for u in corpus for c in run_detector(det, u.tokens).classifications]
            po.append(np.mean(counts))
        assert po[1] > po[0]
        assert 1.5 < po[0] < 2.5
