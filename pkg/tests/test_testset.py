import json

import pytest

from thames import prompts
from thames import testset as forge
from thames.errors import BudgetExceeded, GenerationError, InputError, SchemaError
from thames.gateway.core import ModelGateway
from thames.gateway.mocks import (
    MockScoringBackend,
    PipelineMockChat,
    ScriptedChatBackend,
    ScriptedScoringBackend,
)
from thames.knowledge_base import ChunkConfig, KnowledgeBase, KnowledgeNode
from thames.testset import (
    DraftQuestion,
    ForgeConfig,
    QAPair,
    QUESTION_TYPES,
    TestItem,
    Testset,
    build_testset,
    evolve,
    generate_baseline,
    generate_correct_answers,
    generate_hallucinated_candidates,
    llm_validate,
    regex_prefilter,
    save_testset,
    select_hallucination,
)
from tests.conftest import make_mock_gateway


def _gw(backend, **kwargs) -> ModelGateway:
    kwargs.setdefault("sleep_fn", lambda _: None)
    return ModelGateway(chat_backend=backend, **kwargs)


def _kb(n: int) -> KnowledgeBase:
    nodes = [KnowledgeNode(node_id=f"n{i:03d}", text=f"passage {i}", source_doc="mem") for i in range(n)]
    return KnowledgeBase(nodes=nodes, chunking=ChunkConfig())


def _draft(question: str, qtype: str = "simple", nodes: list[str] | None = None) -> DraftQuestion:
    return DraftQuestion(question=question, question_type=qtype, source_node_ids=nodes or ["n000"])


def _questions_payload(questions: list[str]) -> str:
    return json.dumps([{"question": q, "question_type": "simple"} for q in questions])


class TestGenerateBaseline:
    def test_scripted_two_per_batch(self):
        backend = ScriptedChatBackend([_questions_payload(["q1?", "q2?"]), _questions_payload(["q3?", "q4?"])])
        drafts = generate_baseline(_kb(4), batch_size=2, total=4, seed=1, gateway=_gw(backend))
        assert len(drafts) == 4
        assert all(d.question_type == "simple" for d in drafts)
        assert all(d.source_node_ids for d in drafts)

    def test_trims_overshoot(self):
        backend = ScriptedChatBackend([_questions_payload([f"q{i}?", f"q{i}b?"]) for i in range(3)])
        drafts = generate_baseline(_kb(4), batch_size=2, total=5, seed=1, gateway=_gw(backend))
        assert len(backend.calls) == 3
        assert len(drafts) == 5

    def test_empty_kb_rejected(self):
        with pytest.raises(InputError):
            generate_baseline(_kb(0), 2, 4, 1, _gw(ScriptedChatBackend([])))

    def test_three_consecutive_failures_abort(self):
        backend = ScriptedChatBackend(["not json at all"], cycle=True)
        with pytest.raises(GenerationError):
            generate_baseline(_kb(4), 2, 4, 1, _gw(backend))


class TestEvolve:
    def test_simple_to_reasoning(self, small_kb, mock_gateway):
        drafts = [
            _draft("What does the first passage say?", nodes=[small_kb.nodes[0].node_id]),
            _draft("What does the second passage say?", nodes=[small_kb.nodes[1].node_id]),
        ]
        out = evolve(drafts, "reasoning", small_kb, seed=1, gateway=mock_gateway)
        assert len(out) == 2
        assert all(d.question_type == "reasoning" for d in out)

    def test_cannot_target_simple(self, small_kb, mock_gateway):
        with pytest.raises(InputError):
            evolve([_draft("q?")], "simple", small_kb, 1, mock_gateway)

    def test_rejects_non_simple_input(self, small_kb, mock_gateway):
        bad = _draft("q?", qtype="reasoning")
        with pytest.raises(InputError):
            evolve([bad], "double", small_kb, 1, mock_gateway)

    def test_echo_mock_keeps_texts(self):
        kb = _kb(3)
        questions = ["keep me exactly one?", "keep me exactly two?"]
        echoed = json.dumps([{"question": q, "question_type": "reasoning"} for q in questions])
        out = evolve(
            [_draft(q) for q in questions], "reasoning", kb, seed=1, gateway=_gw(ScriptedChatBackend([echoed]))
        )
        assert [d.question for d in out] == questions
        assert all(d.question_type == "reasoning" for d in out)

    def test_extra_context_recorded_for_contextual_types(self, small_kb, mock_gateway):
        drafts = [_draft("What is stated about section nine?", nodes=[small_kb.nodes[0].node_id])]
        out = evolve(drafts, "multi_context", small_kb, seed=1, gateway=mock_gateway)
        assert out[0].extra_node_ids
        assert out[0].extra_node_ids[0] != small_kb.nodes[0].node_id


class TestRegexPrefilter:
    def test_appendix_examples(self):
        monday = _draft(
            "How many senior Russian political figures were included in the "
            "Treasury Department's list released on Monday?"
        )
        arithmetic = _draft("What is 2+2?")
        france = _draft("What is the capital of France?")
        flagged, clean = regex_prefilter([monday, arithmetic, france])
        assert monday in flagged
        assert arithmetic in clean
        assert france in flagged  # the broad "the" alternative

    def test_broad_alternatives_switch(self):
        france = _draft("What is the capital of France?")
        flagged, clean = regex_prefilter([france], drop_broad_alternatives=True)
        assert france in clean

    def test_pure_function(self):
        drafts = [_draft("What is 2+2?")]
        regex_prefilter(drafts)
        assert drafts[0].valid is None


class TestLlmValidate:
    def test_appendix_verdicts_under_scripted_judge(self):
        verdicts = json.dumps(
            [
                {
                    "question": "What is the capital of France?",
                    "valid": "true",
                    "reason": "This question is valid because it can be answered based on general knowledge.",
                },
                {
                    "question": "What is the author's favorite city?",
                    "valid": "false",
                    "reason": "This question is invalid because it is not clear who the author is.",
                },
            ]
        )
        drafts = [_draft("What is the capital of France?"), _draft("What is the author's favorite city?")]
        out = llm_validate(drafts, batch_size=10, gateway=_gw(ScriptedChatBackend([verdicts])))
        assert out[0].valid is True and out[0].reject_reason is None
        assert out[1].valid is False and "author" in out[1].reject_reason

    def test_all_true_mock_retains_everything(self, mock_gateway):
        drafts = [_draft(f"What is held in the archive {i}?") for i in range(4)]
        out = llm_validate(drafts, batch_size=2, gateway=mock_gateway)
        assert all(d.valid for d in out)


class TestGenerateCorrectAnswers:
    def test_types_preserved(self):
        kb = _kb(2)
        drafts = [_draft(f"q{i}?", qtype=t, nodes=["n000"]) for i, t in enumerate(("simple", "double", "reasoning"))]
        rows = json.dumps(
            [
                {"question": d.question, "answer": f"A{i + 1}", "question_type": d.question_type}
                for i, d in enumerate(drafts)
            ]
        )
        pairs = generate_correct_answers(drafts, kb, 10, _gw(ScriptedChatBackend([rows])))
        assert [p.answer for p in pairs] == ["A1", "A2", "A3"]
        assert [p.draft.question_type for p in pairs] == ["simple", "double", "reasoning"]

    def test_flipped_type_is_schema_error(self):
        kb = _kb(1)
        drafts = [_draft("q?", qtype="double")]
        rows = json.dumps([{"question": "q?", "answer": "A", "question_type": "simple"}])
        with pytest.raises(SchemaError, match="question_type"):
            generate_correct_answers(drafts, kb, 10, _gw(ScriptedChatBackend([rows], cycle=True)))

    def test_unknown_node_id(self):
        kb = _kb(1)
        drafts = [_draft("q?", nodes=["missing"])]
        with pytest.raises(InputError, match="unknown node"):
            generate_correct_answers(drafts, kb, 10, _gw(ScriptedChatBackend([])))

    def test_empty_answer_dropped_with_reason(self):
        kb = _kb(1)
        drafts = [_draft("q1?"), _draft("q2?")]
        rows = json.dumps(
            [
                {"question": "q1?", "answer": "", "question_type": "simple"},
                {"question": "q2?", "answer": "ok", "question_type": "simple"},
            ]
        )
        drops: list[dict] = []
        pairs = generate_correct_answers(
            drafts, kb, 10, _gw(ScriptedChatBackend([rows], cycle=True)), drops=drops
        )
        assert len(pairs) == 1 and pairs[0].answer == "ok"
        assert drops and drops[0]["reason"] == "empty answer after retry"


def _qa(question="q?", answer="the true answer") -> QAPair:
    return QAPair(draft=_draft(question), answer=answer)


def _candidates_payload(texts: list[str]) -> str:
    return json.dumps([{"question": "q?", "hallucinated_answer": t} for t in texts])


class TestHallucinatedCandidates:
    def test_five_distinct(self):
        payload = _candidates_payload([f"wrong {i}" for i in range(5)])
        out = generate_hallucinated_candidates(_qa(), 5, _gw(ScriptedChatBackend([payload])))
        assert len(out) == 5

    def test_correct_answer_removed(self):
        qa = QAPair(draft=_draft("q?"), answer="the true answer")
        payload = _candidates_payload(["THE TRUE ANSWER", "wrong 1", "wrong 2", "wrong 3", "wrong 4"])
        out = generate_hallucinated_candidates(qa, 5, _gw(ScriptedChatBackend([payload], cycle=True)))
        assert "THE TRUE ANSWER" not in out
        assert len(out) == 4

    def test_too_few_distinct_is_generation_error(self):
        payload = _candidates_payload(["same thing", "same thing"])
        with pytest.raises(GenerationError):
            generate_hallucinated_candidates(_qa(), 2, _gw(ScriptedChatBackend([payload], cycle=True)))

    def test_k_below_two_rejected(self):
        with pytest.raises(InputError):
            generate_hallucinated_candidates(_qa(), 1, _gw(ScriptedChatBackend([])))


class TestSelectHallucination:
    def test_argmin_ensemble(self):
        gw = ModelGateway(
            scoring_backend=ScriptedScoringBackend([(0.9, 0.8), (0.2, 0.3), (0.4, 0.4)]),
            sleep_fn=lambda _: None,
        )
        chosen, scores = select_hallucination(["c1", "c2", "c3"], "premise", gw)
        assert chosen == "c2"
        assert [round(s.ensemble, 3) for s in scores] == [1.7, 0.5, 0.8]

    def test_tie_takes_first(self):
        gw = ModelGateway(
            scoring_backend=ScriptedScoringBackend([(0.3, 0.3), (0.2, 0.4)]), sleep_fn=lambda _: None
        )
        chosen, _ = select_hallucination(["first", "second"], "p", gw)
        assert chosen == "first"

    def test_matches_sum_then_min_scan_oracle(self):
        backend = MockScoringBackend()
        gw = ModelGateway(scoring_backend=backend, sleep_fn=lambda _: None)
        candidates = [f"candidate {i}" for i in range(4)]
        premise = "some premise text"

        # oracle: score each candidate directly, sum the pair, linear min scan
        expected_index, expected_best = 0, float("inf")
        for i, text in enumerate(candidates):
            entailment, consistency = MockScoringBackend().score(premise, text)
            total = entailment + consistency
            if total < expected_best:
                expected_best, expected_index = total, i

        chosen, _ = select_hallucination(candidates, premise, gw)
        assert chosen == candidates[expected_index]

    def test_needs_two_candidates(self):
        gw = ModelGateway(scoring_backend=MockScoringBackend(), sleep_fn=lambda _: None)
        with pytest.raises(InputError):
            select_hallucination(["only"], "p", gw)


class MarkedInvalidMock(PipelineMockChat):
    """Every third generated question carries the validator's reject marker."""

    def _baseline_questions(self, head, user):
        rows = json.loads(super()._baseline_questions(head, user))
        for index, row in enumerate(rows):
            if index % 3 == 0:
                row["question"] += " [invalid]"
        return json.dumps(rows)


class AllInvalidMock(PipelineMockChat):
    def _baseline_questions(self, head, user):
        rows = json.loads(super()._baseline_questions(head, user))
        for row in rows:
            row["question"] += " [invalid]"
        return json.dumps(rows)


class TestBuildTestset:
    def test_mock_scale_contract(self, small_kb):
        gw = make_mock_gateway()
        result = build_testset(small_kb, per_type_target=2, seed=11, gateway=gw, cfg=ForgeConfig(batch_size=4))
        assert len(result.items) == 12
        by_type = result.by_type()
        assert all(len(by_type[t]) == 2 for t in QUESTION_TYPES)
        for item in result.items:
            best = min(item.candidate_scores, key=lambda s: s.ensemble)
            assert item.hallucinated_answer == best.text
            assert item.answer != item.hallucinated_answer
        assert result.generation_manifest["shortfall"] == {}

    def test_deterministic_artifacts(self, tmp_path, corpus_file):
        from thames.knowledge_base import embed_all, ingest_corpus

        def one_run(out):
            gw = make_mock_gateway()
            kb = ingest_corpus([corpus_file], ChunkConfig(max_chunk_chars=120, overlap_chars=0))
            embed_all(kb, gw)
            ts = build_testset(kb, 2, seed=11, gateway=gw, cfg=ForgeConfig(batch_size=4))
            save_testset(ts, out)
            return out

        first = one_run(tmp_path / "a")
        second = one_run(tmp_path / "b")
        assert (first / "items.jsonl").read_bytes() == (second / "items.jsonl").read_bytes()
        assert (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()

    def test_resume_after_filtering_matches_uninterrupted(self, tmp_path, corpus_file, monkeypatch):
        from thames.knowledge_base import embed_all, ingest_corpus

        def fresh_kb():
            gw = make_mock_gateway()
            kb = ingest_corpus([corpus_file], ChunkConfig(max_chunk_chars=120, overlap_chars=0))
            embed_all(kb, gw)
            return kb, gw

        cfg = ForgeConfig(batch_size=4)
        checkpoints = tmp_path / "ckpt"

        kb1, gw1 = fresh_kb()
        real = forge.generate_correct_answers
        monkeypatch.setattr(forge, "generate_correct_answers", lambda *a, **k: (_ for _ in ()).throw(RuntimeError("interrupt")))
        with pytest.raises(RuntimeError):
            build_testset(kb1, 2, seed=11, gateway=gw1, cfg=cfg, checkpoint_dir=checkpoints)
        assert (checkpoints / "stage-0-filtered.json").is_file()
        monkeypatch.setattr(forge, "generate_correct_answers", real)

        kb2, gw2 = fresh_kb()
        resumed = build_testset(kb2, 2, seed=11, gateway=gw2, cfg=cfg, checkpoint_dir=checkpoints)

        kb3, gw3 = fresh_kb()
        reference = build_testset(kb3, 2, seed=11, gateway=gw3, cfg=cfg)
        assert [i.to_dict() for i in resumed.items] == [i.to_dict() for i in reference.items]

    def test_filtering_is_monotone(self, small_kb):
        gw = ModelGateway(
            chat_backend=MarkedInvalidMock(),
            embedding_backend=make_mock_gateway()._embed,
            scoring_backend=MockScoringBackend(),
            sleep_fn=lambda _: None,
        )
        result = build_testset(small_kb, 1, seed=3, gateway=gw, cfg=ForgeConfig(batch_size=4, max_rounds=3))
        assert all("[invalid]" not in item.question for item in result.items)
        assert result.generation_manifest["rejected"]

    def test_shortfall_reported(self, small_kb):
        gw = ModelGateway(
            chat_backend=AllInvalidMock(),
            embedding_backend=make_mock_gateway()._embed,
            scoring_backend=MockScoringBackend(),
            sleep_fn=lambda _: None,
        )
        result = build_testset(small_kb, 1, seed=3, gateway=gw, cfg=ForgeConfig(batch_size=4, max_rounds=2))
        assert result.items == []
        assert set(result.generation_manifest["shortfall"]) == set(QUESTION_TYPES)

    def test_budget_aborts_before_next_stage(self, small_kb):
        gw = make_mock_gateway()
        with pytest.raises(BudgetExceeded):
            build_testset(small_kb, 2, seed=11, gateway=gw, cfg=ForgeConfig(batch_size=4), budget_tokens=1)

    def test_prompts_are_rendered_assets_verbatim(self, small_kb):
        backend = PipelineMockChat()
        gw = ModelGateway(
            chat_backend=backend,
            embedding_backend=make_mock_gateway()._embed,
            scoring_backend=MockScoringBackend(),
            sleep_fn=lambda _: None,
        )
        cfg = ForgeConfig(batch_size=4)
        build_testset(small_kb, 1, seed=3, gateway=gw, cfg=cfg)

        criteria = prompts.render("evolution_criteria")
        allowed = {prompts.render("simple_generation", language=cfg.language, num_questions=cfg.batch_size)}
        for name in ("evolve_reasoning", "evolve_multi_context", "evolve_situational", "evolve_distracting", "evolve_double"):
            allowed.add(prompts.render(name, language=cfg.language) + "\n" + criteria)
        allowed.add(prompts.render("question_filtering"))
        for group_size in range(1, cfg.batch_size + 1):
            allowed.add(prompts.render("correct_answer", language=cfg.language, num_questions=cfg.batch_size))
        allowed.add(prompts.render("hallucinated_answer", num_hallucinated_answers=cfg.candidates_per_question))

        assert backend.calls, "pipeline issued no calls"
        for call in backend.calls:
            assert call.system_prompt in allowed


class TestItemAndSetInvariants:
    def test_item_rejects_non_argmin(self):
        from thames.gateway.core import ScorePair
        from thames.testset import CandidateScore

        scores = [
            CandidateScore("a", ScorePair(0.5, 0.5), 1.0),
            CandidateScore("b", ScorePair(0.1, 0.1), 0.2),
        ]
        with pytest.raises(InputError, match="argmin"):
            TestItem(
                id="x", question="q?", question_type="simple", answer="ans",
                hallucinated_answer="a", source_node_ids=["n"], candidate_scores=scores,
            )

    def test_item_rejects_equal_answers(self):
        with pytest.raises(InputError, match="equals"):
            TestItem(
                id="x", question="q?", question_type="simple", answer="same",
                hallucinated_answer="same", source_node_ids=["n"], candidate_scores=[],
            )

    def test_set_rejects_duplicate_ids(self):
        item = TestItem(
            id="dup", question="q?", question_type="simple", answer="a",
            hallucinated_answer="h", source_node_ids=["n"], candidate_scores=[],
        )
        clone = TestItem(
            id="dup", question="q2?", question_type="double", answer="a2",
            hallucinated_answer="h2", source_node_ids=["n"], candidate_scores=[],
        )
        with pytest.raises(InputError, match="duplicate"):
            Testset(items=[item, clone], per_type_target=1, generation_manifest={})

    def test_round_trip(self, tmp_path, small_kb):
        gw = make_mock_gateway()
        result = build_testset(small_kb, 1, seed=5, gateway=gw, cfg=ForgeConfig(batch_size=3))
        directory = save_testset(result, tmp_path / "ts")
        loaded = forge.load_testset(directory)
        assert [i.to_dict() for i in loaded.items] == [i.to_dict() for i in result.items]
