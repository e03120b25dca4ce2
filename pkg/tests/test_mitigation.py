import numpy as np
import pytest

from thames.errors import InputError
from thames.gateway.backends import ChatRequest
from thames.gateway.core import ModelGateway
from thames.gateway.mocks import (
    MockEmbeddingBackend,
    PipelineMockChat,
    ScriptedChatBackend,
)
from thames.mitigation import (
    FailureCase,
    TaskInput,
    baseline_strategy,
    build_failure_store,
    cove_strategy,
    load_failure_store,
    rag_strategy,
    save_failure_store,
    split_verification_questions,
)


def _base_request(question="What is the source of the river?") -> ChatRequest:
    return ChatRequest(system_prompt="Answer the question accurately and concisely.",
                       user_messages=[question], model_id="m")


def _chat_gateway(backend) -> ModelGateway:
    return ModelGateway(chat_backend=backend, sleep_fn=lambda _: None)


def _case(item_id: str, question: str, embedding: list[float], true_label=True) -> FailureCase:
    return FailureCase(
        item_id=item_id,
        question=question,
        presented_answer=f"answer for {question}",
        true_label=true_label,
        model_label=not true_label,
        embedding=embedding,
    )


class TestBaselineStrategy:
    def test_single_stage_passthrough(self):
        strategy = baseline_strategy()
        plan = strategy.plan(TaskInput(kind="text_generation", question="q?"), _base_request("q?"))
        assert len(plan.stages) == 1

        backend = ScriptedChatBackend(["direct answer"])
        result = plan.execute(_chat_gateway(backend).chat)
        assert result.final == "direct answer"
        assert result.outputs["baseline"] == "direct answer"

    def test_identical_to_direct_call(self):
        request = _base_request("q?")
        direct = _chat_gateway(PipelineMockChat()).chat(request)
        plan = baseline_strategy().plan(TaskInput(kind="text_generation", question="q?"), request)
        via_plan = plan.execute(_chat_gateway(PipelineMockChat()).chat).final
        assert via_plan == direct


class TestCoveStrategy:
    def test_matt_damon_example_yields_two_questions(self):
        # scripted per the published verification-question example
        backend = ScriptedChatBackend(
            [
                "Some movie actors born in Boston include: Matt Damon, Chris Evans.",
                "Was [movie actor] born in Boston?",
                "1. Was Matt Damon born in Boston?\n2. Was Chris Evans born in Boston?",
                "Yes, Matt Damon was born in Boston.",
                "Yes, Chris Evans was born in Boston.",
                "Matt Damon and Chris Evans were both born in Boston.",
            ]
        )
        question = "Who are some movie actors who were born in Boston?"
        plan = cove_strategy().plan(TaskInput(kind="text_generation", question=question), _base_request(question))
        result = plan.execute(_chat_gateway(backend).chat)
        assert result.outputs["questions"] == [
            "Was Matt Damon born in Boston?",
            "Was Chris Evans born in Boston?",
        ]
        assert result.final == "Matt Damon and Chris Evans were both born in Boston."
        assert len(backend.calls) == 6

    def test_call_accounting_four_plus_n(self):
        backend = PipelineMockChat()
        plan = cove_strategy().plan(TaskInput(kind="text_generation", question="q?"), _base_request("q?"))
        result = plan.execute(_chat_gateway(backend).chat)
        n_questions = len(result.outputs["questions"])
        assert n_questions >= 1
        assert len(backend.calls) == 4 + n_questions

    def test_verification_requests_contain_no_baseline_text(self):
        backend = PipelineMockChat()
        plan = cove_strategy().plan(TaskInput(kind="text_generation", question="q?"), _base_request("q?"))
        result = plan.execute(_chat_gateway(backend).chat)
        baseline = result.outputs["baseline"]
        n_questions = len(result.outputs["questions"])
        verify_calls = backend.calls[3 : 3 + n_questions]
        assert len(verify_calls) == n_questions
        for call in verify_calls:
            body = call.system_prompt + "\n" + "\n".join(call.user_messages)
            for start in range(len(baseline) - 20):
                assert baseline[start : start + 21] not in body

    def test_zero_questions_falls_back_to_baseline(self):
        backend = ScriptedChatBackend(["the draft answer", "Was [x] y?", "   \n  "])
        plan = cove_strategy().plan(TaskInput(kind="text_generation", question="q?"), _base_request("q?"))
        result = plan.execute(_chat_gateway(backend).chat)
        assert result.final == "the draft answer"
        assert result.flags == {"cove_fallback": True}
        assert len(backend.calls) == 3  # no verify/revise calls issued

    def test_question_splitting(self):
        text = "1. First question?\n2) Second question?\n- Third question?\n\n"
        assert split_verification_questions(text) == [
            "First question?",
            "Second question?",
            "Third question?",
        ]


class TestFailureStore:
    def test_empty_store_is_valid_but_rag_rejects(self):
        store = build_failure_store([])
        assert len(store) == 0
        gw = ModelGateway(embedding_backend=MockEmbeddingBackend(dim=4))
        with pytest.raises(InputError):
            rag_strategy(store, 2, gw)

    def test_store_size(self):
        cases = [_case(f"i{k}", f"q{k}?", [1.0, 0.0]) for k in range(3)]
        assert len(build_failure_store(cases)) == 3

    def test_save_load_save_byte_identical(self, tmp_path):
        gw = ModelGateway(embedding_backend=MockEmbeddingBackend(dim=8))
        embeddings = gw.embed(["q one?", "q two?", "q three?"])
        cases = [_case(f"i{k}", q, e) for k, (q, e) in enumerate(zip(["q one?", "q two?", "q three?"], embeddings))]
        first = save_failure_store(build_failure_store(cases), tmp_path / "store1.jsonl")
        loaded = load_failure_store(first)
        second = save_failure_store(loaded, tmp_path / "store2.jsonl")
        assert first.read_bytes() == second.read_bytes()

    def test_misclassification_invariant(self):
        with pytest.raises(InputError):
            FailureCase(
                item_id="x", question="q?", presented_answer="a",
                true_label=True, model_label=True, embedding=[1.0],
            )

    def test_clamps_oversized_k(self):
        cases = [_case("i0", "q?", [1.0, 0.0])]
        store = build_failure_store(cases)
        assert len(store.retrieve([1.0, 0.0], 5)) == 1


class TestRagStrategy:
    def _store_and_gateway(self, questions: list[str]):
        gw = ModelGateway(
            chat_backend=PipelineMockChat(),
            embedding_backend=MockEmbeddingBackend(dim=8),
            sleep_fn=lambda _: None,
        )
        embeddings = gw.embed(questions)
        cases = [_case(f"i{k}", q, e) for k, (q, e) in enumerate(zip(questions, embeddings))]
        return build_failure_store(cases), gw

    def test_exact_duplicate_is_rank_one(self):
        questions = [f"stored question {k}?" for k in range(4)]
        store, gw = self._store_and_gateway(questions)
        query = gw.embed_one("stored question 2?")
        assert store.retrieve(query, 1)[0].question == "stored question 2?"

    def test_matches_bruteforce_oracle(self):
        questions = [f"bank question {k}?" for k in range(5)]
        store, gw = self._store_and_gateway(questions)
        query = gw.embed_one("which bank is this about?")

        def oracle(k: int) -> list[str]:
            q = np.asarray(query)
            scored = []
            for case in store.cases:
                v = np.asarray(case.embedding)
                sim = float(q @ v / (np.linalg.norm(q) * np.linalg.norm(v)))
                scored.append((-sim, case.item_id))
            return [item_id for _, item_id in sorted(scored)[:k]]

        got = [c.item_id for c in store.retrieve(query, 2)]
        assert got == oracle(2)

    def test_exemplars_prepended_in_similarity_order(self):
        questions = ["alpha subject?", "beta subject?", "gamma subject?"]
        store, gw = self._store_and_gateway(questions)
        strategy = rag_strategy(store, 2, gw)
        task = TaskInput(kind="identification", question="beta subject?", presented_answer="x")
        base = ChatRequest(
            system_prompt="You are judging whether a candidate answer...",
            user_messages=["Question: beta subject?\nCandidate answer: x"],
            model_id="m",
        )
        plan = strategy.plan(task, base)
        assert len(plan.stages) == 1
        backend = PipelineMockChat()
        plan.execute(_chat_gateway(backend).chat)
        user = backend.calls[0].user_messages[0]
        # rank-1 exemplar is the identical stored question, rendered first
        assert user.startswith("Example:\nQuestion: beta subject?")
        assert "Correct verdict" in user
        assert user.rstrip().endswith("Candidate answer: x")

    def test_generation_task_rendering_differs(self):
        questions = ["the lone question?"]
        store, gw = self._store_and_gateway(questions)
        strategy = rag_strategy(store, 1, gw)
        task = TaskInput(kind="text_generation", question="the lone question?")
        plan = strategy.plan(task, _base_request("the lone question?"))
        backend = PipelineMockChat()
        plan.execute(_chat_gateway(backend).chat)
        user = backend.calls[0].user_messages[0]
        assert "previously misjudged" in user
        assert "Correct verdict" not in user

    def test_deterministic_given_mocks(self):
        questions = [f"q {k}?" for k in range(3)]
        store, gw = self._store_and_gateway(questions)
        strategy = rag_strategy(store, 2, gw)
        task = TaskInput(kind="identification", question="q 1?", presented_answer="x")
        base = ChatRequest(system_prompt="s", user_messages=["u"], model_id="m")
        req1 = strategy.plan(task, base).stages[0].build({})[0]
        req2 = strategy.plan(task, base).stages[0].build({})[0]
        assert req1.user_messages == req2.user_messages
