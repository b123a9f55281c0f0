import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_path
from oracle_impl import rouge_l_f_oracle
from evergreen_eval.corpus import GenerationTrace, TokenStep, load_trace_set
from evergreen_eval.errors import PreconditionError, ValidationError
from evergreen_eval.uncertainty import (
    SimilarityGraph,
    UncertaintyConfig,
    compute_uncertainty,
    eigval_laplacian_score,
    neg_lexical_similarity,
    normalized_laplacian,
    perplexity,
    response_similarity_matrix,
    rouge_l_f,
    sar,
    token_entropy_profile,
)


def step_from_probs(probs, tail=0.0, chosen=0):
    tokens = [f"t{i}" for i in range(len(probs))]
    return TokenStep(
        token=tokens[chosen],
        logprob=math.log(probs[chosen]),
        topk=tuple(zip(tokens, probs)),
        tail_mass=tail,
    )


class TestPerplexity:
    def test_certain_sequence(self):
        steps = [step_from_probs([1.0])] * 3
        assert perplexity(steps) == 1.0

    def test_constant_logprob_identity(self):
        steps = [step_from_probs([0.5, 0.5])] * 3
        assert abs(perplexity(steps) - 2.0) < 1e-12

    def test_hand_evaluated_closed_form(self):
        logprobs = (-0.1, -0.5, -0.3)
        steps = [
            TokenStep("x", lp, (("x", math.exp(lp)),), 1.0 - math.exp(lp))
            for lp in logprobs
        ]
        assert abs(perplexity(steps) - math.exp(0.3)) < 1e-12

    def test_empty_is_precondition_error(self):
        with pytest.raises(PreconditionError):
            perplexity([])

    def test_positive_logprob_rejected(self):
        bad = TokenStep("x", 1e-6, (("x", 1.0),), 0.0)
        with pytest.raises(ValidationError):
            perplexity([bad])

    @given(st.lists(st.floats(min_value=-5, max_value=0), min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_equals_exp_mean_neg_logprob(self, logprobs):
        steps = [
            TokenStep("x", lp, (("x", math.exp(lp)),), 1.0 - math.exp(lp))
            for lp in logprobs
        ]
        expected = math.exp(-sum(logprobs) / len(logprobs))
        assert perplexity(steps) == pytest.approx(expected, rel=1e-12)


class TestTokenEntropy:
    def test_one_hot_is_zero(self):
        assert token_entropy_profile([step_from_probs([1.0])]) == [0.0]

    def test_uniform_four(self):
        h = token_entropy_profile([step_from_probs([0.25] * 4)])[0]
        assert abs(h - math.log(4)) < 1e-12

    def test_bucket_tail_hand_sum(self):
        step = step_from_probs([0.5, 0.3], tail=0.2)
        h = token_entropy_profile([step], tail_mode="bucket")[0]
        expected = -(0.5 * math.log(0.5) + 0.3 * math.log(0.3) + 0.2 * math.log(0.2))
        assert abs(h - expected) < 1e-12

    def test_spread_tail(self):
        step = step_from_probs([0.5, 0.3], tail=0.2)
        h = token_entropy_profile([step], tail_mode="spread", vocab_size=10)[0]
        expected = -(0.5 * math.log(0.5) + 0.3 * math.log(0.3)) - 0.2 * math.log(0.2 / 8)
        assert abs(h - expected) < 1e-12

    def test_spread_requires_larger_vocab(self):
        step = step_from_probs([0.5, 0.3], tail=0.2)
        with pytest.raises(ValidationError):
            token_entropy_profile([step], tail_mode="spread", vocab_size=2)

    def test_uniform_maximizes_on_three_simplex(self):
        """Brute-force grid over the 3-token simplex: entropy peaks at uniform."""
        best_h, best_p = -1.0, None
        grid = np.linspace(0.02, 0.96, 48)
        for p1 in grid:
            for p2 in grid:
                p3 = 1.0 - p1 - p2
                if p3 < 0.02:
                    continue
                h = token_entropy_profile([step_from_probs([p1, p2, p3])])[0]
                assert h <= math.log(3) + 1e-12
                if h > best_h:
                    best_h, best_p = h, (p1, p2, p3)
        assert max(abs(p - 1 / 3) for p in best_p) < 0.03

    def test_bound_by_support_size(self):
        step = step_from_probs([0.4, 0.3, 0.2], tail=0.1)
        h = token_entropy_profile([step])[0]
        assert 0.0 <= h <= math.log(4)


class TestRougeL:
    def test_identity(self):
        assert rouge_l_f("paris", "paris") == 1.0

    def test_disjoint(self):
        assert rouge_l_f("alpha beta", "gamma delta") == 0.0

    def test_hand_lcs(self):
        assert abs(rouge_l_f("the cat sat", "the dog sat") - 2 / 3) < 1e-12

    def test_empty(self):
        assert rouge_l_f("", "anything") == 0.0

    @given(
        st.text(alphabet="ab ", max_size=20),
        st.text(alphabet="ab ", max_size=20),
    )
    @settings(max_examples=200, deadline=None)
    def test_symmetric_bounded_and_matches_oracle(self, a, b):
        f = rouge_l_f(a, b)
        assert f == rouge_l_f(b, a)
        assert 0.0 <= f <= 1.0
        assert f == pytest.approx(rouge_l_f_oracle(a, b), abs=1e-12)


class TestNegLexicalSimilarity:
    def test_identical_samples(self):
        assert neg_lexical_similarity(["a b c"] * 5) == 0.0

    def test_disjoint_pair(self):
        assert neg_lexical_similarity(["a b", "c d"]) == 1.0

    def test_pairwise_mean(self):
        # pairwise F values: (s1,s2)=1, (s1,s3)=2/3, (s2,s3)=2/3
        samples = ["the cat sat", "the cat sat", "the dog sat"]
        assert abs(neg_lexical_similarity(samples) - (1 - 7 / 9)) < 1e-12

    def test_needs_two(self):
        with pytest.raises(PreconditionError):
            neg_lexical_similarity(["only one"])

    @given(st.lists(st.text(alphabet="abc ", max_size=12), min_size=2, max_size=5), st.randoms())
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariant(self, samples, rnd):
        shuffled = list(samples)
        rnd.shuffle(shuffled)
        assert neg_lexical_similarity(samples) == pytest.approx(
            neg_lexical_similarity(shuffled), abs=1e-12
        )


class TestSar:
    def test_uniform_relevance_reduces_to_entropy_sum(self):
        h = [0.2, 0.7, 0.4]
        assert abs(sar(h, [0.5, 0.5, 0.5], ["a", "b", "c"]) - sum(h)) < 1e-9

    def test_one_hot_concentration(self):
        h = [0.2, 0.7, 0.4]
        assert abs(sar(h, [0.0, 1.0, 0.0], ["a", "b", "c"]) - 3 * 0.7) < 1e-12

    def test_hand_closed_form(self):
        assert abs(sar([0.5, 1.0], [0.2, 0.8], ["a", "b"]) - 1.8) < 1e-12

    def test_zero_relevance_falls_back_to_uniform(self):
        h = [0.3, 0.9]
        assert abs(sar(h, [0.0, 0.0], ["a", "b"]) - sum(h)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            sar([0.5], [0.5, 0.5], ["a"])

    @given(
        st.lists(st.floats(min_value=0, max_value=3), min_size=1, max_size=8),
    )
    @settings(max_examples=100, deadline=None)
    def test_uniform_identity_property(self, entropies):
        tokens = [f"w{i}" for i in range(len(entropies))]
        uniform = [0.7] * len(entropies)
        assert sar(entropies, uniform, tokens) == pytest.approx(sum(entropies), abs=1e-9)


def _trace(samples, similarity=None):
    step = TokenStep("a", 0.0, (("a", 1.0),), 0.0)
    return GenerationTrace(
        question_id="q",
        model_id="m",
        greedy_answer="a",
        greedy_steps=(step,),
        samples=tuple(samples),
        similarity=similarity,
    )


class TestSimilarityGraph:
    def test_provided_passthrough(self):
        matrix = ((1.0, 0.25), (0.25, 1.0))
        graph = response_similarity_matrix(_trace(["x", "y"], matrix))
        assert graph.provenance == "provided"
        assert graph.weights == matrix

    def test_lexical_fallback_identical(self):
        graph = response_similarity_matrix(_trace(["same words", "same words"]))
        assert graph.provenance == "lexical_fallback"
        assert graph.weights == ((1.0, 1.0), (1.0, 1.0))

    def test_lexical_fallback_disjoint(self):
        graph = response_similarity_matrix(_trace(["aa bb", "cc dd"]))
        assert graph.weights == ((1.0, 0.0), (0.0, 1.0))

    def test_invalid_provided_matrix(self):
        with pytest.raises(ValidationError):
            response_similarity_matrix(_trace(["x", "y"], ((1.0, 2.0), (2.0, 1.0))))


class TestEigValLaplacian:
    @pytest.mark.parametrize("m", range(2, 11))
    def test_all_ones_lin_clipped_is_one(self, m):
        graph = SimilarityGraph(tuple(tuple(1.0 for _ in range(m)) for _ in range(m)), "provided")
        assert eigval_laplacian_score(graph, "lin_clipped") == pytest.approx(1.0, abs=1e-9)
        assert eigval_laplacian_score(graph, "raw_sum") == pytest.approx(m - 1, abs=1e-9)

    def test_isolated_nodes(self):
        graph = SimilarityGraph(((1.0, 0.0), (0.0, 1.0)), "provided")
        assert eigval_laplacian_score(graph, "lin_clipped") == pytest.approx(2.0, abs=1e-12)
        assert eigval_laplacian_score(graph, "raw_sum") == pytest.approx(0.0, abs=1e-12)

    def test_two_node_spectrum_trace_check(self):
        graph = SimilarityGraph(((1.0, 0.5), (0.5, 1.0)), "provided")
        lap = normalized_laplacian(graph)
        from evergreen_eval.eigen import symmetric_eigenvalues

        eigenvalues = symmetric_eigenvalues(lap)
        assert sum(eigenvalues) == pytest.approx(np.trace(lap), abs=1e-9)
        # spectrum within [0, 2] and smallest eigenvalue 0
        assert -1e-9 <= eigenvalues[0] <= 1e-9
        assert eigenvalues[-1] <= 2.0 + 1e-9
        lin = eigval_laplacian_score(graph, "lin_clipped")
        raw = eigval_laplacian_score(graph, "raw_sum")
        assert lin == pytest.approx(sum(max(0.0, 1.0 - v) for v in eigenvalues), abs=1e-12)
        assert raw == pytest.approx(sum(eigenvalues), abs=1e-12)


class TestComputeUncertainty:
    def test_zero_uncertainty_limit(self):
        step = TokenStep("a", 0.0, (("a", 1.0),), 0.0)
        trace = GenerationTrace("q", "m", "a", (step,), ("a", "a", "a"))
        v = compute_uncertainty(trace)
        assert v.perplexity == 1.0
        assert v.mean_token_entropy == 0.0
        assert v.max_token_entropy == 0.0
        assert v.sar == 0.0
        assert v.neg_lexical_similarity == 0.0
        assert v.eigval_laplacian == pytest.approx(1.0, abs=1e-9)

    def test_degraded_mode_m0_and_m1(self):
        step = TokenStep("a", math.log(0.5), (("a", 0.5), ("b", 0.5)), 0.0)
        for samples in ((), ("only",)):
            trace = GenerationTrace("q", "m", "a", (step,), samples)
            v = compute_uncertainty(trace)
            assert v.neg_lexical_similarity is None
            assert v.eigval_laplacian is None
            assert v.perplexity > 1.0
            obj = v.to_json_obj()
            assert json.dumps(obj)  # serializable with nulls

    def test_fixture_matches_committed_oracle(self):
        with open(fixture_path("uncertainty_oracle.json"), "r", encoding="utf-8") as fh:
            oracle = json.load(fh)
        traces = load_trace_set(fixture_path("traces_demo.jsonl"))
        for trace in traces:
            expected = oracle[trace.question_id]
            for variant, key in (
                ("lin_clipped", "eigval_laplacian_lin_clipped"),
                ("raw_sum", "eigval_laplacian_raw_sum"),
            ):
                v = compute_uncertainty(trace, UncertaintyConfig(laplacian_variant=variant))
                assert v.perplexity == pytest.approx(expected["perplexity"], abs=1e-9)
                assert v.mean_token_entropy == pytest.approx(expected["mean_token_entropy"], abs=1e-9)
                assert v.max_token_entropy == pytest.approx(expected["max_token_entropy"], abs=1e-9)
                assert v.sar == pytest.approx(expected["sar"], abs=1e-9)
                if expected["neg_lexical_similarity"] is None:
                    assert v.neg_lexical_similarity is None
                    assert v.eigval_laplacian is None
                else:
                    assert v.neg_lexical_similarity == pytest.approx(
                        expected["neg_lexical_similarity"], abs=1e-9
                    )
                    assert v.eigval_laplacian == pytest.approx(expected[key], abs=1e-9)

    def test_config_fingerprint_changes_with_variant(self):
        a = UncertaintyConfig(laplacian_variant="lin_clipped").fingerprint()
        b = UncertaintyConfig(laplacian_variant="raw_sum").fingerprint()
        assert a != b
