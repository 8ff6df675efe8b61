from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladder.corpus import Direction
from ladder.prompting import (
    ExtractionPolicy,
    PromptTemplate,
    TemplateError,
    default_template,
    default_templates,
    parse_completion,
    render_direct,
    render_refine,
    render_with_spans,
)

DE_EN = Direction.from_codes("de", "en")
ZH_EN = Direction.from_codes("zh", "en")


class TestTemplateValidation:
    def test_default_templates_are_valid(self):
        pair = default_templates()
        assert pair.direct.kind == "direct"
        assert pair.refine.kind == "refine"

    def test_direct_missing_source_slot(self):
        with pytest.raises(TemplateError, match="source"):
            PromptTemplate("direct", "Translate from {src_name} to {tgt_name}.")

    def test_direct_must_not_take_intermediate(self):
        with pytest.raises(TemplateError, match="intermediate"):
            PromptTemplate("direct", "{src_name}/{tgt_name}: {source} {intermediate}")

    def test_refine_needs_all_four_slots(self):
        with pytest.raises(TemplateError, match="intermediate"):
            PromptTemplate("refine", "{src_name}/{tgt_name}: {source}")

    def test_unknown_slot_rejected(self):
        with pytest.raises(TemplateError, match="unknown slot"):
            PromptTemplate("direct", "{src_name}/{tgt_name}: {source} {reference}")

    def test_bad_kind(self):
        with pytest.raises(TemplateError):
            PromptTemplate("chat", "{src_name}{tgt_name}{source}")


class TestRenderDirect:
    def test_contains_names_and_source_once(self):
        prompt = render_direct(default_template("direct"), "Guten Tag", DE_EN)
        assert "German" in prompt and "English" in prompt
        assert prompt.count("Guten Tag") == 1

    def test_kind_mismatch(self):
        with pytest.raises(TemplateError):
            render_direct(default_template("refine"), "x", DE_EN)

    def test_braces_and_newlines_pass_verbatim(self):
        source = "keep {tgt_name} and\nnewlines {weird} intact"
        prompt = render_direct(default_template("direct"), source, DE_EN)
        # substitution is single-pass: slot-like text inside values stays put
        assert source in prompt

    def test_rendering_is_pure(self):
        template = default_template("direct")
        assert render_direct(template, "abc", ZH_EN) == render_direct(template, "abc", ZH_EN)


class TestRenderRefine:
    def test_contains_both_texts_once(self):
        prompt = render_refine(default_template("refine"), "源句", "draft text", ZH_EN)
        assert prompt.count("源句") == 1
        assert prompt.count("draft text") == 1
        assert "Chinese" in prompt and "English" in prompt

    def test_intermediate_equal_to_source_counted_by_slots(self):
        template = default_template("refine")
        text, spans = render_with_spans(
            template,
            {"src_name": "German", "tgt_name": "English", "source": "same", "intermediate": "same"},
        )
        start, end = spans["source"]
        assert text[start:end] == "same"
        start, end = spans["intermediate"]
        assert text[start:end] == "same"
        assert spans["source"] != spans["intermediate"]

    def test_empty_intermediate_rejected(self):
        with pytest.raises(ValueError):
            render_refine(default_template("refine"), "src", "  ", DE_EN)

    def test_kind_mismatch(self):
        with pytest.raises(TemplateError):
            render_refine(default_template("direct"), "s", "i", DE_EN)

    slot_text = st.text(min_size=1, max_size=40).filter(lambda s: s.strip())

    @given(source=slot_text, intermediate=slot_text)
    @settings(max_examples=60, deadline=None)
    def test_span_extraction_recovers_inputs(self, source, intermediate):
        template = default_template("refine")
        values = {
            "src_name": "German",
            "tgt_name": "English",
            "source": source,
            "intermediate": intermediate,
        }
        text, spans = render_with_spans(template, values)
        for name, (start, end) in spans.items():
            assert text[start:end] == values[name]


class TestParseCompletion:
    def test_strips_label(self):
        assert parse_completion("Translation: Hello world.") == "Hello world."

    def test_identity_without_wrapper(self):
        assert parse_completion("Hello world.") == "Hello world."

    def test_strips_wrapping_quotes(self):
        assert parse_completion('"Hola"') == "Hola"

    def test_label_on_its_own_line(self):
        assert parse_completion("Translation:\nBonjour tout le monde.") == "Bonjour tout le monde."

    def test_refined_label_variant(self):
        assert parse_completion("Refined translation: better text") == "better text"

    def test_inner_quotes_kept(self):
        assert parse_completion('He said "hi" to her.') == 'He said "hi" to her.'

    def test_curly_quotes(self):
        assert parse_completion("“quoted reply”") == "quoted reply"

    def test_empty_reply_rejected(self):
        with pytest.raises(ValueError):
            parse_completion("")

    def test_empty_after_stripping_rejected(self):
        with pytest.raises(ValueError):
            parse_completion("Translation:   ")

    def test_custom_policy(self):
        policy = ExtractionPolicy(label_pattern=r"OUT>\s*", strip_quotes=False)
        assert parse_completion('OUT> "keep quotes"', policy) == '"keep quotes"'
