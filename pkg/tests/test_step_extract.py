import pytest
from hypothesis import assume, given, strategies as st

from cadtext.step_extract import (
    StepDecodeError,
    StepParseError,
    aggregate_document,
    decode_step_string,
    file_name_multiset,
    scan_step_file,
)


def make_step(body: str) -> bytes:
    return (
        "ISO-10303-21;\nHEADER;\nFILE_NAME('t');\nENDSEC;\nDATA;\n"
        + body
        + "\nENDSEC;\nEND-ISO-10303-21;\n"
    ).encode("utf-8")


class TestScan:
    def test_single_solid_name(self):
        data = make_step("#12=MANIFOLD_SOLID_BREP('Bishop',#13);")
        result = scan_step_file(data, "chess.step")
        assert [o.raw_name for o in result.occurrences] == ["Bishop"]
        assert result.occurrences[0].entity_kind == "solid-brep"
        assert result.occurrences[0].file_id == "chess.step"

    def test_no_solids_returns_empty(self):
        data = make_step("#1=ADVANCED_FACE('face',(#2),#3,.T.);")
        assert scan_step_file(data).occurrences == []

    def test_repeated_name_multiplicity(self):
        body = "\n".join(
            f"#{i}=MANIFOLD_SOLID_BREP('wheel',#{i + 100});" for i in range(1, 5)
        )
        result = scan_step_file(make_step(body))
        assert len(result.occurrences) == 4
        assert file_name_multiset(result) == {"wheel": 4}

    def test_other_entities_never_leak(self):
        body = (
            "#1=MANIFOLD_SOLID_BREP('keep',#2);\n"
            "#2=CLOSED_SHELL('drop',(#3));\n"
            "#3=MANIFOLD_SOLID_BREP_EXTRA('drop2',#4);\n"
            "#4=PRODUCT('drop3','d','',(#5));"
        )
        result = scan_step_file(make_step(body))
        assert [o.raw_name for o in result.occurrences] == ["keep"]

    def test_semicolon_inside_string(self):
        body = "#1=MANIFOLD_SOLID_BREP('a;b',#2);\n#3=MANIFOLD_SOLID_BREP('c',#4);"
        result = scan_step_file(make_step(body))
        assert [o.raw_name for o in result.occurrences] == ["a;b", "c"]

    def test_malformed_record_counted(self):
        body = "#1=MANIFOLD_SOLID_BREP(#2,#3);\n#4=MANIFOLD_SOLID_BREP('ok',#5);"
        result = scan_step_file(make_step(body))
        assert [o.raw_name for o in result.occurrences] == ["ok"]
        assert result.warnings == 1

    def test_non_step_input_raises(self):
        with pytest.raises(StepParseError) as err:
            scan_step_file(b"just some text", "bad.step")
        assert "bad.step" in str(err.value)

    def test_truncated_trailing_record_tolerated(self):
        data = (
            "ISO-10303-21;\nDATA;\n#1=MANIFOLD_SOLID_BREP('x',#2);\n#3=MANIF"
        ).encode()
        result = scan_step_file(data)
        assert [o.raw_name for o in result.occurrences] == ["x"]

    def test_latin1_fallback(self):
        raw = "ISO-10303-21;\nDATA;\n#1=MANIFOLD_SOLID_BREP('caf\xe9',#2);\nENDSEC;"
        result = scan_step_file(raw.encode("latin-1"))
        assert result.occurrences[0].raw_name == "café"


class TestDecode:
    def test_x2_utf16(self):
        assert decode_step_string("\\X2\\00E9\\X0\\querre") == "équerre"

    def test_plain_passthrough(self):
        assert decode_step_string("Bishop") == "Bishop"

    def test_doubled_apostrophe(self):
        assert decode_step_string("it''s") == "it's"

    def test_doubled_backslash(self):
        assert decode_step_string("a\\\\b") == "a\\b"

    def test_x_latin1_byte(self):
        assert decode_step_string("\\X\\E9querre") == "équerre"

    def test_x4_code_point(self):
        assert decode_step_string("\\X4\\0001F600\\X0\\") == "\U0001f600"

    def test_x2_surrogate_pair(self):
        assert decode_step_string("\\X2\\D83DDE00\\X0\\") == "\U0001f600"

    def test_truncated_directive_raises_with_offset(self):
        with pytest.raises(StepDecodeError) as err:
            decode_step_string("ab\\X2\\00E9")
        assert err.value.offset == 2

    def test_bad_hex_raises(self):
        with pytest.raises(StepDecodeError):
            decode_step_string("\\X\\GG")

    def test_unknown_escape_kept_literal(self):
        assert decode_step_string("C:\\temp\\file") == "C:\\temp\\file"

    @given(st.text(alphabet=st.characters(blacklist_characters="\\'", max_codepoint=0x2FF)))
    def test_idempotent_on_own_output(self, s):
        once = decode_step_string(s)
        assert decode_step_string(once) == once

    @given(st.lists(st.sampled_from(
        ["gear", "é", " ", "''", "\\X2\\00E94E2D\\X0\\", "\\X\\41", "x1"]), max_size=8))
    def test_idempotent_after_escape_resolution(self, chunks):
        # Idempotency holds unless the decoded output itself contains an
        # adjacent quote pair, which re-reads as the '' escape.
        once = decode_step_string("".join(chunks))
        assume("''" not in once)
        assert decode_step_string(once) == once


class TestAggregate:
    def test_max_not_sum(self):
        assert aggregate_document([{"wheel": 4}, {"wheel": 2}]) == {"wheel": 4}

    def test_single_file_identity(self):
        counts = {"pin": 2, "base": 1}
        assert aggregate_document([counts]) == counts

    def test_union_with_per_key_max(self):
        files = [{"pin": 1, "base": 1}, {"pin": 3}]
        assert aggregate_document(files) == {"pin": 3, "base": 1}

    def test_empty_list(self):
        assert aggregate_document([]) == {}

    @given(st.lists(st.dictionaries(
        st.sampled_from(["a", "b", "c", "d"]), st.integers(1, 9), max_size=4), max_size=5))
    def test_matches_bruteforce_per_key_max(self, files):
        result = aggregate_document(files)
        keys = {k for f in files for k in f}
        expected = {k: max(f.get(k, 0) for f in files) for k in keys}
        assert result == expected
