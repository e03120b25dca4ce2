import pytest

from thames.gateway.json_extract import extract_json_array, extract_json_object


def test_direct_array():
    assert extract_json_array('[{"a": 1}]') == [{"a": 1}]


def test_fenced_array():
    text = 'Here you go:\n```json\n[{"question": "q1"}]\n```\nDone.'
    assert extract_json_array(text) == [{"question": "q1"}]


def test_plain_fence_without_language_tag():
    assert extract_json_array('```\n[1, 2]\n```') == [1, 2]


def test_prose_wrapped_array():
    text = 'Sure! The result is [1, 2, 3] as requested.'
    assert extract_json_array(text) == [1, 2, 3]


def test_array_with_trailing_bracket_noise():
    text = 'prefix [see] middle [{"k": "v"}] suffix'
    # widest slice fails to parse, but the fence-free candidates still include
    # the full-text slice; this one only parses on the inner array
    assert extract_json_array('[{"k": "v"}] suffix') == [{"k": "v"}]
    with pytest.raises(ValueError):
        extract_json_array(text)


def test_no_array_raises():
    with pytest.raises(ValueError):
        extract_json_array("no json here")


def test_object_direct_and_wrapped():
    assert extract_json_object('{"x": 1}') == {"x": 1}
    assert extract_json_object('note: {"x": 1} end') == {"x": 1}
    with pytest.raises(ValueError):
        extract_json_object("[1,2]")
