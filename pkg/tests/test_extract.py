import pytest

from tsinject.injection.extract import Unparseable, extract_answer

OPTIONS = [
    "Vibration grows on the acceleration channel.",
    "A burst of spikes appears.",
    "The period changes abruptly.",
    "Temperature drifts upward.",
]

# (response, hand label); None means the response must be rejected as unparseable
CORPUS = [
    ("<answer>B</answer>", 1),
    ("<answer> c </answer>", 2),
    ("<answer>(D)</answer>", 3),
    ("<answer>A. Vibration grows on the acceleration channel.</answer>", 0),
    ("<answer>A burst of spikes appears.</answer>", 1),
    ("<answer>temperature drifts upward</answer>", 3),
    ("I weighed everything.\nAnswer: C", 2),
    ("...so the answer is Answer: c", 2),
    ("Answer: B\nOn reflection the drift dominates.\nAnswer: D", 3),
    ("The answer is (B).", 1),
    ("B", 1),
    ("Option C fits best.", 2),
    ("A or B, hard to say.", None),
    ("Neither A nor B.", None),
    ("I cannot decide.", None),
    ("", None),
    ("<answer>E</answer>", None),
    ("<answer></answer> Answer: A", 0),
    ("The temperature drifts upward, so that's it.", 3),
    ("Both the period changes abruptly and temperature drifts upward.", None),
    ("<answer>b</answer>", 1),
    ("ANSWER: d", 3),
    ("Answer:(A)", 0),
    ("Final answer: B.", 1),
    ("My answer is: C", 2),
    ("<think>Could be A.</think><answer>C</answer>", 2),
    ("<think>Looks like B.</think>", 1),
    ("<answer>B", 1),
    ("C.", 2),
    ("(d)", None),
    ("A", 0),
    ("A spike burst is visible, so B.", 1),
    ("A is the best choice.", 0),
    ("Answer: B\nAnswer: Z", 1),
    ("It's clearly D, not C.", None),
    ("<answer>Answer: B</answer>", 1),
    ("<answer>d) Temperature drifts upward.</answer>", 3),
    ("The spikes (option B) dominate.", 1),
    ("After review: Answer: a.", 0),
    ("Vibration grows on the acceleration channel.", 0),
    ("I'd pick C over A.", None),
    ("<answer>  </answer>", None),
    ("<answer>The period changes abruptly</answer>", 2),
    ("<answer>2</answer>", None),
    ("answer:B", 1),
    ("Choice: C", 2),
    ("A burst of spikes appears.", 1),
    ("A temperature drift upward is seen.", None),
    ("<answer>B</answer><answer>C</answer>", 1),
    ("D\n", 3),
]


def test_corpus_size():
    assert len(CORPUS) == 50


@pytest.mark.parametrize("text,label", CORPUS)
def test_corpus(text, label):
    if label is None:
        with pytest.raises(Unparseable):
            extract_answer(text, OPTIONS)
    else:
        assert extract_answer(text, OPTIONS) == label


def test_custom_tags():
    assert extract_answer("[[C]]", OPTIONS, tags=("[[", "]]")) == 2


def test_empty_options():
    with pytest.raises(ValueError):
        extract_answer("A", [])
