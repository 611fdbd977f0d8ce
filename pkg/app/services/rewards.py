"""
Evaluation metrics and the rollout reward stack.

Purpose:
- Word-level F1, cover exact match (CEM) and exact match (EM) over normalized answers.
- The accuracy reward (format gate plus length-switched F1/CEM), the information-gain
  reward (document recall minus a retrieval-count penalty) and their sum.
- `score_trajectory` composes everything into a `RewardBreakdown`.

Impact on SDLC:
- Every function is pure and configs and gold records are frozen pydantic models, so
  reward terms can be unit-tested one by one and recomputed offline from a dump.
- The evaluation harness and an external trainer read the same breakdown fields.
"""

# Standard logger for reward warnings (misaligned logs, empty gold support)
import logging

# Exactly rounded sums and the float just below 1
import math

# Answer normalization: article and punctuation stripping
import re
import string

# Token multisets for F1
from collections import Counter

# Typing helpers for metrics and matchers
from collections.abc import Callable, Iterable, Sequence
from typing import Protocol

# Vector math for the embedding title matcher
import numpy as np

# Raised when an answer has no \boxed{...} group
from app.core.exceptions import BoxedAnswerError

# Parsed trajectories and the reward schemas
from app.schemas.protocol import Trajectory
from app.schemas.reward import GoldRecord, RetrievalLog, RewardBreakdown, RewardConfig

# Format check and boxed answer extraction shared with the protocol module
from app.services.protocol import extract_boxed_answer, format_issues

# Title normalization shared with the KG engine and the lexical index
from app.utils.helpers import normalize_surface

logger = logging.getLogger(__name__)

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCTUATION = str.maketrans("", "", string.punctuation)

ACCURACY_FLOOR = 0.1
EMBEDDING_THRESHOLD = 0.8

# Largest float strictly below 1; the retrieval penalty never reaches 1
_BELOW_ONE = math.nextafter(1.0, 0.0)


def normalize_answer(text: str) -> list[str]:
    """Lower-case, strip punctuation, drop articles and split on whitespace."""
    text = text.lower().translate(_PUNCTUATION)
    return _ARTICLES.sub(" ", text).split()


def f1_score(pred: str, gold: str) -> float:
    pred_tokens = normalize_answer(pred)
    gold_tokens = normalize_answer(gold)
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)

    common = Counter(pred_tokens) & Counter(gold_tokens)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def cem(pred: str, gold: str) -> int:
    """1 when the normalized gold tokens appear contiguously, in order, in the prediction."""
    pred_tokens = normalize_answer(pred)
    gold_tokens = normalize_answer(gold)
    if not gold_tokens:
        return 1
    size = len(gold_tokens)
    return int(any(pred_tokens[start:start + size] == gold_tokens for start in range(len(pred_tokens) - size + 1)))


def em(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def best_over_golds(metric: Callable[[str, str], float], pred: str, golds: Iterable[str]) -> float:
    """Maximum of `metric` over every acceptable gold answer."""
    return max((float(metric(pred, gold)) for gold in golds), default=0.0)


def answer_reward(pred: str, golds: Sequence[str], n: int = 3) -> float:
    """
    Answer reward: F1 for long predictions, CEM for short ones, best over golds.

    For each gold the prediction counts as long when its normalized word count is at
    least `n` times the gold's.

    Args:
        pred (str): Extracted answer.
        golds (Sequence[str]): Acceptable answers, non-empty.
        n (int): Length multiple.

    Returns:
        float: r_ans in [0, 1].
    """
    pred_length = len(normalize_answer(pred))
    best = 0.0
    for gold in golds:
        if pred_length >= n * len(normalize_answer(gold)):
            value = f1_score(pred, gold)
        else:
            value = float(cem(pred, gold))
        best = max(best, value)
    return best


def accuracy_reward(format_ok: bool, r_ans: float) -> float:
    return max(ACCURACY_FLOOR, r_ans) if format_ok else 0.0


class TitleMatcher(Protocol):
    def __call__(self, gold_title: str, retrieved_title: str) -> bool: ...


class NormalizedTitleMatcher:
    """Titles match when their normalized surface forms are equal."""

    def __call__(self, gold_title: str, retrieved_title: str) -> bool:
        return normalize_surface(gold_title) == normalize_surface(retrieved_title)


class EmbeddingMatcher:
    """
    Titles match when the cosine similarity of their embeddings reaches `threshold`.

    Args:
        embed (Callable[[str], Sequence[float]]): Text embedding function.
        threshold (float): Minimum cosine similarity.
    """

    def __init__(self, embed: Callable[[str], Sequence[float]], threshold: float = EMBEDDING_THRESHOLD):
        self.embed = embed
        self.threshold = threshold
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, text: str) -> np.ndarray:
        if text not in self._cache:
            self._cache[text] = np.asarray(self.embed(text), dtype=float)
        return self._cache[text]

    def __call__(self, gold_title: str, retrieved_title: str) -> bool:
        left, right = self._vector(gold_title), self._vector(retrieved_title)
        norm = np.linalg.norm(left) * np.linalg.norm(right)
        if norm == 0:
            return False
        return float(np.dot(left, right) / norm) >= self.threshold


def _matched(gold_titles: Sequence[str], retrieved: Iterable[str], matcher: TitleMatcher) -> set[int]:
    retrieved = list(retrieved)
    return {
        position
        for position, gold in enumerate(gold_titles)
        if any(matcher(gold, title) for title in retrieved)
    }


def recall_reward(log: RetrievalLog, gold: GoldRecord, matcher: TitleMatcher | None = None) -> float:
    """
    Fraction of gold supporting titles matched by any title retrieved in any step.

    An empty gold set is vacuously complete (1.0) and logged.
    """
    matcher = matcher or NormalizedTitleMatcher()
    gold_titles = list(dict.fromkeys(gold.supporting_titles))
    if not gold_titles:
        logger.warning("Gold record %s has no supporting titles; recall set to 1.0", gold.id)
        return 1.0
    retrieved = [title for step in log.steps for title in step.titles]
    return len(_matched(gold_titles, retrieved, matcher)) / len(gold_titles)


def recall_per_step(log: RetrievalLog, gold: GoldRecord, matcher: TitleMatcher | None = None) -> list[float]:
    matcher = matcher or NormalizedTitleMatcher()
    gold_titles = list(dict.fromkeys(gold.supporting_titles))
    if not gold_titles:
        return [1.0 for _ in log.steps]
    return [len(_matched(gold_titles, step.titles, matcher)) / len(gold_titles) for step in log.steps]


def penalty_reward(t: int, i: int, gamma: float = 0.9, beta: float = -0.2) -> float:
    """
    Retrieval-count penalty `max(beta, 1 - gamma ** (t - i))`.

    Zero when the rollout searched exactly `i` times, growing toward 1 with extra
    searches and floored at `beta` for fewer. The result always stays below 1, even
    once `gamma ** (t - i)` underflows; an overflowing decay (far too few searches
    with a small `gamma`) is the floor.
    """
    try:
        decay = gamma ** (t - i)
    except OverflowError:
        return beta
    return min(max(beta, 1.0 - decay), _BELOW_ONE)


def gain_reward(r_recall: float, r_penalty: float, alpha: float = 0.5) -> float:
    return alpha * (r_recall - r_penalty)


def overall_reward(r_acc: float, r_gain: float) -> float:
    return r_acc + r_gain


def score_trajectory(
    trajectory: Trajectory,
    gold: GoldRecord,
    log: RetrievalLog,
    config: RewardConfig | None = None,
    matcher: TitleMatcher | None = None,
) -> RewardBreakdown:
    """
    Compute every reward term of one trajectory.

    Args:
        trajectory (Trajectory): Parsed rollout.
        gold (GoldRecord): Gold answers, supporting titles and hop count.
        log (RetrievalLog): Titles retrieved per Search segment.
        config (RewardConfig | None): Reward constants; defaults when omitted.
        matcher (TitleMatcher | None): Title matcher for recall; normalized equality by default.

    Returns:
        RewardBreakdown: Format flag, extracted answer and all reward terms.
    """
    config = config or RewardConfig()

    # Format gate: a valid (TSR)*TA shape with a boxed answer
    issues = format_issues(trajectory)
    answer_segment = trajectory.answer
    format_ok = answer_segment is not None and not issues

    # Unboxed answers are still scored on their full text
    answer: str | None = None
    r_ans = 0.0
    if answer_segment is not None:
        try:
            answer = extract_boxed_answer(answer_segment.text)
        except BoxedAnswerError:
            answer = answer_segment.text.strip()
        r_ans = answer_reward(answer, gold.answers, config.n)

    # The log should hold one step per Search segment
    t = trajectory.retrieval_count
    if len(log.steps) != t:
        logger.warning(
            "Retrieval log for %s has %d step(s) but the trajectory has %d search(es)",
            gold.id, len(log.steps), t,
        )

    # Accuracy and information gain terms
    r_acc = accuracy_reward(format_ok, r_ans)
    r_recall = recall_reward(log, gold, matcher)
    r_penalty = penalty_reward(t, gold.hops, config.gamma, config.beta)
    r_gain = gain_reward(r_recall, r_penalty, config.alpha)

    # Outcome-only mode drops the gain from the total but still reports it
    return RewardBreakdown(
        format_ok=format_ok,
        answer=answer,
        r_ans=r_ans,
        r_acc=r_acc,
        r_recall=r_recall,
        r_penalty=r_penalty,
        r_gain=r_gain,
        r_overall=r_acc if config.mode == "orm" else overall_reward(r_acc, r_gain),
        recall_per_step=recall_per_step(log, gold, matcher),
        format_issues=issues,
    )


def mean(values: Iterable[float]) -> float:
    """Order-independent mean (exactly rounded sum); 0.0 for no values."""
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0
