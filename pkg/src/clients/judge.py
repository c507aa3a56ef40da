"""Remote judge that labels edits as corrected or reasonable."""

import logging
from pathlib import Path
from typing import Optional, Sequence

from ..config import RemoteConfig
from ..edits import apply_indices
from ..errors import DataError
from ..merge import singleton_groups
from ..models import EditGroup, EditLabel, EditSet, Sentence
from .http import RemoteClient, RemoteError, RemoteResponseError, ServiceClient

logger = logging.getLogger(__name__)

TEMPLATES = {
    "en": (
        "You are a helpful assistant assisting in evaluating English sentences. "
        "Determine if the following sentences are acceptable in general English contexts.\n"
        "{sentences}\n"
        "Criteria: reasonable (acceptable); corrected (clear errors/broken structure)."
    ),
    "zh": (
        "你是一名帮助评估中文句子的助手。请判断下列句子在一般中文语境中是否可以接受。\n"
        "{sentences}\n"
        "标准：reasonable（可以接受）；corrected（存在明显错误或结构残缺）。"
    ),
    "es": (
        "Actúa como un asistente útil para evaluar oraciones en español. "
        "Tu tarea es determinar si las siguientes oraciones son gramaticalmente aceptables.\n"
        "{sentences}\n"
        "Criterios: reasonable (aceptable y comprensible); corrected (errores claros o faltas de ortografía)."
    ),
    "de": (
        "Du bist ein objektiver Korrektor für deutsche Texte. "
        "Deine Aufgabe ist es zu entscheiden, ob die folgenden Sätze grammatikalisch korrekt sind.\n"
        "{sentences}\n"
        "Kriterien: reasonable (grammatikalisch korrekt, Kasus/Verbformen stimmen); "
        "corrected (enthält Grammatikfehler)."
    ),
}

OUTPUT_FORMAT = (
    "Please output exactly {n} lines. Each line must contain ONLY the word 'corrected' or "
    "'reasonable'. Do NOT output numbering, explanations, or thinking processes."
)


def build_prompt(sentences: Sequence[str], language: str) -> str:
    """
    Judge prompt for one list of hypothesis sentences.

    Raises:
        RemoteError: No template for the language
    """
    template = TEMPLATES.get(language)
    if template is None:
        raise RemoteError(f"No judge prompt template for language '{language}'")
    listing = "\n".join(f"{i}. {sentence}" for i, sentence in enumerate(sentences, start=1))
    return template.format(sentences=listing) + "\n" + OUTPUT_FORMAT.format(n=len(sentences))


def parse_judgement(text: str, n: int) -> list[EditLabel]:
    """
    Exactly ``n`` non-blank lines, each 'corrected' or 'reasonable' in any case.

    Raises:
        RemoteResponseError: Line count or a line's content is wrong
    """
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if len(lines) != n:
        raise RemoteResponseError(f"Judge returned {len(lines)} lines, expected {n}")
    try:
        return [EditLabel.parse(line) for line in lines]
    except DataError as e:
        raise RemoteResponseError(f"Judge output rejected: {e}")


class JudgeClient(ServiceClient):
    """Chat completion judge with temperature pinned to 0."""

    def __init__(self, config: RemoteConfig, cache_dir: Optional[Path] = None):
        if not config.judge_model:
            raise RemoteError("No remote judge model configured (remote.judge_model)")
        self.config = config
        self.model = config.judge_model
        self.http = RemoteClient(config, "judge", cache_dir=cache_dir)

    def payload(self, sentences: Sequence[str], language: str) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": build_prompt(sentences, language)}],
            "temperature": 0,
        }

    def judge(self, sentences: Sequence[str], language: str) -> list[EditLabel]:
        """One label per hypothesis sentence."""
        if not sentences:
            return []
        data = self.http.post_json(self.config.chat_path, self.payload(sentences, language))
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise RemoteResponseError("Malformed chat completion response from judge")
        return parse_judgement(str(content), len(sentences))


def hypotheses(
    source: Sentence, edit_set: EditSet, groups: Optional[Sequence[EditGroup]] = None
) -> list[Sentence]:
    """The correction with each group left out in turn."""
    k = len(edit_set)
    groups = groups if groups is not None else singleton_groups(k)
    return [
        apply_indices(source, edit_set, [i for i in range(k) if i not in group.members])
        for group in groups
    ]


def judge_pair(
    client: JudgeClient,
    source: Sentence,
    edit_set: EditSet,
    groups: Optional[Sequence[EditGroup]] = None,
) -> list[EditLabel]:
    """
    Labels in edit-set order.

    A group is corrected when leaving it out yields an unacceptable
    sentence; every member shares its group's label.
    """
    k = len(edit_set)
    groups = list(groups) if groups is not None else singleton_groups(k)
    sentences = [h.text for h in hypotheses(source, edit_set, groups)]
    verdicts = client.judge(sentences, source.language)

    labels: list[Optional[EditLabel]] = [None] * k
    for group, verdict in zip(groups, verdicts):
        for member in group.members:
            labels[member] = verdict
    if any(label is None for label in labels):
        raise RemoteError(f"Groups do not cover every edit of '{edit_set.pair_id}'")
    logger.debug(f"Judged {k} edits of '{edit_set.pair_id}'")
    return labels
