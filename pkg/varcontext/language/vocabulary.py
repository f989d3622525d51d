"""Word vocabulary with reserved pad, unk, start and stop ids."""
from collections import Counter
from typing import Dict, Iterable, List, Sequence
import logging

logger = logging.getLogger(__name__)

PAD, UNK, START, STOP = "<pad>", "<unk>", "<start>", "<stop>"
RESERVED = (PAD, UNK, START, STOP)


class Vocabulary:
    """Bijective word/id map; ids 0-3 are pad, unk, start and stop."""

    def __init__(self, words: Iterable[str] = ()):
        self._words: List[str] = list(RESERVED)
        self._ids: Dict[str, int] = {w: i for i, w in enumerate(RESERVED)}
        for word in words:
            if word not in self._ids:
                self._ids[word] = len(self._words)
                self._words.append(word)

    @classmethod
    def build(cls, token_lists: Iterable[Sequence[str]], min_count: int = 1) -> "Vocabulary":
        """Vocabulary of the sorted words occurring at least `min_count` times."""
        counts = Counter(w for tokens in token_lists for w in tokens)
        kept = sorted(w for w, n in counts.items() if n >= min_count and w not in RESERVED)
        logger.debug("Vocabulary: kept %d of %d words (min_count=%d)", len(kept), len(counts), min_count)
        return cls(kept)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def start_id(self) -> int:
        return 2

    @property
    def stop_id(self) -> int:
        return 3

    def id_of(self, word: str) -> int:
        return self._ids.get(word, self.unk_id)

    def word_of(self, index: int) -> str:
        return self._words[index]

    def encode(self, words: Sequence[str]) -> List[int]:
        return [self.id_of(w) for w in words]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self._words[i] for i in ids]

    def words(self) -> List[str]:
        """Non-reserved words in id order."""
        return self._words[len(RESERVED):]
