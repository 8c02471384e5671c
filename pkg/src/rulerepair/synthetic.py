"""Seeded two-class text corpus with noisy keyword rules.

Each document draws a few sentiment words from its class's pool plus neutral
filler. Every rule fires on one topic keyword and votes a fixed class; the
keyword is also planted in documents of the other class, so a controlled
share of each rule's votes is wrong. Wrong votes land on documents whose
sentiment words disagree with the rule, which is what a refinement can learn.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .lfdsl import If, Return, lf_expr_to_rule, word
from .rules import Datapoint, RuleSet, Vocabulary

LABELS = ("ABSTAIN", "NEG", "POS")
NEG, POS = 1, 2

POS_WORDS = ("great", "love", "excellent", "perfect", "happy", "recommend", "sturdy", "awesome", "fantastic", "works")
NEG_WORDS = ("bad", "broken", "awful", "refund", "poor", "waste", "disappointed", "cheap", "useless", "returned")
FILLER = tuple(
    "the a it this that and for with was is on to of in my i product item use used got after day week "
    "time one two box order size color price came really just very also still".split()
)
KEYWORDS = ("battery", "shipping", "screen", "manual", "charger")
# class each rule votes for
RULE_CLASS = (POS, NEG, POS, NEG, POS)


@dataclass(frozen=True)
class SyntheticConfig:
    n_docs: int = 500
    noise_low: float = 0.2
    noise_high: float = 0.3
    keyword_rate: float = 0.35  # chance a document of the rule's class mentions its keyword
    sentiment_words: tuple[int, int] = (1, 3)
    filler_words: tuple[int, int] = (5, 10)
    seed: int = 0


@dataclass
class SyntheticBenchmark:
    ruleset: RuleSet
    docs: list[Datapoint]
    noise: list[float]

    def rules_json(self) -> dict:
        return self.ruleset.to_json()

    def write(self, out: str | Path) -> tuple[Path, Path]:
        """Write ``docs.jsonl`` and ``rules.json`` into ``out``."""
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        names = self.ruleset.vocab.names
        with open(out / "docs.jsonl", "w") as f:
            for x in self.docs:
                f.write(json.dumps({"id": x.id, "text": x.text, "label": names[x.gt]}) + "\n")
        (out / "rules.json").write_text(self.ruleset.dumps())
        return out / "docs.jsonl", out / "rules.json"


def keyword_rules(vocab: Vocabulary) -> RuleSet:
    exprs = [If(word(k), Return(c), Return(0)) for k, c in zip(KEYWORDS, RULE_CLASS)]
    return RuleSet(vocab, [f"kw_{k}" for k in KEYWORDS], [lf_expr_to_rule(e, vocab) for e in exprs])


def generate(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticBenchmark:
    rng = random.Random(cfg.seed)
    vocab = Vocabulary(LABELS)
    noise = [rng.uniform(cfg.noise_low, cfg.noise_high) for _ in KEYWORDS]
    docs = []
    for i in range(cfg.n_docs):
        y = POS if i % 2 == 0 else NEG
        pool = POS_WORDS if y == POS else NEG_WORDS
        words = rng.sample(pool, rng.randint(*cfg.sentiment_words))
        words += rng.choices(FILLER, k=rng.randint(*cfg.filler_words))
        for kw, c, eps in zip(KEYWORDS, RULE_CLASS, noise):
            # matched so that a share eps of the keyword's documents belong to the other class
            rate = cfg.keyword_rate if y == c else cfg.keyword_rate * eps / (1 - eps)
            if rng.random() < rate:
                words.append(kw)
        rng.shuffle(words)
        docs.append(Datapoint(str(i), " ".join(words), {}, y))
    return SyntheticBenchmark(keyword_rules(vocab), docs, noise)
