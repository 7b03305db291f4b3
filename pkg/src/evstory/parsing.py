"""Deterministic rule-based dependency parsing.

The event extractor only needs reliable arcs out of the sentence root
(particles, negation, objects, agents, complements), so this parser is a
lexicon-driven heuristic rather than a statistical model: it tags tokens
with a small closed-class/verb lexicon, picks the first finite verb as the
root, and assembles a single-headed tree around it. Everything is pure and
reproducible, with no model downloads.

Any other backend can be plugged in through the DependencyParser protocol
as long as it emits the same arc structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

# token part-of-speech tags used internally
VERB = "VERB"
AUX = "AUX"
NOUN = "NOUN"
PROPN = "PROPN"
PRON = "PRON"
DET = "DET"
ADJ = "ADJ"
ADV = "ADV"
ADP = "ADP"  # preposition or verb particle, disambiguated at attach time
NUM = "NUM"
NEG = "NEG"
TO_INF = "TO"
MARK = "MARK"
PUNCT = "PUNCT"

_NOMINAL = {NOUN, PROPN, PRON, NUM}
_NP_START = {DET, ADJ, NOUN, PROPN, PRON, NUM}

AUX_WORDS = {
    "am", "is", "are", "was", "were", "be", "been", "being",
    "do", "does", "did", "have", "has", "had",
    "will", "would", "can", "could", "shall", "should", "may", "might", "must",
    "wo", "ca", "sha",  # contracted stems from "won't", "can't", "shan't"
}
_BE_GET_AUX = {"am", "is", "are", "was", "were", "be", "been", "being", "got", "get", "gets", "getting"}

NEG_WORDS = {"not", "n't", "never"}

DET_WORDS = {
    "a", "an", "the", "his", "its", "their", "my", "your", "our",
    "this", "these", "those", "some", "any", "no", "every", "each", "another", "both",
}

PRON_WORDS = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them",
    "himself", "herself", "itself", "themselves", "myself", "yourself", "ourselves",
    "someone", "somebody", "something", "anyone", "anybody", "anything",
    "everyone", "everybody", "everything", "nothing", "nobody", "one", "who", "what",
}

PREP_WORDS = {
    "in", "on", "at", "by", "with", "from", "of", "for", "about", "over", "under",
    "into", "onto", "after", "before", "near", "around", "through", "during",
    "without", "against", "between", "behind", "beside", "across", "along",
    "toward", "towards", "inside", "outside", "up", "down", "off", "out", "like",
}

# words that are prepositions unless they complete a phrasal verb
_PRT_CANDIDATES = {"up", "down", "off", "out", "on", "in", "over", "away", "back", "along"}

ADV_WORDS = {
    "very", "so", "too", "quite", "really", "always", "often", "soon", "now",
    "then", "today", "yesterday", "tomorrow", "again", "away", "back", "home",
    "here", "there", "everywhere", "finally", "suddenly", "later", "earlier",
    "almost", "just", "still", "already", "yet", "once", "twice", "together",
    "outside", "inside", "downstairs", "upstairs", "well", "hard", "fast",
}

ADJ_WORDS = {
    "beautiful", "strange", "stray", "new", "old", "happy", "sad", "excited",
    "nervous", "angry", "tired", "hungry", "thirsty", "great", "good", "bad",
    "big", "small", "little", "large", "long", "short", "young", "tall", "high",
    "low", "hot", "cold", "warm", "cool", "red", "blue", "green", "black",
    "white", "yellow", "brown", "nice", "fun", "funny", "easy", "difficult",
    "ready", "sure", "late", "early", "busy", "free", "full", "empty", "proud",
    "scared", "afraid", "upset", "glad", "sorry", "delicious", "expensive",
    "cheap", "clean", "dirty", "quiet", "loud", "fresh", "favorite", "whole",
    "next", "last", "first", "second", "third", "final", "other", "own", "best",
    "worst", "better", "worse", "broken", "closed", "special", "perfect",
}

_ADJ_SUFFIXES = ("ful", "ous", "ive", "able", "ible", "less", "ish")

LINKING_VERBS = {
    "be", "look", "seem", "feel", "smell", "taste", "sound", "become", "stay",
    "remain", "appear", "grow", "get",
}

# verbs that can introduce a finite clausal complement without "that"
CCOMP_VERBS = {
    "say", "tell", "think", "know", "believe", "hope", "wish", "realize",
    "hear", "feel", "guess", "decide", "agree", "admit", "explain", "mention",
    "claim", "insist", "promise", "worry", "remember", "forget", "learn",
    "mean", "show", "see", "find", "notice", "understand", "turn",
}

# particle words here must tag as ADP; "away"/"back" tag as adverbs and
# attach as advmod instead, matching the usual dependency convention
PHRASAL_VERBS = {
    ("shut", "down"), ("turn", "out"), ("turn", "off"), ("turn", "on"),
    ("pick", "up"), ("give", "up"), ("give", "in"),
    ("wake", "up"), ("find", "out"), ("work", "out"), ("end", "up"),
    ("grow", "up"), ("set", "up"), ("show", "up"), ("run", "out"),
    ("pass", "out"), ("hang", "out"), ("figure", "out"), ("check", "out"),
    ("calm", "down"), ("sit", "down"), ("stand", "up"), ("get", "up"),
    ("clean", "up"), ("take", "off"), ("take", "out"),
    ("come", "over"), ("move", "on"), ("move", "in"),
    ("put", "on"), ("put", "down"), ("try", "on"), ("blow", "up"),
    ("break", "down"), ("slow", "down"), ("write", "down"), ("look", "up"),
    ("cheer", "up"), ("stay", "up"), ("make", "up"), ("catch", "up"),
    ("point", "out"), ("help", "out"), ("hand", "out"), ("sell", "out"),
    ("let", "down"), ("get", "along"),
}

VERB_LEMMAS = {
    "be", "have", "do", "say", "go", "get", "make", "know", "think", "take",
    "see", "come", "want", "look", "use", "find", "give", "tell", "work",
    "call", "try", "ask", "need", "feel", "become", "leave", "put", "mean",
    "keep", "let", "begin", "seem", "help", "talk", "turn", "start", "show",
    "hear", "play", "run", "move", "like", "live", "believe", "hold", "bring",
    "happen", "write", "sit", "stand", "lose", "pay", "meet", "learn",
    "change", "lead", "watch", "stop", "walk", "win", "open", "close", "buy",
    "wait", "serve", "die", "send", "decide", "pull", "push", "break",
    "drive", "eat", "drink", "sleep", "sing", "dance", "swim", "read",
    "speak", "spend", "grow", "fall", "cut", "reach", "kill", "remain",
    "visit", "miss", "notice", "shut", "love", "hate", "enjoy", "plan",
    "hope", "wish", "smile", "laugh", "cry", "shout", "jump", "climb",
    "ride", "fly", "cook", "bake", "clean", "wash", "fix", "build", "paint",
    "plant", "pick", "carry", "throw", "catch", "hit", "kick", "save",
    "borrow", "lend", "teach", "study", "practice", "finish", "forget",
    "remember", "invite", "greet", "thank", "arrive", "return", "stay",
    "travel", "search", "check", "order", "deliver", "wear", "realize",
    "adopt", "rescue", "feed", "chase", "race", "agree", "admit", "explain",
    "mention", "claim", "insist", "promise", "worry", "grab", "drop", "fill",
    "pack", "join", "train", "bark", "smell", "taste", "sound", "appear",
    "stare", "point", "wave", "nod", "hug", "kiss", "celebrate", "surprise",
    "scare", "startle", "understand", "guess", "wonder", "prepare",
}

IRREGULAR_VERB_FORMS = {
    "was": "be", "were": "be", "been": "be", "am": "be", "is": "be", "are": "be",
    "had": "have", "has": "have", "did": "do", "done": "do", "went": "go",
    "gone": "go", "got": "get", "gotten": "get", "made": "make", "knew": "know",
    "known": "know", "thought": "think", "took": "take", "taken": "take",
    "saw": "see", "seen": "see", "came": "come", "found": "find", "gave": "give",
    "given": "give", "told": "tell", "felt": "feel", "became": "become",
    "left": "leave", "kept": "keep", "began": "begin", "begun": "begin",
    "heard": "hear", "ran": "run", "wrote": "write", "written": "write",
    "sat": "sit", "stood": "stand", "lost": "lose", "paid": "pay", "met": "meet",
    "led": "lead", "won": "win", "bought": "buy", "sent": "send", "broke": "break",
    "broken": "break", "drove": "drive", "driven": "drive", "ate": "eat",
    "eaten": "eat", "drank": "drink", "drunk": "drink", "slept": "sleep",
    "sang": "sing", "sung": "sing", "swam": "swim", "swum": "swim",
    "spoke": "speak", "spoken": "speak", "spent": "spend", "grew": "grow",
    "grown": "grow", "fell": "fall", "fallen": "fall", "flew": "fly",
    "flown": "fly", "threw": "throw", "thrown": "throw", "caught": "catch",
    "hit": "hit", "taught": "teach", "forgot": "forget", "forgotten": "forget",
    "rode": "ride", "ridden": "ride", "woke": "wake", "woken": "wake",
    "wore": "wear", "worn": "wear", "held": "hold", "brought": "bring",
    "said": "say", "read": "read", "put": "put", "let": "let", "shut": "shut",
    "cut": "cut", "understood": "understand", "chose": "choose",
    "chosen": "choose", "built": "build", "blew": "blow", "blown": "blow",
    "drew": "draw", "drawn": "draw", "hid": "hide", "hidden": "hide",
    "rose": "rise", "risen": "rise", "shook": "shake", "shaken": "shake",
    "sold": "sell", "stole": "steal", "stolen": "steal", "swept": "sweep",
    "tore": "tear", "torn": "tear", "killed": "kill",
}


@dataclass(frozen=True)
class ParsedToken:
    index: int
    surface: str
    lemma: str
    pos: str


@dataclass(frozen=True)
class DependencyArc:
    head: ParsedToken
    tail: ParsedToken
    label: str

    def __str__(self) -> str:
        return f"[{self.head.surface}]-{self.label}->[{self.tail.surface}]"


@dataclass
class Parse:
    tokens: list[ParsedToken]
    root_index: int
    arcs: list[DependencyArc] = field(default_factory=list)
    has_verb_root: bool = True

    @property
    def root(self) -> ParsedToken:
        return self.tokens[self.root_index]

    def arcs_from(self, index: int) -> list[DependencyArc]:
        return [a for a in self.arcs if a.head.index == index]


class DependencyParser(Protocol):
    def parse(self, tokens: Sequence[str]) -> Parse: ...


class ParseError(RuntimeError):
    pass


def verb_lemma(word: str) -> str | None:
    """Lemma of a verb form, or None if the word is not a known verb."""
    if word in IRREGULAR_VERB_FORMS:
        return IRREGULAR_VERB_FORMS[word]
    if word in VERB_LEMMAS:
        return word
    candidates = []
    if word.endswith("ies") and len(word) > 4:
        candidates.append(word[:-3] + "y")
    if word.endswith("s"):
        candidates.append(word[:-1])
    if word.endswith("es"):
        candidates.append(word[:-2])
    if word.endswith("ied") and len(word) > 4:
        candidates.append(word[:-3] + "y")
    if word.endswith("ed"):
        candidates.append(word[:-1])  # noticed -> notice
        candidates.append(word[:-2])  # visited -> visit
        if len(word) > 4 and word[-3] == word[-4]:
            candidates.append(word[:-3])  # stopped -> stop
    if word.endswith("ing") and len(word) > 4:
        candidates.append(word[:-3])  # walking -> walk
        candidates.append(word[:-3] + "e")  # driving -> drive
        if len(word) > 5 and word[-4] == word[-5]:
            candidates.append(word[:-4])  # running -> run
    for cand in candidates:
        if cand in VERB_LEMMAS:
            return cand
    return None


def _is_participle_form(word: str) -> bool:
    lemma = verb_lemma(word)
    if lemma is None:
        return False
    if word.endswith("ed") or word.endswith("en"):
        return True
    # irregular forms that double as participles (lost, shut, hit, ...)
    return word in IRREGULAR_VERB_FORMS and IRREGULAR_VERB_FORMS[word] != word and not word.endswith("s")


class RuleBasedDependencyParser:
    """Default offline parser; see module docstring for its scope."""

    def parse(self, tokens: Sequence[str]) -> Parse:
        if not tokens:
            raise ParseError("cannot parse an empty sentence")
        words = [t.lower() for t in tokens]
        tags = self._classify(words)
        root, has_verb = self._find_root(words, tags)

        lemmas = []
        for w, t in zip(words, tags):
            lem = verb_lemma(w) if t in (VERB, AUX) else None
            lemmas.append(lem or w)
        toks = [
            ParsedToken(i, w, lemmas[i], tags[i]) for i, w in enumerate(words)
        ]

        heads: dict[int, tuple[int, str]] = {}

        def attach(tail: int, head: int, label: str) -> None:
            if tail == head or tail == root or tail in heads:
                return
            heads[tail] = (head, label)

        passive = self._is_passive(words, tags, root)
        self._attach_left(words, tags, root, passive, attach)
        self._attach_right(words, tags, lemmas, root, passive, attach)

        # anything untouched hangs off the root so the result stays a tree
        for i in range(len(words)):
            if i != root and i not in heads:
                heads[i] = (root, "punct" if tags[i] == PUNCT else "dep")

        arcs = [DependencyArc(toks[h], toks[t], lbl) for t, (h, lbl) in sorted(heads.items())]
        return Parse(tokens=toks, root_index=root, arcs=arcs, has_verb_root=has_verb)

    # ---- tagging -----------------------------------------------------

    def _initial_tag(self, w: str) -> str:
        if not any(c.isalnum() for c in w):
            return PUNCT
        if w.startswith("[") and w.endswith("]"):
            return PROPN
        if w in NEG_WORDS:
            return NEG
        if w in AUX_WORDS:
            return AUX
        if w in DET_WORDS:
            return DET
        if w == "her":
            return PRON  # refined in context
        if w == "to":
            return TO_INF  # refined in context
        if w == "that":
            return MARK  # refined in context
        if w in PRON_WORDS:
            return PRON
        if verb_lemma(w) is not None:
            return VERB
        if w in ADV_WORDS or (w.endswith("ly") and len(w) > 3):
            return ADV
        if w in PREP_WORDS:
            return ADP
        if w in ADJ_WORDS or w.endswith(_ADJ_SUFFIXES):
            return ADJ
        if w.isdigit():
            return NUM
        return NOUN

    def _classify(self, words: list[str]) -> list[str]:
        n = len(words)
        tags = [self._initial_tag(w) for w in words]

        for i, w in enumerate(words):
            nxt = tags[i + 1] if i + 1 < n else None
            if w == "her":
                tags[i] = DET if nxt in (NOUN, PROPN, ADJ, NUM) else PRON
            elif w == "that":
                if nxt in (NOUN, ADJ, NUM):
                    tags[i] = DET
                elif nxt in (VERB, AUX) or nxt is None or nxt == PUNCT:
                    tags[i] = PRON
                else:
                    tags[i] = MARK
            elif w == "to":
                base_next = i + 1 < n and words[i + 1] in VERB_LEMMAS
                tags[i] = TO_INF if base_next else ADP

        # a "verb" preceded by a determiner or adjective is nominal
        # ("the walk", "a visit") or a participial modifier ("his lost dog")
        for i in range(n):
            if tags[i] != VERB:
                continue
            j = i - 1
            while j >= 0 and tags[j] == ADV:
                j -= 1
            if j >= 0 and tags[j] in (DET, ADJ):
                nxt = tags[i + 1] if i + 1 < n else None
                tags[i] = ADJ if nxt in (NOUN, PROPN) else NOUN

        # an auxiliary with no later verb in the sentence is the main verb;
        # scan right to left so "had been" promotes "been", not "had"
        for i in reversed(range(n)):
            if tags[i] == AUX and not any(t == VERB for t in tags[i + 1 :]):
                tags[i] = VERB
        return tags

    def _find_root(self, words: list[str], tags: list[str]) -> tuple[int, bool]:
        for i, t in enumerate(tags):
            if t == VERB:
                return i, True
        for i, t in enumerate(tags):
            if t != PUNCT:
                return i, False
        return 0, False

    def _is_passive(self, words: list[str], tags: list[str], root: int) -> bool:
        if tags[root] != VERB or not _is_participle_form(words[root]):
            return False
        return any(tags[j] == AUX and words[j] in _BE_GET_AUX for j in range(root))

    # ---- attachment --------------------------------------------------

    def _consume_np(
        self, words, tags, i: int, attach
    ) -> tuple[int | None, int]:
        """Attach one nominal chunk starting at i; returns (head index, next i)."""
        n = len(words)
        if i >= n or tags[i] not in _NP_START:
            return None, i
        if tags[i] == PRON:
            return i, i + 1
        start = i
        det_idx = i if tags[i] == DET else None
        if det_idx is not None:
            i += 1
        content = []
        while i < n and tags[i] in (ADJ, NOUN, PROPN, NUM):
            content.append(i)
            i += 1
        if not content:
            if det_idx is not None:  # bare determiner used pronominally
                return det_idx, i
            return None, start
        nominals = [j for j in content if tags[j] in _NOMINAL]
        head = nominals[-1] if nominals else content[-1]
        if det_idx is not None:
            attach(det_idx, head, "det")
        for j in content:
            if j == head:
                continue
            attach(j, head, "amod" if tags[j] == ADJ else "compound")
        return head, i

    def _attach_left(self, words, tags, root: int, passive: bool, attach) -> None:
        i = 0
        subject: int | None = None
        while i < root:
            t = tags[i]
            if t == PUNCT:
                attach(i, root, "punct")
                i += 1
            elif t == ADP:
                prep = i
                attach(prep, root, "prep")
                i += 1
                head, i = self._consume_np(words, tags, i, attach)
                if head is not None and head < root:
                    attach(head, prep, "pobj")
            elif t == NEG:
                attach(i, root, "neg")
                i += 1
            elif t == AUX:
                label = "auxpass" if passive and words[i] in _BE_GET_AUX else "aux"
                attach(i, root, label)
                i += 1
            elif t == ADV:
                attach(i, root, "advmod")
                i += 1
            elif t in _NP_START:
                head, j = self._consume_np(words, tags, i, attach)
                if head is None or j > root:
                    attach(i, root, "dep")
                    i += 1
                    continue
                if subject is not None:
                    attach(subject, root, "dep")
                subject = head
                i = j
            else:
                attach(i, root, "dep")
                i += 1
        if subject is not None:
            attach(subject, root, "nsubjpass" if passive else "nsubj")

    def _attach_right(self, words, tags, lemmas, root: int, passive: bool, attach) -> None:
        n = len(words)
        active = root
        dobj_taken: set[int] = set()
        last_np_head: int | None = None
        pending_mark: int | None = None
        i = root + 1
        while i < n:
            t = tags[i]
            w = words[i]
            if t == PUNCT:
                attach(i, root, "punct")
                i += 1
            elif t == NEG:
                attach(i, active, "neg")
                i += 1
            elif t == ADV:
                attach(i, active, "advmod")
                i += 1
            elif t == TO_INF:
                inner = i + 1
                if inner < n and tags[inner] == VERB:
                    attach(i, inner, "aux")
                    attach(inner, active, "xcomp")
                    active = inner
                    last_np_head = None
                    i = inner + 1
                else:
                    attach(i, active, "prep")
                    i += 1
            elif t == MARK:
                pending_mark = i
                i += 1
            elif t == VERB:
                if w.endswith("ing") and verb_lemma(w) is not None:
                    attach(i, active, "xcomp")
                    active = i
                    last_np_head = None
                    i += 1
                else:
                    # finite verb with no subject here reads as a preposition
                    # homograph ("looks like a dog") or a stray dependent
                    if w in PREP_WORDS:
                        tags[i] = ADP
                        continue
                    attach(i, active, "dep")
                    i += 1
            elif t == AUX:
                attach(i, active, "aux")
                i += 1
            elif t == ADP:
                if (lemmas[active], w) in PHRASAL_VERBS:
                    attach(i, active, "prt")
                    i += 1
                elif passive and active == root and w == "by":
                    by_idx = i
                    head, i = self._consume_np(words, tags, i + 1, attach)
                    if head is not None:
                        attach(head, root, "agent")
                        attach(by_idx, head, "case")
                    else:
                        attach(by_idx, root, "prep")
                else:
                    prep = i
                    attach(prep, last_np_head if last_np_head is not None else active, "prep")
                    head, i = self._consume_np(words, tags, i + 1, attach)
                    if head is not None:
                        attach(head, prep, "pobj")
            elif t == ADJ:
                if last_np_head is not None:
                    attach(i, last_np_head, "amod")
                elif lemmas[active] in LINKING_VERBS:
                    attach(i, active, "acomp")
                else:
                    attach(i, active, "dep")
                i += 1
            elif t in _NP_START:
                head, j = self._consume_np(words, tags, i, attach)
                if head is None:
                    attach(i, active, "dep")
                    i += 1
                    continue
                clause_verb = self._clause_verb_after(tags, j)
                if clause_verb is not None and (
                    pending_mark is not None or lemmas[active] in CCOMP_VERBS
                ):
                    attach(head, clause_verb, "nsubj")
                    for k in range(j, clause_verb):
                        kt = tags[k]
                        attach(k, clause_verb, {AUX: "aux", NEG: "neg", ADV: "advmod"}.get(kt, "dep"))
                    attach(clause_verb, active, "ccomp")
                    if pending_mark is not None:
                        attach(pending_mark, clause_verb, "mark")
                        pending_mark = None
                    active = clause_verb
                    last_np_head = None
                    i = clause_verb + 1
                    continue
                # a following determiner or nominal marks a second object
                # ("gave her a raise"); a bare adjective does not
                next_is_np = j < n and tags[j] in (DET, NOUN, PROPN, PRON, NUM)
                if next_is_np and active not in dobj_taken:
                    attach(head, active, "dative")
                elif lemmas[active] in ("be", "become") and active not in dobj_taken:
                    attach(head, active, "attr")
                    dobj_taken.add(active)
                elif active not in dobj_taken:
                    attach(head, active, "dobj")
                    dobj_taken.add(active)
                else:
                    attach(head, active, "dep")
                last_np_head = head
                i = j
            else:
                attach(i, active, "dep")
                i += 1
        if pending_mark is not None:
            attach(pending_mark, active, "dep")

    def _clause_verb_after(self, tags, j: int) -> int | None:
        """Index of the finite verb starting a clause at j, crossing aux/neg/adv."""
        n = len(tags)
        k = j
        while k < n and tags[k] in (AUX, NEG, ADV):
            k += 1
        if k < n and tags[k] == VERB:
            return k
        return None
