"""Synthetic sentiment task shared by the dataset generator and the toy model trainer."""

import random

POSITIVE = [
    "good", "great", "fun", "lovely", "superb", "moving", "sharp", "warm",
    "bright", "clever", "fresh", "charming", "brilliant", "gripping", "witty",
]
NEGATIVE = [
    "bad", "dull", "awful", "boring", "weak", "flat", "messy", "bland",
    "stale", "clumsy", "tedious", "poor", "lifeless", "silly", "sloppy",
]
NOUNS = ["movie", "film", "plot", "cast", "story", "script", "ending", "music", "acting", "pacing"]
ADVERBS = ["very", "quite", "so", "really", "truly", "rather"]
FILLERS = ["the", "a", "this", "that"]

# (pattern, verbalizer for label 0 = negative, label 1 = positive)
SST2_TEMPLATES = [
    ("Sentence: {text} Sentiment: {answer}", ("negative", "positive")),
    ("Input: {text} Prediction: {answer}", ("negative", "positive")),
    ("Review: {text} It was {answer}", ("bad", "good")),
    ("Review: {text} Sentiment: {answer}", ("bad", "good")),
]

LABELS = ["negative", "positive"]


def make_sentence(rng: random.Random, label: int, ambiguous: bool = False) -> str:
    main = POSITIVE if label == 1 else NEGATIVE
    other = NEGATIVE if label == 1 else POSITIVE
    adjs = [rng.choice(main)]
    if rng.random() < 0.4:
        adjs.append(rng.choice(main))
    if ambiguous:
        adjs.append(rng.choice(other))
    rng.shuffle(adjs)
    shape = rng.randrange(3)
    noun = rng.choice(NOUNS)
    if shape == 0:
        words = [rng.choice(FILLERS), noun, "was", rng.choice(ADVERBS)] + [adjs[0]]
        words += [w for a in adjs[1:] for w in ("and", a)]
    elif shape == 1:
        words = [rng.choice(ADVERBS), adjs[0], noun]
        words += [w for a in adjs[1:] for w in ("and", a)]
    else:
        words = adjs[:1] + [noun] + (["but"] if ambiguous else ["and"]) + [rng.choice(NOUNS), "is"] + adjs[1:2]
        if len(adjs) == 1:
            words.append(rng.choice(main))
        elif len(adjs) > 2:
            words += ["and", adjs[2]]
    return " ".join(words)
