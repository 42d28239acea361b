"""Builds the score tables used by the aggregation tests.

Each row is one (article, language, backend) cell of a 50-question quiz.
Totals are fixed first, then spread over cells with a seeded RNG, so the
expected averages follow from integer arithmetic alone.
"""
import csv
import random

N = 50
LANGS = [
    "Arabic", "Bengali", "Chinese", "Czech", "Danish", "Dutch", "Finnish",
    "French", "German", "Greek", "Hebrew", "Hindi", "Hungarian", "Indonesian",
    "Italian", "Japanese", "Korean", "Persian", "Polish", "Portuguese",
    "Russian", "Spanish", "Swahili", "Swedish", "Tamil", "Telugu", "Turkish",
    "Urdu",
]


def spread(rng, total, k, lo, hi, caps=None):
    """k integers in [lo, hi] (per-slot caps allowed) summing to total."""
    caps = caps or [hi] * k
    xs = [lo] * k
    rest = total - lo * k
    assert 0 <= rest <= sum(c - lo for c in caps)
    while rest:
        i = rng.randrange(k)
        if xs[i] < caps[i]:
            xs[i] += 1
            rest -= 1
    return xs


def wrong_set(rng, correct, forced=()):
    pool = [q for q in range(1, N + 1) if q not in forced]
    extra = N - correct - len(forced)
    return sorted(list(forced) + rng.sample(pool, extra))


def six_article_study(path):
    rng = random.Random(20240601)
    articles = [f"article-{i}" for i in range(1, 7)]
    # per-language correct totals over six articles
    totals = {"Tamil": 275, "Swedish": 294}
    others = [l for l in LANGS if l not in totals]
    rest = 8053 - sum(totals.values())
    for l, t in zip(others, spread(rng, rest, len(others), 277, 292)):
        totals[l] = t
    # 23 languages reach 50/50 on some article
    perfect = set(rng.sample([l for l in LANGS if l != "Tamil"], 22)) | {"Swedish"}
    while len(perfect) < 23:
        perfect.add(rng.choice([l for l in LANGS if l not in perfect and l != "Tamil"]))
    rows = []
    for lang in LANGS:
        caps = [49 if a == "article-3" else 50 for a in articles]
        while True:
            cells = spread(rng, totals[lang], 6, 42, 50, caps)
            has_perfect = any(c == 50 for c in cells)
            if has_perfect == (lang in perfect):
                break
        for a, c in zip(articles, cells):
            forced = (8,) if a == "article-3" else ()
            rows.append((a, lang, "gpt-4o", c, N, wrong_set(rng, c, forced)))
    base = [49, 49, 48, 48, 49, 49]  # 292 correct
    for a, c in zip(articles, base):
        forced = (8,) if a == "article-3" else ()
        rows.append((a, "English", "original", c, N, wrong_set(rng, c, forced)))
    write(path, rows)


def model_comparison(path):
    rng = random.Random(20240602)
    articles = [f"paper-{i:02d}" for i in range(1, 25)]
    langs = ["Spanish", "French", "German", "Chinese", "Japanese", "Korean",
             "Hindi", "Arabic", "Russian", "Portuguese"]
    rows = []
    for model, total, lo in [("gpt-4o", 11460, 40), ("llama-3.3", 11364, 40), ("qwen-2.5", 10392, 30)]:
        cells = spread(rng, total, len(articles) * len(langs), lo, 50)
        k = 0
        for a in articles:
            for l in langs:
                rows.append((a, l, model, cells[k], N, wrong_set(rng, cells[k])))
                k += 1
    for a, c in zip(articles, spread(rng, 1162, 24, 45, 50)):
        rows.append((a, "English", "original", c, N, wrong_set(rng, c)))
    write(path, rows)


def write(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["article", "language", "backend", "correct", "total", "wrong_questions"])
        for a, l, b, c, n, wrong in rows:
            w.writerow([a, l, b, c, n, ";".join(map(str, wrong))])


if __name__ == "__main__":
    import os
    here = os.path.dirname(os.path.abspath(__file__))
    six_article_study(os.path.join(here, "six_article_study.csv"))
    model_comparison(os.path.join(here, "model_comparison.csv"))
