"""Reference ranking for the knowledge retrieval check.

Reads a corpus description and queries as JSON on stdin and prints the
ranked chunk ids per query as JSON on stdout. Every page, exercise
statement, mistake and solution is assumed to fit in one chunk.
"""

import json
import math
import sys

BOOST = 1.5


def tokenize(text):
    out, cur = [], []
    for ch in text:
        if ch.isalnum():
            cur.append(ch.lower())
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def build_chunks(corpus):
    chunks = []
    for lec in corpus["lectures"]:
        tags = {}
        for concept, page in lec["annotations"]:
            tags.setdefault(page, set()).add(concept)
        for page in lec["pages"]:
            chunks.append({
                "id": "lecture:%s:p%04d:1" % (lec["material_id"], page["page_no"]),
                "text": page["text"],
                "tags": tags.get(page["page_no"], set()),
            })
    for ex in corpus["exercises"]:
        tags = set(ex["concepts"])
        parts = [("statement", ex["statement"])]
        for i, (desc, symptom) in enumerate(ex["mistakes"]):
            parts.append(("mistake-%d" % (i + 1), desc + "\n\n" + symptom if symptom.strip() else desc))
        parts.append(("solution", ex["solution"]))
        for part, text in parts:
            chunks.append({"id": "exercise:%s:%s:1" % (ex["id"], part), "text": text, "tags": tags})
    return chunks


def rank(chunks, exercises, query):
    n = len(chunks)
    counts = []
    df = {}
    for c in chunks:
        tf = {}
        for t in tokenize(c["text"]):
            tf[t] = tf.get(t, 0) + 1
        counts.append(tf)
        for t in tf:
            df[t] = df.get(t, 0) + 1
    boost = set(exercises[query["exercise"]]["concepts"]) if query["exercise"] else set()
    terms = sorted(t for t in set(tokenize(query["text"])) if t in df)
    scored = []
    for c, tf in zip(chunks, counts):
        score = 0.0
        for t in terms:
            if t in tf:
                score += tf[t] * math.log(1.0 + n / df[t])
        if score <= 0.0:
            continue
        if c["tags"] & boost:
            score *= BOOST
        scored.append((score, c["id"]))
    scored.sort(key=lambda s: (-s[0], s[1]))
    return [{"id": cid, "score": score} for score, cid in scored[: query["k"]]]


def main():
    data = json.load(sys.stdin)
    chunks = build_chunks(data["corpus"])
    exercises = {ex["id"]: ex for ex in data["corpus"]["exercises"]}
    json.dump({"chunk_count": len(chunks), "rankings": [rank(chunks, exercises, q) for q in data["queries"]]}, sys.stdout)


if __name__ == "__main__":
    main()
