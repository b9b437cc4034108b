#!/usr/bin/env python3
"""Regenerate the shipped fixtures and their oracle counts.

Everything here is independent of the Rust code: counts are computed
directly from the generated records so tests can compare against them.

    python3 scripts/gen_fixtures.py
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures"

SYLLABLES = ["al", "ben", "cor", "dra", "en", "fil", "gan", "hex", "ir", "jo", "kan", "lo",
             "mer", "nor", "ox", "pra", "qui", "ros", "sul", "tan", "ur", "vel", "xen", "zo"]

# (relation, head type, tail type), matching the shipped templates
UMLS_KINDS = [
    ("may treat", "drug", "disease"),
    ("may cause", "drug", "symptom"),
    ("cause of", "disease", "symptom"),
    ("risk factor of", "disease", "disease"),
]


def norm(label):
    return " ".join(label.split())


def names(rng, n, suffix):
    out, seen = [], set()
    while len(out) < n:
        w = "".join(rng.choice(SYLLABLES) for _ in range(3)).capitalize() + " " + suffix
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def typed_500(rng):
    pools = {
        "drug": names(rng, 120, "tablet"),
        "disease": names(rng, 120, "syndrome"),
        "symptom": names(rng, 60, "pain"),
    }
    edges = []
    seen = set()
    while len(edges) < 500:
        rel, ht, tt = rng.choice(UMLS_KINDS)
        h, t = rng.choice(pools[ht]), rng.choice(pools[tt])
        if h == t or (h, rel, t) in seen:
            continue
        seen.add((h, rel, t))
        edges.append((h, rel, t, ht, tt))
    lines = ["# synthetic typed graph: head, relation, tail, head type, tail type"]
    lines += ["\t".join(e) for e in edges]
    (OUT / "typed_500.tsv").write_text("\n".join(lines) + "\n")
    nodes = {e[0] for e in edges} | {e[2] for e in edges}
    return {"edges": len(edges), "nodes": len(nodes), "rows": len(edges)}


UMLS_MINI = [
    ("Insulin human, rDNA origin", "may treat", "Diabetes mellitus"),
    ("Insulin human, rDNA origin", "may treat", "Hyperglycemia"),
    ("Metformin", "may treat", "Diabetes mellitus"),
    ("Glucagon", "may treat", "Hypoinsulinaemia"),
    ("Hepatitis B vaccine (rDNA)", "may treat", "Hepatitis B"),
    ("Metformin", "may cause", "Nausea"),
    ("Insulin human, rDNA origin", "may cause", "Hypoglycemia"),
    ("Hypoinsulinaemia", "cause of", "Hyperglycemia"),
    ("Obesity", "risk factor of", "Diabetes mellitus"),
    ("Diabetes mellitus", "cause of", "Polyuria"),
    ("Aspirin", "may treat", "Headache disorder"),
    ("Aspirin", "may cause", "Nausea"),
    ("Ibuprofen", "may treat", "Headache disorder"),
    ("Ibuprofen", "may cause", "Dyspepsia"),
    ("Hypertension", "risk factor of", "Stroke"),
    ("Lisinopril", "may treat", "Hypertension"),
    ("Lisinopril", "may cause", "Dry cough"),
    ("Stroke", "cause of", "Aphasia"),
]

STUB_FIXTURES = [
    {"match": "Insulin human, rDNA origin",
     "response": "Insulin therapy from recombinant DNA is used in this setting."},
    {"match": "Hypoinsulinaemia",
     "response": "Glucagon may help with low insulin levels (hypoinsulinaemia)."},
    {"match": "rDNA",
     "response": "A hepatitis B vaccine made from recombinant DNA protects against hepatitis B."},
]


def umls_mini():
    lines = ["# small medical graph with long concept labels"]
    lines += ["\t".join(e) for e in UMLS_MINI]
    (OUT / "umls_mini.tsv").write_text("\n".join(lines) + "\n")
    (OUT / "stub_fixtures.json").write_text(json.dumps(STUB_FIXTURES, indent=2) + "\n")


AUTHORS = ["Anders Berglund", "Maria Lopez", "Wei Zhang", "Priya Nair", "Tomas Novak", "Aiko Sato",
           "Lena Fischer", "Omar Haddad", "Grace Kim", "Ivan Petrov", "Sofia Rossi", "Noah Smith"]
VENUES = ["ICSE", "KDD", "VLDB", "NeurIPS"]
TOPICS = ["graph mining", "databases", "software testing", "program analysis", "representation learning",
          "query optimization", "distributed systems", "education research"]


def dblp_50(rng):
    records = []
    for i in range(50):
        n_auth = rng.choice([1, 2, 2, 3, 3, 4])
        authors = rng.sample(AUTHORS, n_auth)
        topics = rng.sample(TOPICS, 2)
        rec = {
            "id": f"p{i:03d}",
            "title": f"On {topics[0]} for {topics[1]} ({i})",
            "abstract": f"We study {topics[0]}. Our results also inform {topics[1]}.",
            "venue": rng.choice(VENUES),
            "year": 2000 + rng.randrange(20),
            "authors": authors,
            "references": [f"p{j:03d}" for j in rng.sample(range(60), rng.randrange(4))],
        }
        if i % 11 == 5:
            rec["abstract"] = ""
        if i % 13 == 7:
            del rec["venue"]
        records.append(rec)
    # a whitespace variant of an existing author name
    records[3]["authors"] = ["Anders  Berglund", "Maria Lopez"]
    with open(OUT / "dblp_50.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")

    # oracle, written out longhand
    kept = [r for r in records
            if r.get("title", "").strip()
            and r.get("abstract", "").strip()
            and r.get("venue", "").strip()
            and len({norm(a) for a in r["authors"] if a.strip()}) >= 2]
    kept_ids = {r["id"] for r in kept}
    authors = {norm(a) for r in kept for a in r["authors"]}
    venues = {norm(r["venue"]) for r in kept}
    authored = {(norm(a), r["id"]) for r in kept for a in r["authors"]}
    published = {(r["id"], norm(r["venue"])) for r in kept}
    cites = {(r["id"], t) for r in kept for t in r["references"] if t in kept_ids and t != r["id"]}
    oracle = {
        "rows": len(records),
        "kept": len(kept),
        "dropped": len(records) - len(kept),
        "papers": len(kept),
        "authors": len(authors),
        "venues": len(venues),
        "nodes": len(kept) + len(authors) + len(venues),
        "authored": len(authored),
        "published_in": len(published),
        "cites": len(cites),
        "edges": len(authored) + len(published) + len(cites),
    }
    return oracle


def exact_fixture(rng):
    """100 (answer, response) pairs scored by hand-written rules."""
    answers = ["diabetes", "insulin and metformin", "Hypertension", "nausea", "low insulin levels",
               "Anders Berglund", "graph mining", "ICSE", "type 2 diabetes", "headache disorder"]
    variants = [
        (lambda a: a, 1),
        (lambda a: a.upper() + ".", 1),
        (lambda a: "  " + a.replace(" ", "   ") + " !", 1),
        (lambda a: a + "?", 1),
        (lambda a: a + " maybe", 0),
        (lambda a: "not " + a, 0),
        (lambda a: "", 0),
        (lambda a: a.capitalize(), 1),
        (lambda a: a[:-1] if len(a) > 1 else "x", 0),
        (lambda a: a + ".;", 1),
    ]
    rows = []
    for i in range(100):
        a = answers[i % len(answers)]
        f, score = variants[(i * 7 + i // 10) % len(variants)]
        rows.append({"sample_id": i, "answer": a, "response": f(a), "score": score})
    with open(OUT / "exact_100.jsonl", "w") as out:
        for r in rows:
            out.write(json.dumps(r) + "\n")
    return sum(r["score"] for r in rows) / len(rows)


def main():
    OUT.mkdir(exist_ok=True)
    rng = random.Random(20240521)
    oracle = {"typed_500": typed_500(rng)}
    umls_mini()
    oracle["umls_mini"] = {"edges": len(UMLS_MINI),
                           "nodes": len({e[0] for e in UMLS_MINI} | {e[2] for e in UMLS_MINI})}
    oracle["dblp_50"] = dblp_50(rng)
    oracle["exact_100"] = {"mean": exact_fixture(rng)}
    (OUT / "oracle.json").write_text(json.dumps(oracle, indent=2, sort_keys=True) + "\n")
    print(json.dumps(oracle, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
