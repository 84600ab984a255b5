#!/usr/bin/env python3
"""Regenerates the shipped fixtures under data/.

  data/sandbox_tasks.jsonl   50 PPO sandbox tasks (25 open-ended, 25 closed-ended)
  data/entities_demo.jsonl   1000 synthetic entity records for SynRel generation
  data/relevance_labels.jsonl  hand-labeled (query, sentence, relevant) pairs
                               for fitting the relevant-sentence threshold
  data/relevance_mixed.jsonl   one held-out response: 3 on-topic + 1 off-topic

Output is deterministic; rerunning must not change the files.
"""
import json
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


def words(s):
    return re.findall(r"[0-9a-z]+", s.lower())


# --- sandbox tasks ---------------------------------------------------------

SUBJECTS = [
    ("kilauea", "volcano"), ("sahara", "desert"), ("amazon", "rainforest"),
    ("danube", "river"), ("everest", "summit"), ("mojave", "basin"),
    ("baltic", "sea"), ("yukon", "territory"), ("andes", "range"),
    ("okavango", "delta"), ("gobi", "plateau"), ("patagonia", "steppe"),
    ("serengeti", "plain"), ("mekong", "floodplain"), ("atacama", "salt"),
    ("ganges", "basin"), ("alpine", "glacier"), ("siberian", "taiga"),
    ("caspian", "lake"), ("arctic", "tundra"), ("barrier", "reef"),
    ("zambezi", "gorge"), ("rhine", "valley"), ("pyrenees", "pass"),
    ("tasman", "strait"), ("kalahari", "dunes"), ("baikal", "shore"),
    ("iceland", "geyser"), ("borneo", "canopy"), ("nile", "cataract"),
    ("hudson", "bay"), ("ural", "ridge"), ("sonoran", "cactus"),
    ("fjord", "coastline"), ("tibetan", "highland"), ("congo", "basin"),
    ("galapagos", "archipelago"), ("yellowstone", "caldera"), ("mariana", "trench"),
    ("appalachian", "trail"), ("camargue", "marsh"), ("dolomite", "spire"),
    ("namib", "coast"), ("labrador", "current"), ("bengal", "mangrove"),
    ("crimean", "peninsula"), ("orinoco", "llanos"), ("carpathian", "forest"),
    ("hebridean", "isles"), ("zagros", "foothills"),
]

OE_TEMPLATES = [
    "Describe the history, wildlife, climate and culture of the {s} region.",
    "Summarize the history, wildlife, climate and culture of the {s} region.",
    "Explain the history, wildlife, climate and culture of the {s} region.",
]
CE_TEMPLATES = [
    "What defines the history, wildlife, climate and culture of the {s} region?",
    "Which facts define the history, wildlife, climate and culture of the {s} region?",
]

# On-topic answers reuse the query's words and word pairs. Every subject
# occurrence has its own left and right neighbour so no trigram repeats
# across the bank.
RELEVANT_TEMPLATES = [
    "The history of the {s} region spans many quiet centuries.",
    "Wildlife around {s} includes deer, owls and rare frogs.",
    "Its mild climate and culture keep {s} villages lively.",
    "Describe the wildlife near {s} to any visiting naturalist.",
    "Local culture of {s} towns celebrates history and wildlife.",
    "The climate across {s} slopes changes fast with altitude.",
    "History, wildlife and climate records from {s} fill archives.",
    "Visitors describe the culture at {s} festivals as warm.",
]

# Off-topic filler: each task draws one cluster of three sentences that share
# vocabulary with each other but not with the query. Sentences are a little
# longer than the on-topic ones.
IRRELEVANT_CLUSTERS = [
    ["Sourdough bakers fold sticky dough gently before shaping round loaves for proofing overnight.",
     "Sourdough bakers score sticky dough quickly before baking round loaves inside hot ovens.",
     "Sourdough bakers feed sticky starters daily before mixing round loaves from wholemeal flour."],
    ["Chess players memorize sharp opening lines so tournament clocks never run short early.",
     "Serious chess players study sharp endgame lines until tournament games finish very calmly.",
     "Young chess players review sharp middlegame lines because tournament rivals really love surprises."],
    ["Espresso machines need regular descaling when baristas pull many shots using hard water.",
     "Busy espresso machines demand careful tamping whenever baristas pull shots for crowded cafes.",
     "Every espresso machine wants fresh beans while baristas pull dozens during morning rushes."],
    ["Violin students practice scales slowly with metronomes before attempting much faster concert passages.",
     "Dedicated violin students rehearse etudes carefully with teachers before tackling harder concert pieces.",
     "Younger violin students repeat bowing drills daily using mirrors to polish concert dynamics."],
    ["Marathon runners taper weekly mileage during three weeks before big race day arrives.",
     "Experienced marathon runners hydrate carefully throughout long training runs near autumn race season.",
     "Many marathon runners replace worn shoes during spring training blocks before racing again."],
    ["Spreadsheet users freeze header rows so column labels stay visible while scrolling down.",
     "Careful spreadsheet users name header cells so formulas stay readable while editing later.",
     "Busy spreadsheet users color header rows making column groups obvious when printing reports."],
]


def sandbox_tasks():
    tasks = []
    for i, (a, b) in enumerate(SUBJECTS):
        subject = f"{a} {b}"
        oe = i < 25
        tmpl = (OE_TEMPLATES if oe else CE_TEMPLATES)[i % (3 if oe else 2)]
        query = tmpl.format(s=subject)
        qwords = set(words(query))
        relevant = [t.format(s=subject) for t in RELEVANT_TEMPLATES]
        clusters = [c for c in IRRELEVANT_CLUSTERS
                    if not any(set(words(s)) & qwords for s in c)]
        irrelevant = clusters[i % len(clusters)]
        for s in relevant:
            assert set(words(s)) & qwords, s
        tasks.append({
            "query": query,
            "query_type": "OPEN-ENDED" if oe else "CLOSED-ENDED",
            "relevant_bank": relevant,
            "irrelevant_bank": irrelevant,
            "reference": " ".join(relevant[:2]),
        })
    # Relevant-only and irrelevant-only responses must be repetition free.
    for t in tasks:
        for bank in ("relevant_bank", "irrelevant_bank"):
            w = words(" ".join(t[bank]))
            tri = list(zip(w, w[1:], w[2:]))
            assert len(set(tri)) == len(tri), (t["query"], bank)
    return tasks


# --- labeled relevance pairs ----------------------------------------------

LABELED = [
    ("Tell me about Mahatma Gandhi.",
     ["Mahatma Gandhi led the Indian independence movement.",
      "Mahatma Gandhi practiced nonviolent resistance for decades.",
      "Tell me about Gandhi and I will recall the salt march."],
     ["The recipe needs two cups of flour.",
      "Our quarterly revenue grew by nine percent."]),
    ("How do I bake sourdough bread at home?",
     ["To bake sourdough bread at home you need an active starter.",
      "Bake sourdough bread in a covered pot for twenty minutes.",
      "Sourdough dough rises slowly at home in a cool kitchen."],
     ["Comets orbit far beyond Neptune.",
      "Chess clocks were introduced in tournaments long ago."]),
    ("What causes ocean tides?",
     ["Ocean tides are caused mainly by the moon.",
      "The sun also causes smaller tides in every ocean.",
      "What causes the highest tides is the alignment of sun and moon."],
     ["Violin strings are tuned in fifths.",
      "Marathon runners taper their mileage before racing."]),
    ("Explain how vaccines train the immune system.",
     ["Vaccines train the immune system to recognize a pathogen.",
      "The immune system remembers what vaccines show it.",
      "Vaccines train memory cells of the immune system."],
     ["Espresso is brewed under high pressure.",
      "Spreadsheets store numbers in rows and columns."]),
    ("Which rivers flow through Paris?",
     ["The Seine flows through Paris from east to west.",
      "Rivers like the Bievre once flowed through Paris too.",
      "Which rivers flow through Paris? Mainly the Seine."],
     ["Penguins cannot fly but swim very well.",
      "A sonnet has fourteen lines."]),
    ("Give me tips for improving my sleep.",
     ["Keeping a regular schedule is one of the best tips for improving sleep.",
      "Improving my sleep started with less caffeine after noon.",
      "Give me a dark room and my sleep improves."],
     ["Owls hunt silently after dusk.",
      "The stock market closed higher on Friday."]),
    ("What is the capital of Australia?",
     ["The capital of Australia is Canberra.",
      "Canberra became the capital of Australia in 1913.",
      "What is the capital is a question many visitors to Australia ask."],
     ["Basil grows best in warm weather.",
      "Knitting needles come in many sizes."]),
    ("Describe the water cycle.",
     ["The water cycle moves water between oceans, air and land.",
      "Evaporation starts the water cycle.",
      "Describe the cycle by following one drop of water."],
     ["Bicycles need regular chain lubrication.",
      "Jazz musicians often improvise solos."]),
]

# Held out from the fit: three on-topic sentences and one off-topic one.
MIXED_QUERY = "How do honeybees make honey?"
MIXED_RESPONSE = ("Honeybees make honey from flower nectar. "
                  "Worker honeybees make honey thicker by fanning nectar. "
                  "How do honeybees keep honey fresh in wax cells? "
                  "Trams crossed downtown streets last century.")


def buckets(text, dim=1024):
    """Feature buckets of the builtin hashed embedder (ASCII text only)."""
    def fnv(b):
        h = 14695981039346656037
        for c in b:
            h = ((h ^ c) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
        return h
    w = words(text)
    feats = ["1:" + x for x in w] + ["2:" + a + " " + b for a, b in zip(w, w[1:])]
    return {fnv(f.encode()) % dim for f in feats}


def labeled_pairs():
    rows = []
    for query, on, off in LABELED:
        qwords = set(words(query))
        for s in on:
            assert set(words(s)) & qwords, s
            rows.append({"query": query, "sentence": s, "relevant": True})
        for s in off:
            assert not set(words(s)) & qwords, s
            assert not buckets(s) & buckets(query), ("hash collision", s)
            rows.append({"query": query, "sentence": s, "relevant": False})
    return rows


# --- entity dump -----------------------------------------------------------

SYLLABLES = ["ka", "lo", "mer", "tis", "van", "dor", "qui", "sel", "bru", "ny", "zo", "rak",
             "fen", "gal", "hem", "jor", "lin", "mos", "pra", "tur", "vek", "wil", "xan", "yor"]
KINDS = ["a river", "a village", "a fortress", "a painter", "a moth species", "a mountain pass",
         "a sailing ship", "a poet", "a lake", "a monastery", "a card game", "a folk dance"]
PLACES = ["northern Elvaria", "the Ostran coast", "the Marrow highlands", "southern Quessa",
          "the Telbin archipelago", "the Drennic lowlands", "western Holm", "the Saffer valley"]
FACTS = ["founded in {y}", "first recorded in {y}", "rebuilt after a flood in {y}",
         "described by travelers in {y}", "renamed in {y}", "abandoned in {y}"]
TRAITS = ["known for its red clay", "noted for a silver bell", "remembered for a long drought",
          "associated with winter markets", "linked to an old salt road",
          "famous among local weavers", "celebrated in regional songs",
          "surrounded by pine woods", "visited by pilgrims each spring",
          "built from pale limestone"]


def entity_dump():
    rng = random.Random(530)
    names = set()
    records = []
    while len(records) < 1000:
        first = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()
        second = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()
        name = f"{first} {second}"
        if name in names or first.lower() == second.lower():
            continue
        names.add(name)
        props = [f"{rng.choice(KINDS)} in {rng.choice(PLACES)}"]
        for _ in range(rng.randint(0, 3)):
            if rng.random() < 0.5:
                props.append(rng.choice(FACTS).format(y=rng.randint(1400, 1950)))
            else:
                props.append(rng.choice(TRAITS))
        records.append({"entity": name, "properties": props})
    return records


def mixed_response():
    sentences = re.split(r"(?<=[.?!])\s+", MIXED_RESPONSE)
    assert not buckets(sentences[-1]) & buckets(MIXED_QUERY), "hash collision"
    return MIXED_RESPONSE


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    DATA.mkdir(exist_ok=True)
    write_jsonl(DATA / "sandbox_tasks.jsonl", sandbox_tasks())
    write_jsonl(DATA / "entities_demo.jsonl", entity_dump())
    write_jsonl(DATA / "relevance_labels.jsonl", labeled_pairs())
    write_jsonl(DATA / "relevance_mixed.jsonl",
                [{"query": MIXED_QUERY, "response": mixed_response()}])
