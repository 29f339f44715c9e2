"""Regenerate the bundled synthetic priors file.

Label metadata (adjective counts, sample probabilities, max counts, move
frequencies, add/remove probabilities) is copied from the household tables
the simulator is modelled on. Relation probabilities are synthetic: each
object gets a handful of plausible furniture locations in one or two rooms
with Dirichlet-drawn weights from a fixed seed.

    python scripts/build_priors.py > src/scenemem/data/priors.json
"""

from __future__ import annotations

import json
import sys

import numpy as np

ROOMS = ["kitchen", "living room", "bedroom", "bathroom"]

# label, n_adjectives, sample_prob, max_count, n_edges
FURNITURE = [
    ("counter", 3, 0.80, 3, 27),
    ("table", 1, 0.80, 3, 17),
    ("shelf", 7, 0.80, 10, 6),
    ("fridge", 3, 0.90, 2, 30),
    ("top cabinet", 3, 0.50, 10, 8),
    ("coffee table", 4, 0.60, 3, 34),
    ("cooktop", 3, 0.90, 1, 3),
    ("counter top", 5, 0.80, 3, 67),
    ("dining table", 7, 1.00, 1, 74),
    ("chair", 7, 0.75, 12, 40),
    ("tv stand", 2, 1.00, 1, 33),
    ("sofa", 1, 0.75, 2, 18),
    ("bed", 3, 0.90, 2, 17),
    ("dresser", 7, 0.75, 3, 36),
    ("toilet", 1, 1.00, 1, 15),
    ("sink", 2, 1.00, 2, 6),
    ("shelving unit", 4, 0.50, 4, 28),
    ("desk", 7, 0.70, 4, 30),
    # second "chair" row of the furniture table, renamed so labels stay unique
    ("desk chair", 4, 0.60, 2, 17),
    ("side table", 7, 0.70, 3, 64),
    ("chairs", 7, 0.75, 12, 40),
    ("couch", 1, 0.75, 2, 18),
]

# label, n_adjectives, sample_prob, max_count, move_frequency, add/remove prob, n_edges
OBJECTS = [
    ("apple", 2, 0.80, 15, 0.40, 0.20, 9),
    ("box", 6, 0.70, 4, 0.40, 0.01, 11),
    ("cereal", 9, 0.50, 4, 0.20, 0.10, 2),
    ("dishtowel", 11, 0.75, 8, 0.20, 0.00, 1),
    ("flour", 8, 0.80, 4, 0.20, 0.10, 2),
    ("jar", 10, 0.75, 6, 0.15, 0.05, 3),
    ("kettle", 6, 0.75, 4, 0.40, 0.00, 4),
    ("lettuce", 1, 0.80, 5, 0.10, 0.01, 3),
    ("milk", 6, 0.80, 2, 0.10, 0.10, 2),
    ("mug", 10, 0.80, 12, 0.60, 0.01, 11),
    ("oil", 9, 0.80, 4, 0.10, 0.05, 2),
    ("pasta", 6, 0.75, 8, 0.10, 0.00, 2),
    ("rice", 11, 0.20, 6, 0.15, 0.00, 2),
    ("soda", 12, 0.50, 8, 0.10, 0.10, 2),
    ("ladle", 9, 0.80, 6, 0.40, 0.00, 1),
    ("toy", 3, 0.80, 12, 0.50, 0.01, 0),
    ("egg", 2, 0.80, 12, 0.05, 0.10, 2),
    ("spray bottle", 6, 0.50, 4, 0.33, 0.00, 6),
    ("salt shaker", 4, 0.50, 2, 0.25, 0.00, 3),
    ("wine bottle", 7, 0.40, 6, 0.10, 0.10, 3),
    ("potato", 1, 0.75, 8, 0.10, 0.00, 3),
    ("pencil", 4, 0.50, 12, 0.50, 0.01, 11),
    ("soap bottle", 7, 0.50, 4, 0.10, 0.01, 4),
    ("plate", 7, 0.80, 12, 0.40, 0.00, 9),
    ("fork", 6, 0.80, 8, 0.20, 0.20, 3),
    ("book", 7, 0.80, 20, 0.20, 0.01, 14),
    ("pan", 9, 0.75, 6, 0.20, 0.05, 2),
    ("towel roll", 2, 0.75, 4, 0.25, 0.00, 3),
    ("butter knife", 2, 0.75, 4, 0.20, 0.01, 3),
    ("spoon", 9, 0.75, 16, 0.20, 0.00, 2),
    ("watch", 4, 0.50, 2, 0.40, 0.00, 8),
    ("phone", 7, 0.75, 2, 0.90, 0.00, 13),
    ("pen", 6, 0.75, 8, 0.50, 0.00, 9),
    ("credit card", 4, 0.50, 4, 0.20, 0.10, 9),
    ("candle", 8, 0.60, 12, 0.40, 0.20, 6),
    ("tissue box", 6, 0.20, 4, 0.10, 0.10, 5),
    ("newspaper", 8, 0.60, 5, 0.60, 0.20, 12),
    ("remote control", 4, 0.75, 4, 0.75, 0.00, 12),
    ("house plant", 8, 0.75, 12, 0.01, 0.01, 8),
    ("laptop", 13, 0.60, 4, 0.75, 0.10, 12),
    ("desk lamp", 4, 0.50, 4, 0.01, 0.01, 7),
    ("alarm clock", 4, 0.20, 1, 0.01, 0.00, 13),
    ("soap bar", 7, 0.50, 4, 0.15, 0.01, 2),
    ("toilet paper", 1, 0.50, 4, 0.10, 0.00, 1),
    ("baseball bat", 2, 0.20, 1, 0.20, 0.00, 8),
    ("dish sponge", 7, 0.80, 4, 0.10, 0.01, 4),
    ("tennis racket", 1, 0.25, 4, 0.20, 0.00, 5),
    ("basket ball", 1, 0.20, 1, 0.20, 0.00, 11),
    ("coffee machine", 3, 0.60, 2, 0.01, 0.00, 2),
    ("knife", 1, 0.60, 12, 0.20, 0.01, 2),
    ("bread", 4, 0.50, 4, 0.14, 0.10, 2),
    ("cup", 11, 0.80, 16, 0.40, 0.10, 3),
    ("pot", 9, 0.50, 4, 0.10, 0.00, 4),
    ("bottle", 11, 0.90, 15, 0.25, 0.10, 5),
    ("toaster", 2, 0.80, 1, 0.01, 0.00, 2),
    ("cloth", 8, 0.90, 6, 0.20, 0.01, 2),
    ("microwave", 2, 0.80, 1, 0.00, 0.00, 2),
    ("apples", 2, 0.80, 15, 0.40, 0.20, 9),
    ("oranges", 2, 0.80, 15, 0.40, 0.20, 9),
    ("bananas", 2, 0.80, 15, 0.40, 0.20, 9),
    ("orange", 2, 0.80, 15, 0.40, 0.20, 9),
    ("banana", 2, 0.80, 15, 0.40, 0.20, 9),
    ("lemon", 2, 0.80, 15, 0.40, 0.20, 9),
    ("garlic", 2, 0.80, 15, 0.40, 0.20, 9),
    ("peach", 2, 0.80, 15, 0.40, 0.20, 9),
    ("grapes", 2, 0.80, 15, 0.40, 0.20, 9),
    ("avocado", 2, 0.80, 15, 0.40, 0.20, 9),
    ("towels", 11, 0.75, 8, 0.20, 0.00, 1),
    ("beet", 1, 0.80, 5, 0.10, 0.01, 3),
    ("radish", 1, 0.80, 5, 0.10, 0.01, 3),
    ("eggplant", 1, 0.80, 5, 0.10, 0.01, 3),
    ("basil", 1, 0.80, 5, 0.10, 0.01, 3),
    ("tomato", 1, 0.80, 5, 0.10, 0.01, 3),
    ("kale", 1, 0.80, 5, 0.10, 0.01, 3),
    ("squash", 1, 0.80, 5, 0.10, 0.01, 3),
    ("yogurt", 6, 0.80, 2, 0.10, 0.10, 2),
    ("whole fat milk", 6, 0.80, 2, 0.10, 0.10, 2),
    ("zero fat milk", 6, 0.80, 2, 0.10, 0.10, 2),
    ("pop", 12, 0.50, 8, 0.10, 0.10, 2),
    ("teddy bear", 3, 0.80, 12, 0.50, 0.01, 0),
    ("legos", 3, 0.80, 12, 0.50, 0.01, 0),
    ("action figure", 3, 0.80, 12, 0.50, 0.01, 0),
    ("dinosaur", 3, 0.80, 12, 0.50, 0.01, 0),
    ("jigsaw", 3, 0.80, 12, 0.50, 0.01, 0),
    ("animal", 3, 0.80, 12, 0.50, 0.01, 0),
    ("butter", 2, 0.80, 12, 0.05, 0.10, 2),
    ("pepper shaker", 4, 0.50, 2, 0.25, 0.00, 3),
    ("paprika shaker", 4, 0.50, 2, 0.25, 0.00, 3),
    ("bottle of soap", 7, 0.50, 4, 0.10, 0.01, 4),
    ("plates", 7, 0.80, 12, 0.40, 0.00, 9),
    ("binder", 7, 0.80, 20, 0.20, 0.01, 14),
    ("document", 7, 0.80, 20, 0.20, 0.01, 14),
    ("books", 7, 0.80, 20, 0.20, 0.01, 14),
    ("binders", 7, 0.80, 20, 0.20, 0.01, 14),
    ("documents", 7, 0.80, 20, 0.20, 0.01, 14),
    ("spoons", 9, 0.75, 16, 0.20, 0.00, 2),
    ("smartphone", 7, 0.75, 2, 0.90, 0.00, 13),
    ("wallet", 4, 0.50, 4, 0.20, 0.10, 9),
    ("debit card", 4, 0.50, 4, 0.20, 0.10, 9),
    ("candles", 8, 0.60, 12, 0.40, 0.20, 6),
    ("box of tissues", 6, 0.20, 4, 0.10, 0.10, 5),
    ("pc", 13, 0.60, 4, 0.75, 0.10, 12),
    ("bar of soap", 7, 0.50, 4, 0.15, 0.01, 2),
    ("soap", 7, 0.50, 4, 0.15, 0.01, 2),
    ("dish soap", 7, 0.80, 4, 0.10, 0.01, 4),
    ("sponge", 7, 0.80, 4, 0.10, 0.01, 4),
    ("baguette", 4, 0.50, 4, 0.14, 0.10, 2),
    ("bottles", 11, 0.90, 15, 0.25, 0.10, 5),
]

ADJECTIVES = {
    "size": ["small", "large", "tiny", "huge", "medium"],
    "color": ["red", "blue", "green", "white", "black", "yellow"],
    "material": ["wooden", "metal", "plastic", "glass", "ceramic"],
    "condition": ["new", "worn", "clean", "dusty"],
    "pattern": ["striped", "dotted", "plain", "checkered"],
    "age": ["old", "modern", "vintage", "antique"],
    "style": ["rustic", "sleek", "classic", "quirky"],
    "brand": ["acme", "nordic", "generic", "premium"],
    "texture": ["smooth", "rough", "soft", "glossy"],
    "finish": ["matte", "polished", "painted", "varnished"],
    "weight": ["light", "heavy", "hefty", "featherweight"],
    "shape": ["round", "square", "oval", "slim"],
    "origin": ["local", "imported", "handmade", "factory"],
}

ROOM_FURNITURE = {
    "kitchen": {"counter": 2.0, "table": 1.0, "shelf": 1.0, "fridge": 2.0, "top cabinet": 2.0,
                "cooktop": 1.5, "counter top": 2.0, "dining table": 1.5, "chair": 1.5, "sink": 1.5},
    "living room": {"coffee table": 2.0, "tv stand": 1.5, "sofa": 1.5, "couch": 1.0,
                    "shelving unit": 1.5, "side table": 1.5, "chairs": 1.5, "shelf": 1.0,
                    "table": 1.0, "dining table": 0.5},
    "bedroom": {"bed": 2.0, "dresser": 2.0, "desk": 1.5, "desk chair": 1.0, "side table": 1.5,
                "shelf": 1.0, "shelving unit": 1.0, "chair": 0.5},
    "bathroom": {"toilet": 2.0, "sink": 2.0, "shelf": 1.5, "top cabinet": 1.5,
                 "counter top": 1.5, "counter": 0.5},
}

RELATIONS = {
    "fridge": ["in"], "top cabinet": ["in"], "dresser": ["in", "onTop"], "shelf": ["onTop", "in"],
    "shelving unit": ["onTop", "in"], "cooktop": ["onTop"], "sink": ["in"], "bed": ["onTop", "under"],
    "sofa": ["onTop"], "couch": ["onTop"], "chair": ["onTop"], "chairs": ["onTop"],
    "desk chair": ["onTop"], "desk": ["onTop", "in"], "table": ["onTop", "under"],
    "dining table": ["onTop"], "coffee table": ["onTop", "under"], "side table": ["onTop", "in"],
    "toilet": ["onTop"], "counter": ["onTop"], "counter top": ["onTop"], "tv stand": ["onTop", "in"],
}

FOOD = ["apple", "cereal", "flour", "jar", "lettuce", "milk", "oil", "pasta", "rice", "soda", "egg",
        "potato", "bread", "apples", "oranges", "bananas", "orange", "banana", "lemon", "garlic",
        "peach", "grapes", "avocado", "beet", "radish", "eggplant", "basil", "tomato", "kale",
        "squash", "yogurt", "whole fat milk", "zero fat milk", "pop", "butter", "baguette",
        "wine bottle"]
KITCHENWARE = ["dishtowel", "kettle", "mug", "ladle", "salt shaker", "plate", "fork", "pan",
               "towel roll", "butter knife", "spoon", "knife", "cup", "pot", "bottle", "toaster",
               "coffee machine", "microwave", "cloth", "pepper shaker", "paprika shaker", "plates",
               "spoons", "bottles", "dish sponge", "dish soap", "sponge"]
BATH = ["soap bar", "toilet paper", "soap", "bar of soap", "bottle of soap", "soap bottle",
        "towels", "spray bottle"]
OFFICE = ["pencil", "pen", "book", "books", "binder", "binders", "document", "documents", "laptop",
          "pc", "desk lamp", "watch", "phone", "smartphone", "wallet", "credit card", "debit card",
          "alarm clock"]
LIVING = ["remote control", "candle", "candles", "house plant", "tissue box", "box of tissues",
          "box", "newspaper"]
TOYS = ["toy", "teddy bear", "legos", "action figure", "dinosaur", "jigsaw", "animal",
        "basket ball", "baseball bat", "tennis racket"]

POOLS = {
    "food": {"kitchen": ["fridge", "counter", "counter top", "shelf", "top cabinet", "table",
                         "dining table"]},
    "kitchenware": {"kitchen": ["counter", "counter top", "shelf", "top cabinet", "sink", "cooktop",
                                "dining table", "table", "chair"]},
    "bath": {"bathroom": ["toilet", "sink", "shelf", "top cabinet", "counter top", "counter"]},
    "office": {"bedroom": ["desk", "dresser", "side table", "shelf", "shelving unit", "bed",
                           "desk chair", "chair"],
               "living room": ["coffee table", "side table", "shelving unit", "tv stand", "shelf",
                               "sofa", "dining table", "table"]},
    "living": {"living room": ["coffee table", "tv stand", "side table", "shelving unit", "sofa",
                               "couch", "shelf", "chairs", "table", "dining table"],
               "bedroom": ["side table", "dresser", "shelf", "desk"],
               "bathroom": ["shelf", "counter top", "top cabinet", "toilet", "counter"]},
    "toys": {"bedroom": ["bed", "shelf", "shelving unit", "desk chair", "dresser", "chair"],
             "living room": ["sofa", "couch", "chairs", "shelving unit", "coffee table"]},
}
BATH_POOL = ["sink", "counter top", "shelf", "top cabinet", "counter"]
EXTRA_ROOMS = {o: {"bathroom": BATH_POOL}
               for o in ("cup", "bottle", "bottles", "cloth", "sponge", "towel roll", "dish soap",
                         "toilet paper", "towels", "spray bottle")}
GROUP_OF = {}
for _group, _members in (("food", FOOD), ("kitchenware", KITCHENWARE), ("bath", BATH),
                         ("office", OFFICE), ("living", LIVING), ("toys", TOYS)):
    for _m in _members:
        GROUP_OF[_m] = _group


def build(seed: int = 20230401, concentration: float = 2.0) -> dict:
    rng = np.random.default_rng(seed)
    categories = list(ADJECTIVES)
    edges: dict[tuple, float] = {}

    for label, *_rest, n_edges in OBJECTS:
        pools = dict(POOLS[GROUP_OF[label]])
        for room, pool in EXTRA_ROOMS.get(label, {}).items():
            pools[room] = sorted(set(pools.get(room, [])) | set(pool))
        for room, pool in pools.items():
            k = int(np.clip(n_edges, 3, 6))
            k = min(k, len(pool))
            chosen = [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))]
            slots = [(f, rel) for f in chosen for rel in RELATIONS[f]]
            w = rng.dirichlet(np.full(len(slots), concentration))
            for (f, rel), p in zip(slots, w):
                edges[(room, f, label, rel)] = float(p)

    # every (room, furniture) slot must host at least 14 object labels
    for room, furn in ROOM_FURNITURE.items():
        for f in furn:
            hosted = {o for (r, ff, o, _) in edges if r == room and ff == f}
            room_objects = sorted({o for (r, _, o, _) in edges if r == room} - hosted)
            need = min(len(room_objects), max(0, 14 - len(hosted)))
            for i in rng.choice(len(room_objects), size=need, replace=False):
                o = room_objects[int(i)]
                rel = RELATIONS[f][0]
                edges[(room, f, o, rel)] = float(rng.uniform(0.02, 0.08))

    # renormalise each (room, object) group and round for readability
    groups: dict[tuple, list] = {}
    for key in edges:
        groups.setdefault((key[0], key[2]), []).append(key)
    for keys in groups.values():
        total = sum(edges[k] for k in keys)
        vals = [max(round(edges[k] / total, 6), 1e-6) for k in keys]
        top = int(np.argmax(vals))
        vals[top] = round(vals[top] + (1.0 - sum(vals)), 6)
        for k, v in zip(keys, vals):
            edges[k] = v

    room_furniture = []
    for room, furn in ROOM_FURNITURE.items():
        total = sum(furn.values())
        vals = {f: round(w / total, 6) for f, w in furn.items()}
        top = max(vals, key=vals.get)
        vals[top] = round(vals[top] + (1.0 - sum(vals.values())), 6)
        room_furniture.extend({"room": room, "furniture": f, "prob": p} for f, p in vals.items())

    return {
        "priors_format": 1,
        "adjective_lexicon": [{"category": c, "adjectives": a} for c, a in ADJECTIVES.items()],
        "rooms": [{"label": r, "adjective_categories": [], "sample_prob": 1.0, "max_count": 1}
                  for r in ROOMS],
        "furniture": [{"label": f, "adjective_categories": categories[:n], "sample_prob": sp,
                       "max_count": mc} for f, n, sp, mc, _ in FURNITURE],
        "objects": [{"label": o, "adjective_categories": categories[:n], "sample_prob": sp,
                     "max_count": mc, "move_frequency": mf, "add_prob": ar, "remove_prob": ar}
                    for o, n, sp, mc, mf, ar, _ in OBJECTS],
        "room_furniture_edges": room_furniture,
        "furniture_object_edges": [
            {"room": r, "furniture": f, "object": o, "relation": rel, "prob": p}
            for (r, f, o, rel), p in sorted(edges.items())
        ],
    }


if __name__ == "__main__":
    json.dump(build(), sys.stdout, indent=1)
    sys.stdout.write("\n")
