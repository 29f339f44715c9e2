import copy

import pytest

from scenemem.dhs import NoiseSpec, make_env
from scenemem.priors import load_priors, parse_priors


@pytest.fixture(scope="session")
def priors():
    return load_priors()


@pytest.fixture
def env(priors):
    return make_env(priors, seed=5)


TINY_DOC = {
    "priors_format": 1,
    "adjective_lexicon": [{"category": "colour", "adjectives": ["red", "blue"]}],
    "rooms": [{"label": "kitchen", "adjective_categories": [], "sample_prob": 1.0, "max_count": 1}],
    "furniture": [
        {"label": "shelf", "adjective_categories": [], "sample_prob": 1.0, "max_count": 4},
        {"label": "cabinet", "adjective_categories": [], "sample_prob": 1.0, "max_count": 4},
    ],
    "objects": [
        {"label": "cup", "adjective_categories": ["colour"], "sample_prob": 1.0, "max_count": 8,
         "move_frequency": 0.5, "add_prob": 0.0, "remove_prob": 0.0},
        {"label": "plate", "adjective_categories": [], "sample_prob": 1.0, "max_count": 8,
         "move_frequency": 0.5, "add_prob": 0.0, "remove_prob": 0.0},
    ],
    "room_furniture_edges": [
        {"room": "kitchen", "furniture": "shelf", "prob": 0.5},
        {"room": "kitchen", "furniture": "cabinet", "prob": 0.5},
    ],
    "furniture_object_edges": [
        {"room": "kitchen", "furniture": "shelf", "object": "cup", "relation": "onTop", "prob": 0.8},
        {"room": "kitchen", "furniture": "cabinet", "object": "cup", "relation": "in", "prob": 0.2},
        {"room": "kitchen", "furniture": "shelf", "object": "plate", "relation": "onTop", "prob": 0.3},
        {"room": "kitchen", "furniture": "cabinet", "object": "plate", "relation": "in", "prob": 0.7},
    ],
}


@pytest.fixture
def tiny_doc():
    return copy.deepcopy(TINY_DOC)


@pytest.fixture
def tiny_priors(tiny_doc):
    return parse_priors(tiny_doc)


NO_NOISE = NoiseSpec(0.0, 0.0)
