from .logic import (
    EpistemicError, Present, Track, StatusIs, Not, And, Knows, Believes, Or, TRUE, World,
    EpistemicState, initial_state, holds, true_world_certain, to_dot, mentions, is_propositional,
)
from .updates import Announce, Perceive, product_update, local_announce
