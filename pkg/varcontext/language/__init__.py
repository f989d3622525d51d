"""Vocabulary and the cue-specific expression encoder."""
from .vocabulary import Vocabulary, PAD, UNK, START, STOP, RESERVED
from .encoder import CUES, CueFeatures, LanguageEncoder, load_glove

__all__ = ["Vocabulary", "PAD", "UNK", "START", "STOP", "RESERVED",
           "CUES", "CueFeatures", "LanguageEncoder", "load_glove"]
