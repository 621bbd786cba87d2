"""Recover the template behind an image macro and embed macros with the
template and overlay kept apart."""

from .imagecore import ImageGrid, Preprocessor, load_image, save_image
from .l1solver import Dictionary, SparseCode, residual_norm, solve_l1
from .matcher import MatchResult, build_dictionary, class_votes, decouple, match_template
from .templategen import TemplateLibrary, augment, construct_templates, median_blend

__all__ = [
    "ImageGrid", "Preprocessor", "load_image", "save_image",
    "Dictionary", "SparseCode", "residual_norm", "solve_l1",
    "MatchResult", "build_dictionary", "class_votes", "decouple", "match_template",
    "TemplateLibrary", "augment", "construct_templates", "median_blend",
]
__version__ = "0.1.0"
