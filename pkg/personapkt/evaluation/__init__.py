"""Response metrics, consistency judges and evaluation reports."""

__all__ = [
    "ConsistencyJudge",
    "KeywordJudge",
    "Responder",
    "SubprocessJudge",
    "c_score",
    "evaluate_setting",
    "lcs_f1",
    "lcs_length",
    "ngram_f1",
    "normalize_tokens",
    "param_accounting",
]

from .judge import ConsistencyJudge, KeywordJudge, SubprocessJudge, c_score
from .metrics import lcs_f1, lcs_length, ngram_f1, normalize_tokens
from .report import Responder, evaluate_setting, param_accounting
