from .evaluate import Solution, compare_terms, evaluate_bgp, evaluate_query, term_sort_key
from .expr import ExprError
from .parser import GroupPattern, Query, QuerySyntaxError, UnsupportedQueryError, Var, parse_query

__all__ = [
    "GroupPattern",
    "ExprError",
    "Query",
    "QuerySyntaxError",
    "Solution",
    "UnsupportedQueryError",
    "Var",
    "compare_terms",
    "evaluate_bgp",
    "evaluate_query",
    "parse_query",
    "term_sort_key",
]
