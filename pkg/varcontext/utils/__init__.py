from .config_utils import coerce_value, field_types, python_type_to_string
from .reports import (write_csv, eval_rows, comparison_rows, grounding_rows, context_rows, attention_rows,
                      write_html_summary, EVAL_COLUMNS, COMPARISON_COLUMNS, GROUNDING_COLUMNS, CONTEXT_COLUMNS,
                      ATTENTION_COLUMNS, GENERATION_COLUMNS)

__all__ = [
    "coerce_value", "field_types", "python_type_to_string",
    "write_csv", "eval_rows", "comparison_rows", "grounding_rows", "context_rows", "attention_rows",
    "write_html_summary", "EVAL_COLUMNS", "COMPARISON_COLUMNS", "GROUNDING_COLUMNS", "CONTEXT_COLUMNS",
    "ATTENTION_COLUMNS", "GENERATION_COLUMNS",
]
