import functools
import contextvars
import inspect
from typing import Any, Dict, List, Optional, get_type_hints
import docstring_parser


def oracle_suite(
    name: Optional[str] = None,
    description: Optional[str] = None,
    tags: Optional[List[str]] = None,
    version: Optional[str] = "1.0",
    **additional_metadata
):
    """
    Decorator that registers metadata on a property suite and captures its last run.

    The description and parameter documentation are read from the function's
    docstring (Google, NumPy or reStructuredText) unless given explicitly.
    The suite name defaults to the function name.
    """
    tags = tags or []

    def decorator(func):
        func_doc = inspect.getdoc(func) or ""
        parsed_doc = None
        if func_doc:
            try:
                parsed_doc = docstring_parser.parse(func_doc)
            except Exception:
                parsed_doc = None

        if description is not None:
            description_final = description
        elif parsed_doc and parsed_doc.short_description:
            description_final = parsed_doc.short_description
        else:
            description_final = func_doc or "No description"

        annotations = get_type_hints(func)
        annotations.pop('return', None)
        signature = inspect.signature(func)

        parameters: Dict[str, Dict[str, Any]] = {}
        for param_name, param in signature.parameters.items():
            param_type = annotations.get(param_name, "")
            param_description = ""
            if parsed_doc:
                for p in parsed_doc.params:
                    if p.arg_name == param_name:
                        param_description = p.description or ""
                        break
            parameters[param_name] = {
                "type": param_type.__name__ if isinstance(param_type, type) else str(param_type),
                "description": param_description,
                "default": None if param.default is inspect.Parameter.empty else param.default,
            }

        metadata = {
            'name': name or func.__name__,
            'description': description_final,
            'parameters': parameters,
            'tags': tags,
            'version': version,
        }
        metadata.update(additional_metadata)

        # Last run per context, so concurrent callers do not see each other's results
        last_call_var = contextvars.ContextVar(f"last_run_{func.__name__}_{id(func)}", default=None)

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            last_call_var.set({'args': args, 'kwargs': kwargs, 'result': None, 'exception': None})
            try:
                result = func(*args, **kwargs)
                last_call_var.get()['result'] = result
                return result
            except Exception as e:
                last_call_var.get()['exception'] = e
                raise

        wrapper.get_last_call = lambda: last_call_var.get()
        wrapper.get_last_result = lambda: last_call_var.get().get('result') if last_call_var.get() else None
        wrapper.suite_metadata = metadata
        return wrapper
    return decorator
