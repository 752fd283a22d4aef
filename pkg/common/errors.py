"""
Base exception for the toolkit.
Each app derives its own errors from ToolkitError next to the code that raises them.
"""


class ToolkitError(Exception):
    """Base exception for all toolkit errors"""
    pass
