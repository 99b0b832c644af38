"""faircheck - disparate impact auditing and bias mitigation for tabular classifiers."""

__version__ = "0.1.0"
