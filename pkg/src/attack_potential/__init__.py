"""Attack potential of CVSS v2 vulnerabilities and evaluation of patching policies."""

__version__ = "0.1.0"
TOOL_NAME = "attack-potential"
