"""Exception types shared across the package."""


class SylfemError(Exception):
    """Base class for all package errors."""


class GeometryError(SylfemError):
    """Invalid domain, profile, or point outside the reference rectangle."""


class AssemblyError(SylfemError):
    """Invalid basis parameters or unsupported assembly request."""


class OperatorError(SylfemError):
    """Ill-posed or structurally invalid matrix operator."""


class SolverError(SylfemError):
    """Linear solver failure: singular pencil, blow-up, bad factorization."""


class ConfigError(SylfemError):
    """Invalid run configuration (CLI / config file)."""
