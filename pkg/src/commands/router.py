from dataclasses import dataclass, field
from typing import Callable, Dict, List

from src.errors import ValidationFailure

Handler = Callable[..., object]


@dataclass
class Command:
    name: str
    handler: Handler
    description: str = ""
    needs_scenario: bool = True


@dataclass
class CommandRouter:
    """Registry of CLI commands, filled with the ``command`` decorator."""
    tags: List[str] = field(default_factory=list)
    routes: Dict[str, Command] = field(default_factory=dict)

    def command(self, name: str, description: str = "", needs_scenario: bool = True):
        def register(handler: Handler) -> Handler:
            if name in self.routes:
                raise ValueError(f"command '{name}' registered twice")
            self.routes[name] = Command(name, handler, description, needs_scenario)
            return handler
        return register

    def include_router(self, other: "CommandRouter") -> None:
        for name, cmd in other.routes.items():
            if name in self.routes:
                raise ValueError(f"command '{name}' registered twice")
            self.routes[name] = cmd

    @property
    def names(self) -> List[str]:
        return sorted(self.routes)

    def resolve(self, name: str) -> Command:
        try:
            return self.routes[name]
        except KeyError:
            raise ValidationFailure(
                f"unknown command '{name}'; expected one of {', '.join(self.names)}") from None
