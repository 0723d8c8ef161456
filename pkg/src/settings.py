import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

DEFAULT_EPS_RANK = 1e-8

LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class Settings(BaseModel):
    eps_rank: float = Field(default=DEFAULT_EPS_RANK, gt=0)
    threads: int = Field(default=1, ge=1)
    # None leaves the scenario's own seed in charge
    seed: Optional[int] = None
    log_dir: Path = Path("logs")
    log_level: LogLevel = "WARNING"

    @classmethod
    def from_env(cls) -> "Settings":
        """Read settings from the process environment (and a .env file if present)."""
        load_dotenv()
        seed = os.getenv("EXTL2_SEED")
        return cls(
            eps_rank=float(os.getenv("EXTL2_EPS_RANK", DEFAULT_EPS_RANK)),
            threads=int(os.getenv("EXTL2_THREADS", "1")),
            seed=int(seed) if seed not in (None, "") else None,
            log_dir=Path(os.getenv("EXTL2_LOG_DIR", "logs")),
            log_level=os.getenv("EXTL2_LOG_LEVEL", "WARNING").upper(),
        )
